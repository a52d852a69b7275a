//! Torus maps `F(z) = M z + G(z) mod 1` with integer `M` having eigenvalues
//! `1` and `m`: cone systems, the semi-conjugacy to `x -> m x`, periodic
//! orbits, rotation numbers on periodic circles and finite-time Lyapunov
//! exponents.

pub mod circle;
pub mod conjugacy;
pub mod error;
pub mod export;
pub mod linalg;
pub mod map;
pub mod mapfile;
pub mod orbits;
pub mod spectral;
pub mod torus;
pub mod udv;

pub use error::{Error, Result};
pub use map::{FourierPerturbation, FourierTerm, IntegerMatrix, TorusMap};
pub use spectral::{
    build_tiling, cone_verify, delta_check, eigen_data, lattice_min_k, ConeParams, ConeReport,
    DeltaCheck, SpectralData, Tiling,
};
pub use torus::{torus_distance, LiftPoint, TorusPoint};
