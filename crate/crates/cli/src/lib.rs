//! Batch front end: resolves parameters from flags and the config file, checks
//! them, runs one analysis and writes CSV/JSON artifacts plus a manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use multichaos::circle::{self, CircleClass, RotationMethod, SweepOptions, DEFAULT_SEED};
use multichaos::conjugacy::{factoring_residual, ConjugacyMap, SemiConjugacy};
use multichaos::orbits::{self, StabilityClass};
use multichaos::torus::circle_distance;
use multichaos::{export, mapfile, spectral, udv, Error, TorusMap, TorusPoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_TOL: f64 = 1e-10;

#[derive(Parser, Debug, Clone)]
#[command(name = "multichaos", version, about = "Analyses of torus maps F(z) = Mz + G(z) mod 1")]
pub struct Cli {
    /// Map definition with optional [run] and per-subcommand sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    /// Overrides the map parameter t.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Sample the cone conditions on a grid.
    VerifyCone(ConeArgs),
    /// Factoring residual, Lipschitz defect and conjugacy round trip.
    Conjugacy(ConjugacyArgs),
    /// Trace level sets of the semi-conjugacy.
    Fibers(FiberArgs),
    /// Find and classify periodic orbits of a given period.
    FindPeriodic(PeriodicArgs),
    /// Classify every periodic vertical circle of a given period.
    Circles(CirclesArgs),
    /// Rotation number on one periodic vertical circle.
    Rotation(RotationArgs),
    /// Rotation numbers and mode locking across a range of t.
    Sweep(SweepArgs),
    /// Windowed Lyapunov exponents and positive-exponent counts along an orbit.
    Ftle(FtleArgs),
    /// Iterate a disk until its images meet every grid cell.
    Cover(CoverArgs),
    /// Search the preimage tree of a repeller for a snap-back point.
    Snapback(SnapbackArgs),
    /// Check the map and every configured section without running anything.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyCone(_) => "verify-cone",
            Command::Conjugacy(_) => "conjugacy",
            Command::Fibers(_) => "fibers",
            Command::FindPeriodic(_) => "find-periodic",
            Command::Circles(_) => "circles",
            Command::Rotation(_) => "rotation",
            Command::Sweep(_) => "sweep",
            Command::Ftle(_) => "ftle",
            Command::Cover(_) => "cover",
            Command::Snapback(_) => "snapback",
            Command::Validate => "validate",
        }
    }

    fn all_defaults() -> Vec<Command> {
        vec![
            Command::VerifyCone(Default::default()),
            Command::Conjugacy(Default::default()),
            Command::Fibers(Default::default()),
            Command::FindPeriodic(Default::default()),
            Command::Circles(Default::default()),
            Command::Rotation(Default::default()),
            Command::Sweep(Default::default()),
            Command::Ftle(Default::default()),
            Command::Cover(Default::default()),
            Command::Snapback(Default::default()),
        ]
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConeArgs {
    /// Expansion factor K.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub boundary: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConjugacyArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    /// Side of the round-trip grid (0 skips it).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FiberArgs {
    #[arg(long)]
    pub thetas: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct PeriodicArgs {
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub seed_grid: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CirclesArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RotationArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub base_x: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// plain or weighted.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SweepArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub base_x: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FtleArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
    #[arg(long)]
    pub total: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub dead_band: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CoverArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub cx: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub cy: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SnapbackArgs {
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
}

/// Looks a value up as flag, then `section.key` in the config, then default,
/// recording whatever was used.
struct Resolver<'a> {
    extra: &'a BTreeMap<String, String>,
    section: &'static str,
    echo: BTreeMap<String, Value>,
    errors: Vec<String>,
}

impl<'a> Resolver<'a> {
    fn new(extra: &'a BTreeMap<String, String>, section: &'static str) -> Self {
        Self {
            extra,
            section,
            echo: BTreeMap::new(),
            errors: Vec::new(),
        }
    }

    fn get<T: FromStr + Serialize + Clone>(&mut self, flag: Option<T>, key: &str, default: T) -> T {
        let v = match flag {
            Some(v) => v,
            None => match self.extra.get(&format!("{}.{}", self.section, key)) {
                None => default,
                Some(s) => s.parse().unwrap_or_else(|_| {
                    self.errors
                        .push(format!("[{}] {key}: cannot parse '{s}'", self.section));
                    default
                }),
            },
        };
        self.echo
            .insert(key.to_string(), serde_json::to_value(&v).unwrap_or(Value::Null));
        v
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.errors.push(msg.into());
        }
    }
}

fn finite_unit(r: &mut Resolver, v: f64, name: &str) {
    r.check(v.is_finite(), format!("{name} must be finite"));
}

/// A subcommand with every parameter resolved and checked.
#[derive(Debug, Clone)]
enum Job {
    Cone { k: f64, alpha: f64, grid: usize, boundary: usize },
    Conjugacy { samples: usize, grid: usize },
    Fibers { thetas: usize, points: usize },
    Periodic { period: usize, seed_grid: usize },
    Circles { n: usize, iters: usize, budget: usize },
    Rotation { base_x: f64, n: usize, y0: f64, iters: usize, method: RotationMethod, budget: usize },
    Sweep { base_x: f64, n: usize, t: (f64, f64), samples: usize, opts: SweepOptions },
    Ftle { p: TorusPoint, total: usize, window: usize, stride: usize, dead_band: f64 },
    Cover { center: TorusPoint, radius: f64, grid: usize, max_iter: usize },
    Snapback { period: usize, radius: f64, depth: usize },
}

/// Everything needed to run, plus the canonical echo of the inputs.
pub struct Prepared {
    map: TorusMap,
    tol: f64,
    seed: u64,
    job: Option<Job>,
    pub subcommand: &'static str,
    pub echo: Value,
}

impl Prepared {
    /// SHA-256 of the canonical input echo.
    pub fn checksum(&self) -> String {
        sha256_hex(canonical(&self.echo).as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// JSON with sorted keys (serde_json maps are ordered) and a trailing newline.
fn canonical(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_map(cli: &Cli) -> Result<(TorusMap, BTreeMap<String, String>), String> {
    let (map, extra) = match &cli.config {
        None => (TorusMap::reference(0.0, 0.05), BTreeMap::new()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config file '{}': {e}", path.display()))?;
            let f = mapfile::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            (f.map, f.extra)
        }
    };
    Ok(match cli.t {
        Some(t) => (map.with_t(t), extra),
        None => (map, extra),
    })
}

fn seeded_point(seed: u64, stream: u64) -> TorusPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    TorusPoint::new(rng.random::<f64>(), rng.random::<f64>())
}

fn skew_checks(r: &mut Resolver, map: &TorusMap) {
    let e = map.matrix().entries();
    r.check(
        map.is_skew() && e[1][1] == 1,
        "circle analysis needs a skew product: m12 = 0, m22 = 1 and no x-component in the perturbation",
    );
}

fn circle_checks(r: &mut Resolver, map: &TorusMap, base_x: f64, n: usize) {
    r.check(n >= 1, "n must be >= 1");
    finite_unit(r, base_x, "base-x");
    skew_checks(r, map);
    if r.errors.is_empty() {
        if let Err(e) = circle::restrict(map, base_x, n) {
            r.errors.push(e.to_string());
        }
    }
}

fn resolve_job(cmd: &Command, map: &TorusMap, seed: u64, r: &mut Resolver) -> Option<Job> {
    let m = map.matrix().det();
    Some(match cmd {
        Command::Validate => return None,
        Command::VerifyCone(a) => {
            let k = r.get(a.k, "k", 2.0);
            let alpha = r.get(a.alpha, "alpha", 1.0);
            let grid = r.get(a.grid, "grid", 200);
            let boundary = r.get(a.boundary, "boundary", 16);
            r.check(k > 1.0 && k.is_finite(), "k must be > 1");
            r.check(alpha > 0.0 && alpha.is_finite(), "alpha must be > 0");
            r.check(grid >= 2, "grid must be >= 2");
            r.check(boundary >= 2, "boundary must be >= 2");
            Job::Cone { k, alpha, grid, boundary }
        }
        Command::Conjugacy(a) => {
            let samples = r.get(a.samples, "samples", 1000);
            let grid = r.get(a.grid, "grid", 20);
            r.check(samples >= 1, "samples must be >= 1");
            Job::Conjugacy { samples, grid }
        }
        Command::Fibers(a) => {
            let thetas = r.get(a.thetas, "thetas", 16);
            let points = r.get(a.points, "points", 256);
            r.check(thetas >= 1, "thetas must be >= 1");
            r.check(points >= 8, "points must be >= 8");
            Job::Fibers { thetas, points }
        }
        Command::FindPeriodic(a) => {
            let period = r.get(a.period, "period", 1);
            let seed_grid = r.get(a.seed_grid, "seed-grid", 16);
            r.check(
                (1..=orbits::MAX_PERIOD).contains(&period),
                format!("period must be in 1..={}", orbits::MAX_PERIOD),
            );
            r.check(seed_grid >= 2, "seed-grid must be >= 2");
            Job::Periodic { period, seed_grid }
        }
        Command::Circles(a) => {
            let n = r.get(a.n, "n", 1);
            let iters = r.get(a.iters, "iters", 10_000);
            let budget = r.get(a.budget, "budget", 50);
            r.check(n >= 1, "n must be >= 1");
            r.check(iters >= 100, "iters must be >= 100");
            skew_checks(r, map);
            if n >= 1 {
                match orbits::periodic_circle_bases(m, n) {
                    Ok(b) => r.check(b.len() <= 10_000, format!("{} circles is too many; lower n", b.len())),
                    Err(e) => r.errors.push(e.to_string()),
                }
            }
            Job::Circles { n, iters, budget }
        }
        Command::Rotation(a) => {
            let base_x = r.get(a.base_x, "base-x", 0.0);
            let n = r.get(a.n, "n", 1);
            let y0 = r.get(a.y0, "y0", seeded_point(seed, 1).y());
            let iters = r.get(a.iters, "iters", 10_000);
            let method = r.get(a.method.clone(), "method", "weighted".to_string());
            let budget = r.get(a.budget, "budget", 50);
            r.check(iters >= 100, "iters must be >= 100");
            finite_unit(r, y0, "y0");
            let method = match method.as_str() {
                "plain" => RotationMethod::Plain,
                "weighted" => RotationMethod::Weighted,
                other => {
                    r.errors.push(format!("method must be plain or weighted, got '{other}'"));
                    RotationMethod::Weighted
                }
            };
            circle_checks(r, map, base_x, n);
            Job::Rotation { base_x, n, y0, iters, method, budget }
        }
        Command::Sweep(a) => {
            let base_x = r.get(a.base_x, "base-x", 0.0);
            let n = r.get(a.n, "n", 1);
            let t_min = r.get(a.t_min, "t-min", 0.0);
            let t_max = r.get(a.t_max, "t-max", 1.0);
            let samples = r.get(a.samples, "samples", 200);
            let iters = r.get(a.iters, "iters", 10_000);
            let budget = r.get(a.budget, "budget", 50);
            r.check(samples >= 2, "samples must be >= 2");
            r.check(iters >= 100, "iters must be >= 100");
            r.check(t_min.is_finite() && t_max.is_finite(), "t range must be finite");
            circle_checks(r, map, base_x, n);
            Job::Sweep {
                base_x,
                n,
                t: (t_min, t_max),
                samples,
                opts: SweepOptions { iters, budget, seed },
            }
        }
        Command::Ftle(a) => {
            let start = seeded_point(seed, 2);
            let x0 = r.get(a.x0, "x0", start.x());
            let y0 = r.get(a.y0, "y0", start.y());
            let total = r.get(a.total, "total", 100_000);
            let window = r.get(a.window, "window", 30);
            let stride = r.get(a.stride, "stride", 1);
            let dead_band = r.get(a.dead_band, "dead-band", 0.0);
            finite_unit(r, x0, "x0");
            finite_unit(r, y0, "y0");
            r.check(window >= 1, "window must be >= 1");
            r.check(total >= window, "total must be >= window");
            r.check(stride >= 1, "stride must be >= 1");
            r.check(dead_band >= 0.0, "dead-band must be >= 0");
            Job::Ftle {
                p: TorusPoint::new(x0, y0),
                total,
                window,
                stride,
                dead_band,
            }
        }
        Command::Cover(a) => {
            let cx = r.get(a.cx, "cx", 0.5);
            let cy = r.get(a.cy, "cy", 0.5);
            let radius = r.get(a.radius, "radius", 0.05);
            let grid = r.get(a.grid, "grid", 64);
            let max_iter = r.get(a.max_iter, "max-iter", 60);
            finite_unit(r, cx, "cx");
            finite_unit(r, cy, "cy");
            r.check(radius > 0.0 && radius.is_finite(), "radius must be > 0");
            r.check((16..=4096).contains(&grid), "grid must be in 16..=4096");
            r.check(max_iter >= 1, "max-iter must be >= 1");
            Job::Cover {
                center: TorusPoint::new(cx, cy),
                radius,
                grid,
                max_iter,
            }
        }
        Command::Snapback(a) => {
            let period = r.get(a.period, "period", 1);
            let radius = r.get(a.radius, "radius", 0.1);
            let depth = r.get(a.depth, "depth", 12);
            r.check((1..=orbits::MAX_PERIOD).contains(&period), "period out of range");
            r.check(radius > 0.0 && radius.is_finite(), "radius must be > 0");
            r.check((1..=20).contains(&depth), "depth must be in 1..=20");
            Job::Snapback { period, radius, depth }
        }
    })
}

fn section_of(cmd: &Command) -> &'static str {
    cmd.name()
}

/// Resolves and checks every input. `Err` carries the full violation list.
pub fn prepare(cli: &Cli) -> Result<Prepared, Vec<String>> {
    let (map, extra) = load_map(cli).map_err(|e| vec![e])?;
    let mut errors = Vec::new();
    if let Err(e) = spectral::eigen_data(map.matrix()) {
        errors.push(format!("(E_M) violated: {e}"));
    }
    let mut run = Resolver::new(&extra, "run");
    let seed = run.get(cli.seed, "seed", DEFAULT_SEED);
    let tol = run.get(cli.tol, "tol", DEFAULT_TOL);
    run.check(tol > 0.0 && tol.is_finite(), "tol must be > 0");
    if let Some(t) = cli.threads {
        run.check(t >= 1, "threads must be >= 1");
    }
    errors.append(&mut run.errors);
    let mut params = BTreeMap::new();
    let job = if let Command::Validate = cli.command {
        // Check every section the config mentions.
        for cmd in Command::all_defaults() {
            let sec = section_of(&cmd);
            if extra.keys().any(|k| k.starts_with(&format!("{sec}."))) {
                let mut r = Resolver::new(&extra, sec);
                resolve_job(&cmd, &map, seed, &mut r);
                errors.extend(r.errors);
            }
        }
        None
    } else {
        let mut r = Resolver::new(&extra, section_of(&cli.command));
        let job = resolve_job(&cli.command, &map, seed, &mut r);
        errors.extend(r.errors);
        params = r.echo;
        job
    };
    if !errors.is_empty() {
        return Err(errors);
    }
    let echo = json!({
        "tool": "multichaos",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cli.command.name(),
        "map": mapfile::to_string(&map),
        "seed": seed,
        "tol": tol,
        "params": params,
    });
    Ok(Prepared {
        map,
        tol,
        seed,
        job,
        subcommand: cli.command.name(),
        echo,
    })
}

/// Violations that would stop `cli` from running; empty when it would run.
pub fn validate(cli: &Cli) -> Vec<String> {
    match prepare(cli) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

/// Named output files, in write order.
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            summary: String::new(),
        }
    }

    fn json(&mut self, name: &str, checksum: &str, result: Value) {
        let body = json!({ "manifest": checksum, "result": result });
        self.files.push((name.to_string(), canonical(&body)));
    }

    fn csv(&mut self, name: &str, checksum: &str, table: String) {
        self.files
            .push((name.to_string(), format!("# manifest={checksum}\n{table}")));
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn lattice(n: usize) -> Vec<TorusPoint> {
    let h = 1.0 / n as f64;
    (0..n * n)
        .map(|i| TorusPoint::new(((i / n) as f64 + 0.5) * h, ((i % n) as f64 + 0.5) * h))
        .collect()
}

fn random_points(seed: u64, stream: u64, n: usize) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n)
        .map(|_| TorusPoint::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect()
}

/// Runs a prepared job and returns the artifacts (nothing is written).
pub fn execute(p: &Prepared) -> multichaos::Result<Artifacts> {
    let mut art = Artifacts::new();
    let sum = p.checksum();
    let map = &p.map;
    let Some(job) = &p.job else {
        art.summary = "configuration is valid".into();
        return Ok(art);
    };
    match job {
        Job::Cone { k, alpha, grid, boundary } => {
            let spec = spectral::eigen_data(map.matrix())?;
            let cone = spectral::ConeParams::new(&spec, *k, *alpha)?;
            let report = spectral::cone_verify(map, &cone, *grid, *boundary)?;
            let delta = spectral::delta_check(map)?;
            art.summary = format!(
                "cone pass={} min_expansion={} max_containment_ratio={}",
                report.pass, report.min_expansion, report.max_containment_ratio
            );
            art.json(
                "cone.json",
                &sum,
                json!({ "report": to_json(&report), "cone": to_json(&cone), "delta": to_json(&delta), "spectral": to_json(&spec) }),
            );
        }
        Job::Conjugacy { samples, grid } => {
            let sc = SemiConjugacy::new(map)?;
            let depth = sc.depth_for(p.tol)?;
            let m = sc.spectral().m;
            let resid = factoring_residual(map, *samples, p.tol, p.seed)?;
            let a = random_points(p.seed, 3, *samples);
            let b = random_points(p.seed, 4, *samples);
            let defect = a
                .par_iter()
                .zip(b.par_iter())
                .map(|(x, y)| sc.lipschitz_defect(&x.lift(), &y.lift()))
                .reduce(|| 0.0, f64::max);
            let mut out = json!({
                "spectral": to_json(sc.spectral()),
                "depth": depth,
                "factoring_residual": resid,
                "factoring_bound": (m.abs() as f64 + 1.0) * p.tol,
                "lipschitz_defect": defect,
                "defect_bound": sc.defect_bound(),
                "samples": samples,
            });
            if *grid > 0 {
                let h = ConjugacyMap::new(map, p.tol)?;
                let errs = lattice(*grid)
                    .par_iter()
                    .map(|u| {
                        let z = h.inverse(u)?;
                        let back = h.forward(&z);
                        let w = h.forward(&map.eval(&z));
                        Ok((
                            back.distance(u),
                            circle_distance(w.x(), m as f64 * u.x()),
                        ))
                    })
                    .collect::<multichaos::Result<Vec<_>>>()?;
                let max_rt = errs.iter().map(|e| e.0).fold(0.0, f64::max);
                let max_skew = errs.iter().map(|e| e.1).fold(0.0, f64::max);
                out["tiling"] = to_json(h.tiling());
                out["roundtrip_grid"] = json!(grid);
                out["max_roundtrip_error"] = json!(max_rt);
                out["max_skew_error"] = json!(max_skew);
            }
            art.summary = format!("factoring residual {resid}, Lipschitz defect {defect}");
            art.json("conjugacy.json", &sum, out);
        }
        Job::Fibers { thetas, points } => {
            let sc = SemiConjugacy::new(map)?;
            let fibers = (0..*thetas)
                .into_par_iter()
                .map(|i| sc.fiber_trace(i as f64 / *thetas as f64, *points))
                .collect::<multichaos::Result<Vec<_>>>()?;
            let summary: Vec<Value> = fibers
                .iter()
                .map(|f| {
                    json!({
                        "theta": f.theta, "closed": f.closed, "max_residual": f.max_residual,
                        "length": f.length, "max_spacing": f.max_spacing,
                        "max_turning_angle": f.max_turning_angle, "points": f.points.len(),
                    })
                })
                .collect();
            let worst = fibers.iter().map(|f| f.max_residual).fold(0.0, f64::max);
            art.summary = format!(
                "{} fibers, all closed: {}, max residual {worst}",
                fibers.len(),
                fibers.iter().all(|f| f.closed)
            );
            art.csv("fibers.csv", &sum, export::fibers_csv(&fibers));
            art.json("fibers.json", &sum, json!({ "fibers": summary }));
        }
        Job::Periodic { period, seed_grid } => {
            let found = orbits::find_periodic(map, *period, *seed_grid)?;
            let count = |c: StabilityClass| found.iter().filter(|o| o.class == c).count();
            art.summary = format!(
                "{} orbits of period {period}: {} saddles, {} repellers",
                found.len(),
                count(StabilityClass::Saddle),
                count(StabilityClass::Repeller)
            );
            art.csv("periodic.csv", &sum, export::orbits_csv(&found));
            art.json("periodic.json", &sum, json!({ "period": period, "orbits": to_json(&found) }));
        }
        Job::Circles { n, iters, budget } => {
            let bases = orbits::periodic_circle_bases(map.matrix().det(), *n)?;
            let y0 = seeded_point(p.seed, 1).y();
            let analyses = bases
                .par_iter()
                .map(|&b| {
                    let cm = circle::restrict(map, b, *n)?;
                    circle::classify_circle(&cm, y0, *iters, *budget)
                })
                .collect::<multichaos::Result<Vec<_>>>()?;
            let labels: Vec<String> = analyses.iter().map(|a| export::class_label(&a.classification)).collect();
            art.summary = format!("{} circles: {}", bases.len(), labels.join(" "));
            art.json("circles.json", &sum, json!({ "n": n, "bases": bases, "analyses": to_json(&analyses) }));
        }
        Job::Rotation { base_x, n, y0, iters, method, budget } => {
            let cm = circle::restrict(map, *base_x, *n)?;
            let est = circle::rotation_number(&cm, *y0, *iters, *method)?;
            let analysis = circle::classify_circle(&cm, *y0, *iters, *budget)?;
            art.summary = format!(
                "rho = {} (diagnostic {}), {}",
                export::num(est.rho),
                export::num(est.diagnostic),
                export::class_label(&analysis.classification)
            );
            art.json(
                "rotation.json",
                &sum,
                json!({ "y0": y0, "estimate": to_json(&est), "analysis": to_json(&analysis) }),
            );
        }
        Job::Sweep { base_x, n, t, samples, opts } => {
            let res = circle::sweep(map, *base_x, *n, *t, *samples, opts)?;
            art.summary = format!(
                "quasiperiodic fraction {} ({} locked, {} quasiperiodic, {} undetermined)",
                res.quasiperiodic_fraction, res.n_locked, res.n_quasiperiodic, res.n_undetermined
            );
            art.csv("sweep.csv", &sum, export::sweep_csv(&res));
            let locked: Vec<Value> = res
                .t_values
                .iter()
                .zip(&res.analyses)
                .filter_map(|(t, a)| match a.classification {
                    CircleClass::Locked { p, q } => Some(json!({ "t": t, "p": p, "q": q })),
                    _ => None,
                })
                .collect();
            art.json(
                "sweep.json",
                &sum,
                json!({
                    "base_x": res.base_x, "n": res.n, "samples": samples,
                    "quasiperiodic_fraction": res.quasiperiodic_fraction,
                    "n_locked": res.n_locked, "n_quasiperiodic": res.n_quasiperiodic,
                    "n_undetermined": res.n_undetermined, "seed": res.seed,
                    "iters": res.iters, "budget": res.budget,
                    "threshold": circle::QP_THRESHOLD, "locked": locked,
                }),
            );
        }
        Job::Ftle { p: p0, total, window, stride, dead_band } => {
            let series = udv::positive_count_series(map, p0, *total, *window, *stride, *dead_band)?;
            let stats = udv::oscillation_stats(&series)?;
            art.summary = format!(
                "counts: {} ones, {} twos, {} switches, lambda2 in [{}, {}]",
                stats.frac_one, stats.frac_two, stats.switches, stats.min_lambda2, stats.max_lambda2
            );
            art.csv("ftle.csv", &sum, export::ftle_csv(&series));
            art.json(
                "ftle.json",
                &sum,
                json!({ "start": to_json(p0), "total": total, "window": window, "stride": stride, "dead_band": dead_band, "stats": to_json(&stats) }),
            );
        }
        Job::Cover { center, radius, grid, max_iter } => {
            let res = udv::transitivity_cover(map, center, *radius, *grid, *max_iter)?;
            art.summary = match res.n_cover {
                Some(n) => format!("covered after {n} iterates"),
                None => format!(
                    "not covered within {max_iter} iterates ({})",
                    res.coverage.last().copied().unwrap_or(0.0)
                ),
            };
            art.csv("coverage.csv", &sum, export::coverage_csv(&res));
            art.json(
                "coverage.json",
                &sum,
                json!({ "center": to_json(&res.center), "radius": res.radius, "grid_n": res.grid_n, "seeds": res.seeds, "n_cover": res.n_cover, "max_iter": max_iter }),
            );
        }
        Job::Snapback { period, radius, depth } => {
            let found = orbits::find_periodic(map, *period, 16)?;
            let repeller = found.iter().find(|o| o.class == StabilityClass::Repeller);
            let cert = match repeller {
                Some(r) => orbits::snapback_search(map, r, *radius, *depth)?,
                None => None,
            };
            art.summary = match (&repeller, &cert) {
                (None, _) => format!("no repeller of period {period}"),
                (Some(_), None) => format!("no snap-back point within depth {depth}"),
                (Some(_), Some(c)) => format!("snap-back point after {} steps, |det| = {}", c.n, c.jac_det.abs()),
            };
            art.json(
                "snapback.json",
                &sum,
                json!({ "repeller": to_json(&repeller), "certificate": to_json(&cert), "radius": radius, "depth": depth }),
            );
        }
    }
    Ok(art)
}

fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Full run: prepare, execute, write artifacts and `manifest.json`.
/// Returns the process exit code; messages go to stderr/stdout.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let prepared = match prepare(cli) {
        Ok(p) => p,
        Err(violations) => {
            for v in &violations {
                eprintln!("error: {v}");
            }
            return EXIT_INVALID;
        }
    };
    if let Some(n) = cli.threads {
        // Ignored if a pool already exists (only possible when embedded).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let sum = prepared.checksum();
    match execute(&prepared) {
        Ok(art) => {
            if prepared.job.is_none() {
                println!("{}", art.summary);
                return EXIT_OK;
            }
            let outputs: BTreeMap<&str, String> = art
                .files
                .iter()
                .map(|(n, b)| (n.as_str(), sha256_hex(b.as_bytes())))
                .collect();
            let manifest = json!({
                "manifest": sum,
                "config": prepared.echo,
                "outputs": outputs,
                "wall_time_s": start.elapsed().as_secs_f64(),
            });
            let mut files = art.files;
            files.push(("manifest.json".into(), canonical(&manifest)));
            if let Err(e) = write_all(&cli.out, &files) {
                eprintln!("error: cannot write to '{}': {e}", cli.out.display());
                return EXIT_INVALID;
            }
            println!("{}", art.summary);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                return EXIT_INVALID;
            }
            let report = json!({
                "manifest": sum,
                "subcommand": prepared.subcommand,
                "error": e.to_string(),
                "kind": error_kind(&e),
            });
            if let Err(w) = write_all(&cli.out, &[("error.json".into(), canonical(&report))]) {
                eprintln!("error: cannot write to '{}': {w}", cli.out.display());
            }
            EXIT_NUMERICAL
        }
    }
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_string()
}
