//! Plain-text map definitions.
//!
//! ```text
//! # reference map
//! [matrix]
//! m11=3
//! m12=0
//! m21=1
//! m22=1
//!
//! [perturbation]
//! t=0.0
//! drift=(0,1)
//! freq=(0,1) coeff=(0,0.05) phase=0
//!
//! [run]
//! seed=7
//! ```
//!
//! `drift` is optional. Any extra section (e.g. `[run]`) is kept verbatim as
//! key/value pairs for front ends.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::map::{FourierPerturbation, FourierTerm, IntegerMatrix, TorusMap};

#[derive(Clone, Debug, PartialEq)]
pub struct MapFile {
    pub map: TorusMap,
    /// `section.key -> value` for sections other than matrix/perturbation.
    pub extra: BTreeMap<String, String>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str, line: usize) -> Result<[T; 2]> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| perr(line, format!("expected (a,b), got '{s}'")))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(perr(line, format!("expected two components in '{s}'")));
    }
    let a = parts[0]
        .parse()
        .map_err(|_| perr(line, format!("bad number '{}'", parts[0])))?;
    let b = parts[1]
        .parse()
        .map_err(|_| perr(line, format!("bad number '{}'", parts[1])))?;
    Ok([a, b])
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| perr(line, format!("bad number '{}'", s.trim())))?;
    if !v.is_finite() {
        return Err(perr(line, "non-finite number"));
    }
    Ok(v)
}

/// Splits `k=v k=(a, b) ...` into pairs, keeping parenthesised values whole.
fn tokens(s: &str, line: usize) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    let mut words = Vec::new();
    for ch in s.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch)
            }
            ')' => {
                depth -= 1;
                cur.push(ch)
            }
            c if c.is_whitespace() && depth == 0 => {
                if !cur.is_empty() {
                    words.push(std::mem::take(&mut cur));
                }
            }
            c if c.is_whitespace() => {}
            c => cur.push(c),
        }
    }
    if depth != 0 {
        return Err(perr(line, "unbalanced parentheses"));
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    // Allow "k = v" spacing by gluing stray '=' tokens.
    let joined = words.join(" ").replace(" =", "=").replace("= ", "=");
    for w in joined.split_whitespace() {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| perr(line, format!("expected key=value, got '{w}'")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse(text: &str) -> Result<MapFile> {
    let mut section = String::new();
    let mut m: [[Option<i64>; 2]; 2] = [[None; 2]; 2];
    let mut t = 0.0;
    let mut drift = [0.0, 1.0];
    let mut terms = Vec::new();
    let mut extra = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let pairs = tokens(s, line)?;
        match section.as_str() {
            "matrix" => {
                for (k, v) in pairs {
                    let idx = match k.as_str() {
                        "m11" => (0, 0),
                        "m12" => (0, 1),
                        "m21" => (1, 0),
                        "m22" => (1, 1),
                        _ => return Err(perr(line, format!("unknown matrix key '{k}'"))),
                    };
                    let val: i64 = v
                        .parse()
                        .map_err(|_| perr(line, format!("matrix entry '{v}' is not an integer")))?;
                    m[idx.0][idx.1] = Some(val);
                }
            }
            "perturbation" => {
                if pairs.iter().any(|(k, _)| k == "freq") {
                    let mut term = FourierTerm {
                        freq: [0, 0],
                        coeff: [0.0, 0.0],
                        phase: 0.0,
                    };
                    let mut seen_coeff = false;
                    for (k, v) in pairs {
                        match k.as_str() {
                            "freq" => term.freq = parse_pair(&v, line)?,
                            "coeff" => {
                                term.coeff = parse_pair(&v, line)?;
                                if term.coeff.iter().any(|c: &f64| !c.is_finite()) {
                                    return Err(perr(line, "non-finite coefficient"));
                                }
                                seen_coeff = true;
                            }
                            "phase" => term.phase = parse_f64(&v, line)?,
                            _ => return Err(perr(line, format!("unknown term key '{k}'"))),
                        }
                    }
                    if !seen_coeff {
                        return Err(perr(line, "term without coeff"));
                    }
                    terms.push(term);
                } else {
                    for (k, v) in pairs {
                        match k.as_str() {
                            "t" => t = parse_f64(&v, line)?,
                            "drift" => drift = parse_pair(&v, line)?,
                            _ => {
                                return Err(perr(line, format!("unknown perturbation key '{k}'")))
                            }
                        }
                    }
                }
            }
            "" => return Err(perr(line, "key outside of a section")),
            other => {
                for (k, v) in pairs {
                    extra.insert(format!("{other}.{k}"), v);
                }
            }
        }
    }
    let mut entries = [[0i64; 2]; 2];
    for (r, row) in m.iter().enumerate() {
        for (c, e) in row.iter().enumerate() {
            entries[r][c] =
                e.ok_or_else(|| perr(0, format!("missing matrix entry m{}{}", r + 1, c + 1)))?;
        }
    }
    let matrix = IntegerMatrix::new(entries)?;
    let map = TorusMap::new(matrix, FourierPerturbation::new(terms, t, drift));
    Ok(MapFile { map, extra })
}

/// Writes a map in the format accepted by [`parse`].
pub fn to_string(map: &TorusMap) -> String {
    let e = map.matrix().entries();
    let g = map.perturbation();
    let mut s = format!(
        "[matrix]\nm11={}\nm12={}\nm21={}\nm22={}\n\n[perturbation]\nt={:?}\ndrift=({:?},{:?})\n",
        e[0][0], e[0][1], e[1][0], e[1][1], g.t(), g.drift()[0], g.drift()[1]
    );
    for term in g.terms() {
        s.push_str(&format!(
            "freq=({},{}) coeff=({:?},{:?}) phase={:?}\n",
            term.freq[0], term.freq[1], term.coeff[0], term.coeff[1], term.phase
        ));
    }
    s
}
