//! Plain-text sparse-triplet dump of a [`ConicProgram`].
//!
//! ```text
//! conic-program 1
//! dims <n> <ineq rows> <eq rows> <cones>
//! cost                  then `j value` lines (nonzeros only)
//! lower | upper         `j value`, only entries that are finite
//! ineq | eq             `i j value`
//! ineq_rhs | eq_rhs     `i value` (nonzeros only)
//! cone <k> <rows> <gamma>
//! A                     `i j value`
//! b                     `i value`
//! d                     `j value`
//! end
//! ```
//!
//! Indices are 0-based; values use Rust's shortest round-trip formatting so
//! a dump reloads bit-for-bit.

use std::fmt::Write as _;

use thiserror::Error;

use super::{sparse_from_triplets, ConeBlock, ConicProgram};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing `{0}`")]
    Missing(&'static str),
}

pub fn dump_program(p: &ConicProgram) -> String {
    let mut out = String::new();
    let n = p.n_vars();
    let _ = writeln!(out, "conic-program 1");
    let _ = writeln!(out, "dims {} {} {} {}", n, p.ineq.rows(), p.eq.rows(), p.cones.len());
    write_vec(&mut out, "cost", &p.cost, |v| v != 0.0);
    write_vec(&mut out, "lower", &p.lower, f64::is_finite);
    write_vec(&mut out, "upper", &p.upper, f64::is_finite);
    write_mat(&mut out, "ineq", &p.ineq);
    write_vec(&mut out, "ineq_rhs", &p.ineq_rhs, |v| v != 0.0);
    write_mat(&mut out, "eq", &p.eq);
    write_vec(&mut out, "eq_rhs", &p.eq_rhs, |v| v != 0.0);
    for (k, c) in p.cones.iter().enumerate() {
        let _ = writeln!(out, "cone {} {} {:?}", k, c.rows(), c.gamma);
        write_mat(&mut out, "A", &c.a);
        write_vec(&mut out, "b", &c.b, |v| v != 0.0);
        let _ = writeln!(out, "d");
        for (j, v) in c.d.iter() {
            let _ = writeln!(out, "{j} {v:?}");
        }
    }
    let _ = writeln!(out, "end");
    out
}

fn write_vec(out: &mut String, name: &str, v: &[f64], keep: impl Fn(f64) -> bool) {
    let _ = writeln!(out, "{name}");
    for (i, &x) in v.iter().enumerate() {
        if keep(x) {
            let _ = writeln!(out, "{i} {x:?}");
        }
    }
}

fn write_mat(out: &mut String, name: &str, m: &sprs::CsMat<f64>) {
    let _ = writeln!(out, "{name}");
    let mut t: Vec<_> = m.iter().map(|(&v, (r, c))| (r, c, v)).collect();
    t.sort_by_key(|e| (e.0, e.1));
    for (r, c, v) in t {
        let _ = writeln!(out, "{r} {c} {v:?}");
    }
}

#[derive(Default)]
struct ConeDraft {
    rows: usize,
    gamma: f64,
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    d: Vec<(usize, f64)>,
}

pub fn load_program(text: &str) -> Result<ConicProgram, DumpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, msg: &str| DumpError::Parse {
        line,
        msg: msg.to_string(),
    };
    let (ln, header) = lines.next().ok_or(DumpError::Missing("header"))?;
    if header != "conic-program 1" {
        return Err(err(ln, "expected `conic-program 1`"));
    }
    let (ln, dims) = lines.next().ok_or(DumpError::Missing("dims"))?;
    let dims: Vec<usize> = dims
        .strip_prefix("dims")
        .ok_or_else(|| err(ln, "expected `dims`"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(ln, "bad dimension")))
        .collect::<Result<_, _>>()?;
    let [n, m_in, m_eq, n_cones] = dims[..] else {
        return Err(err(ln, "dims needs four numbers"));
    };

    let mut p = ConicProgram::new(n);
    p.ineq_rhs = vec![0.0; m_in];
    p.eq_rhs = vec![0.0; m_eq];
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    let mut cones: Vec<ConeDraft> = Vec::new();
    let mut section = String::new();
    let mut ended = false;

    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let first = toks[0];
        if first.parse::<f64>().is_err() {
            match first {
                "cost" | "lower" | "upper" | "ineq" | "ineq_rhs" | "eq" | "eq_rhs" | "A" | "b" | "d" => {
                    if matches!(first, "A" | "b" | "d") && cones.is_empty() {
                        return Err(err(ln, "cone section before any `cone` line"));
                    }
                    section = first.to_string();
                }
                "cone" => {
                    if toks.len() != 4 {
                        return Err(err(ln, "expected `cone k rows gamma`"));
                    }
                    let rows = toks[2].parse().map_err(|_| err(ln, "bad row count"))?;
                    let gamma = toks[3].parse().map_err(|_| err(ln, "bad gamma"))?;
                    cones.push(ConeDraft {
                        rows,
                        gamma,
                        b: vec![0.0; rows],
                        ..Default::default()
                    });
                    section.clear();
                }
                "end" => {
                    ended = true;
                    break;
                }
                _ => return Err(err(ln, &format!("unknown section `{first}`"))),
            }
            continue;
        }
        let idx = |t: &str, bound: usize| -> Result<usize, DumpError> {
            let i: usize = t.parse().map_err(|_| err(ln, "bad index"))?;
            if i < bound {
                Ok(i)
            } else {
                Err(err(ln, "index out of range"))
            }
        };
        let val = |t: &str| -> Result<f64, DumpError> { t.parse().map_err(|_| err(ln, "bad value")) };
        let pair = || -> Result<(&str, &str), DumpError> {
            match toks[..] {
                [a, b] => Ok((a, b)),
                _ => Err(err(ln, "expected `index value`")),
            }
        };
        let triple = || -> Result<(&str, &str, &str), DumpError> {
            match toks[..] {
                [a, b, c] => Ok((a, b, c)),
                _ => Err(err(ln, "expected `row col value`")),
            }
        };
        match section.as_str() {
            "cost" | "lower" | "upper" => {
                let (i, v) = pair()?;
                let (i, v) = (idx(i, n)?, val(v)?);
                match section.as_str() {
                    "cost" => p.cost[i] = v,
                    "lower" => p.lower[i] = v,
                    _ => p.upper[i] = v,
                }
            }
            "ineq" | "eq" => {
                let (r, c, v) = triple()?;
                let rows = if section == "ineq" { m_in } else { m_eq };
                let t = (idx(r, rows)?, idx(c, n)?, val(v)?);
                if section == "ineq" {
                    ineq.push(t)
                } else {
                    eq.push(t)
                }
            }
            "ineq_rhs" => {
                let (i, v) = pair()?;
                p.ineq_rhs[idx(i, m_in)?] = val(v)?;
            }
            "eq_rhs" => {
                let (i, v) = pair()?;
                p.eq_rhs[idx(i, m_eq)?] = val(v)?;
            }
            "A" | "b" | "d" => {
                let cone = cones.last_mut().expect("checked above");
                match section.as_str() {
                    "A" => {
                        let (r, c, v) = triple()?;
                        cone.a.push((idx(r, cone.rows)?, idx(c, n)?, val(v)?));
                    }
                    "b" => {
                        let (i, v) = pair()?;
                        cone.b[idx(i, cone.rows)?] = val(v)?;
                    }
                    _ => {
                        let (j, v) = pair()?;
                        cone.d.push((idx(j, n)?, val(v)?));
                    }
                }
            }
            _ => return Err(err(ln, "data line outside a section")),
        }
    }
    if !ended {
        return Err(DumpError::Missing("end"));
    }
    if cones.len() != n_cones {
        return Err(DumpError::Missing("cone blocks"));
    }
    p.ineq = sparse_from_triplets(m_in, n, &ineq);
    p.eq = sparse_from_triplets(m_eq, n, &eq);
    p.cones = cones
        .into_iter()
        .map(|c| ConeBlock::from_triplets(n, &c.a, c.b, &c.d, c.gamma))
        .collect();
    Ok(p)
}
