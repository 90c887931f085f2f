//! Plain-text sparse dump of an [`SdpProblem`].
//!
//! ```text
//! sense min
//! blocks 3 2
//! rhs 1 0.5
//! 0 1 1 1 2.0     # matrix block i j value, matrix 0 = cost, k = constraint k
//! ```
//!
//! Indices are 1-based except the matrix index; only the upper triangle is
//! stored. Values round-trip exactly.

use std::io::{BufRead, Write};

use super::problem::{Constraint, Sense, SdpProblem};
use crate::error::{Error, Result};
use crate::types::RMat;

pub fn write_sparse<W: Write>(problem: &SdpProblem, mut out: W) -> std::io::Result<()> {
    let sense = match problem.sense {
        Sense::Minimize => "min",
        Sense::Maximize => "max",
    };
    writeln!(out, "sense {sense}")?;
    let dims: Vec<String> = problem.block_dims.iter().map(|d| d.to_string()).collect();
    writeln!(out, "blocks {}", dims.join(" "))?;
    let rhs: Vec<String> = problem.constraints.iter().map(|c| format!("{:?}", c.rhs)).collect();
    writeln!(out, "rhs {}", rhs.join(" "))?;
    let write_matrix = |out: &mut W, k: usize, b: usize, m: &RMat| -> std::io::Result<()> {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{k} {} {} {} {v:?}", b + 1, i + 1, j + 1)?;
                }
            }
        }
        Ok(())
    };
    for (b, c) in problem.objective.iter().enumerate() {
        write_matrix(&mut out, 0, b, c)?;
    }
    for (k, con) in problem.constraints.iter().enumerate() {
        for (b, a) in &con.terms {
            write_matrix(&mut out, k + 1, *b, a)?;
        }
    }
    Ok(())
}

pub fn read_sparse<R: BufRead>(input: R) -> Result<SdpProblem> {
    let bad = |line: usize, msg: &str| Error::Config(format!("line {line}: {msg}"));
    let mut sense = None;
    let mut dims: Option<Vec<usize>> = None;
    let mut rhs: Option<Vec<f64>> = None;
    let mut entries = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Config(e.to_string()))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut words = body.split_whitespace();
        let head = words.next().unwrap();
        match head {
            "sense" => {
                sense = Some(match words.next() {
                    Some("min") => Sense::Minimize,
                    Some("max") => Sense::Maximize,
                    _ => return Err(bad(lineno, "sense must be min or max")),
                })
            }
            "blocks" => {
                dims = Some(
                    words
                        .map(|w| w.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(lineno, "invalid block size"))?,
                )
            }
            "rhs" => {
                rhs = Some(
                    words
                        .map(|w| w.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(lineno, "invalid rhs value"))?,
                )
            }
            _ => {
                let fields: Vec<&str> = std::iter::once(head).chain(words).collect();
                if fields.len() != 5 {
                    return Err(bad(lineno, "expected `matrix block i j value`"));
                }
                let ints: Vec<usize> = fields[..4]
                    .iter()
                    .map(|w| w.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(lineno, "invalid index"))?;
                let v: f64 = fields[4].parse().map_err(|_| bad(lineno, "invalid value"))?;
                entries.push((lineno, ints[0], ints[1], ints[2], ints[3], v));
            }
        }
    }
    let dims = dims.ok_or_else(|| Error::Config("missing `blocks` line".into()))?;
    let rhs = rhs.unwrap_or_default();
    let mut problem = SdpProblem::new(dims.clone(), sense.unwrap_or_default());
    problem.constraints = rhs.iter().map(|&b| Constraint::new(b)).collect();
    for (lineno, k, b, i, j, v) in entries {
        if b == 0 || b > dims.len() || i == 0 || j == 0 || i > dims[b - 1] || j > dims[b - 1] {
            return Err(bad(lineno, "index out of range"));
        }
        if k > problem.constraints.len() {
            return Err(bad(lineno, "constraint index exceeds rhs length"));
        }
        let (b, i, j) = (b - 1, i - 1, j - 1);
        let target = if k == 0 {
            &mut problem.objective[b]
        } else {
            let con = &mut problem.constraints[k - 1];
            let pos = match con.terms.iter().position(|(bb, _)| *bb == b) {
                Some(p) => p,
                None => {
                    con.terms.push((b, RMat::zeros(dims[b], dims[b])));
                    con.terms.len() - 1
                }
            };
            &mut con.terms[pos].1
        };
        target[(i, j)] = v;
        target[(j, i)] = v;
    }
    Ok(problem)
}
