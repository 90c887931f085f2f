use nalgebra::linalg::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::problem::{Sense, SdpProblem};
use crate::error::Result;
use crate::linalg::frobenius_dot;
use crate::types::{RMat, RVec};

/// Termination status of [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    /// The primal equality constraints admit no PSD solution.
    Infeasible,
    /// The primal objective is unbounded (the dual is infeasible).
    Unbounded,
    /// Iteration budget exhausted or numerical breakdown; best iterate returned.
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Target relative gap and infeasibility.
    pub gap_tol: f64,
    /// Looser threshold accepted when progress stalls.
    pub accept_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Relative threshold for dropping linearly dependent constraints.
    pub presolve_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            accept_tol: 1e-7,
            max_iter: 200,
            step_fraction: 0.98,
            presolve_tol: 1e-10,
        }
    }
}

/// Per-iteration diagnostics. Objectives are in the units of the input problem
/// (minimization form), residuals relative to the internally scaled problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `⟨X, Z⟩` in input units.
    pub complementarity: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<RMat>,
    pub y: RVec,
    pub z: Vec<RMat>,
    pub status: SdpStatus,
    /// Relative duality gap of the returned iterate.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// `⟨C, X⟩` in the sense of the input problem.
    pub primal_objective: f64,
    /// `b^T y`.
    pub dual_objective: f64,
    pub iterations: usize,
    pub history: Vec<IterateRecord>,
    /// Constraints removed by presolve as linear combinations of others.
    pub dropped_constraints: Vec<usize>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Solves with default settings.
pub fn solve(problem: &SdpProblem) -> Result<SdpSolution> {
    solve_with(problem, &SolverSettings::default())
}

pub fn solve_with(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution> {
    problem.validate()?;
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let (data, kept, dropped, inconsistent) = Data::build(problem, sign, settings.presolve_tol);
    let m_orig = problem.constraints.len();

    if inconsistent {
        return Ok(trivial_solution(problem, SdpStatus::Infeasible, dropped));
    }

    let mut ipm = Ipm::new(&data, settings);
    let outcome = ipm.run();

    // Undo scaling.
    let sc = data.cost_scale;
    let sb = data.rhs_scale;
    let x: Vec<RMat> = outcome.x.iter().map(|m| m * sb).collect();
    let z_internal: Vec<RMat> = outcome.z.iter().map(|m| m * sc).collect();
    let mut y = RVec::zeros(m_orig);
    for (r, &k) in kept.iter().enumerate() {
        y[k] = outcome.y[r] * sc / data.row_norms[r];
    }
    let (y, z) = if sign < 0.0 {
        (-y, z_internal.iter().map(|m| -m).collect::<Vec<_>>())
    } else {
        (y, z_internal)
    };
    let primal_objective: f64 = problem
        .objective
        .iter()
        .zip(&x)
        .map(|(c, xb)| frobenius_dot(c, xb))
        .sum();
    let dual_objective: f64 = problem
        .constraints
        .iter()
        .zip(y.iter())
        .map(|(c, yk)| c.rhs * yk)
        .sum();
    let history = outcome
        .history
        .iter()
        .map(|h| IterateRecord {
            primal_objective: h.primal_objective * sc * sb,
            dual_objective: h.dual_objective * sc * sb,
            complementarity: h.complementarity * sc * sb,
            ..*h
        })
        .collect();

    Ok(SdpSolution {
        x,
        y,
        z,
        status: outcome.status,
        gap: outcome.gap,
        primal_infeasibility: outcome.pinf,
        dual_infeasibility: outcome.dinf,
        primal_objective,
        dual_objective,
        iterations: outcome.iterations,
        history,
        dropped_constraints: dropped,
    })
}

fn trivial_solution(problem: &SdpProblem, status: SdpStatus, dropped: Vec<usize>) -> SdpSolution {
    let zeros: Vec<RMat> = problem.block_dims.iter().map(|&n| RMat::zeros(n, n)).collect();
    SdpSolution {
        x: zeros.clone(),
        y: RVec::zeros(problem.constraints.len()),
        z: zeros,
        status,
        gap: f64::INFINITY,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations: 0,
        history: Vec::new(),
        dropped_constraints: dropped,
    }
}

/// One block of one constraint, with a sparse copy when it pays off.
struct Term {
    block: usize,
    dense: RMat,
    nz: Vec<(usize, usize, f64)>,
    sparse: bool,
}

impl Term {
    fn new(block: usize, dense: RMat) -> Self {
        let n = dense.nrows();
        let mut nz = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v = dense[(i, j)];
                if v != 0.0 {
                    nz.push((i, j, v));
                }
            }
        }
        let sparse = nz.len() <= n;
        Self {
            block,
            dense,
            nz,
            sparse,
        }
    }

    fn dot(&self, x: &RMat) -> f64 {
        if self.sparse {
            self.nz.iter().map(|&(i, j, v)| v * x[(i, j)]).sum()
        } else {
            frobenius_dot(&self.dense, x)
        }
    }

    fn add_scaled_to(&self, alpha: f64, out: &mut RMat) {
        if self.sparse {
            for &(i, j, v) in &self.nz {
                out[(i, j)] += alpha * v;
            }
        } else {
            *out += &self.dense * alpha;
        }
    }

    /// `W A W` for symmetric `W`.
    fn congruence(&self, w: &RMat) -> RMat {
        if self.sparse {
            let n = w.nrows();
            let mut out = RMat::zeros(n, n);
            for &(p, q, v) in &self.nz {
                // v · w_p w_q^T
                for c in 0..n {
                    let s = v * w[(q, c)];
                    if s != 0.0 {
                        for r in 0..n {
                            out[(r, c)] += s * w[(r, p)];
                        }
                    }
                }
            }
            out
        } else {
            w * &self.dense * w
        }
    }
}

/// Scaled, presolved problem data in minimization form.
struct Data {
    dims: Vec<usize>,
    c: Vec<RMat>,
    rows: Vec<Vec<Term>>,
    b: RVec,
    by_block: Vec<Vec<(usize, usize)>>,
    row_norms: Vec<f64>,
    cost_scale: f64,
    rhs_scale: f64,
}

impl Data {
    /// Returns the data, kept and dropped row indices, and whether a dropped
    /// row contradicts the kept ones.
    fn build(problem: &SdpProblem, sign: f64, tol: f64) -> (Data, Vec<usize>, Vec<usize>, bool) {
        let dims = problem.block_dims.clone();
        // Merge duplicate block references and vectorize for presolve.
        let merged: Vec<Vec<(usize, RMat)>> = problem
            .constraints
            .iter()
            .map(|con| {
                let mut acc: Vec<Option<RMat>> = vec![None; dims.len()];
                for (b, a) in &con.terms {
                    match &mut acc[*b] {
                        Some(m) => *m += a,
                        slot => *slot = Some(a.clone()),
                    }
                }
                acc.into_iter()
                    .enumerate()
                    .filter_map(|(b, m)| m.filter(|m| m.norm() > 0.0).map(|m| (b, m)))
                    .collect()
            })
            .collect();

        let (kept, dropped, inconsistent) = presolve(&dims, &merged, problem, tol);

        let row_norms: Vec<f64> = kept
            .iter()
            .map(|&k| {
                merged[k]
                    .iter()
                    .map(|(_, m)| m.norm_squared())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let b_raw = RVec::from_iterator(
            kept.len(),
            kept.iter()
                .zip(&row_norms)
                .map(|(&k, &nk)| problem.constraints[k].rhs / nk),
        );
        let c_norm = problem
            .objective
            .iter()
            .map(|m| m.norm_squared())
            .sum::<f64>()
            .sqrt();
        let cost_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
        let b_norm = b_raw.norm();
        let rhs_scale = if b_norm > 0.0 { b_norm } else { 1.0 };

        let c = problem
            .objective
            .iter()
            .map(|m| m * (sign / cost_scale))
            .collect();
        let rows: Vec<Vec<Term>> = kept
            .iter()
            .zip(&row_norms)
            .map(|(&k, &nk)| {
                merged[k]
                    .iter()
                    .map(|(b, m)| Term::new(*b, m / nk))
                    .collect()
            })
            .collect();
        let mut by_block = vec![Vec::new(); dims.len()];
        for (r, terms) in rows.iter().enumerate() {
            for (t, term) in terms.iter().enumerate() {
                by_block[term.block].push((r, t));
            }
        }
        let data = Data {
            dims,
            c,
            rows,
            b: b_raw / rhs_scale,
            by_block,
            row_norms,
            cost_scale,
            rhs_scale,
        };
        (data, kept, dropped, inconsistent)
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn apply(&self, x: &[RMat]) -> RVec {
        RVec::from_iterator(
            self.m(),
            self.rows
                .iter()
                .map(|terms| terms.iter().map(|t| t.dot(&x[t.block])).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &RVec) -> Vec<RMat> {
        let mut out: Vec<RMat> = self.dims.iter().map(|&n| RMat::zeros(n, n)).collect();
        for (terms, &yk) in self.rows.iter().zip(y.iter()) {
            if yk != 0.0 {
                for t in terms {
                    t.add_scaled_to(yk, &mut out[t.block]);
                }
            }
        }
        out
    }
}

/// Greedy Gram–Schmidt over vectorized constraints; rows whose residual falls
/// below `tol` relative to their norm are dropped and checked for consistency.
fn presolve(
    dims: &[usize],
    merged: &[Vec<(usize, RMat)>],
    problem: &SdpProblem,
    tol: f64,
) -> (Vec<usize>, Vec<usize>, bool) {
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n * n;
            Some(o)
        })
        .collect();
    let total: usize = dims.iter().map(|&n| n * n).sum();
    let vectorize = |terms: &[(usize, RMat)]| {
        let mut v = RVec::zeros(total);
        for (b, m) in terms {
            for (i, x) in m.iter().enumerate() {
                v[offsets[*b] + i] = *x;
            }
        }
        v
    };

    let mut basis: Vec<RVec> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut raw_kept: Vec<RVec> = Vec::new();
    for (k, terms) in merged.iter().enumerate() {
        let v = vectorize(terms);
        let norm = v.norm();
        let mut r = v.clone();
        for q in &basis {
            let p = q.dot(&r);
            r.axpy(-p, q, 1.0);
        }
        // second pass for numerical orthogonality
        for q in &basis {
            let p = q.dot(&r);
            r.axpy(-p, q, 1.0);
        }
        let rn = r.norm();
        if norm > 0.0 && rn > tol * norm {
            basis.push(r / rn);
            kept.push(k);
            raw_kept.push(v);
        } else {
            dropped.push(k);
        }
    }

    let mut inconsistent = false;
    if !dropped.is_empty() {
        let m = kept.len();
        let gram = RMat::from_fn(m, m, |i, j| raw_kept[i].dot(&raw_kept[j]));
        let chol = Cholesky::new(gram);
        for &k in &dropped {
            let v = vectorize(&merged[k]);
            let rhs = problem.constraints[k].rhs;
            let predicted = if m == 0 {
                0.0
            } else if let Some(ch) = &chol {
                let proj = RVec::from_iterator(m, raw_kept.iter().map(|r| r.dot(&v)));
                let coef = ch.solve(&proj);
                kept.iter()
                    .zip(coef.iter())
                    .map(|(&kk, c)| c * problem.constraints[kk].rhs)
                    .sum()
            } else {
                rhs
            };
            let scale = 1.0 + rhs.abs() + predicted.abs();
            if (rhs - predicted).abs() > 1e-8 * scale {
                inconsistent = true;
            }
        }
    }
    (kept, dropped, inconsistent)
}

struct Scaling {
    w: RMat,
    g: RMat,
    g_inv: RMat,
    lambda: RVec,
}

fn nt_scaling(x: &RMat, z: &RMat) -> Option<Scaling> {
    let n = x.nrows();
    let l = Cholesky::new(x.clone())?.l();
    let t = l.transpose() * z * &l;
    let eig = SymmetricEigen::new((&t + t.transpose()) * 0.5);
    let floor = 1e-300;
    let d: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(floor)).collect();
    let u = eig.eigenvectors;
    let mut g = &l * &u;
    for j in 0..n {
        let s = d[j].powf(-0.25);
        g.column_mut(j).scale_mut(s);
    }
    let l_inv = l.solve_lower_triangular(&RMat::identity(n, n))?;
    let mut g_inv = u.transpose() * l_inv;
    for i in 0..n {
        let s = d[i].powf(0.25);
        g_inv.row_mut(i).scale_mut(s);
    }
    let w = &g * g.transpose();
    let lambda = RVec::from_iterator(n, d.iter().map(|v| v.sqrt()));
    Some(Scaling {
        w: (&w + w.transpose()) * 0.5,
        g,
        g_inv,
        lambda,
    })
}

/// Largest `α` with `X + α ΔX ⪰ 0`, `INFINITY` when unrestricted.
fn max_step(x: &RMat, dx: &RMat) -> Option<f64> {
    let l = Cholesky::new(x.clone())?.l();
    let t1 = l.solve_lower_triangular(dx)?;
    let t2 = l.solve_lower_triangular(&t1.transpose())?;
    let sym = (&t2 + t2.transpose()) * 0.5;
    let lmin = SymmetricEigen::new(sym).eigenvalues.min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

const MAX_POLISH: usize = 8;

/// `‖X Z‖_F ≤ 1e−7 · tr X · tr Z / n` on every block.
fn complementarity_small(x: &[RMat], z: &[RMat]) -> bool {
    x.iter().zip(z).all(|(xb, zb)| {
        let n = xb.nrows() as f64;
        (xb * zb).norm() <= 1e-7 * xb.trace() * zb.trace() / n
    })
}

fn inner(a: &[RMat], b: &[RMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| frobenius_dot(x, y)).sum()
}

fn block_norm(a: &[RMat]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

struct Outcome {
    x: Vec<RMat>,
    y: RVec,
    z: Vec<RMat>,
    status: SdpStatus,
    gap: f64,
    pinf: f64,
    dinf: f64,
    iterations: usize,
    history: Vec<IterateRecord>,
}

struct Ipm<'a> {
    data: &'a Data,
    settings: &'a SolverSettings,
}

struct Direction {
    dx: Vec<RMat>,
    dy: RVec,
    dz: Vec<RMat>,
}

enum SchurFactor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn solve(&self, rhs: &RVec) -> Option<RVec> {
        match self {
            SchurFactor::Chol(c) => Some(c.solve(rhs)),
            SchurFactor::Lu(lu) => lu.solve(rhs),
        }
    }
}

impl<'a> Ipm<'a> {
    fn new(data: &'a Data, settings: &'a SolverSettings) -> Self {
        Self { data, settings }
    }

    fn initial_point(&self) -> (Vec<RMat>, RVec, Vec<RMat>) {
        let d = self.data;
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for (blk, &n) in d.dims.iter().enumerate() {
            let nf = n as f64;
            let mut const_x: f64 = 1.0;
            let mut norm_a: f64 = 0.0;
            for &(r, t) in &d.by_block[blk] {
                let an = d.rows[r][t].dense.norm();
                const_x = const_x.max((1.0 + d.b[r].abs()) / (1.0 + an));
                norm_a = norm_a.max(an);
            }
            let xi = 10f64.max(nf.sqrt()).max(nf * const_x);
            let eta = 10f64.max(nf.sqrt()).max(norm_a).max(d.c[blk].norm());
            xs.push(RMat::identity(n, n) * xi);
            zs.push(RMat::identity(n, n) * eta);
        }
        (xs, RVec::zeros(d.m()), zs)
    }

    fn run(&mut self) -> Outcome {
        let d = self.data;
        let s = self.settings;
        let n_tot: f64 = d.dims.iter().sum::<usize>() as f64;
        let (mut x, mut y, mut z) = self.initial_point();
        let b_norm = d.b.norm();
        let c_norm = block_norm(&d.c);
        let mut history = Vec::new();
        let mut best: Option<(f64, Vec<RMat>, RVec, Vec<RMat>, f64, f64, f64)> = None;
        let mut stalled = 0;
        let mut polish = 0;
        let mut status = SdpStatus::MaxIter;
        let mut iterations = 0;
        let mut last_steps = (0.0, 0.0);

        for iter in 0..=s.max_iter {
            iterations = iter;
            let ax = d.apply(&x);
            let rp = &d.b - &ax;
            let aty = d.adjoint(&y);
            let rd: Vec<RMat> = (0..d.dims.len()).map(|k| &d.c[k] - &z[k] - &aty[k]).collect();
            let pobj = inner(&d.c, &x);
            let dobj = d.b.dot(&y);
            let comp = inner(&x, &z);
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf = block_norm(&rd) / (1.0 + c_norm);
            let denom = 1.0 + pobj.abs() + dobj.abs();
            let gap = (comp.max(0.0) / denom).max((pobj - dobj).abs() / denom);
            history.push(IterateRecord {
                primal_objective: pobj,
                dual_objective: dobj,
                complementarity: comp,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                step_primal: last_steps.0,
                step_dual: last_steps.1,
            });

            let merit = gap.max(pinf).max(dinf);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, x.clone(), y.clone(), z.clone(), gap, pinf, dinf));
            }
            if gap <= s.gap_tol && pinf <= s.gap_tol && dinf <= s.gap_tol {
                // A small ⟨X, Z⟩ does not force a small X·Z on flat duals;
                // spend a few more iterations on pairwise complementarity.
                polish += 1;
                if polish > MAX_POLISH || complementarity_small(&x, &z) {
                    status = SdpStatus::Optimal;
                    break;
                }
            }

            // Infeasibility certificates.
            let y_norm = y.norm();
            if dobj > 0.0 && y_norm > 1e8 {
                let ray = block_norm(&(0..d.dims.len()).map(|k| &aty[k] + &z[k]).collect::<Vec<_>>());
                if ray <= 1e-6 * dobj {
                    status = SdpStatus::Infeasible;
                    break;
                }
            }
            let x_norm = block_norm(&x);
            if pobj < 0.0 && x_norm > 1e8 && ax.norm() <= 1e-6 * pobj.abs() {
                status = SdpStatus::Unbounded;
                break;
            }
            if iter == s.max_iter {
                break;
            }

            let Some(scalings) = x
                .iter()
                .zip(&z)
                .map(|(xb, zb)| nt_scaling(xb, zb))
                .collect::<Option<Vec<_>>>()
            else {
                break;
            };
            let Some(factor) = self.schur(&scalings) else {
                break;
            };
            let wrdw: Vec<RMat> = scalings.iter().zip(&rd).map(|(sc, r)| &sc.w * r * &sc.w).collect();
            let a_wrdw = d.apply(&wrdw);

            // Predictor.
            let rc_aff: Vec<RMat> = x.iter().map(|m| -m).collect();
            let Some(aff) = self.direction(&factor, &scalings, &rp, &rd, &a_wrdw, rc_aff) else {
                break;
            };
            let (ap_aff, ad_aff) = match self.steps(&x, &z, &aff, 1.0) {
                Some(v) => v,
                None => break,
            };
            let mu = comp / n_tot;
            let x_aff: Vec<RMat> = x.iter().zip(&aff.dx).map(|(a, b)| a + b * ap_aff).collect();
            let z_aff: Vec<RMat> = z.iter().zip(&aff.dz).map(|(a, b)| a + b * ad_aff).collect();
            let mu_aff = inner(&x_aff, &z_aff) / n_tot;
            let sigma = if mu > 0.0 {
                (mu_aff / mu).max(0.0).min(1.0).powi(3)
            } else {
                0.0
            };

            // Corrector in the NT-scaled space, where X̃ = Z̃ = Λ.
            let rc: Vec<RMat> = scalings
                .iter()
                .enumerate()
                .map(|(k, sc)| {
                    let n = d.dims[k];
                    let dxs = &sc.g_inv * &aff.dx[k] * sc.g_inv.transpose();
                    let dzs = sc.g.transpose() * &aff.dz[k] * &sc.g;
                    let prod = &dxs * &dzs;
                    let sym = (&prod + prod.transpose()) * 0.5;
                    let mut smat = RMat::zeros(n, n);
                    for i in 0..n {
                        for j in 0..n {
                            let mut rhs = -sym[(i, j)];
                            if i == j {
                                rhs += sigma * mu - sc.lambda[i] * sc.lambda[i];
                            }
                            smat[(i, j)] = 2.0 * rhs / (sc.lambda[i] + sc.lambda[j]);
                        }
                    }
                    &sc.g * smat * sc.g.transpose()
                })
                .collect();
            let Some(dir) = self.direction(&factor, &scalings, &rp, &rd, &a_wrdw, rc) else {
                break;
            };
            let (ap, ad) = match self.steps(&x, &z, &dir, s.step_fraction) {
                Some(v) => v,
                None => break,
            };
            for k in 0..d.dims.len() {
                x[k] += &dir.dx[k] * ap;
                z[k] += &dir.dz[k] * ad;
                x[k] = (&x[k] + x[k].transpose()) * 0.5;
                z[k] = (&z[k] + z[k].transpose()) * 0.5;
            }
            y.axpy(ad, &dir.dy, 1.0);
            last_steps = (ap, ad);
            if ap.max(ad) < 1e-10 {
                stalled += 1;
                if stalled >= 3 {
                    break;
                }
            } else {
                stalled = 0;
            }
        }

        if status == SdpStatus::Optimal || status == SdpStatus::Infeasible || status == SdpStatus::Unbounded {
            let last = history.last().copied().unwrap();
            let denom = 1.0 + last.primal_objective.abs() + last.dual_objective.abs();
            let gap = (last.complementarity.max(0.0) / denom)
                .max((last.primal_objective - last.dual_objective).abs() / denom);
            return Outcome {
                x,
                y,
                z,
                status,
                gap,
                pinf: last.primal_infeasibility,
                dinf: last.dual_infeasibility,
                iterations,
                history,
            };
        }
        let (merit, bx, by, bz, gap, pinf, dinf) = best.expect("at least one iterate");
        let status = if merit <= s.accept_tol {
            SdpStatus::Optimal
        } else {
            SdpStatus::MaxIter
        };
        Outcome {
            x: bx,
            y: by,
            z: bz,
            status,
            gap,
            pinf,
            dinf,
            iterations,
            history,
        }
    }

    fn schur(&self, scalings: &[Scaling]) -> Option<SchurFactor> {
        let d = self.data;
        let m = d.m();
        let mut mat = RMat::zeros(m, m);
        for (blk, list) in d.by_block.iter().enumerate() {
            let w = &scalings[blk].w;
            for (pj, &(rj, tj)) in list.iter().enumerate() {
                let p = d.rows[rj][tj].congruence(w);
                for &(ri, ti) in &list[..=pj] {
                    let v = d.rows[ri][ti].dot(&p);
                    mat[(ri, rj)] += v;
                    if ri != rj {
                        mat[(rj, ri)] += v;
                    }
                }
            }
        }
        if m == 0 {
            return Cholesky::new(mat).map(SchurFactor::Chol);
        }
        if let Some(c) = Cholesky::new(mat.clone()) {
            return Some(SchurFactor::Chol(c));
        }
        let diag_max = mat.diagonal().iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
        for reg in [1e-14, 1e-12, 1e-10] {
            let mut r = mat.clone();
            for i in 0..m {
                r[(i, i)] += reg * diag_max;
            }
            if let Some(c) = Cholesky::new(r) {
                return Some(SchurFactor::Chol(c));
            }
        }
        Some(SchurFactor::Lu(mat.lu()))
    }

    fn direction(
        &self,
        factor: &SchurFactor,
        scalings: &[Scaling],
        rp: &RVec,
        rd: &[RMat],
        a_wrdw: &RVec,
        rc: Vec<RMat>,
    ) -> Option<Direction> {
        let d = self.data;
        let rhs = rp - d.apply(&rc) + a_wrdw;
        let dy = factor.solve(&rhs)?;
        if dy.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let aty = d.adjoint(&dy);
        let dz: Vec<RMat> = rd.iter().zip(&aty).map(|(r, a)| r - a).collect();
        let dx: Vec<RMat> = rc
            .into_iter()
            .zip(scalings.iter().zip(&dz))
            .map(|(r, (sc, dzb))| {
                let t = r - &sc.w * dzb * &sc.w;
                (&t + t.transpose()) * 0.5
            })
            .collect();
        Some(Direction { dx, dy, dz })
    }

    fn steps(&self, x: &[RMat], z: &[RMat], dir: &Direction, fraction: f64) -> Option<(f64, f64)> {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for k in 0..x.len() {
            ap = ap.min(max_step(&x[k], &dir.dx[k])?);
            ad = ad.min(max_step(&z[k], &dir.dz[k])?);
        }
        Some(((fraction * ap).min(1.0), (fraction * ad).min(1.0)))
    }
}
