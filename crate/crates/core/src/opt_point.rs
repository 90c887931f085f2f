//! Joint transmit / reflective design for the point target.
//!
//! The transmit step is an exact SDP in the coherence matrix. The reflective
//! step lifts `v` to `V = v v^H`, maximizes a difference-of-convex objective
//! by successive convex approximation, and recovers a unit-modulus vector by
//! Gaussian randomization. [`optimize_joint`] alternates the two.

use log::{debug, warn};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, hermitian_part, psd_project, psd_sqrt};
use crate::rng::complex_normal;
use crate::scene::{path_loss, Channel, Scenario, TargetSpec};
use crate::sdp::{LmiBlockBuilder, LmiProgram, SdpStatus, SolverSettings};
use crate::sensing::{crb_point, echo_directions, echo_matrices, point_information, ReflectGeometry, SensingParams};
use crate::types::{CMat, CVec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptParams {
    pub tol_outer: f64,
    pub max_outer: usize,
    pub tol_inner: f64,
    pub max_inner: usize,
    /// Gaussian randomization draws per reflective step.
    pub randomizations: usize,
    #[serde(skip)]
    pub sdp: SolverSettings,
}

impl Default for OptParams {
    fn default() -> Self {
        Self {
            tol_outer: 1e-3,
            max_outer: 20,
            tol_inner: 1e-4,
            max_inner: 30,
            randomizations: 500,
            sdp: SolverSettings::default(),
        }
    }
}

fn c(x: f64) -> C64 {
    Complex64::new(x, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitSolution {
    pub r_x: CMat,
    /// Optimal `t` of the Schur-complement program.
    pub t: f64,
    /// `tr(ḂRḂ^H) − |tr(BRḂ^H)|² / tr(BRB^H)` at `r_x`.
    pub information: f64,
    pub iterations: usize,
}

/// Optimal coherence matrix for fixed `v`.
pub fn solve_transmit(
    channel: &Channel,
    v: &CVec,
    theta: f64,
    p0: f64,
    spacing_ratio: f64,
    settings: &SolverSettings,
) -> Result<TransmitSolution> {
    if channel.rank() < 2 {
        return Err(Error::NotEstimable(
            "transmit design needs a channel of rank at least 2".into(),
        ));
    }
    let m = channel.m();
    let (b, bdot) = echo_directions(channel, v, theta, spacing_ratio);
    let (bb, bd) = echo_matrices(&b, &bdot);
    let k1 = bd.adjoint() * &bd;
    let k2 = bd.adjoint() * &bb;
    let k3 = bb.adjoint() * &bb;
    // Congruence diag(1/√s1, 1/√s3) on the 2×2 block and R = P0·R̃.
    let s1 = k1.trace().re * p0;
    let s3 = k3.trace().re * p0;
    if !(s1 > 0.0 && s3 > 0.0) {
        return Err(Error::NotEstimable("echo carries no angular information".into()));
    }
    let s2 = (s1 * s3).sqrt();
    let (k1, k2, k3) = (k1 * c(p0 / s1), k2 * c(p0 / s2), k3 * c(p0 / s3));

    let mut prog = LmiProgram::new();
    let r = prog.add_hermitian(m, None);
    let t = prog.add_scalar();
    prog.add_objective(t, 1.0);

    let mut psd = LmiBlockBuilder::hermitian(m);
    r.add_linear(&mut psd, |e| e.clone());
    prog.add_block(psd);

    let mut power = LmiBlockBuilder::real(1);
    power.add_constant_entry(0, 0, c(1.0));
    r.add_linear(&mut power, |e| CMat::from_element(1, 1, -e.trace()));
    prog.add_block(power);

    let mut schur = LmiBlockBuilder::hermitian(2);
    r.add_linear(&mut schur, |e| {
        let a = (&k1 * e).trace();
        let z = (&k2 * e).trace();
        let d = (&k3 * e).trace();
        CMat::from_row_slice(2, 2, &[a, z, z.conj(), d])
    });
    schur.add_entry(t, 0, 0, c(-1.0));
    prog.add_block(schur);

    let sol = prog.solve_with(settings)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(sol.status));
    }
    let mut r_x = psd_project(&hermitian_part(&r.value(&sol.y))) * c(p0);
    let tr = r_x.trace().re;
    if tr > p0 {
        r_x *= c(p0 / tr);
    }
    let information = point_information(&bb, &bd, &r_x);
    Ok(TransmitSolution {
        r_x,
        t: sol.y[t] * s1,
        information,
        iterations: sol.sdp.iterations,
    })
}

/// Lifted reflective variable `(V, t1, t2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub v: CMat,
    pub t1: f64,
    pub t2: f64,
}

/// Matrices of the lifted reflective problem, normalized so that
/// `tr R1 = tr R2 = N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaMatrices {
    pub r1: CMat,
    pub r2: CMat,
    pub dr1: CMat,
    pub dr2: CMat,
    pub dr1d: CMat,
    pub dr2d: CMat,
}

impl ScaMatrices {
    pub fn new(geometry: &ReflectGeometry) -> Self {
        let n = geometry.r1.nrows();
        let norm = |r: &CMat| {
            let tr = r.trace().re;
            if tr > 0.0 {
                r * c(n as f64 / tr)
            } else {
                r.clone()
            }
        };
        Self::from_pair(norm(&geometry.r1), norm(&geometry.r2))
    }

    pub fn from_pair(r1: CMat, r2: CMat) -> Self {
        let n = r1.nrows();
        let d = CMat::from_diagonal(&CVec::from_fn(n, |i, _| c(i as f64)));
        Self {
            dr1: &d * &r1,
            dr2: &d * &r2,
            dr1d: &d * &r1 * &d,
            dr2d: &d * &r2 * &d,
            r1,
            r2,
        }
    }

    /// Initial state `V = v v^H` with tight auxiliaries.
    pub fn state_from(&self, v: &CVec) -> ScaState {
        let vm = v * v.adjoint();
        let (r1, r2) = (tr(&self.r1, &vm).re, tr(&self.r2, &vm).re);
        let floor = self.floor();
        ScaState {
            t1: tr(&self.dr1, &vm).norm_sqr() / r1.max(floor),
            t2: tr(&self.dr2, &vm).norm_sqr() / r2.max(floor),
            v: vm,
        }
    }

    fn floor(&self) -> f64 {
        1e-12 * self.r1.nrows() as f64
    }

    fn pieces(&self, s: &ScaState) -> [f64; 8] {
        let r1 = tr(&self.r1, &s.v).re;
        let r2 = tr(&self.r2, &s.v).re;
        let d1 = tr(&self.dr1d, &s.v).re;
        let d2 = tr(&self.dr2d, &s.v).re;
        // a1, u1, a2, u2 (convex part) then b1, w1, b2, w2 (concave part)
        [
            r2 + d1,
            r2 - s.t1,
            r1 + d2,
            r1 - s.t2,
            r2 - d1,
            r2 + s.t1,
            r1 - d2,
            r1 + s.t2,
        ]
    }

    /// Convex part `f1`.
    pub fn f1(&self, s: &ScaState) -> f64 {
        let p = self.pieces(s);
        0.25 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3])
    }

    /// Concave part `f2`.
    pub fn f2(&self, s: &ScaState) -> f64 {
        let p = self.pieces(s);
        -0.25 * (p[4] * p[4] + p[5] * p[5] + p[6] * p[6] + p[7] * p[7])
    }

    /// `f1 + f2 = tr(R2V)(tr(DR1DV) − t1) + tr(R1V)(tr(DR2DV) − t2)`.
    pub fn objective(&self, s: &ScaState) -> f64 {
        self.f1(s) + self.f2(s)
    }
}

fn tr(a: &CMat, v: &CMat) -> C64 {
    crate::linalg::trace_product(a, v)
}

/// Affine minorant `constant + Re tr(C V) + c1 t1 + c2 t2` of `f1`, tight at
/// the expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaSurrogate {
    pub constant: f64,
    pub coeff_v: CMat,
    pub coeff_t1: f64,
    pub coeff_t2: f64,
}

impl ScaSurrogate {
    pub fn evaluate(&self, s: &ScaState) -> f64 {
        self.constant + tr(&self.coeff_v, &s.v).re + self.coeff_t1 * s.t1 + self.coeff_t2 * s.t2
    }
}

/// First-order expansion of `f1` at `state`.
pub fn sca_surrogate(state: &ScaState, mats: &ScaMatrices) -> ScaSurrogate {
    let p = mats.pieces(state);
    let (a1, u1, a2, u2) = (p[0], p[1], p[2], p[3]);
    // ∇ of ¼ x² is ½ x; chain through each affine piece.
    let coeff_v = (&mats.r2 + &mats.dr1d) * c(0.5 * a1)
        + &mats.r2 * c(0.5 * u1)
        + (&mats.r1 + &mats.dr2d) * c(0.5 * a2)
        + &mats.r1 * c(0.5 * u2);
    ScaSurrogate {
        constant: -mats.f1(state),
        coeff_v,
        coeff_t1: -0.5 * u1,
        coeff_t2: -0.5 * u2,
    }
}

/// One convexified reflective problem: maximize surrogate + `f2`.
fn solve_sca_step(mats: &ScaMatrices, sur: &ScaSurrogate, settings: &SolverSettings) -> Result<ScaState> {
    let n = mats.r1.nrows();
    let mut prog = LmiProgram::new();
    let vv = prog.add_hermitian(n, Some(1.0));
    let t1 = prog.add_scalar();
    let t2 = prog.add_scalar();
    let s: Vec<usize> = (0..4).map(|_| prog.add_scalar()).collect();

    vv.add_objective(&mut prog, |e| tr(&sur.coeff_v, e).re);
    prog.add_objective(t1, sur.coeff_t1);
    prog.add_objective(t2, sur.coeff_t2);
    for &si in &s {
        prog.add_objective(si, -0.25);
    }

    let mut psd = LmiBlockBuilder::hermitian(n);
    vv.add_linear(&mut psd, |e| e.clone());
    prog.add_block(psd);

    for (t, dr, r) in [(t1, &mats.dr1, &mats.r1), (t2, &mats.dr2, &mats.r2)] {
        let mut blk = LmiBlockBuilder::hermitian(2);
        vv.add_linear(&mut blk, |e| {
            let z = tr(dr, e);
            CMat::from_row_slice(2, 2, &[c(0.0), z, z.conj(), tr(r, e)])
        });
        blk.add_entry(t, 0, 0, c(1.0));
        prog.add_block(blk);
    }

    // s_i ≥ q_i² as [[s_i, q_i], [q_i, 1]] ⪰ 0
    let m1 = &mats.r2 - &mats.dr1d;
    let m2 = &mats.r1 - &mats.dr2d;
    let pieces: [(&CMat, Option<usize>); 4] = [(&m1, None), (&mats.r2, Some(t1)), (&m2, None), (&mats.r1, Some(t2))];
    for (k, (mat, aux)) in pieces.into_iter().enumerate() {
        let mut blk = LmiBlockBuilder::real(2);
        blk.add_constant_entry(1, 1, c(1.0));
        vv.add_linear(&mut blk, |e| {
            let q = tr(mat, e).re;
            CMat::from_row_slice(2, 2, &[c(0.0), c(q), c(q), c(0.0)])
        });
        if let Some(a) = aux {
            blk.add_entry(a, 0, 1, c(1.0));
        }
        blk.add_entry(s[k], 0, 0, c(1.0));
        prog.add_block(blk);
    }

    let sol = prog.solve_with(settings)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(sol.status));
    }
    let mut v = hermitian_part(&vv.value(&sol.y));
    // Clean tiny negative eigenvalues while keeping the unit diagonal.
    v = psd_project(&v);
    for i in 0..n {
        let d = v[(i, i)].re.max(f64::MIN_POSITIVE);
        for j in 0..n {
            let s = 1.0 / (d * v[(j, j)].re.max(f64::MIN_POSITIVE)).sqrt();
            if i != j {
                v[(i, j)] *= c(s);
            }
        }
    }
    let v = normalize_unit_diagonal(&v);
    Ok(ScaState {
        v,
        t1: sol.y[t1],
        t2: sol.y[t2],
    })
}

fn normalize_unit_diagonal(v: &CMat) -> CMat {
    let n = v.nrows();
    let d: Vec<f64> = (0..n).map(|i| v[(i, i)].re.max(f64::MIN_POSITIVE).sqrt()).collect();
    let mut out = CMat::from_fn(n, n, |i, j| v[(i, j)] / c(d[i] * d[j]));
    for i in 0..n {
        out[(i, i)] = c(1.0);
    }
    hermitian_part(&out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectiveStatus {
    Converged,
    MaxInner,
    /// The SDP failed mid-loop; the best state so far was used.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectiveSolution {
    pub v: CVec,
    /// Reflective objective at `v` (unnormalized geometry).
    pub objective: f64,
    /// Lifted objective after each SCA step, starting at the initial point.
    pub inner_objectives: Vec<f64>,
    pub inner_iterations: usize,
    /// Best objective among the random candidates alone.
    pub randomization_best: f64,
    pub status: ReflectiveStatus,
}

/// Draws `count` vectors `exp(j arg z)`, `z ~ CN(0, V)`, and returns the best
/// of them and of `incumbents` under `objective`.
pub fn gaussian_randomization<R, F>(
    v_relaxed: &CMat,
    count: usize,
    incumbents: &[CVec],
    objective: F,
    rng: &mut R,
) -> (CVec, f64, f64)
where
    R: Rng + ?Sized,
    F: Fn(&CVec) -> f64 + Sync,
{
    let n = v_relaxed.nrows();
    let root = psd_sqrt(v_relaxed);
    let mut candidates: Vec<CVec> = Vec::with_capacity(count + incumbents.len() + 1);
    for _ in 0..count {
        let w = CVec::from_fn(n, |_, _| complex_normal(rng, 1.0));
        candidates.push(unit_modulus(&(&root * w)));
    }
    let random_count = candidates.len();
    // principal eigenvector projection as one extra deterministic candidate
    let (_, vecs) = eigh(v_relaxed);
    candidates.push(unit_modulus(&vecs.column(0).into_owned()));
    candidates.extend(incumbents.iter().cloned());
    let scores: Vec<f64> = candidates.par_iter().map(|v| objective(v)).collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] || scores[best].is_nan() {
            best = i;
        }
    }
    let random_best = scores[..random_count].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (candidates[best].clone(), scores[best], random_best)
}

/// Entry-wise phase projection; zero entries map to phase 0.
pub fn unit_modulus(z: &CVec) -> CVec {
    z.map(|x| if x.norm() > 0.0 { Complex64::from_polar(1.0, x.arg()) } else { c(1.0) })
}

/// SCA over the lifted problem followed by Gaussian randomization.
/// The result is never worse than `v_init`.
pub fn solve_reflective<R: Rng + ?Sized>(
    channel: &Channel,
    r_x: &CMat,
    theta: f64,
    spacing_ratio: f64,
    v_init: &CVec,
    params: &OptParams,
    rng: &mut R,
) -> Result<ReflectiveSolution> {
    if v_init.len() != channel.n() {
        return Err(Error::Contract("v_init length must equal N".into()));
    }
    let geometry = ReflectGeometry::new(channel, r_x, theta, spacing_ratio);
    let mats = ScaMatrices::new(&geometry);
    let mut state = mats.state_from(v_init);
    let mut objectives = vec![mats.objective(&state)];
    let mut status = ReflectiveStatus::MaxInner;
    let mut iterations = 0;
    for _ in 0..params.max_inner {
        let sur = sca_surrogate(&state, &mats);
        match solve_sca_step(&mats, &sur, &params.sdp) {
            Ok(next) => {
                iterations += 1;
                let prev = *objectives.last().unwrap();
                let val = mats.objective(&next);
                if val < prev {
                    // solver inaccuracy; the previous point is at least as good
                    debug!("SCA step decreased objective {prev} -> {val}; stopping");
                    status = ReflectiveStatus::Converged;
                    break;
                }
                state = next;
                objectives.push(val);
                if (val - prev).abs() <= params.tol_inner * val.abs().max(f64::MIN_POSITIVE) {
                    status = ReflectiveStatus::Converged;
                    break;
                }
            }
            Err(e) => {
                warn!("reflective SCA step failed ({e}); using best state so far");
                status = ReflectiveStatus::SolverFailure;
                break;
            }
        }
    }
    let objective = |v: &CVec| geometry.objective(v);
    let (v, best, random_best) =
        gaussian_randomization(&state.v, params.randomizations, std::slice::from_ref(v_init), objective, rng);
    Ok(ReflectiveSolution {
        v,
        objective: best,
        inner_objectives: objectives,
        inner_iterations: iterations,
        randomization_best: random_best,
        status,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub crb: f64,
    pub r_x: CMat,
    pub v: CVec,
    pub inner_iterations: usize,
    pub randomization_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointTrace {
    /// CRB of the starting point (isotropic transmission, random `v`).
    pub initial_crb: f64,
    pub records: Vec<OuterRecord>,
    pub converged: bool,
}

impl JointTrace {
    pub fn final_record(&self) -> &OuterRecord {
        self.records.last().expect("at least one outer iteration")
    }

    pub fn crb_sequence(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.crb).collect()
    }
}

/// Round-trip gain `|α|²` of the configured point target.
pub fn nominal_alpha(scenario: &Scenario) -> Result<C64> {
    match scenario.target {
        TargetSpec::Point { position } => {
            let d = (position[0] - scenario.irs_position[0]).hypot(position[1] - scenario.irs_position[1]);
            Ok(c(path_loss(d, &scenario.pathloss)?))
        }
        TargetSpec::Extended { .. } => Err(Error::Contract("scenario has an extended target".into())),
    }
}

/// Alternating transmit / reflective optimization from a random-phase start.
/// CRB values use the scenario's nominal `|α|` at `theta_prior`.
pub fn optimize_joint<R: Rng + ?Sized>(
    scenario: &Scenario,
    channel: &Channel,
    theta_prior: f64,
    params: &OptParams,
    rng: &mut R,
) -> Result<JointTrace> {
    if channel.rank() < 2 {
        return Err(Error::NotEstimable("joint design needs a channel of rank at least 2".into()));
    }
    let alpha = nominal_alpha(scenario)?;
    let sp = SensingParams::from_scenario(scenario);
    let crb = |v: &CVec, r: &CMat| crb_point(channel, v, r, theta_prior, alpha, &sp).value;
    let m = channel.m();
    let mut v = crate::rng::random_phases(rng, channel.n());
    let r_iso = CMat::identity(m, m) * c(scenario.p0 / m as f64);
    let initial_crb = crb(&v, &r_iso);
    let mut records: Vec<OuterRecord> = Vec::new();
    let mut converged = false;
    for outer in 0..params.max_outer {
        let mut r_x = match solve_transmit(channel, &v, theta_prior, scenario.p0, scenario.spacing_ratio, &params.sdp) {
            Ok(sol) => sol.r_x,
            Err(e) => match records.last() {
                Some(prev) => {
                    warn!("transmit step failed at outer iteration {outer} ({e}); keeping incumbent");
                    prev.r_x.clone()
                }
                None => return Err(e),
            },
        };
        let incumbent = records.last().map(|r| r.r_x.clone()).unwrap_or_else(|| r_iso.clone());
        if crb(&v, &r_x) > crb(&v, &incumbent) {
            r_x = incumbent;
        }
        let refl = solve_reflective(channel, &r_x, theta_prior, scenario.spacing_ratio, &v, params, rng)?;
        let value = crb(&refl.v, &r_x);
        debug!("outer {outer}: CRB {value:e}, {} inner iterations", refl.inner_iterations);
        let prev = records.last().map(|r| r.crb);
        records.push(OuterRecord {
            crb: value,
            r_x,
            v: refl.v.clone(),
            inner_iterations: refl.inner_iterations,
            randomization_best: refl.randomization_best,
        });
        v = refl.v;
        if let Some(p) = prev {
            if ((p - value) / p).abs() < params.tol_outer {
                converged = true;
                break;
            }
        }
    }
    Ok(JointTrace {
        initial_crb,
        records,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::rng::{random_phases, Streams};
    use crate::scene::make_channel;
    use proptest::prelude::*;
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn random_channel(m: usize, n: usize, seed: u64) -> Channel {
        let mut rng = Streams::new(seed).stream("opt-test", 0);
        Channel::new(CMat::from_fn(n, m, |_, _| complex_normal(&mut rng, 1.0)))
    }

    fn random_psd(n: usize, seed: u64) -> CMat {
        let mut rng = Streams::new(seed).stream("opt-psd", 0);
        let a = CMat::from_fn(n, n, |_, _| complex_normal(&mut rng, 1.0));
        hermitian_part(&(&a * a.adjoint()))
    }

    #[test]
    fn transmit_power_active_and_schur_tight() {
        for seed in 0..5 {
            let ch = random_channel(4, 4, seed);
            let v = random_phases(&mut Streams::new(seed).stream("v", 0), 4);
            let p0 = 2.0;
            let sol = solve_transmit(&ch, &v, 0.3, p0, 0.5, &SolverSettings::default()).unwrap();
            assert!(rel(sol.r_x.trace().re, p0) < 1e-6);
            assert!(sol.r_x.trace().re <= p0 * (1.0 + 1e-8));
            assert!(min_eigenvalue(&sol.r_x) >= -1e-8 * p0 / 4.0);
            assert!(rel(sol.t, sol.information) < 1e-6, "{} vs {}", sol.t, sol.information);
            // Schur LMI holds at the returned point.
            let (b, bdot) = echo_directions(&ch, &v, 0.3, 0.5);
            let (bb, bd) = echo_matrices(&b, &bdot);
            let (k1, k2, k3) = crate::sensing::point_traces(&bb, &bd, &sol.r_x);
            let lmi = CMat::from_row_slice(2, 2, &[c(k1 - sol.information), k2, k2.conj(), c(k3)]);
            assert!(min_eigenvalue(&lmi) >= -1e-6 * k1);
        }
    }

    #[test]
    fn transmit_beats_rank_one_grid_for_two_antennas() {
        let ch = random_channel(2, 3, 11);
        let v = random_phases(&mut Streams::new(11).stream("v", 0), 3);
        let p0 = 1.0;
        let theta = -0.4;
        let sol = solve_transmit(&ch, &v, theta, p0, 0.5, &SolverSettings::default()).unwrap();
        let (b, bdot) = echo_directions(&ch, &v, theta, 0.5);
        let (bb, bd) = echo_matrices(&b, &bdot);
        // w = (cos a, sin a · e^{jφ})
        let mut grid_best = 0.0_f64;
        let steps = 200;
        for i in 0..=steps {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / steps as f64;
            for k in 0..(2 * steps) {
                let phi = std::f64::consts::PI * k as f64 / steps as f64;
                let w = CVec::from_vec(vec![c(a.cos()), Complex64::from_polar(a.sin(), phi)]);
                let r = &w * w.adjoint() * c(p0);
                grid_best = grid_best.max(point_information(&bb, &bd, &r));
            }
        }
        assert!(sol.information >= grid_best * (1.0 - 1e-6), "{} < {grid_best}", sol.information);
    }

    #[test]
    fn transmit_scaling_in_channel() {
        let ch = random_channel(3, 4, 21);
        let v = random_phases(&mut Streams::new(21).stream("v", 0), 4);
        let s = SolverSettings::default();
        let base = solve_transmit(&ch, &v, 0.1, 1.0, 0.5, &s).unwrap();
        let scaled = solve_transmit(&ch.scaled(3.0), &v, 0.1, 1.0, 0.5, &s).unwrap();
        assert!(rel(scaled.information, base.information * 81.0) < 1e-6);
    }

    #[test]
    fn transmit_rejects_rank_one_channel() {
        let u = CVec::from_element(3, c(1.0));
        let w = CVec::from_element(2, c(0.5));
        let ch = Channel::new(&u * w.adjoint());
        let v = CVec::from_element(3, c(1.0));
        assert!(matches!(
            solve_transmit(&ch, &v, 0.0, 1.0, 0.5, &SolverSettings::default()),
            Err(Error::NotEstimable(_))
        ));
    }

    fn random_state(n: usize, seed: u64) -> ScaState {
        let mut rng = Streams::new(seed).stream("state", 0);
        let a = CMat::from_fn(n, 2, |_, _| complex_normal(&mut rng, 1.0));
        let v = normalize_unit_diagonal(&(&a * a.adjoint()));
        ScaState {
            v,
            t1: rng.random::<f64>() * 50.0,
            t2: rng.random::<f64>() * 50.0,
        }
    }

    #[test]
    fn surrogate_tight_at_anchor_and_below_everywhere() {
        let mats = ScaMatrices::from_pair(random_psd(4, 1), random_psd(4, 2));
        for k in 0..20 {
            let anchor = random_state(4, 100 + k);
            let sur = sca_surrogate(&anchor, &mats);
            let f1 = mats.f1(&anchor);
            assert!(rel(sur.evaluate(&anchor), f1) < 1e-9);
            for j in 0..50 {
                let p = random_state(4, 1000 * k + j);
                let f = mats.f1(&p);
                assert!(sur.evaluate(&p) <= f + 1e-9 * f.abs().max(1.0));
            }
        }
    }

    #[test]
    fn lifted_objective_matches_vector_form() {
        let ch = random_channel(3, 4, 5);
        let r = random_psd(3, 6);
        let geo = ReflectGeometry::new(&ch, &r, 0.2, 0.5);
        let mats = ScaMatrices::from_pair(geo.r1.clone(), geo.r2.clone());
        for seed in 0..10 {
            let v = random_phases(&mut Streams::new(seed).stream("v", 0), 4);
            let st = mats.state_from(&v);
            assert!(rel(mats.objective(&st), geo.objective(&v)) < 1e-9);
        }
    }

    #[test]
    fn reflective_never_worse_and_unit_modulus() {
        let ch = random_channel(4, 4, 8);
        let r = random_psd(4, 9);
        let params = OptParams::default();
        for seed in 0..3 {
            let v0 = random_phases(&mut Streams::new(seed).stream("v0", 0), 4);
            let geo = ReflectGeometry::new(&ch, &r, 0.0, 0.5);
            let sol = solve_reflective(&ch, &r, 0.0, 0.5, &v0, &params, &mut Streams::new(seed).stream("rand", 0)).unwrap();
            assert!(sol.objective >= geo.objective(&v0));
            assert!(rel(sol.objective, geo.objective(&sol.v)) < 1e-12);
            for z in sol.v.iter() {
                assert!((z.norm() - 1.0).abs() <= 1e-12);
            }
            for w in sol.inner_objectives.windows(2) {
                assert!(w[1] >= w[0] * (1.0 - 1e-9));
            }
            // Restarting from the result cannot lose ground.
            let again = solve_reflective(&ch, &r, 0.0, 0.5, &sol.v, &params, &mut Streams::new(seed).stream("rand", 1)).unwrap();
            assert!(again.objective >= sol.objective);
        }
    }

    #[test]
    fn joint_design_reference_scenario() {
        let s = Scenario::reference_point();
        let streams = Streams::new(5);
        let ch = make_channel(&s, &mut streams.stream("channel", 0)).unwrap();
        let params = OptParams::default();
        let trace = optimize_joint(&s, &ch, 0.0, &params, &mut streams.stream("optimize_joint", 0)).unwrap();
        let seq = trace.crb_sequence();
        assert!(trace.converged);
        assert!(seq.len() <= 10, "{seq:?}");
        for w in seq.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6));
        }
        assert!(*seq.last().unwrap() <= trace.initial_crb);
        for rec in &trace.records {
            assert!(rec.r_x.trace().re <= s.p0 * (1.0 + 1e-8));
            assert!(min_eigenvalue(&rec.r_x) >= -1e-8 * s.p0 / s.m as f64);
            assert!(rec.v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
        let again = optimize_joint(&s, &ch, 0.0, &params, &mut streams.stream("optimize_joint", 0)).unwrap();
        assert_eq!(trace, again);
    }

    /// Exhaustive 64-level phase grid; the objective ignores a common phase,
    /// so the first element stays at phase 0.
    fn phase_grid_best(geo: &ReflectGeometry) -> f64 {
        let levels = 64;
        let ph = |k: usize| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / levels as f64);
        let mut best = f64::NEG_INFINITY;
        for a in 0..levels {
            for b in 0..levels {
                let v = CVec::from_vec(vec![c(1.0), ph(a), ph(b)]);
                best = best.max(geo.objective(&v));
            }
        }
        best
    }

    #[test]
    fn reflective_matches_phase_grid_for_three_elements() {
        let params = OptParams::default();
        for seed in 0..5 {
            let ch = random_channel(4, 3, 300 + seed);
            let r = random_psd(4, 400 + seed);
            let theta = 0.3;
            let geo = ReflectGeometry::new(&ch, &r, theta, 0.5);
            let v0 = random_phases(&mut Streams::new(seed).stream("v0", 0), 3);
            let sol =
                solve_reflective(&ch, &r, theta, 0.5, &v0, &params, &mut Streams::new(seed).stream("rand", 0)).unwrap();
            let grid = phase_grid_best(&geo);
            assert!(sol.objective >= 0.98 * grid, "seed {seed}: {} vs grid {grid}", sol.objective);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn surrogate_minorizes(seed in any::<u64>()) {
            let mats = ScaMatrices::from_pair(random_psd(3, seed), random_psd(3, seed ^ 1));
            let anchor = random_state(3, seed ^ 2);
            let sur = sca_surrogate(&anchor, &mats);
            let p = random_state(3, seed ^ 3);
            let f = mats.f1(&p);
            prop_assert!(sur.evaluate(&p) <= f + 1e-9 * f.abs().max(1.0));
        }
    }
}
