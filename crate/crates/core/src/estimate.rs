//! Maximum-likelihood estimators and the Monte-Carlo MSE harness.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_hpd;
use crate::rng::Streams;
use crate::scene::{make_channel, make_target, simulate_echo, synthesize_waveform, Channel, Scenario, TargetModel};
use crate::sensing::{crb_extended, crb_point, steering_vector, SensingParams};
use crate::types::{CMat, CVec, C64};

/// Angle search for the point MLE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Coarse grid step in radians.
    pub step: f64,
    /// Golden-section bracket width at termination, radians.
    pub tol: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            step: 0.2_f64.to_radians(),
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub theta: f64,
    pub alpha: C64,
    /// Concentrated likelihood at `theta`.
    pub objective: f64,
}

/// Precomputed pieces of the concentrated point likelihood.
struct PointLikelihood<'a> {
    channel: &'a Channel,
    v: &'a CVec,
    spacing_ratio: f64,
    /// `Y X^H`
    s: CMat,
    /// `R_x^T` with `R_x = X X^H / T`
    rt: CMat,
    dwell: f64,
}

impl<'a> PointLikelihood<'a> {
    fn new(y: &CMat, x: &CMat, channel: &'a Channel, v: &'a CVec, spacing_ratio: f64) -> Self {
        let dwell = x.ncols() as f64;
        Self {
            channel,
            v,
            spacing_ratio,
            s: y * x.adjoint(),
            rt: (x * x.adjoint()).transpose() / Complex64::new(dwell, 0.0),
            dwell,
        }
    }

    /// `(|b^H S b*|² / (T ‖b‖² b^H R^T b), b^H S b*, T ‖b‖² b^H R^T b)`
    fn eval(&self, theta: f64) -> (f64, C64, f64) {
        let a = steering_vector(theta, self.channel.n(), self.spacing_ratio);
        let b = self.channel.g().transpose() * a.component_mul(self.v);
        let bc = b.conjugate();
        let num = b.dotc(&(&self.s * &bc));
        let den = self.dwell * b.norm_squared() * b.dotc(&(&self.rt * &b)).re;
        if den <= 0.0 || !den.is_finite() {
            return (f64::NEG_INFINITY, num, den);
        }
        (num.norm_sqr() / den, num, den)
    }
}

/// Angle and gain from one echo block `Y` (M×T) under transmit block `X`.
pub fn mle_point(y: &CMat, x: &CMat, channel: &Channel, v: &CVec, spacing_ratio: f64, grid: &GridParams) -> Result<PointEstimate> {
    let (m, n) = (channel.m(), channel.n());
    if y.nrows() != m || x.nrows() != m || y.ncols() != x.ncols() || v.len() != n {
        return Err(Error::Contract("echo, waveform and channel dimensions disagree".into()));
    }
    if !(grid.step > 0.0 && grid.tol > 0.0) {
        return Err(Error::Domain("grid step and tolerance must be positive".into()));
    }
    let lik = PointLikelihood::new(y, x, channel, v, spacing_ratio);
    let count = (std::f64::consts::PI / grid.step).ceil() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=count {
        let theta = (-FRAC_PI_2 + k as f64 * grid.step).min(FRAC_PI_2);
        let (val, _, _) = lik.eval(theta);
        if val > best.0 {
            best = (val, theta);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::EstimationFailure("echo direction vanishes over the whole angle grid".into()));
    }
    let (mut lo, mut hi) = ((best.1 - grid.step).max(-FRAC_PI_2), (best.1 + grid.step).min(FRAC_PI_2));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (lik.eval(x1).0, lik.eval(x2).0);
    while hi - lo > grid.tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = lik.eval(x2).0;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = lik.eval(x1).0;
        }
    }
    let mid = 0.5 * (lo + hi);
    let refined = lik.eval(mid);
    let theta = if refined.0 >= best.0 { mid } else { best.1 };
    let (objective, num, den) = lik.eval(theta);
    Ok(PointEstimate {
        theta,
        alpha: num / den,
        objective,
    })
}

/// Closed-form least-squares gain for a given angle.
pub fn point_gain(y: &CMat, x: &CMat, channel: &Channel, v: &CVec, theta: f64, spacing_ratio: f64) -> Result<C64> {
    let lik = PointLikelihood::new(y, x, channel, v, spacing_ratio);
    let (val, num, den) = lik.eval(theta);
    if !val.is_finite() {
        return Err(Error::EstimationFailure("echo direction vanishes at this angle".into()));
    }
    Ok(num / den)
}

/// Echo model `Y = P H Q` with `P = G^T Φ^T` and `Q = Φ G X`.
fn extended_factors(x: &CMat, channel: &Channel, v: &CVec) -> (CMat, CMat) {
    let (n, m) = (channel.n(), channel.m());
    let phi_g = CMat::from_fn(n, m, |i, j| v[i] * channel.g()[(i, j)]);
    (phi_g.transpose(), &phi_g * x)
}

/// Least-squares response matrix `Ĥ = (P^H P)⁻¹ P^H Y Q^H (Q Q^H)⁻¹`, the
/// Kronecker-structured normal equations of `vec Y = (Q^T ⊗ P) vec H`.
pub fn mle_extended(y: &CMat, x: &CMat, channel: &Channel, v: &CVec) -> Result<CMat> {
    let (m, n) = (channel.m(), channel.n());
    if y.nrows() != m || x.nrows() != m || y.ncols() != x.ncols() || v.len() != n {
        return Err(Error::Contract("echo, waveform and channel dimensions disagree".into()));
    }
    if channel.rank() < n {
        return Err(Error::NotEstimable(format!("response matrix needs rank(G) = N = {n}")));
    }
    let (p, q) = extended_factors(x, channel, v);
    let left = cholesky_hpd(&(p.adjoint() * &p))
        .ok_or_else(|| Error::NotEstimable("G^T Φ^T has deficient column rank".into()))?;
    let right = cholesky_hpd(&(&q * q.adjoint()))
        .ok_or_else(|| Error::NotEstimable(format!("transmit block must have rank at least N = {n}")))?;
    // Ĥ (QQ^H) = (P^H P)⁻¹ P^H Y Q^H; solve from the right via the adjoint.
    let w = left.solve(&(p.adjoint() * y * q.adjoint()));
    Ok(right.solve(&w.adjoint()).adjoint())
}

/// Transmit and reflective beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub r_x: CMat,
    pub v: CVec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseOptions {
    pub trials: usize,
    /// Draw a fresh channel and target for every trial.
    pub redraw: bool,
    pub grid: GridParams,
}

impl Default for MseOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            redraw: false,
            grid: GridParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    /// Successful trials.
    pub trials: usize,
    pub failures: usize,
    /// Mean squared error: radians² (point) or squared Frobenius (extended).
    pub mse: f64,
    /// Bound averaged over the trial realizations.
    pub crb: f64,
    pub ratio: f64,
    /// Sample standard deviation of the per-trial errors over `√trials`.
    pub stderr: f64,
}

struct Trial {
    error: Option<f64>,
    crb: f64,
}

/// Monte-Carlo MSE of the ML estimator that matches the scenario's target.
///
/// `designer` maps a channel realization and its trial index to beamformers.
/// Trial `k` draws its noise (and, with `redraw`, its channel and target)
/// from streams indexed by `k`, so results do not depend on scheduling.
pub fn monte_carlo_mse<F>(scenario: &Scenario, designer: F, options: &MseOptions, streams: &Streams) -> Result<MseReport>
where
    F: Fn(&Channel, usize) -> Result<Design> + Sync,
{
    if options.trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    scenario.validate()?;
    let params = SensingParams::from_scenario(scenario);
    let fixed = if options.redraw {
        None
    } else {
        let channel = make_channel(scenario, &mut streams.stream("channel", 0))?;
        let target = make_target(scenario, &mut streams.stream("target", 0))?;
        let design = designer(&channel, 0)?;
        Some((channel, target, design))
    };
    let run_trial = |k: usize| -> Result<Trial> {
        let idx = k as u64;
        let owned;
        let (channel, target, design) = match &fixed {
            Some((c, t, d)) => (c, t, d),
            None => {
                let c = make_channel(scenario, &mut streams.stream("channel", idx))?;
                let t = make_target(scenario, &mut streams.stream("target", idx))?;
                let d = designer(&c, k)?;
                owned = (c, t, d);
                (&owned.0, &owned.1, &owned.2)
            }
        };
        let waveform = synthesize_waveform(&design.r_x, scenario.dwell)?;
        let h = target.response(scenario.n, scenario.spacing_ratio);
        let y = simulate_echo(channel, &design.v, &h, &waveform, scenario.noise_power, &mut streams.stream("noise", idx))?;
        let r_x = waveform.coherence();
        match target {
            TargetModel::Point { theta, alpha } => {
                let crb = crb_point(channel, &design.v, &r_x, *theta, *alpha, &params).value;
                let error = mle_point(&y, &waveform.x, channel, &design.v, scenario.spacing_ratio, &options.grid)
                    .ok()
                    .map(|e| (e.theta - theta).powi(2));
                Ok(Trial { error, crb })
            }
            TargetModel::Extended { h, .. } => {
                let crb = crb_extended(channel, &r_x, &params).value;
                let error = mle_extended(&y, &waveform.x, channel, &design.v)
                    .ok()
                    .map(|e| (e - h).norm_squared());
                Ok(Trial { error, crb })
            }
        }
    };
    let outcomes: Vec<Option<Trial>> = (0..options.trials)
        .into_par_iter()
        .map(|k| match run_trial(k) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("trial {k} failed: {e}");
                None
            }
        })
        .collect();
    let errors: Vec<f64> = outcomes.iter().flatten().filter_map(|t| t.error).collect();
    let crbs: Vec<f64> = outcomes.iter().flatten().map(|t| t.crb).collect();
    let failures = options.trials - errors.len();
    if errors.is_empty() {
        return Err(Error::EstimationFailure(format!("all {} trials failed", options.trials)));
    }
    let count = errors.len() as f64;
    let mse = pairwise_sum(&errors) / count;
    let var = if errors.len() > 1 {
        let dev: Vec<f64> = errors.iter().map(|e| (e - mse).powi(2)).collect();
        pairwise_sum(&dev) / (count - 1.0)
    } else {
        0.0
    };
    let crb = if crbs.is_empty() { f64::INFINITY } else { pairwise_sum(&crbs) / crbs.len() as f64 };
    Ok(MseReport {
        trials: errors.len(),
        failures,
        mse,
        crb,
        ratio: mse / crb,
        stderr: (var / count).sqrt(),
    })
}

/// Pairwise summation, independent of how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron;
    use crate::opt_extended::optimal_rx_extended;
    use crate::rng::{complex_normal, random_phases};
    use crate::scene::{dbm_to_watts, echo_mean};

    fn random_channel(n: usize, m: usize, seed: u64) -> Channel {
        let mut rng = Streams::new(seed).stream("est", 0);
        Channel::new(CMat::from_fn(n, m, |_, _| complex_normal(&mut rng, 1.0)))
    }

    fn isotropic_waveform(m: usize, dwell: usize) -> CMat {
        synthesize_waveform(&CMat::identity(m, m), dwell).unwrap().x
    }

    #[test]
    fn noiseless_point_recovers_truth() {
        for seed in 0..5 {
            let ch = random_channel(4, 4, seed);
            let v = random_phases(&mut Streams::new(seed).stream("v", 0), 4);
            let theta = -0.7 + 0.31 * seed as f64;
            let alpha = Complex64::from_polar(0.3, 1.1 * seed as f64);
            let a = steering_vector(theta, 4, 0.5);
            let h = &a * a.transpose() * alpha;
            let x = isotropic_waveform(4, 32);
            let y = echo_mean(&ch, &v, &h, &x).unwrap();
            let est = mle_point(&y, &x, &ch, &v, 0.5, &GridParams::default()).unwrap();
            assert!((est.theta - theta).abs() < 1e-5, "{} vs {theta}", est.theta);
            assert!((est.alpha - alpha).norm() / alpha.norm() < 1e-3);
            let exact = point_gain(&y, &x, &ch, &v, theta, 0.5).unwrap();
            assert!((exact - alpha).norm() / alpha.norm() < 1e-8);
        }
    }

    #[test]
    fn refinement_never_worse_than_grid() {
        let ch = random_channel(4, 3, 7);
        let v = random_phases(&mut Streams::new(7).stream("v", 0), 4);
        let x = isotropic_waveform(3, 16);
        let mut rng = Streams::new(7).stream("noise", 0);
        let y = CMat::from_fn(3, 16, |_, _| complex_normal(&mut rng, 1.0));
        let grid = GridParams::default();
        let est = mle_point(&y, &x, &ch, &v, 0.5, &grid).unwrap();
        let count = (std::f64::consts::PI / grid.step).ceil() as usize;
        let coarse = (0..=count)
            .map(|k| {
                let t = (-FRAC_PI_2 + k as f64 * grid.step).min(FRAC_PI_2);
                let a = steering_vector(t, 4, 0.5);
                let b = ch.g().transpose() * a.component_mul(&v);
                let bbx = &b * b.transpose() * &x;
                let num = (bbx.adjoint() * &y).trace();
                num.norm_sqr() / bbx.norm_squared()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(est.objective >= coarse * (1.0 - 1e-12));
    }

    #[test]
    fn degenerate_channel_fails() {
        let ch = Channel::new(CMat::zeros(3, 2));
        let v = CVec::from_element(3, Complex64::new(1.0, 0.0));
        let x = isotropic_waveform(2, 8);
        let y = CMat::zeros(2, 8);
        assert!(matches!(
            mle_point(&y, &x, &ch, &v, 0.5, &GridParams::default()),
            Err(Error::EstimationFailure(_))
        ));
    }

    #[test]
    fn noiseless_extended_recovers_truth() {
        let ch = random_channel(4, 5, 3);
        let v = random_phases(&mut Streams::new(3).stream("v", 0), 4);
        let mut rng = Streams::new(3).stream("h", 0);
        let h = CMat::from_fn(4, 4, |_, _| complex_normal(&mut rng, 1.0));
        let x = isotropic_waveform(5, 12);
        let y = echo_mean(&ch, &v, &h, &x).unwrap();
        let est = mle_extended(&y, &x, &ch, &v).unwrap();
        assert!((est - &h).norm() <= 1e-8 * h.norm());
    }

    #[test]
    fn structured_solve_matches_dense() {
        for n in 1..=3 {
            let m = n + 1;
            let ch = random_channel(n, m, 10 + n as u64);
            let v = random_phases(&mut Streams::new(n as u64).stream("v", 0), n);
            let x = isotropic_waveform(m, 6);
            let mut rng = Streams::new(n as u64).stream("y", 0);
            let y = CMat::from_fn(m, 6, |_, _| complex_normal(&mut rng, 1.0));
            let structured = mle_extended(&y, &x, &ch, &v).unwrap();
            let (p, q) = extended_factors(&x, &ch, &v);
            let e = kron(&q.transpose(), &p);
            let vec_y = CVec::from_column_slice(y.as_slice());
            let dense = (e.adjoint() * &e).lu().solve(&(e.adjoint() * vec_y)).unwrap();
            let dense = CMat::from_column_slice(n, n, dense.as_slice());
            assert!((structured - &dense).norm() <= 1e-9 * dense.norm());
        }
    }

    #[test]
    fn extended_rejects_short_waveform() {
        let ch = random_channel(4, 4, 1);
        let v = CVec::from_element(4, Complex64::new(1.0, 0.0));
        let x = synthesize_waveform(&CMat::identity(4, 4), 4).unwrap().x.columns(0, 2).into_owned();
        let y = CMat::zeros(4, 2);
        assert!(matches!(mle_extended(&y, &x, &ch, &v), Err(Error::NotEstimable(_))));
    }

    fn small_extended() -> Scenario {
        let mut s = Scenario::reference_extended();
        s.m = 4;
        s.n = 4;
        s.dwell = 32;
        s
    }

    fn extended_designer(s: &Scenario) -> impl Fn(&Channel, usize) -> Result<Design> + Sync + '_ {
        move |ch: &Channel, _| {
            let params = SensingParams::from_scenario(s);
            let d = optimal_rx_extended(ch, s.p0, &params)?;
            Ok(Design {
                r_x: d.r_x,
                v: CVec::from_element(s.n, Complex64::new(1.0, 0.0)),
            })
        }
    }

    #[test]
    fn noiseless_limit_and_determinism() {
        let mut s = small_extended();
        s.noise_power = 1e-40;
        let opts = MseOptions { trials: 4, ..Default::default() };
        let r = monte_carlo_mse(&s, extended_designer(&s), &opts, &Streams::new(1)).unwrap();
        assert!(r.mse < 1e-10 * r.crb.max(1.0) && r.mse < 1e-10);

        let s = small_extended();
        let opts = MseOptions { trials: 8, redraw: true, ..Default::default() };
        let a = monte_carlo_mse(&s, extended_designer(&s), &opts, &Streams::new(2)).unwrap();
        let b = monte_carlo_mse(&s, extended_designer(&s), &opts, &Streams::new(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.failures, 0);
    }

    #[test]
    fn extended_estimator_unbiased() {
        let s = small_extended();
        let params = SensingParams::from_scenario(&s);
        let streams = Streams::new(9);
        let ch = make_channel(&s, &mut streams.stream("channel", 0)).unwrap();
        let target = make_target(&s, &mut streams.stream("target", 0)).unwrap();
        let h = target.response(s.n, s.spacing_ratio);
        let d = extended_designer(&s)(&ch, 0).unwrap();
        let w = synthesize_waveform(&d.r_x, s.dwell).unwrap();
        let trials = 500;
        let mut mean = CMat::zeros(4, 4);
        for k in 0..trials {
            let y = simulate_echo(&ch, &d.v, &h, &w, s.noise_power, &mut streams.stream("noise", k)).unwrap();
            mean += mle_extended(&y, &w.x, &ch, &d.v).unwrap() - &h;
        }
        mean /= Complex64::new(trials as f64, 0.0);
        let crb = crb_extended(&ch, &w.coherence(), &params).value;
        assert!(mean.norm() <= 3.0 * (crb / trials as f64).sqrt());
    }

    #[test]
    fn point_mse_tracks_crb_at_high_snr() {
        let mut s = Scenario::reference_point();
        s.m = 4;
        s.n = 4;
        s.p0 = dbm_to_watts(60.0);
        let designer = |_: &Channel, _| {
            Ok(Design {
                r_x: CMat::identity(4, 4) * Complex64::new(s.p0 / 4.0, 0.0),
                v: CVec::from_element(4, Complex64::new(1.0, 0.0)),
            })
        };
        let opts = MseOptions { trials: 50, ..Default::default() };
        let r = monte_carlo_mse(&s, designer, &opts, &Streams::new(4)).unwrap();
        assert!(r.ratio > 10f64.powf(-0.2) && r.ratio < 10f64.powf(0.2), "{r:?}");
    }
}
