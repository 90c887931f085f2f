//! Scenarios, channels, targets, waveforms and simulated echoes.
//!
//! Coordinates are 2-D in meters. The IRS is a ULA along the x axis whose
//! broadside faces −y, so a target directly below the IRS sits at θ = 0 and
//! angles grow towards +x. The AP is a ULA along the x axis facing +y.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, numerical_rank, svd_sorted, SortedSvd};
use crate::rng::{complex_normal, random_phases};
use crate::sensing::steering_vector;
use crate::types::{CMat, CVec, RVec};

/// `10^((dBm − 30)/10)` watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// `10^(dB/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    /// Linear gain at the reference distance.
    pub k0: f64,
    /// Reference distance in meters.
    pub d0: f64,
    pub exponent: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            k0: 1e-3,
            d0: 1.0,
            exponent: 2.5,
        }
    }
}

/// `K0 · (d / d0)^(−α0)` as a linear power gain.
pub fn path_loss(d: f64, params: &PathLoss) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {d}")));
    }
    Ok(params.k0 * (d / params.d0).powf(-params.exponent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    Point { position: [f64; 2] },
    /// `count` scatterers uniform in a disc.
    Extended {
        center: [f64; 2],
        radius: f64,
        count: usize,
    },
}

/// Complete description of one sensing setup. Powers are linear watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ap_position: [f64; 2],
    pub irs_position: [f64; 2],
    pub target: TargetSpec,
    /// AP antennas.
    pub m: usize,
    /// IRS elements.
    pub n: usize,
    /// Dwell length in samples.
    pub dwell: usize,
    pub p0: f64,
    pub noise_power: f64,
    /// Rician factor of the AP–IRS link; `f64::INFINITY` gives pure LoS.
    pub rician_factor: f64,
    pub pathloss: PathLoss,
    /// IRS element spacing over wavelength.
    pub spacing_ratio: f64,
    pub seed: u64,
}

impl Scenario {
    /// Point-target layout: AP at the origin, IRS at (5, 5), target at (5, 0).
    pub fn reference_point() -> Self {
        Self {
            ap_position: [0.0, 0.0],
            irs_position: [5.0, 5.0],
            target: TargetSpec::Point { position: [5.0, 0.0] },
            m: 8,
            n: 8,
            dwell: 256,
            p0: dbm_to_watts(30.0),
            noise_power: dbm_to_watts(-120.0),
            rician_factor: 0.5,
            pathloss: PathLoss::default(),
            spacing_ratio: 0.5,
            seed: 0,
        }
    }

    /// Extended-target layout: seven scatterers in a 0.5 m disc around (5, 0).
    pub fn reference_extended() -> Self {
        Self {
            target: TargetSpec::Extended {
                center: [5.0, 0.0],
                radius: 0.5,
                count: 7,
            },
            ..Self::reference_point()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m < 2 {
            return fail(format!("M must exceed 1, got {}", self.m));
        }
        if self.n < 2 {
            return fail(format!("N must exceed 1, got {}", self.n));
        }
        if self.dwell < 1 {
            return fail("dwell T must be at least 1".into());
        }
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            return fail(format!("P0 must be positive, got {}", self.p0));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return fail(format!("noise power must be positive, got {}", self.noise_power));
        }
        if !(self.rician_factor >= 0.0) {
            return fail(format!("Rician factor must be non-negative, got {}", self.rician_factor));
        }
        if !(self.spacing_ratio > 0.0 && self.spacing_ratio.is_finite()) {
            return fail(format!("element spacing ratio must be positive, got {}", self.spacing_ratio));
        }
        let pl = &self.pathloss;
        if !(pl.k0 > 0.0 && pl.d0 > 0.0 && pl.exponent.is_finite()) {
            return fail("path loss needs K0 > 0 and d0 > 0".into());
        }
        if distance(self.ap_position, self.irs_position) <= 0.0 {
            return fail("AP and IRS positions coincide".into());
        }
        match self.target {
            TargetSpec::Point { position } => {
                if distance(position, self.irs_position) <= 0.0 {
                    return fail("target position coincides with the IRS".into());
                }
                let theta = irs_angle(self.irs_position, position);
                if theta.abs() >= FRAC_PI_2 {
                    return fail("target must lie in front of the IRS (|θ| < 90°)".into());
                }
            }
            TargetSpec::Extended { center, radius, count } => {
                if count < 1 {
                    return fail("extended target needs at least one scatterer".into());
                }
                if !(radius >= 0.0) {
                    return fail("scatterer radius must be non-negative".into());
                }
                if center[1] + radius >= self.irs_position[1] {
                    return fail("scatterer disc must lie in front of the IRS".into());
                }
            }
        }
        Ok(())
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Angle of `p` seen from the IRS, measured from its broadside (−y).
pub fn irs_angle(irs: [f64; 2], p: [f64; 2]) -> f64 {
    (p[0] - irs[0]).atan2(irs[1] - p[1])
}

/// Departure angle at the AP towards `p`, measured from broadside (+y).
pub fn ap_angle(ap: [f64; 2], p: [f64; 2]) -> f64 {
    (p[0] - ap[0]).atan2(p[1] - ap[1])
}

/// AP→IRS channel `G` (N×M) with a cached sorted SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    g: CMat,
    svd: SortedSvd,
}

impl Channel {
    pub fn new(g: CMat) -> Self {
        let svd = svd_sorted(&g);
        Self { g, svd }
    }

    pub fn g(&self) -> &CMat {
        &self.g
    }

    /// IRS elements.
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// AP antennas.
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    pub fn svd(&self) -> &SortedSvd {
        &self.svd
    }

    pub fn singular_values(&self) -> &RVec {
        &self.svd.values
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.svd.values)
    }

    pub fn scaled(&self, c: f64) -> Channel {
        Channel::new(&self.g * Complex64::new(c, 0.0))
    }
}

/// Rician AP→IRS channel with geometric LoS part and CN(0, 1) scattering.
pub fn make_channel<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<Channel> {
    let (n, m) = (scenario.n, scenario.m);
    let loss = path_loss(distance(scenario.ap_position, scenario.irs_position), &scenario.pathloss)?;
    let arrival = irs_angle(scenario.irs_position, scenario.ap_position);
    let departure = ap_angle(scenario.ap_position, scenario.irs_position);
    let los = steering_vector(arrival, n, scenario.spacing_ratio)
        * steering_vector(departure, m, 0.5).adjoint();
    let beta = scenario.rician_factor;
    let (w_los, w_nlos) = if beta.is_infinite() {
        (1.0, 0.0)
    } else {
        ((beta / (1.0 + beta)).sqrt(), (1.0 / (1.0 + beta)).sqrt())
    };
    let nlos = CMat::from_fn(n, m, |_, _| complex_normal(rng, 1.0));
    let g = (los * Complex64::new(w_los, 0.0) + nlos * Complex64::new(w_nlos, 0.0))
        * Complex64::new(loss.sqrt(), 0.0);
    Ok(Channel::new(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub theta: f64,
    pub alpha: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetModel {
    Point { theta: f64, alpha: Complex64 },
    Extended { h: CMat, scatterers: Vec<Scatterer> },
}

impl TargetModel {
    /// Target response matrix `H` seen by an `n`-element IRS.
    pub fn response(&self, n: usize, spacing_ratio: f64) -> CMat {
        match self {
            TargetModel::Point { theta, alpha } => {
                let a = steering_vector(*theta, n, spacing_ratio);
                &a * a.transpose() * *alpha
            }
            TargetModel::Extended { h, .. } => h.clone(),
        }
    }
}

/// `Σ α_i a(θ_i) a(θ_i)^T`.
pub fn scatterer_response(scatterers: &[Scatterer], n: usize, spacing_ratio: f64) -> CMat {
    let mut h = CMat::zeros(n, n);
    for s in scatterers {
        let a = steering_vector(s.theta, n, spacing_ratio);
        h += &a * a.transpose() * s.alpha;
    }
    h
}

/// Round-trip coefficient of a unit-RCS reflector at distance `d` from the IRS:
/// magnitude `L(d)` (two amplitude legs of `√L(d)`), uniform phase.
fn reflection_coefficient<R: Rng + ?Sized>(d: f64, pl: &PathLoss, rng: &mut R) -> Result<Complex64> {
    let mag = path_loss(d, pl)?;
    let phase = rng.random::<f64>() * TAU;
    Ok(Complex64::from_polar(mag, phase))
}

pub fn make_target<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Result<TargetModel> {
    let irs = scenario.irs_position;
    match scenario.target {
        TargetSpec::Point { position } => {
            let theta = irs_angle(irs, position);
            if theta.abs() >= FRAC_PI_2 {
                return Err(Error::Domain("point target is not in front of the IRS".into()));
            }
            let alpha = reflection_coefficient(distance(irs, position), &scenario.pathloss, rng)?;
            Ok(TargetModel::Point { theta, alpha })
        }
        TargetSpec::Extended { center, radius, count } => {
            let mut scatterers = Vec::with_capacity(count);
            for _ in 0..count {
                let r = radius * rng.random::<f64>().sqrt();
                let phi = rng.random::<f64>() * TAU;
                let p = [center[0] + r * phi.cos(), center[1] + r * phi.sin()];
                let theta = irs_angle(irs, p);
                let alpha = reflection_coefficient(distance(irs, p), &scenario.pathloss, rng)?;
                scatterers.push(Scatterer { theta, alpha });
            }
            let h = scatterer_response(&scatterers, scenario.n, scenario.spacing_ratio);
            Ok(TargetModel::Extended { h, scatterers })
        }
    }
}

/// Transmit block `X` (M×T).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub x: CMat,
}

impl Waveform {
    pub fn dwell(&self) -> usize {
        self.x.ncols()
    }

    /// `(1/T) X X^H`.
    pub fn coherence(&self) -> CMat {
        &self.x * self.x.adjoint() / Complex64::new(self.dwell() as f64, 0.0)
    }
}

/// Builds `X = W_k Λ_k^{1/2} U √T` where `U` holds the first `k` rows of the
/// unitary `T`-point DFT, so that `(1/T) X X^H = R_x` holds exactly.
pub fn synthesize_waveform(r_x: &CMat, dwell: usize) -> Result<Waveform> {
    if !r_x.is_square() {
        return Err(Error::Contract("coherence matrix must be square".into()));
    }
    let m = r_x.nrows();
    let (vals, vecs) = eigh(r_x);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    let floor = -1e-10 * top.max(f64::MIN_POSITIVE);
    if vals.iter().any(|&v| v < floor) {
        return Err(Error::Domain("coherence matrix is not PSD".into()));
    }
    let rank = numerical_rank(&vals.map(|v| v.max(0.0)));
    if dwell < rank.max(1) {
        return Err(Error::InfeasibleSynthesis { rank, dwell });
    }
    let t = dwell as f64;
    let mut x = CMat::zeros(m, dwell);
    for k in 0..rank {
        let amp = vals[k].sqrt();
        for s in 0..dwell {
            // U_{k,s} √T = exp(−j 2π k s / T)
            let u = Complex64::from_polar(1.0, -TAU * ((k * s) % dwell) as f64 / t);
            for i in 0..m {
                x[(i, s)] += vecs[(i, k)] * amp * u;
            }
        }
    }
    Ok(Waveform { x })
}

/// Noiseless echo `G^T Φ^T H Φ G X` with `Φ = diag(v)`.
pub fn echo_mean(channel: &Channel, v: &CVec, h: &CMat, x: &CMat) -> Result<CMat> {
    let (n, m) = (channel.n(), channel.m());
    if v.len() != n || h.nrows() != n || h.ncols() != n || x.nrows() != m {
        return Err(Error::Contract(format!(
            "echo dimensions: G is {n}x{m}, v has {}, H is {}x{}, X has {} rows",
            v.len(),
            h.nrows(),
            h.ncols(),
            x.nrows()
        )));
    }
    let phi_g = CMat::from_fn(n, m, |i, j| v[i] * channel.g()[(i, j)]);
    let gx = &phi_g * x;
    Ok(phi_g.transpose() * (h * gx))
}

/// `Y = G^T Φ^T H Φ G X + N` with i.i.d. CN(0, σ²) noise.
pub fn simulate_echo<R: Rng + ?Sized>(
    channel: &Channel,
    v: &CVec,
    h: &CMat,
    waveform: &Waveform,
    noise_power: f64,
    rng: &mut R,
) -> Result<CMat> {
    if v.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::Contract("reflection coefficients must be unit modulus".into()));
    }
    let mut y = echo_mean(channel, v, h, &waveform.x)?;
    if noise_power > 0.0 {
        for z in y.iter_mut() {
            *z += complex_normal(rng, noise_power);
        }
    }
    Ok(y)
}

/// Random unit-modulus reflection vector.
pub fn random_reflection<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    random_phases(rng, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_part;
    use crate::rng::Streams;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn path_loss_values() {
        let pl = PathLoss::default();
        assert_eq!(path_loss(1.0, &pl).unwrap(), 1e-3);
        let custom = PathLoss { k0: 0.2, d0: 3.0, exponent: 3.7 };
        assert!(rel(path_loss(3.0, &custom).unwrap(), 0.2) < 1e-15);
        // 1e−3 · 10^(−2.5)
        assert!(rel(path_loss(10.0, &pl).unwrap(), 3.1622776601683795e-6) < 1e-14);
        assert!(matches!(path_loss(0.0, &pl), Err(Error::Domain(_))));
        assert!(matches!(path_loss(-1.0, &pl), Err(Error::Domain(_))));
    }

    #[test]
    fn dbm_conversion() {
        assert!(rel(dbm_to_watts(30.0), 1.0) < 1e-15);
        assert!(rel(dbm_to_watts(-120.0), 1e-15) < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(17.3)) - 17.3).abs() < 1e-12);
    }

    #[test]
    fn reference_geometry_angles() {
        let s = Scenario::reference_point();
        s.validate().unwrap();
        let target = make_target(&s, &mut Streams::new(1).stream("target", 0)).unwrap();
        match target {
            TargetModel::Point { theta, alpha } => {
                assert_eq!(theta, 0.0);
                // |α| = L(5 m)
                assert!(rel(alpha.norm(), 1e-3 * 5f64.powf(-2.5)) < 1e-12);
            }
            _ => panic!("expected point target"),
        }
        assert!((irs_angle(s.irs_position, s.ap_position) + std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((ap_angle(s.ap_position, s.irs_position) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let ok = Scenario::reference_point();
        let cases: Vec<Box<dyn Fn(&mut Scenario)>> = vec![
            Box::new(|s| s.m = 1),
            Box::new(|s| s.n = 1),
            Box::new(|s| s.dwell = 0),
            Box::new(|s| s.p0 = 0.0),
            Box::new(|s| s.noise_power = -1.0),
            Box::new(|s| s.spacing_ratio = 0.0),
            Box::new(|s| s.rician_factor = -0.1),
            Box::new(|s| s.target = TargetSpec::Point { position: [5.0, 7.0] }),
            Box::new(|s| s.target = TargetSpec::Extended { center: [5.0, 0.0], radius: 0.5, count: 0 }),
        ];
        for f in cases {
            let mut s = ok.clone();
            f(&mut s);
            assert!(matches!(s.validate(), Err(Error::Config(_))), "{s:?}");
        }
    }

    #[test]
    fn pure_los_channel_is_rank_one() {
        let mut s = Scenario::reference_point();
        s.rician_factor = f64::INFINITY;
        let ch = make_channel(&s, &mut Streams::new(3).stream("channel", 0)).unwrap();
        assert_eq!(ch.rank(), 1);
        let l = path_loss(50f64.sqrt(), &s.pathloss).unwrap();
        let los = steering_vector(-std::f64::consts::FRAC_PI_4, 8, 0.5)
            * steering_vector(std::f64::consts::FRAC_PI_4, 8, 0.5).adjoint()
            * Complex64::new(l.sqrt(), 0.0);
        assert!((ch.g() - los).norm() <= 1e-14 * ch.g().norm());
    }

    #[test]
    fn rayleigh_channel_entry_power() {
        let mut s = Scenario::reference_point();
        s.rician_factor = 0.0;
        let l = path_loss(50f64.sqrt(), &s.pathloss).unwrap();
        let mut acc = 0.0;
        let draws = 400;
        for i in 0..draws {
            let ch = make_channel(&s, &mut Streams::new(5).stream("channel", i)).unwrap();
            acc += ch.g().norm_squared();
        }
        let per_entry = acc / (draws as f64 * 64.0);
        assert!(rel(per_entry, l) < 0.03, "{per_entry} vs {l}");
    }

    #[test]
    fn channel_golden_norm() {
        let s = Scenario::reference_point();
        let ch = make_channel(&s, &mut Streams::new(2024).stream("channel", 0)).unwrap();
        let again = make_channel(&s, &mut Streams::new(2024).stream("channel", 0)).unwrap();
        assert_eq!(ch, again);
        assert!(rel(ch.g().norm(), GOLDEN_CHANNEL_NORM) < 1e-12, "{:e}", ch.g().norm());
    }

    const GOLDEN_CHANNEL_NORM: f64 = 2.335761826736777e-2;

    #[test]
    fn extended_target_symmetric_and_reproducible() {
        let s = Scenario::reference_extended();
        s.validate().unwrap();
        let draw = || make_target(&s, &mut Streams::new(77).stream("target", 0)).unwrap();
        let t = draw();
        assert_eq!(t, draw());
        let TargetModel::Extended { h, scatterers } = t else { panic!() };
        assert_eq!(scatterers.len(), 7);
        assert!((&h - h.transpose()).norm() <= 1e-12 * h.norm());
        let rebuilt = scatterer_response(&scatterers, s.n, s.spacing_ratio);
        assert!((&h - rebuilt).norm() <= 1e-12 * h.norm());
        for sc in &scatterers {
            assert!(sc.theta.abs() < 0.15);
        }
        assert!(rel(h.norm(), GOLDEN_EXTENDED_NORM) < 1e-12, "{:e}", h.norm());
    }

    const GOLDEN_EXTENDED_NORM: f64 = 5.462753061699124e-4;

    #[test]
    fn single_scatterer_at_center_is_rank_one() {
        let mut s = Scenario::reference_extended();
        s.target = TargetSpec::Extended { center: [5.0, 0.0], radius: 0.0, count: 1 };
        let t = make_target(&s, &mut Streams::new(1).stream("target", 0)).unwrap();
        let TargetModel::Extended { h, scatterers } = t else { panic!() };
        assert_eq!(scatterers[0].theta, 0.0);
        let a = steering_vector(0.0, s.n, 0.5);
        assert!((&h - &a * a.transpose() * scatterers[0].alpha).norm() <= 1e-15);
        assert_eq!(crate::linalg::hermitian_rank(&(&h * h.adjoint())), 1);
    }

    fn random_psd(m: usize, rank: usize, seed: u64) -> CMat {
        let mut rng = Streams::new(seed).stream("psd", 0);
        let a = CMat::from_fn(m, rank, |_, _| complex_normal(&mut rng, 1.0));
        hermitian_part(&(&a * a.adjoint()))
    }

    #[test]
    fn isotropic_waveform() {
        let m = 4;
        let p0 = 2.0;
        let r = CMat::identity(m, m) * Complex64::new(p0 / m as f64, 0.0);
        let w = synthesize_waveform(&r, m).unwrap();
        assert!((w.coherence() - &r).norm() <= 1e-12 * r.norm());
        // Rows of X are orthogonal with energy T·P0/M each.
        let gram = &w.x * w.x.adjoint();
        assert!((gram - CMat::identity(m, m) * Complex64::new(p0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rank_one_waveform_columns_parallel() {
        let mut rng = Streams::new(4).stream("w", 0);
        let w = CVec::from_fn(5, |_, _| complex_normal(&mut rng, 1.0)).normalize();
        let r = &w * w.adjoint() * Complex64::new(3.0, 0.0);
        let x = synthesize_waveform(&r, 16).unwrap().x;
        for col in x.column_iter() {
            let proj = w.dotc(&col);
            assert!((col - &w * proj).norm() <= 1e-12);
        }
    }

    #[test]
    fn waveform_rejects_short_dwell() {
        let r = random_psd(6, 6, 1);
        assert!(matches!(
            synthesize_waveform(&r, 5),
            Err(Error::InfeasibleSynthesis { rank: 6, dwell: 5 })
        ));
        assert!(synthesize_waveform(&random_psd(6, 3, 2), 3).is_ok());
    }

    #[test]
    fn waveform_synthesis_exact_on_random_inputs() {
        for seed in 0..100 {
            let m = 2 + (seed as usize % 7);
            let rank = 1 + (seed as usize % m);
            let r = random_psd(m, rank, seed);
            let w = synthesize_waveform(&r, 256).unwrap();
            assert!((w.coherence() - &r).norm() <= 1e-10 * r.norm(), "seed {seed}");
        }
    }

    fn reference_setup(seed: u64) -> (Scenario, Channel, TargetModel, CVec, Waveform) {
        let s = Scenario::reference_point();
        let streams = Streams::new(seed);
        let ch = make_channel(&s, &mut streams.stream("channel", 0)).unwrap();
        let target = make_target(&s, &mut streams.stream("target", 0)).unwrap();
        let v = random_reflection(s.n, &mut streams.stream("reflection", 0));
        let r = CMat::identity(s.m, s.m) * Complex64::new(s.p0 / s.m as f64, 0.0);
        let w = synthesize_waveform(&r, s.dwell).unwrap();
        (s, ch, target, v, w)
    }

    #[test]
    fn noiseless_echo_and_linearity() {
        let (s, ch, target, v, w) = reference_setup(9);
        let h = target.response(s.n, s.spacing_ratio);
        let mean = echo_mean(&ch, &v, &h, &w.x).unwrap();
        let y = simulate_echo(&ch, &v, &h, &w, 0.0, &mut Streams::new(1).stream("noise", 0)).unwrap();
        assert_eq!(y, mean);
        let c = Complex64::new(-2.5, 0.7);
        let scaled = simulate_echo(&ch, &v, &(&h * c), &w, 0.0, &mut Streams::new(1).stream("noise", 0)).unwrap();
        assert!((scaled - &mean * c).norm() <= 1e-12 * mean.norm() * c.norm());
    }

    #[test]
    fn pure_noise_echo_variance() {
        let (s, ch, _, v, w) = reference_setup(10);
        let h = CMat::zeros(s.n, s.n);
        let sigma2 = 0.3;
        let y = simulate_echo(&ch, &v, &h, &w, sigma2, &mut Streams::new(2).stream("noise", 0)).unwrap();
        let var = y.norm_squared() / (y.nrows() * y.ncols()) as f64;
        assert!(rel(var, sigma2) < 0.05);
    }

    #[test]
    fn echo_dimension_checks() {
        let (s, ch, target, v, w) = reference_setup(11);
        let h = target.response(s.n, s.spacing_ratio);
        let short = CVec::from_element(s.n - 1, Complex64::new(1.0, 0.0));
        assert!(matches!(echo_mean(&ch, &short, &h, &w.x), Err(Error::Contract(_))));
        let bad_v = &v * Complex64::new(2.0, 0.0);
        assert!(simulate_echo(&ch, &bad_v, &h, &w, 1.0, &mut Streams::new(0).stream("n", 0)).is_err());
    }

    #[test]
    fn echo_golden_fixture() {
        let (s, ch, target, v, w) = reference_setup(2024);
        let h = target.response(s.n, s.spacing_ratio);
        let y = simulate_echo(&ch, &v, &h, &w, s.noise_power, &mut Streams::new(2024).stream("noise", 0)).unwrap();
        let y00 = y[(0, 0)];
        assert!(rel(y.norm(), GOLDEN_ECHO_NORM) < 1e-12, "{:e}", y.norm());
        // noiseless part pins the signal path independently of the noise draw
        let mean = echo_mean(&ch, &v, &h, &w.x).unwrap();
        assert!(rel(mean.norm(), GOLDEN_ECHO_MEAN_NORM) < 1e-12, "{:e}", mean.norm());
        assert!((y00 - GOLDEN_ECHO_00).norm() <= 1e-12 * GOLDEN_ECHO_00.norm(), "{y00:e}");
    }

    const GOLDEN_ECHO_NORM: f64 = 1.4181381912379874e-6;
    const GOLDEN_ECHO_MEAN_NORM: f64 = 3.6272885836050526e-8;
    const GOLDEN_ECHO_00: Complex64 = Complex64::new(2.004104025280353e-8, 3.033768263782239e-8);

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn channel_svd_reconstructs(seed in any::<u64>(), beta in 0.0f64..10.0, m in 2usize..7, n in 2usize..7) {
            let mut s = Scenario::reference_point();
            s.m = m;
            s.n = n;
            s.rician_factor = beta;
            let ch = make_channel(&s, &mut Streams::new(seed).stream("channel", 0)).unwrap();
            let svd = ch.svd();
            let sig = svd.values.map(|x| Complex64::new(x, 0.0));
            let rec = &svd.left * CMat::from_diagonal(&sig) * svd.right.adjoint();
            prop_assert!((rec - ch.g()).norm() <= 1e-10 * ch.g().norm());
            for w in svd.values.as_slice().windows(2) {
                prop_assert!(w[0] >= w[1] && w[1] >= 0.0);
            }
        }

        #[test]
        fn extended_response_symmetric(seed in any::<u64>(), count in 1usize..12) {
            let mut s = Scenario::reference_extended();
            s.target = TargetSpec::Extended { center: [5.0, 0.0], radius: 0.5, count };
            let t = make_target(&s, &mut Streams::new(seed).stream("target", 0)).unwrap();
            let h = t.response(s.n, s.spacing_ratio);
            prop_assert!((&h - h.transpose()).norm() <= 1e-12 * h.norm());
        }
    }
}
