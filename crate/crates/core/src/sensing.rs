//! Steering vectors, Fisher information and Cramér–Rao bounds.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_rank, index_ramp, trace_inverse_hpd, trace_product};
use crate::scene::{Channel, Scenario};
use crate::types::{CMat, CVec, RMat, J};

/// IRS ULA response `a_n = exp(j 2π r n sin θ)`, `n = 0..N−1`.
pub fn steering_vector(theta: f64, n: usize, spacing_ratio: f64) -> CVec {
    let step = TAU * spacing_ratio * theta.sin();
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, step * i as f64))
}

/// Radar parameters shared by every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub dwell: usize,
    pub noise_power: f64,
    pub spacing_ratio: f64,
}

impl SensingParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            dwell: s.dwell,
            noise_power: s.noise_power,
            spacing_ratio: s.spacing_ratio,
        }
    }

    fn scale(&self) -> f64 {
        2.0 * self.dwell as f64 / self.noise_power
    }
}

/// `b = G^T A v` and its derivative `ḃ = j 2π r cos θ · G^T A D v`.
pub fn echo_directions(channel: &Channel, v: &CVec, theta: f64, spacing_ratio: f64) -> (CVec, CVec) {
    let n = channel.n();
    let a = steering_vector(theta, n, spacing_ratio);
    let kappa = TAU * spacing_ratio * theta.cos();
    let av = a.component_mul(v);
    let adv = CVec::from_fn(n, |i, _| av[i] * i as f64);
    let gt = channel.g().transpose();
    let b = &gt * av;
    let bdot = (&gt * adv) * (J * kappa);
    (b, bdot)
}

/// `B = b b^T` and `Ḃ = ḃ b^T + b ḃ^T`.
pub fn echo_matrices(b: &CVec, bdot: &CVec) -> (CMat, CMat) {
    let bb = b * b.transpose();
    let bd = bdot * b.transpose() + b * bdot.transpose();
    (bb, bd)
}

/// Traces `tr(Ḃ R Ḃ^H)`, `tr(B R Ḃ^H)`, `tr(B R B^H)` for given `B`, `Ḃ`.
pub fn point_traces(bb: &CMat, bd: &CMat, r_x: &CMat) -> (f64, Complex64, f64) {
    let rb_h = r_x * bb.adjoint();
    let rbd_h = r_x * bd.adjoint();
    let k1 = trace_product(bd, &rbd_h).re;
    let k2 = trace_product(bb, &rbd_h);
    let k3 = trace_product(bb, &rb_h).re;
    (k1, k2, k3)
}

/// `tr(ḂRḂ^H) − |tr(BRḂ^H)|² / tr(BRB^H)`; zero when `tr(BRB^H)` vanishes.
pub fn point_information(bb: &CMat, bd: &CMat, r_x: &CMat) -> f64 {
    let (k1, k2, k3) = point_traces(bb, bd, r_x);
    if k3 <= 0.0 {
        return 0.0;
    }
    k1 - k2.norm_sqr() / k3
}

/// Point-target FIM over `(θ, Re α, Im α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFim {
    pub f: Matrix3<f64>,
}

impl PointFim {
    pub fn theta_theta(&self) -> f64 {
        self.f[(0, 0)]
    }

    pub fn theta_alpha(&self) -> [f64; 2] {
        [self.f[(0, 1)], self.f[(0, 2)]]
    }

    /// The common diagonal of the `α̃α̃` block.
    pub fn alpha_alpha(&self) -> f64 {
        self.f[(1, 1)]
    }
}

pub fn fim_point(
    channel: &Channel,
    v: &CVec,
    r_x: &CMat,
    theta: f64,
    alpha: Complex64,
    params: &SensingParams,
) -> PointFim {
    let (b, bdot) = echo_directions(channel, v, theta, params.spacing_ratio);
    let (bb, bd) = echo_matrices(&b, &bdot);
    let (k1, k2, k3) = point_traces(&bb, &bd, r_x);
    let c = params.scale();
    let cross = alpha.conj() * k2;
    let ftt = c * alpha.norm_sqr() * k1;
    let fta = [c * cross.re, -c * cross.im];
    let faa = c * k3;
    PointFim {
        f: Matrix3::new(
            ftt, fta[0], fta[1], //
            fta[0], faa, 0.0, //
            fta[1], 0.0, faa,
        ),
    }
}

/// Why a bound is reported as `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotEstimable {
    /// Channel rank below what the target model needs.
    ChannelRank,
    /// `cos θ = 0`: the array has no angular sensitivity.
    Endfire,
    /// The illumination or the target coefficient carries no information.
    NoInformation,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CrbDiagnostics {
    pub channel_rank: usize,
    /// Determinant of the FIM when it was formed.
    pub fim_det: Option<f64>,
    /// Point target: the same bound from the reflection-vector form.
    pub v_form: Option<f64>,
    pub reason: Option<NotEstimable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    /// `+∞` when not estimable.
    pub value: f64,
    pub estimable: bool,
    pub diagnostics: CrbDiagnostics,
}

impl CrbReport {
    fn finite(value: f64, diagnostics: CrbDiagnostics) -> Self {
        Self {
            value,
            estimable: true,
            diagnostics,
        }
    }

    fn infinite(reason: NotEstimable, mut diagnostics: CrbDiagnostics) -> Self {
        diagnostics.reason = Some(reason);
        Self {
            value: f64::INFINITY,
            estimable: false,
            diagnostics,
        }
    }
}

/// Terms of the reflection-vector form of the point bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectGeometry {
    pub a: CVec,
    /// `diag(D)`.
    pub ramp: Vec<f64>,
    /// `A^H G* G^T A`.
    pub r1: CMat,
    /// `A^H G* R_x* G^T A`.
    pub r2: CMat,
    /// `2π r cos θ`.
    pub kappa: f64,
}

/// Quadratic forms of `v` entering the reflection-vector bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectTerms {
    pub r1: f64,
    pub r2: f64,
    pub d1: f64,
    pub d2: f64,
    pub p: Complex64,
    pub q: Complex64,
}

impl ReflectTerms {
    /// `r2 (d1 − |p|²/r1) + r1 (d2 − |q|²/r2)` with denominators clamped at
    /// `floor`.
    pub fn objective(&self, floor: f64) -> f64 {
        let r1 = self.r1.max(floor);
        let r2 = self.r2.max(floor);
        self.r2 * (self.d1 - self.p.norm_sqr() / r1) + self.r1 * (self.d2 - self.q.norm_sqr() / r2)
    }
}

impl ReflectGeometry {
    pub fn new(channel: &Channel, r_x: &CMat, theta: f64, spacing_ratio: f64) -> Self {
        let n = channel.n();
        let a = steering_vector(theta, n, spacing_ratio);
        // G^T A
        let gta = CMat::from_fn(channel.m(), n, |i, j| channel.g()[(j, i)] * a[j]);
        let r1 = gta.adjoint() * &gta;
        let r2 = gta.adjoint() * r_x.conjugate() * &gta;
        Self {
            a,
            ramp: index_ramp(n).iter().cloned().collect(),
            r1: crate::linalg::hermitian_part(&r1),
            r2: crate::linalg::hermitian_part(&r2),
            kappa: TAU * spacing_ratio * theta.cos(),
        }
    }

    pub fn terms(&self, v: &CVec) -> ReflectTerms {
        let dv = CVec::from_fn(v.len(), |i, _| v[i] * self.ramp[i]);
        let r1v = &self.r1 * v;
        let r2v = &self.r2 * v;
        let r1dv = &self.r1 * &dv;
        let r2dv = &self.r2 * &dv;
        ReflectTerms {
            r1: v.dotc(&r1v).re,
            r2: v.dotc(&r2v).re,
            d1: dv.dotc(&r1dv).re,
            d2: dv.dotc(&r2dv).re,
            p: dv.dotc(&r1v),
            q: dv.dotc(&r2v),
        }
    }

    /// Objective of the reflective subproblem (larger is better).
    pub fn objective(&self, v: &CVec) -> f64 {
        let scale = self.r1.trace().re.abs() * self.r2.trace().re.abs();
        let floor = 1e-12 * scale.sqrt().max(f64::MIN_POSITIVE);
        self.terms(v).objective(floor)
    }
}

/// Reflection-vector form of the point bound.
pub fn crb_point_v_form(geometry: &ReflectGeometry, v: &CVec, alpha: Complex64, params: &SensingParams) -> f64 {
    let g = geometry.terms(v).objective(0.0);
    let denom = 2.0 * geometry.kappa * geometry.kappa * params.dwell as f64 * alpha.norm_sqr() * g;
    if denom > 0.0 && denom.is_finite() {
        params.noise_power / denom
    } else {
        f64::INFINITY
    }
}

/// Below this `|cos θ|` the array is treated as endfire.
const ENDFIRE_COS: f64 = 1e-12;

/// DoA bound for the point target.
pub fn crb_point(
    channel: &Channel,
    v: &CVec,
    r_x: &CMat,
    theta: f64,
    alpha: Complex64,
    params: &SensingParams,
) -> CrbReport {
    let fim = fim_point(channel, v, r_x, theta, alpha, params);
    let mut diag = CrbDiagnostics {
        channel_rank: channel.rank(),
        fim_det: Some(fim.f.determinant()),
        ..Default::default()
    };
    if diag.channel_rank < 2 {
        return CrbReport::infinite(NotEstimable::ChannelRank, diag);
    }
    if theta.cos().abs() < ENDFIRE_COS {
        return CrbReport::infinite(NotEstimable::Endfire, diag);
    }
    let (b, bdot) = echo_directions(channel, v, theta, params.spacing_ratio);
    let (bb, bd) = echo_matrices(&b, &bdot);
    let info = point_information(&bb, &bd, r_x);
    let (k1, _, _) = point_traces(&bb, &bd, r_x);
    let denom = params.scale() * alpha.norm_sqr() * info;
    if !(info > 1e-14 * k1) || !(denom > 0.0) || !denom.is_finite() {
        return CrbReport::infinite(NotEstimable::NoInformation, diag);
    }
    let geometry = ReflectGeometry::new(channel, r_x, theta, params.spacing_ratio);
    diag.v_form = Some(crb_point_v_form(&geometry, v, alpha, params));
    CrbReport::finite(1.0 / denom, diag)
}

/// Extended-target bound `(σ²/T) tr((G R_x G^H)⁻¹) tr((G G^H)⁻¹)`.
pub fn crb_extended(channel: &Channel, r_x: &CMat, params: &SensingParams) -> CrbReport {
    let n = channel.n();
    let mut diag = CrbDiagnostics {
        channel_rank: channel.rank(),
        ..Default::default()
    };
    if diag.channel_rank < n {
        return CrbReport::infinite(NotEstimable::ChannelRank, diag);
    }
    let g = channel.g();
    let grg = g * r_x * g.adjoint();
    let ggh = g * g.adjoint();
    if hermitian_rank(&grg) < n {
        return CrbReport::infinite(NotEstimable::NoInformation, diag);
    }
    match (trace_inverse_hpd(&grg), trace_inverse_hpd(&ggh)) {
        (Some(t1), Some(t2)) => {
            let value = params.noise_power / params.dwell as f64 * t1 * t2;
            diag.fim_det = None;
            CrbReport::finite(value, diag)
        }
        _ => CrbReport::infinite(NotEstimable::NoInformation, diag),
    }
}

/// Largest `N` for which [`fim_extended_explicit`] builds the full matrix.
pub const EXPLICIT_FIM_GUARD: usize = 4;

/// Full `2N² × 2N²` extended-target FIM over `(Re vec H, Im vec H)`.
pub fn fim_extended_explicit(channel: &Channel, v: &CVec, r_x: &CMat, params: &SensingParams) -> Result<RMat> {
    fim_extended_explicit_guarded(channel, v, r_x, params, EXPLICIT_FIM_GUARD)
}

pub fn fim_extended_explicit_guarded(
    channel: &Channel,
    v: &CVec,
    r_x: &CMat,
    params: &SensingParams,
    guard: usize,
) -> Result<RMat> {
    let n = channel.n();
    if n > guard {
        return Err(Error::SizeGuard { elements: n, guard });
    }
    if v.len() != n || r_x.nrows() != channel.m() {
        return Err(Error::Contract("dimension mismatch in extended FIM".into()));
    }
    // Φ G
    let phi_g = CMat::from_fn(n, channel.m(), |i, j| v[i] * channel.g()[(i, j)]);
    let conj_pg = phi_g.conjugate();
    let k1 = &conj_pg * r_x.transpose() * phi_g.transpose();
    let k2 = &conj_pg * phi_g.transpose();
    let k = k1.kronecker(&k2);
    let c = params.scale();
    let nn = n * n;
    let mut f = RMat::zeros(2 * nn, 2 * nn);
    for i in 0..nn {
        for j in 0..nn {
            let z = k[(i, j)] * c;
            f[(i, j)] = z.re;
            f[(i + nn, j + nn)] = z.re;
            f[(i, j + nn)] = -z.im;
            f[(i + nn, j)] = z.im;
        }
    }
    Ok(crate::linalg::symmetric_part(&f))
}
