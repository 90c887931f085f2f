//! Transmit design for the extended target.
//!
//! The extended-target bound does not depend on the reflection vector, so
//! nothing here takes one.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scene::Channel;
use crate::sdp::{LmiBlockBuilder, LmiProgram, SdpStatus, SolverSettings};
use crate::sensing::SensingParams;
use crate::types::{CMat, RVec};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn check_full_rank(channel: &Channel) -> Result<()> {
    if channel.m() < channel.n() {
        return Err(Error::NotEstimable(format!(
            "extended target needs M ≥ N (got M = {}, N = {})",
            channel.m(),
            channel.n()
        )));
    }
    if channel.rank() < channel.n() {
        return Err(Error::NotEstimable(format!(
            "extended target needs rank(G) = N = {} (got {})",
            channel.n(),
            channel.rank()
        )));
    }
    Ok(())
}

/// Powers proportional to the inverse singular values, summing to `p0`.
pub fn power_allocation(singular_values: &RVec, p0: f64) -> Result<RVec> {
    if !(p0 > 0.0) {
        return Err(Error::Domain(format!("power budget must be positive, got {p0}")));
    }
    if singular_values.is_empty() || singular_values.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::NotEstimable("all singular values must be positive".into()));
    }
    let inv_sum: f64 = singular_values.iter().map(|s| 1.0 / s).sum();
    Ok(singular_values.map(|s| p0 / (s * inv_sum)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedDesign {
    pub r_x: CMat,
    pub crb: f64,
    pub powers: RVec,
}

/// Optimal coherence matrix and the resulting bound.
pub fn optimal_rx_extended(channel: &Channel, p0: f64, params: &SensingParams) -> Result<ExtendedDesign> {
    check_full_rank(channel)?;
    let n = channel.n();
    let svd = channel.svd();
    let sv = svd.values.rows(0, n).into_owned();
    let powers = power_allocation(&sv, p0)?;
    let q = svd.right.columns(0, n);
    let r_x = crate::linalg::hermitian_part(&(q * CMat::from_diagonal(&powers.map(c)) * q.adjoint()));
    let inv1: f64 = sv.iter().map(|s| 1.0 / s).sum();
    let inv2: f64 = sv.iter().map(|s| 1.0 / (s * s)).sum();
    let crb = params.noise_power * inv1 * inv1 * inv2 / (p0 * params.dwell as f64);
    Ok(ExtendedDesign { r_x, crb, powers })
}

/// Bound under isotropic transmission `R_x = (P0/M) I`.
pub fn isotropic_crb(channel: &Channel, p0: f64, params: &SensingParams) -> Result<f64> {
    check_full_rank(channel)?;
    let n = channel.n();
    let inv2: f64 = channel.singular_values().rows(0, n).iter().map(|s| 1.0 / (s * s)).sum();
    Ok(channel.m() as f64 * params.noise_power * inv2 * inv2 / (p0 * params.dwell as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub r_x: CMat,
    /// Bound at the SDP optimum, from the epigraph variable.
    pub crb: f64,
    pub iterations: usize,
}

/// Numerical solution of the transmit problem as an epigraph SDP:
/// `min tr U` over `[[U, I], [I, G R G^H]] ⪰ 0`, `R ⪰ 0`, `tr R ≤ P0`.
pub fn sdp_cross_check(
    channel: &Channel,
    p0: f64,
    params: &SensingParams,
    settings: &SolverSettings,
) -> Result<CrossCheck> {
    check_full_rank(channel)?;
    let (n, m) = (channel.n(), channel.m());
    // R = P0 R̃ and G = s G̃, with s the harmonic mean of the singular
    // values, keep tr U of order N².
    let sv = channel.singular_values().rows(0, n);
    let scale = n as f64 / sv.iter().map(|x| 1.0 / x).sum::<f64>();
    let g = channel.g() * c(1.0 / scale);
    let mut prog = LmiProgram::new();
    let u = prog.add_hermitian(n, None);
    let r = prog.add_hermitian(m, None);
    u.add_objective(&mut prog, |e| -e.trace().re);

    let mut epi = LmiBlockBuilder::hermitian(2 * n);
    let mut ident = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        ident[(i, n + i)] = c(1.0);
        ident[(n + i, i)] = c(1.0);
    }
    epi.add_constant(&ident);
    u.add_linear(&mut epi, |e| {
        let mut out = CMat::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(e);
        out
    });
    r.add_linear(&mut epi, |e| {
        let mut out = CMat::zeros(2 * n, 2 * n);
        out.view_mut((n, n), (n, n)).copy_from(&(&g * e * g.adjoint()));
        out
    });
    prog.add_block(epi);

    let mut psd = LmiBlockBuilder::hermitian(m);
    r.add_linear(&mut psd, |e| e.clone());
    prog.add_block(psd);

    let mut power = LmiBlockBuilder::real(1);
    power.add_constant_entry(0, 0, c(1.0));
    r.add_linear(&mut power, |e| CMat::from_element(1, 1, -e.trace()));
    prog.add_block(power);

    let sol = prog.solve_with(settings)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(sol.status));
    }
    let r_x = crate::linalg::hermitian_part(&r.value(&sol.y)) * c(p0);
    let tr_u = -sol.objective / (p0 * scale * scale);
    let ggh = channel.g() * channel.g().adjoint();
    let tr_ggh_inv = crate::linalg::trace_inverse_hpd(&ggh)
        .ok_or_else(|| Error::NotEstimable("G G^H is singular".into()))?;
    Ok(CrossCheck {
        r_x,
        crb: params.noise_power / params.dwell as f64 * tr_u * tr_ggh_inv,
        iterations: sol.sdp.iterations,
    })
}
