//! Comparison schemes. Each returns a [`Design`] evaluated by the same
//! bound and estimator code as the joint optimizer.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimate::Design;
use crate::opt_point::{gaussian_randomization, solve_reflective, solve_transmit, OptParams};
use crate::rng::random_phases;
use crate::scene::{Channel, Scenario};
use crate::sdp::{LmiBlockBuilder, LmiProgram, SdpStatus, SolverSettings};
use crate::sensing::steering_vector;
use crate::types::{CMat, CVec};

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `R1 = (G^T A)^H (G^T A)`, so that `v^H R1 v = ‖G^T A v‖²`.
pub fn echo_gain_matrix(channel: &Channel, theta: f64, spacing_ratio: f64) -> CMat {
    let a = steering_vector(theta, channel.n(), spacing_ratio);
    let gta = CMat::from_fn(channel.m(), channel.n(), |i, j| channel.g()[(j, i)] * a[j]);
    crate::linalg::hermitian_part(&(gta.adjoint() * gta))
}

/// Unit-diagonal relaxation `max tr(R V)` over `V ⪰ 0`, `diag V = 1`.
pub fn unit_modulus_relaxation(r: &CMat, settings: &SolverSettings) -> Result<CMat> {
    let n = r.nrows();
    let scale = r.trace().re;
    if !(scale > 0.0) {
        return Err(Error::NotEstimable("quadratic form is identically zero".into()));
    }
    let rn = r * c(n as f64 / scale);
    let mut prog = LmiProgram::new();
    let v = prog.add_hermitian(n, Some(1.0));
    v.add_objective(&mut prog, |e| crate::linalg::trace_product(&rn, e).re);
    let mut psd = LmiBlockBuilder::hermitian(n);
    v.add_linear(&mut psd, |e| e.clone());
    prog.add_block(psd);
    let sol = prog.solve_with(settings)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver(sol.status));
    }
    Ok(crate::linalg::psd_project(&v.value(&sol.y)))
}

/// Maximum echo power: reflective phases from the relaxation plus
/// randomization, then maximum-ratio transmission.
pub fn snr_max_design<R: Rng + ?Sized>(
    channel: &Channel,
    theta: f64,
    p0: f64,
    spacing_ratio: f64,
    params: &OptParams,
    rng: &mut R,
) -> Result<Design> {
    if channel.rank() < 1 {
        return Err(Error::NotEstimable("channel is zero".into()));
    }
    let r1 = echo_gain_matrix(channel, theta, spacing_ratio);
    let relaxed = unit_modulus_relaxation(&r1, &params.sdp)?;
    let objective = |v: &CVec| v.dotc(&(&r1 * v)).re;
    let (v, _, _) = gaussian_randomization(&relaxed, params.randomizations, &[], objective, rng);
    let a = steering_vector(theta, channel.n(), spacing_ratio);
    let b = channel.g().transpose() * a.component_mul(&v);
    let norm = b.norm_squared();
    if !(norm > 0.0) {
        return Err(Error::NotEstimable("echo direction vanishes".into()));
    }
    let bc = b.conjugate();
    let r_x = &bc * bc.adjoint() * c(p0 / norm);
    Ok(Design { r_x, v })
}

/// Isotropic transmission with optimized reflection.
pub fn reflective_only<R: Rng + ?Sized>(
    scenario: &Scenario,
    channel: &Channel,
    theta: f64,
    params: &OptParams,
    rng: &mut R,
) -> Result<Design> {
    let r_x = isotropic_extended(scenario);
    let v_init = random_phases(rng, channel.n());
    let v = solve_reflective(channel, &r_x, theta, scenario.spacing_ratio, &v_init, params, rng)?.v;
    Ok(Design { r_x, v })
}

/// Random reflection with optimized transmission.
pub fn transmit_only<R: Rng + ?Sized>(
    scenario: &Scenario,
    channel: &Channel,
    theta: f64,
    params: &OptParams,
    rng: &mut R,
) -> Result<Design> {
    let v = random_phases(rng, channel.n());
    let r_x = solve_transmit(channel, &v, theta, scenario.p0, scenario.spacing_ratio, &params.sdp)?.r_x;
    Ok(Design { r_x, v })
}

/// `(P0/M) I`.
pub fn isotropic_extended(scenario: &Scenario) -> CMat {
    CMat::identity(scenario.m, scenario.m) * c(scenario.p0 / scenario.m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::opt_extended::isotropic_crb;
    use crate::opt_point::{optimize_joint, nominal_alpha};
    use crate::rng::{complex_normal, Streams};
    use crate::scene::make_channel;
    use crate::sensing::{crb_extended, crb_point, SensingParams};

    fn feasible(d: &Design, p0: f64) {
        let m = d.r_x.nrows() as f64;
        assert!(d.r_x.trace().re <= p0 * (1.0 + 1e-8));
        assert!(min_eigenvalue(&d.r_x) >= -1e-8 * p0 / m);
        assert!(d.v.iter().all(|z| (z.norm() - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn snr_max_rank_one_gain() {
        let mut rng = Streams::new(3).stream("u", 0);
        let u = CVec::from_fn(5, |_, _| complex_normal(&mut rng, 1.0));
        let r1 = &u * u.adjoint();
        let relaxed = unit_modulus_relaxation(&r1, &SolverSettings::default()).unwrap();
        let obj = |v: &CVec| v.dotc(&(&r1 * v)).re;
        let (v, best, _) = gaussian_randomization(&relaxed, 100, &[], obj, &mut rng);
        let bound: f64 = u.iter().map(|z| z.norm()).sum::<f64>().powi(2);
        assert!(best >= 0.98 * bound);
        assert!((obj(&v) - best).abs() <= 1e-12 * best);
    }

    #[test]
    fn snr_max_matches_phase_grid() {
        let mut rng = Streams::new(8).stream("g", 0);
        let ch = Channel::new(CMat::from_fn(3, 4, |_, _| complex_normal(&mut rng, 1.0)));
        let r1 = echo_gain_matrix(&ch, 0.2, 0.5);
        let d = snr_max_design(&ch, 0.2, 1.0, 0.5, &OptParams::default(), &mut rng).unwrap();
        let got = d.v.dotc(&(&r1 * &d.v)).re;
        let levels = 64;
        let ph = |k: usize| Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / levels as f64);
        let mut grid = 0.0_f64;
        for a in 0..levels {
            for b in 0..levels {
                let v = CVec::from_vec(vec![c(1.0), ph(a), ph(b)]);
                grid = grid.max(v.dotc(&(&r1 * &v)).re);
            }
        }
        assert!(got >= 0.98 * grid, "{got} vs {grid}");
        assert!((d.r_x.trace().re - 1.0).abs() < 1e-10);
        assert_eq!(crate::linalg::hermitian_rank(&d.r_x), 1);
        feasible(&d, 1.0);
    }

    #[test]
    fn baselines_feasible_deterministic_and_dominated() {
        let s = Scenario::reference_point();
        let streams = Streams::new(12);
        let ch = make_channel(&s, &mut streams.stream("channel", 0)).unwrap();
        let params = OptParams::default();
        let sp = SensingParams::from_scenario(&s);
        let alpha = nominal_alpha(&s).unwrap();
        let crb = |d: &Design| crb_point(&ch, &d.v, &d.r_x, 0.0, alpha, &sp).value;

        let refl = reflective_only(&s, &ch, 0.0, &params, &mut streams.stream("refl", 0)).unwrap();
        let again = reflective_only(&s, &ch, 0.0, &params, &mut streams.stream("refl", 0)).unwrap();
        assert_eq!(refl, again);
        assert_eq!(refl.r_x, isotropic_extended(&s));
        feasible(&refl, s.p0);

        let tx = transmit_only(&s, &ch, 0.0, &params, &mut streams.stream("tx", 0)).unwrap();
        let again = transmit_only(&s, &ch, 0.0, &params, &mut streams.stream("tx", 0)).unwrap();
        assert_eq!(tx, again);
        feasible(&tx, s.p0);

        let snr = snr_max_design(&ch, 0.0, s.p0, s.spacing_ratio, &params, &mut streams.stream("snr", 0)).unwrap();
        feasible(&snr, s.p0);

        let joint = optimize_joint(&s, &ch, 0.0, &params, &mut streams.stream("joint", 0)).unwrap();
        let best = joint.final_record().crb;
        assert!(crb(&refl) >= best, "{} < {best}", crb(&refl));
        assert!(crb(&tx) >= best, "{} < {best}", crb(&tx));
        assert!(crb(&snr) >= best, "{} < {best}", crb(&snr));
    }

    #[test]
    fn isotropic_extended_matches_closed_form() {
        let s = Scenario::reference_extended();
        let r = isotropic_extended(&s);
        assert!((r.trace().re - s.p0).abs() <= 1e-12 * s.p0);
        let ch = make_channel(&s, &mut Streams::new(4).stream("channel", 0)).unwrap();
        let sp = SensingParams::from_scenario(&s);
        let direct = crb_extended(&ch, &r, &sp).value;
        let closed = isotropic_crb(&ch, s.p0, &sp).unwrap();
        assert!((direct - closed).abs() <= 1e-10 * closed);
    }
}
