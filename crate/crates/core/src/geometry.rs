//! The one-dimensional manifold (0, inf) with metric g_p(u, v) = uv / p^2.
//!
//! Its geodesics are exponential curves `p * exp((v/p)(t - t0))`; a subject's
//! trajectory at one node is the geodesic shifted along the manifold by a
//! space-shift and re-timed by an affine time-warp. Everything here is closed
//! form; there is no general-manifold abstraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exponential with a guard against divergent arguments.
///
/// Sampler proposals can push exponents arbitrarily far out; beyond the
/// per-type bound the result is reported as invalid state so the proposal is
/// rejected instead of propagating infinities.
pub fn checked_exp<F: Real>(x: F) -> Result<F> {
    if !x.is_finite() || x.abs() > F::exp_guard() {
        return Err(Error::invalid_state(format!(
            "exponent {x} outside +/-{} guard",
            F::exp_guard()
        )));
    }
    Ok(x.exp())
}

/// Group-average geodesic at one node: value `p` and velocity `v` at the
/// shared reference time `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGeodesic<F> {
    pub p: F,
    pub v: F,
    pub t0: F,
}

impl<F: Real> NodeGeodesic<F> {
    pub fn new(p: F, v: F, t0: F) -> Result<Self> {
        if !(p > F::zero()) || !p.is_finite() {
            return Err(Error::validation(format!(
                "geodesic reference value must be positive, got {p}"
            )));
        }
        if !v.is_finite() || !t0.is_finite() {
            return Err(Error::validation("geodesic parameters must be finite"));
        }
        Ok(NodeGeodesic { p, v, t0 })
    }

    /// `p * exp((v/p)(t - t0))`; positive for every finite `t`.
    pub fn value(&self, t: F) -> Result<F> {
        Ok(self.p * checked_exp((self.v / self.p) * (t - self.t0))?)
    }

    /// Time derivative `v * exp((v/p)(t - t0))`; equals `v` at `t0`.
    pub fn velocity(&self, t: F) -> Result<F> {
        Ok(self.v * checked_exp((self.v / self.p) * (t - self.t0))?)
    }
}

/// Affine time reparametrization `psi(t) = alpha (t - tau - t0) + t0`.
///
/// `alpha` is the subject's pace relative to the group, `tau` the shift of
/// its onset age.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWarp<F> {
    pub alpha: F,
    pub tau: F,
    pub t0: F,
}

impl<F: Real> TimeWarp<F> {
    pub fn new(alpha: F, tau: F, t0: F) -> Result<Self> {
        if !(alpha > F::zero()) || !alpha.is_finite() {
            return Err(Error::validation(format!(
                "acceleration factor must be positive, got {alpha}"
            )));
        }
        if !tau.is_finite() || !t0.is_finite() {
            return Err(Error::validation("time-warp parameters must be finite"));
        }
        Ok(TimeWarp { alpha, tau, t0 })
    }

    pub fn warp(&self, t: F) -> F {
        self.alpha * (t - self.tau - self.t0) + self.t0
    }
}

/// Subject trajectory at one node:
/// `p * exp(w/p + (v/p) * alpha * (t - t0 - tau))`.
///
/// Evaluated in this product form it is defined for every `v`, including
/// `v = 0`, where the warped-geodesic reading (shift the warped time by
/// `w / v`) breaks down. For `v != 0` the two routes agree.
pub fn node_trajectory<F: Real>(
    geo: &NodeGeodesic<F>,
    w_shift: F,
    warp: &TimeWarp<F>,
    t: F,
) -> Result<F> {
    let warped_offset = warp.alpha * (t - warp.t0 - warp.tau);
    let inv_p = F::one() / geo.p;
    let exponent = (w_shift + geo.v * warped_offset) * inv_p;
    Ok(geo.p * checked_exp(exponent)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn value_at_reference_time_is_p() {
        let g = NodeGeodesic::new(2.5, -0.3, 70.0).unwrap();
        assert_eq!(g.value(70.0).unwrap(), 2.5);
    }

    #[test]
    fn zero_velocity_gives_constant_geodesic() {
        let g = NodeGeodesic::new(1.7, 0.0, 70.0).unwrap();
        for t in [-100.0, 0.0, 70.0, 1000.0] {
            assert_eq!(g.value(t).unwrap(), 1.7);
            assert_eq!(g.velocity(t).unwrap(), 0.0);
        }
    }

    #[test]
    fn value_matches_scalar_evaluation() {
        // p=2, v=-0.1, t0=70, t=75 -> 2 exp(-0.25)
        let g = NodeGeodesic::new(2.0, -0.1, 70.0).unwrap();
        let got = g.value(75.0).unwrap();
        assert_relative_eq!(got, 2.0 * (-0.25f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(got, 1.557_601_57, max_relative = 1e-8);
    }

    #[test]
    fn velocity_at_reference_is_v() {
        let g = NodeGeodesic::new(2.0, -0.1, 70.0).unwrap();
        assert_eq!(g.velocity(70.0).unwrap(), -0.1);
    }

    #[test]
    fn velocity_matches_central_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = rng.random_range(0.2..5.0);
            let v = rng.random_range(-0.5..0.5);
            let t0 = rng.random_range(40.0..100.0);
            let t: f64 = rng.random_range(30.0..110.0);
            let g = NodeGeodesic::new(p, v, t0).unwrap();
            let h = 1e-5 * t.abs().max(1.0);
            let fd = (g.value(t + h).unwrap() - g.value(t - h).unwrap()) / (2.0 * h);
            let an = g.velocity(t).unwrap();
            let scale = an.abs().max(1e-12);
            assert!(
                (fd - an).abs() / scale < 1e-6,
                "fd={fd} analytic={an} at p={p} v={v} t0={t0} t={t}"
            );
        }
    }

    #[test]
    fn identity_warp_is_identity() {
        let w = TimeWarp::new(1.0, 0.0, 70.0).unwrap();
        for t in [0.0, 65.0, 72.25] {
            assert_eq!(w.warp(t), t);
        }
    }

    #[test]
    fn warp_fixed_point_at_t0_plus_tau() {
        for alpha in [0.3, 1.0, 2.7] {
            let w = TimeWarp::new(alpha, 3.5, 70.0).unwrap();
            assert_relative_eq!(w.warp(73.5), 70.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn warp_matches_hand_evaluation() {
        // alpha=2, tau=3, t0=70, t=75 -> 2 (75 - 3 - 70) + 70 = 74
        let w = TimeWarp::new(2.0, 3.0, 70.0).unwrap();
        assert_eq!(w.warp(75.0), 74.0);
    }

    #[test]
    fn trajectory_reduces_to_geodesic_for_identity_subject() {
        let g = NodeGeodesic::new(2.0, -0.1, 70.0).unwrap();
        let w = TimeWarp::new(1.0, 0.0, 70.0).unwrap();
        for t in [60.0, 70.0, 85.0] {
            assert_relative_eq!(
                node_trajectory(&g, 0.0, &w, t).unwrap(),
                g.value(t).unwrap(),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn trajectory_matches_scalar_evaluation() {
        // p=2, v=-0.1, t0=70, w=0.2, alpha=1.5, tau=-2, t=72
        //   -> 2 exp(0.1 - 0.3) = 2 exp(-0.2)
        let g = NodeGeodesic::new(2.0, -0.1, 70.0).unwrap();
        let w = TimeWarp::new(1.5, -2.0, 70.0).unwrap();
        let got = node_trajectory(&g, 0.2, &w, 72.0).unwrap();
        assert_relative_eq!(got, 2.0 * (-0.2f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(got, 1.637_461_51, max_relative = 1e-8);
    }

    #[test]
    fn trajectory_agrees_with_warped_geodesic_route() {
        // For v != 0 the trajectory equals the geodesic evaluated at
        // w/v + psi(t).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = rng.random_range(0.5..4.0);
            let mut v: f64 = rng.random_range(-0.4..0.4);
            if v.abs() < 1e-3 {
                v = 0.1;
            }
            let t0 = rng.random_range(50.0..90.0);
            let g = NodeGeodesic::new(p, v, t0).unwrap();
            let warp =
                TimeWarp::new(rng.random_range(0.3..3.0), rng.random_range(-5.0..5.0), t0).unwrap();
            let w_shift = rng.random_range(-0.5..0.5);
            let t = rng.random_range(t0 - 15.0..t0 + 15.0);
            let direct = node_trajectory(&g, w_shift, &warp, t).unwrap();
            let via_warp = g.value(w_shift / v + warp.warp(t)).unwrap();
            assert_relative_eq!(direct, via_warp, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_velocity_with_shift_still_evaluates() {
        let g = NodeGeodesic::new(2.0, 0.0, 70.0).unwrap();
        let w = TimeWarp::new(1.5, 1.0, 70.0).unwrap();
        let got = node_trajectory(&g, 0.4, &w, 75.0).unwrap();
        assert_relative_eq!(got, 2.0 * (0.2f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn exp_guard_rejects_divergent_exponents() {
        assert!(checked_exp(699.0f64).is_ok());
        assert!(checked_exp(701.0f64).is_err());
        assert!(checked_exp(-701.0f64).is_err());
        assert!(checked_exp(f64::NAN).is_err());
        assert!(checked_exp(79.0f32).is_ok());
        assert!(checked_exp(81.0f32).is_err());
    }

    #[test]
    fn trajectory_flags_overflow_instead_of_infinity() {
        let g = NodeGeodesic::new(0.001, 10.0, 0.0).unwrap();
        let w = TimeWarp::new(1.0, 0.0, 0.0).unwrap();
        let err = node_trajectory(&g, 0.0, &w, 1000.0).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
    }

    #[test]
    fn constructors_reject_invalid_parameters() {
        assert!(NodeGeodesic::new(0.0, 1.0, 0.0).is_err());
        assert!(NodeGeodesic::new(-1.0, 1.0, 0.0).is_err());
        assert!(NodeGeodesic::new(f64::NAN, 1.0, 0.0).is_err());
        assert!(TimeWarp::new(0.0, 0.0, 0.0).is_err());
        assert!(TimeWarp::new(-2.0, 0.0, 0.0).is_err());
    }
}
