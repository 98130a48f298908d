//! Stochastic approximation and maximization steps.

use crate::error::Result;
use crate::model::{PopulationParameters, SufficientStatistics};
use crate::scalar::Real;

use super::SamplerConfig;

/// Variance floor applied to every M-step variance (keeps noiseless data
/// from collapsing sigma or the random-effect scales to zero).
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Robbins-Monro step size: 1 during burn-in, then `(k - burn_in)^(-a)`.
///
/// For `a` in (0.5, 1] the sequence satisfies `sum eps = inf` and
/// `sum eps^2 < inf`.
pub fn sa_step_size<F: Real>(iteration: usize, burn_in: usize, sa_exponent: F) -> F {
    if iteration <= burn_in {
        F::one()
    } else {
        F::cast((iteration - burn_in) as f64).powf(-sa_exponent)
    }
}

/// Relax the accumulator toward the freshly computed statistics:
/// `acc += eps_k (fresh - acc)` componentwise.
pub fn sa_update<F: Real>(
    accumulator: &mut SufficientStatistics<F>,
    fresh: &SufficientStatistics<F>,
    iteration: usize,
    config: &SamplerConfig<F>,
) {
    let eps = sa_step_size(iteration, config.burn_in, config.sa_exponent);
    accumulator.relax_toward(fresh, eps);
}

/// Closed-form parameter updates from the accumulated statistics.
///
/// `sigma^2` is the averaged residual sum over the scalar observation count;
/// the random-effect variances are centered second moments; the population
/// trajectory values are the stochastically averaged latents. All variances
/// are floored at [`VARIANCE_FLOOR`].
pub fn maximization_step<F: Real>(stats: &SufficientStatistics<F>) -> Result<PopulationParameters<F>> {
    if !stats.residual_ss.is_finite() || !stats.t0.is_finite() {
        return Err(crate::error::Error::numerical(
            "non-finite sufficient statistics",
        ));
    }
    let floor = F::cast(VARIANCE_FLOOR);
    let sigma_sq = (stats.residual_ss / F::cast(stats.n_scalar_obs as f64)).max(floor);
    let centered = |m1: F, m2: F| (m2 - m1 * m1).max(floor);
    let xi_var = centered(stats.xi_first_moment(), stats.xi_second_moment());
    let tau_var = centered(stats.tau_first_moment(), stats.tau_second_moment());
    let w_var = centered(stats.w_first_moment(), stats.w_second_moment());
    Ok(PopulationParameters {
        t0: stats.t0,
        beta_p: stats.beta_p.clone(),
        beta_v: stats.beta_v.clone(),
        noise_std: sigma_sq.sqrt(),
        hyper_xi_std: xi_var.sqrt(),
        hyper_tau_std: tau_var.sqrt(),
        hyper_w_std: w_var.sqrt(),
    })
}
