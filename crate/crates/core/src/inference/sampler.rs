//! Adaptive Metropolis-within-Gibbs sweep over the latent variables.
//!
//! One sweep updates, in order: the population block (t0 alone, then the
//! p- and v-field coefficients one coordinate at a time), then for every
//! subject a joint (xi, tau) block and a joint space-shift coefficient
//! block. All proposals are symmetric Gaussian random walks; acceptance uses
//! the log-posterior difference, and residual sums are cached per subject so
//! only what a proposal touches is recomputed.
//!
//! Per-subject blocks are conditionally independent given the population
//! latents. They run in parallel, each on its own counter-based RNG stream
//! derived from `(seed, iteration, subject)`, and results merge in subject
//! order, so parallel and serial execution are bitwise identical.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    gaussian_log_density, individual_prior_log_density, statistics_from_parts,
    IndividualParameters, LongitudinalDataset, PopulationParameters, RealizedModel,
    SufficientStatistics,
};
use crate::network::InterpolationOperator;
use crate::rng;
use crate::scalar::Real;

use super::SamplerConfig;

/// Prior scale for the reference-time latent (years). The population latents
/// get broad Gaussian priors centered on the current parameter estimates;
/// the M-step moves the centers to the averaged latents.
pub const POP_T0_PRIOR_STD: f64 = 10.0;
/// Prior scale for the p-field coefficients (signal units).
pub const POP_BETA_P_PRIOR_STD: f64 = 10.0;
/// Prior scale for the v-field coefficients (signal units per year).
pub const POP_BETA_V_PRIOR_STD: f64 = 1.0;

/// Random-walk step scales. `xi` and `tau` belong to one block (one
/// accept/reject decision) but keep their own step sizes; adaptation moves
/// both by the block's common factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales<F> {
    pub t0: F,
    pub beta_p: F,
    pub beta_v: F,
    pub xi: F,
    pub tau: F,
    pub w: F,
}

impl<F: Real> ProposalScales<F> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t0", self.t0),
            ("beta_p", self.beta_p),
            ("beta_v", self.beta_v),
            ("xi", self.xi),
            ("tau", self.tau),
            ("w", self.w),
        ] {
            if !(v > F::zero()) || !v.is_finite() {
                return Err(Error::validation(format!(
                    "proposal std {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Acceptance fractions of the last sweep, one per block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRates<F> {
    pub t0: F,
    pub beta_p: F,
    pub beta_v: F,
    pub xi_tau: F,
    pub w: F,
}

impl<F: Real> BlockRates<F> {
    pub fn zero() -> Self {
        BlockRates {
            t0: F::zero(),
            beta_p: F::zero(),
            beta_v: F::zero(),
            xi_tau: F::zero(),
            w: F::zero(),
        }
    }
}

/// Trajectory-defining population latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState<F> {
    pub t0: F,
    pub beta_p: Vec<F>,
    pub beta_v: Vec<F>,
}

/// Current latent draws plus everything the sweep caches: per-subject
/// interpolated space-shift fields, per-subject residual sums, adaptive
/// proposal scales, acceptance statistics and the RNG.
#[derive(Debug, Clone)]
pub struct SamplerState<F> {
    pub(crate) pop: PopulationState<F>,
    pub(crate) indiv: Vec<IndividualParameters<F>>,
    pub(crate) w_raw: Vec<Vec<F>>,
    pub(crate) subject_rss: Vec<F>,
    pub(crate) scales: ProposalScales<F>,
    pub(crate) last_acceptance: BlockRates<F>,
    pub(crate) iteration: usize,
    pub(crate) seed: u64,
    pub(crate) master_rng: ChaCha8Rng,
}

impl<F: Real> SamplerState<F> {
    /// Build a state at the given latents, computing the residual caches.
    pub fn new(
        data: &LongitudinalDataset<F>,
        interp: &InterpolationOperator<F>,
        pop: PopulationState<F>,
        indiv: Vec<IndividualParameters<F>>,
        scales: ProposalScales<F>,
        seed: u64,
    ) -> Result<Self> {
        if indiv.len() != data.num_subjects() {
            return Err(Error::validation(format!(
                "{} individual parameter sets for {} subjects",
                indiv.len(),
                data.num_subjects()
            )));
        }
        scales.validate()?;
        let model = RealizedModel::new(interp, pop.t0, &pop.beta_p, &pop.beta_v)?;
        let mut w_raw = Vec::with_capacity(indiv.len());
        let mut subject_rss = Vec::with_capacity(indiv.len());
        for (subject, ind) in data.subjects().iter().zip(&indiv) {
            let w = interp.interpolate(&ind.w_coeffs)?;
            let rss = model.subject_rss(&subject.visits, ind.xi, ind.tau, &w)?;
            w_raw.push(w);
            subject_rss.push(rss);
        }
        Ok(SamplerState {
            pop,
            indiv,
            w_raw,
            subject_rss,
            scales,
            last_acceptance: BlockRates::zero(),
            iteration: 0,
            seed,
            master_rng: rng::master(seed),
        })
    }

    pub fn population(&self) -> &PopulationState<F> {
        &self.pop
    }

    pub fn individuals(&self) -> &[IndividualParameters<F>] {
        &self.indiv
    }

    pub fn proposal_scales(&self) -> &ProposalScales<F> {
        &self.scales
    }

    pub fn last_acceptance(&self) -> &BlockRates<F> {
        &self.last_acceptance
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Total residual sum of squares at the current state (serial sum of the
    /// per-subject caches).
    pub fn total_rss(&self) -> F {
        let mut acc = F::zero();
        for &r in &self.subject_rss {
            acc = acc + r;
        }
        acc
    }

    /// Sufficient statistics of the current latent state.
    pub fn current_statistics(&self, data: &LongitudinalDataset<F>) -> SufficientStatistics<F> {
        statistics_from_parts(
            self.total_rss(),
            data,
            self.pop.t0,
            &self.pop.beta_p,
            &self.pop.beta_v,
            &self.indiv,
        )
    }

    /// Complete-data log-likelihood: data likelihood at the current latents
    /// plus the log densities of all latent priors.
    pub fn complete_data_log_likelihood(
        &self,
        data: &LongitudinalDataset<F>,
        hyper: &PopulationParameters<F>,
    ) -> F {
        let sigma = hyper.noise_std;
        let n_scalar = F::cast(data.total_scalar_obs() as f64);
        let ln_sqrt_2pi = F::cast(0.918_938_533_204_672_8);
        let mut ll = -(sigma.ln() + ln_sqrt_2pi) * n_scalar
            - self.total_rss() / (F::cast(2.0) * sigma * sigma);
        ll = ll + population_prior_log_density(&self.pop, hyper);
        for ind in &self.indiv {
            ll = ll + individual_prior_log_density(ind, hyper);
        }
        ll
    }
}

/// Log density of the population-latent priors centered on the current
/// parameter estimates.
pub fn population_prior_log_density<F: Real>(
    pop: &PopulationState<F>,
    hyper: &PopulationParameters<F>,
) -> F {
    let mut lp = gaussian_log_density(pop.t0, hyper.t0, F::cast(POP_T0_PRIOR_STD));
    for (latent, mean) in pop.beta_p.iter().zip(&hyper.beta_p) {
        lp = lp + gaussian_log_density(*latent, *mean, F::cast(POP_BETA_P_PRIOR_STD));
    }
    for (latent, mean) in pop.beta_v.iter().zip(&hyper.beta_v) {
        lp = lp + gaussian_log_density(*latent, *mean, F::cast(POP_BETA_V_PRIOR_STD));
    }
    lp
}

/// Outcome of one per-subject update, merged back in subject order.
struct SubjectOutcome<F> {
    indiv: IndividualParameters<F>,
    w_raw: Vec<F>,
    rss: F,
    accepted_xi_tau: bool,
    accepted_w: bool,
}

/// One full sweep of Metropolis-within-Gibbs updates.
pub fn gibbs_sweep<F: Real>(
    state: &mut SamplerState<F>,
    data: &LongitudinalDataset<F>,
    interp: &InterpolationOperator<F>,
    hyper: &PopulationParameters<F>,
) -> Result<()> {
    state.iteration += 1;
    if !state.total_rss().is_finite() {
        return Err(Error::numerical(format!(
            "non-finite residual state entering sweep {}",
            state.iteration
        )));
    }
    let sigma = hyper.noise_std;
    let half_inv_var = F::one() / (F::cast(2.0) * sigma * sigma);

    // --- population block: t0 alone ---
    let mut t0_accepts = 0usize;
    {
        let z = F::standard_normal(&mut state.master_rng);
        let t0_prop = state.pop.t0 + state.scales.t0 * z;
        let prior_delta = gaussian_log_density(t0_prop, hyper.t0, F::cast(POP_T0_PRIOR_STD))
            - gaussian_log_density(state.pop.t0, hyper.t0, F::cast(POP_T0_PRIOR_STD));
        if let Some(new_rss) = try_population_move(
            data,
            interp,
            t0_prop,
            &state.pop.beta_p,
            &state.pop.beta_v,
            &state.indiv,
            &state.w_raw,
            &state.subject_rss,
            prior_delta,
            half_inv_var,
            &mut state.master_rng,
        ) {
            state.pop.t0 = t0_prop;
            state.subject_rss = new_rss;
            t0_accepts += 1;
        }
    }

    // --- population block: field coefficients, one coordinate at a time ---
    let n_controls = interp.num_controls();
    let mut beta_p_accepts = 0usize;
    for c in 0..n_controls {
        let z = F::standard_normal(&mut state.master_rng);
        let mut beta_prop = state.pop.beta_p.clone();
        beta_prop[c] = beta_prop[c] + state.scales.beta_p * z;
        let prior_delta =
            gaussian_log_density(beta_prop[c], hyper.beta_p[c], F::cast(POP_BETA_P_PRIOR_STD))
                - gaussian_log_density(
                    state.pop.beta_p[c],
                    hyper.beta_p[c],
                    F::cast(POP_BETA_P_PRIOR_STD),
                );
        if let Some(new_rss) = try_population_move(
            data,
            interp,
            state.pop.t0,
            &beta_prop,
            &state.pop.beta_v,
            &state.indiv,
            &state.w_raw,
            &state.subject_rss,
            prior_delta,
            half_inv_var,
            &mut state.master_rng,
        ) {
            state.pop.beta_p = beta_prop;
            state.subject_rss = new_rss;
            beta_p_accepts += 1;
        }
    }
    let mut beta_v_accepts = 0usize;
    for c in 0..n_controls {
        let z = F::standard_normal(&mut state.master_rng);
        let mut beta_prop = state.pop.beta_v.clone();
        beta_prop[c] = beta_prop[c] + state.scales.beta_v * z;
        let prior_delta =
            gaussian_log_density(beta_prop[c], hyper.beta_v[c], F::cast(POP_BETA_V_PRIOR_STD))
                - gaussian_log_density(
                    state.pop.beta_v[c],
                    hyper.beta_v[c],
                    F::cast(POP_BETA_V_PRIOR_STD),
                );
        if let Some(new_rss) = try_population_move(
            data,
            interp,
            state.pop.t0,
            &state.pop.beta_p,
            &beta_prop,
            &state.indiv,
            &state.w_raw,
            &state.subject_rss,
            prior_delta,
            half_inv_var,
            &mut state.master_rng,
        ) {
            state.pop.beta_v = beta_prop;
            state.subject_rss = new_rss;
            beta_v_accepts += 1;
        }
    }

    // --- per-subject blocks, parallel over subjects ---
    let model = RealizedModel::new(interp, state.pop.t0, &state.pop.beta_p, &state.pop.beta_v)?;
    let seed = state.seed;
    let iteration = state.iteration as u64;
    let scales = state.scales;
    let outcomes: Vec<Result<SubjectOutcome<F>>> = data
        .subjects()
        .par_iter()
        .enumerate()
        .map(|(i, subject)| {
            let mut local = rng::stream(seed, iteration, i as u64);
            update_subject(
                &model,
                interp,
                hyper,
                subject,
                state.indiv[i].clone(),
                state.w_raw[i].clone(),
                state.subject_rss[i],
                scales,
                half_inv_var,
                &mut local,
            )
        })
        .collect();

    let n_subjects = data.num_subjects().max(1);
    let mut xi_tau_accepts = 0usize;
    let mut w_accepts = 0usize;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        xi_tau_accepts += outcome.accepted_xi_tau as usize;
        w_accepts += outcome.accepted_w as usize;
        state.indiv[i] = outcome.indiv;
        state.w_raw[i] = outcome.w_raw;
        state.subject_rss[i] = outcome.rss;
    }

    state.last_acceptance = BlockRates {
        t0: F::cast(t0_accepts as f64),
        beta_p: F::cast(beta_p_accepts as f64 / n_controls as f64),
        beta_v: F::cast(beta_v_accepts as f64 / n_controls as f64),
        xi_tau: F::cast(xi_tau_accepts as f64 / n_subjects as f64),
        w: F::cast(w_accepts as f64 / n_subjects as f64),
    };
    Ok(())
}

/// Evaluate a population proposal; `Some(per-subject residuals)` when
/// accepted. Invalid states (nonpositive p-field, exponent overflow) reject
/// without consuming the uniform draw.
#[allow(clippy::too_many_arguments)]
fn try_population_move<F: Real>(
    data: &LongitudinalDataset<F>,
    interp: &InterpolationOperator<F>,
    t0: F,
    beta_p: &[F],
    beta_v: &[F],
    indiv: &[IndividualParameters<F>],
    w_raw: &[Vec<F>],
    current_rss: &[F],
    prior_delta: F,
    half_inv_var: F,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<F>> {
    let model = match RealizedModel::new(interp, t0, beta_p, beta_v) {
        Ok(m) => m,
        Err(_) => return None,
    };
    let per_subject: Vec<Result<F>> = data
        .subjects()
        .par_iter()
        .enumerate()
        .map(|(i, subject)| {
            model.subject_rss(&subject.visits, indiv[i].xi, indiv[i].tau, &w_raw[i])
        })
        .collect();
    let mut new_rss = Vec::with_capacity(per_subject.len());
    for r in per_subject {
        match r {
            Ok(v) => new_rss.push(v),
            Err(_) => return None,
        }
    }
    let mut proposed_total = F::zero();
    for &r in &new_rss {
        proposed_total = proposed_total + r;
    }
    let mut current_total = F::zero();
    for &r in current_rss {
        current_total = current_total + r;
    }
    let log_ratio = (current_total - proposed_total) * half_inv_var + prior_delta;
    let u = F::unit_uniform(rng);
    if u.ln() < log_ratio {
        Some(new_rss)
    } else {
        None
    }
}

/// The two per-subject blocks: joint (xi, tau), then the space-shift
/// coefficients as one vector proposal.
#[allow(clippy::too_many_arguments)]
fn update_subject<F: Real>(
    model: &RealizedModel<'_, F>,
    interp: &InterpolationOperator<F>,
    hyper: &PopulationParameters<F>,
    subject: &crate::model::Subject<F>,
    mut indiv: IndividualParameters<F>,
    mut w_raw: Vec<F>,
    mut rss: F,
    scales: ProposalScales<F>,
    half_inv_var: F,
    rng: &mut ChaCha8Rng,
) -> Result<SubjectOutcome<F>> {
    let mut accepted_xi_tau = false;
    {
        let z1 = F::standard_normal(rng);
        let z2 = F::standard_normal(rng);
        let xi_prop = indiv.xi + scales.xi * z1;
        let tau_prop = indiv.tau + scales.tau * z2;
        if let Ok(rss_prop) = model.subject_rss(&subject.visits, xi_prop, tau_prop, &w_raw) {
            let prior_delta = gaussian_log_density(xi_prop, F::zero(), hyper.hyper_xi_std)
                + gaussian_log_density(tau_prop, F::zero(), hyper.hyper_tau_std)
                - gaussian_log_density(indiv.xi, F::zero(), hyper.hyper_xi_std)
                - gaussian_log_density(indiv.tau, F::zero(), hyper.hyper_tau_std);
            let log_ratio = (rss - rss_prop) * half_inv_var + prior_delta;
            let u = F::unit_uniform(rng);
            if u.ln() < log_ratio {
                indiv.xi = xi_prop;
                indiv.tau = tau_prop;
                rss = rss_prop;
                accepted_xi_tau = true;
            }
        }
    }

    let mut accepted_w = false;
    {
        let mut w_prop = indiv.w_coeffs.clone();
        let mut prior_delta = F::zero();
        for w in w_prop.iter_mut() {
            let z = F::standard_normal(rng);
            let new = *w + scales.w * z;
            prior_delta = prior_delta + gaussian_log_density(new, F::zero(), hyper.hyper_w_std)
                - gaussian_log_density(*w, F::zero(), hyper.hyper_w_std);
            *w = new;
        }
        let w_raw_prop = interp.interpolate(&w_prop)?;
        if let Ok(rss_prop) = model.subject_rss(&subject.visits, indiv.xi, indiv.tau, &w_raw_prop) {
            let log_ratio = (rss - rss_prop) * half_inv_var + prior_delta;
            let u = F::unit_uniform(rng);
            if u.ln() < log_ratio {
                indiv.w_coeffs = w_prop;
                w_raw = w_raw_prop;
                rss = rss_prop;
                accepted_w = true;
            }
        }
    }

    Ok(SubjectOutcome {
        indiv,
        w_raw,
        rss,
        accepted_xi_tau,
        accepted_w,
    })
}

/// One Robbins-Monro update of a proposal scale:
/// `log std += rate * iter^(-0.6) * (accepted - target)`, clamped to
/// `[1e-6, 1e3]`.
pub fn adapt_log_scale<F: Real>(
    scale: F,
    accepted: F,
    target: F,
    rate: F,
    iteration: usize,
) -> F {
    let step = rate * F::cast(iteration as f64).powf(F::cast(-0.6));
    (scale.ln() + step * (accepted - target))
        .exp()
        .max(F::cast(1e-6))
        .min(F::cast(1e3))
}

/// Adapt every block scale toward the target acceptance rate. Called during
/// burn-in only; the scales freeze afterwards so the
/// stochastic-approximation phase runs a fixed kernel.
pub fn adapt_proposals<F: Real>(state: &mut SamplerState<F>, config: &SamplerConfig<F>) {
    let k = state.iteration;
    let target = config.target_acceptance;
    let rate = config.adaptation_rate;
    let acc = state.last_acceptance;
    state.scales.t0 = adapt_log_scale(state.scales.t0, acc.t0, target, rate, k);
    state.scales.beta_p = adapt_log_scale(state.scales.beta_p, acc.beta_p, target, rate, k);
    state.scales.beta_v = adapt_log_scale(state.scales.beta_v, acc.beta_v, target, rate, k);
    state.scales.xi = adapt_log_scale(state.scales.xi, acc.xi_tau, target, rate, k);
    state.scales.tau = adapt_log_scale(state.scales.tau, acc.xi_tau, target, rate, k);
    state.scales.w = adapt_log_scale(state.scales.w, acc.w, target, rate, k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_interpolator, ControlNodeSet, MeshNetwork};
    use approx::assert_relative_eq;

    fn tiny_setup() -> (
        LongitudinalDataset<f64>,
        crate::network::InterpolationOperator<f64>,
        PopulationParameters<f64>,
    ) {
        let net = MeshNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let full = net.full_distances().unwrap();
        let cset = ControlNodeSet::new(vec![0], 1.0, 2).unwrap();
        let rect = full.select_rows(cset.indices()).unwrap();
        let interp = build_interpolator(&rect, &cset).unwrap();
        let pop = PopulationParameters {
            t0: 70.0,
            beta_p: vec![2.0],
            beta_v: vec![-0.1],
            noise_std: 0.1,
            hyper_xi_std: 0.3,
            hyper_tau_std: 3.0,
            hyper_w_std: 0.05,
        };
        let data = LongitudinalDataset::new(
            vec![crate::model::Subject {
                id: "s0".into(),
                visits: vec![
                    crate::model::Visit {
                        age: 69.0,
                        values: vec![2.1, 1.4],
                    },
                    crate::model::Visit {
                        age: 72.0,
                        values: vec![1.9, 1.2],
                    },
                ],
            }],
            2,
        )
        .unwrap();
        (data, interp, pop)
    }

    fn state_for(
        data: &LongitudinalDataset<f64>,
        interp: &crate::network::InterpolationOperator<f64>,
        pop: &PopulationParameters<f64>,
        scales: ProposalScales<f64>,
        seed: u64,
    ) -> SamplerState<f64> {
        SamplerState::new(
            data,
            interp,
            PopulationState {
                t0: pop.t0,
                beta_p: pop.beta_p.clone(),
                beta_v: pop.beta_v.clone(),
            },
            vec![IndividualParameters::identity(interp.num_controls()); data.num_subjects()],
            scales,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn vanishing_proposals_freeze_the_chain_with_full_acceptance() {
        let (data, interp, pop) = tiny_setup();
        let eps = 1e-12;
        let scales = ProposalScales {
            t0: eps,
            beta_p: eps,
            beta_v: eps,
            xi: eps,
            tau: eps,
            w: eps,
        };
        let mut state = state_for(&data, &interp, &pop, scales, 3);
        let t0_before = state.pop.t0;
        let xi_before = state.indiv[0].xi;
        let mut accepted = 0.0;
        for _ in 0..50 {
            gibbs_sweep(&mut state, &data, &interp, &pop).unwrap();
            accepted += state.last_acceptance.xi_tau;
        }
        assert!((state.pop.t0 - t0_before).abs() < 1e-9);
        assert!((state.indiv[0].xi - xi_before).abs() < 1e-9);
        assert!(accepted / 50.0 > 0.95, "acceptance {}", accepted / 50.0);
    }

    #[test]
    fn identical_seeds_give_identical_sweeps() {
        let (data, interp, pop) = tiny_setup();
        let scales = ProposalScales {
            t0: 0.1,
            beta_p: 0.05,
            beta_v: 0.01,
            xi: 0.1,
            tau: 0.5,
            w: 0.02,
        };
        let mut a = state_for(&data, &interp, &pop, scales, 17);
        let mut b = state_for(&data, &interp, &pop, scales, 17);
        for _ in 0..25 {
            gibbs_sweep(&mut a, &data, &interp, &pop).unwrap();
            gibbs_sweep(&mut b, &data, &interp, &pop).unwrap();
        }
        assert_eq!(a.pop.t0, b.pop.t0);
        assert_eq!(a.pop.beta_p, b.pop.beta_p);
        assert_eq!(a.indiv[0].xi, b.indiv[0].xi);
        assert_eq!(a.indiv[0].w_coeffs, b.indiv[0].w_coeffs);
        assert_eq!(a.subject_rss, b.subject_rss);
    }

    #[test]
    fn adaptation_fixed_point_at_target_acceptance() {
        let (data, interp, pop) = tiny_setup();
        let scales = ProposalScales {
            t0: 0.1,
            beta_p: 0.05,
            beta_v: 0.01,
            xi: 0.1,
            tau: 0.5,
            w: 0.02,
        };
        let mut state = state_for(&data, &interp, &pop, scales, 5);
        state.iteration = 10;
        state.last_acceptance = BlockRates {
            t0: 0.3,
            beta_p: 0.3,
            beta_v: 0.3,
            xi_tau: 0.3,
            w: 0.3,
        };
        let config = SamplerConfig::<f64>::default();
        let before = state.scales;
        adapt_proposals(&mut state, &config);
        assert_relative_eq!(state.scales.t0, before.t0, max_relative = 1e-12);
        assert_relative_eq!(state.scales.w, before.w, max_relative = 1e-12);
    }

    #[test]
    fn persistent_full_acceptance_grows_scales() {
        let (data, interp, pop) = tiny_setup();
        let scales = ProposalScales {
            t0: 0.1,
            beta_p: 0.05,
            beta_v: 0.01,
            xi: 0.1,
            tau: 0.5,
            w: 0.02,
        };
        let mut state = state_for(&data, &interp, &pop, scales, 5);
        let config = SamplerConfig::<f64>::default();
        let mut prev = state.scales.t0;
        for k in 1..50 {
            state.iteration = k;
            state.last_acceptance = BlockRates {
                t0: 1.0,
                beta_p: 1.0,
                beta_v: 1.0,
                xi_tau: 1.0,
                w: 1.0,
            };
            adapt_proposals(&mut state, &config);
            assert!(state.scales.t0 > prev);
            prev = state.scales.t0;
        }
    }

    #[test]
    fn adaptation_two_step_hand_trace() {
        // rate 0.1, acceptances (1.0, 0.0), target 0.3:
        // net log-std change = 0.1 (0.7 * 1^-0.6 - 0.3 * 2^-0.6)
        let (data, interp, pop) = tiny_setup();
        let scales = ProposalScales {
            t0: 0.25,
            beta_p: 0.05,
            beta_v: 0.01,
            xi: 0.1,
            tau: 0.5,
            w: 0.02,
        };
        let mut state = state_for(&data, &interp, &pop, scales, 5);
        let config = SamplerConfig::<f64>::default();
        let start = state.scales.t0.ln();
        state.iteration = 1;
        state.last_acceptance = BlockRates {
            t0: 1.0,
            beta_p: 1.0,
            beta_v: 1.0,
            xi_tau: 1.0,
            w: 1.0,
        };
        adapt_proposals(&mut state, &config);
        state.iteration = 2;
        state.last_acceptance = BlockRates::zero();
        adapt_proposals(&mut state, &config);
        let expected = 0.1 * (0.7 * 1.0f64.powf(-0.6) - 0.3 * 2.0f64.powf(-0.6));
        assert_relative_eq!(state.scales.t0.ln() - start, expected, max_relative = 1e-12);
    }

    #[test]
    fn scales_clamp_at_bounds() {
        let (data, interp, pop) = tiny_setup();
        let scales = ProposalScales {
            t0: 1e-6,
            beta_p: 1e3,
            beta_v: 0.01,
            xi: 0.1,
            tau: 0.5,
            w: 0.02,
        };
        let mut state = state_for(&data, &interp, &pop, scales, 5);
        let config = SamplerConfig::<f64>::default();
        state.iteration = 1;
        state.last_acceptance = BlockRates {
            t0: 0.0,
            beta_p: 1.0,
            beta_v: 0.3,
            xi_tau: 0.3,
            w: 0.3,
        };
        adapt_proposals(&mut state, &config);
        assert_eq!(state.scales.t0, 1e-6);
        assert_eq!(state.scales.beta_p, 1e3);
    }
}
