//! Synthetic cohort generation from known parameters.
//!
//! The simulator draws random effects from their priors, evaluates the
//! noiseless trajectories at the visit schedule, and adds i.i.d. Gaussian
//! noise. Additive noise can push values off the positive half-line, so any
//! visit with a nonpositive value is redrawn (count reported); a redraw rate
//! above 20% aborts with advice to lower the noise level.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    IndividualParameters, LongitudinalDataset, PopulationParameters, RealizedModel, Subject,
    Visit,
};
use crate::network::{InterpolationOperator, MeshNetwork};
use crate::rng;
use crate::scalar::Real;

/// Number of visits per subject: fixed, or uniformly drawn from a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VisitCount {
    Fixed(usize),
    Range(usize, usize),
}

/// Cohort shape plus the generating parameters.
#[derive(Debug, Clone)]
pub struct CohortSpec<F> {
    pub n_subjects: usize,
    pub visits: VisitCount,
    /// Uniform bounds for the age at the first visit (years).
    pub baseline_age: (F, F),
    /// Spacing between consecutive visits (years).
    pub visit_interval: F,
    pub population: PopulationParameters<F>,
    pub seed: u64,
}

/// A generated dataset plus the ground truth that produced it.
#[derive(Debug, Clone)]
pub struct SimulatedCohort<F> {
    pub dataset: LongitudinalDataset<F>,
    pub individuals: Vec<IndividualParameters<F>>,
    /// Visits that had to be redrawn because noise pushed a value off the
    /// manifold.
    pub redrawn_visits: usize,
}

const MAX_REDRAWS_PER_VISIT: usize = 1000;
const MAX_REDRAW_RATE: f64 = 0.20;

fn validate_spec<F: Real>(spec: &CohortSpec<F>, interp: &InterpolationOperator<F>) -> Result<()> {
    if spec.n_subjects == 0 {
        return Err(Error::validation("cohort needs at least one subject"));
    }
    match spec.visits {
        VisitCount::Fixed(n) if n >= 1 => {}
        VisitCount::Range(lo, hi) if lo >= 1 && lo <= hi => {}
        _ => return Err(Error::validation("invalid visit count specification")),
    }
    if !(spec.baseline_age.0 <= spec.baseline_age.1) {
        return Err(Error::validation("baseline age bounds out of order"));
    }
    if !(spec.visit_interval > F::zero()) {
        return Err(Error::validation("visit interval must be positive"));
    }
    let pop = &spec.population;
    // noise_std may be zero here (exact noiseless cohorts are useful as
    // oracles); the rest of the population contract still applies.
    if !(pop.noise_std >= F::zero()) || !pop.noise_std.is_finite() {
        return Err(Error::validation("noise_std must be finite and nonnegative"));
    }
    for (name, v) in [
        ("hyper_xi_std", pop.hyper_xi_std),
        ("hyper_tau_std", pop.hyper_tau_std),
        ("hyper_w_std", pop.hyper_w_std),
    ] {
        if !(v > F::zero()) || !v.is_finite() {
            return Err(Error::validation(format!("{name} must be positive, got {v}")));
        }
    }
    crate::model::realize_fields(pop, interp)?;
    Ok(())
}

/// Generate a cohort. Per-subject streams are derived from the spec seed, so
/// the output is identical regardless of thread count.
pub fn simulate_cohort<F: Real>(
    spec: &CohortSpec<F>,
    interp: &InterpolationOperator<F>,
) -> Result<SimulatedCohort<F>> {
    validate_spec(spec, interp)?;
    let pop = &spec.population;
    let model = RealizedModel::from_population(interp, pop)?;
    let n_controls = interp.num_controls();
    let id_width = (spec.n_subjects.max(2) - 1).to_string().len();

    let results: Vec<Result<(Subject<F>, IndividualParameters<F>, usize)>> = (0..spec.n_subjects)
        .into_par_iter()
        .map(|i| {
            let mut local = rng::stream(spec.seed, 0, i as u64);
            let indiv = IndividualParameters {
                xi: pop.hyper_xi_std * F::standard_normal(&mut local),
                tau: pop.hyper_tau_std * F::standard_normal(&mut local),
                w_coeffs: (0..n_controls)
                    .map(|_| pop.hyper_w_std * F::standard_normal(&mut local))
                    .collect(),
            };
            let n_visits = match spec.visits {
                VisitCount::Fixed(n) => n,
                VisitCount::Range(lo, hi) => local.random_range(lo..=hi),
            };
            let baseline = spec.baseline_age.0
                + (spec.baseline_age.1 - spec.baseline_age.0) * F::unit_uniform(&mut local);

            let w_raw = interp.interpolate(&indiv.w_coeffs)?;
            let mut visits = Vec::with_capacity(n_visits);
            let mut redrawn = 0usize;
            for j in 0..n_visits {
                let age = baseline + spec.visit_interval * F::cast(j as f64);
                let clean = model.predict_from_raw_shift(&w_raw, indiv.xi, indiv.tau, age)?;
                let mut attempt = 0usize;
                let values = loop {
                    let noisy: Vec<F> = clean
                        .iter()
                        .map(|&v| v + pop.noise_std * F::standard_normal(&mut local))
                        .collect();
                    if noisy.iter().all(|&v| v > F::zero() && v.is_finite()) {
                        break noisy;
                    }
                    redrawn += 1;
                    attempt += 1;
                    if attempt > MAX_REDRAWS_PER_VISIT {
                        return Err(Error::numerical(format!(
                            "subject {i} visit {j}: could not draw positive values; \
                             lower noise_std"
                        )));
                    }
                };
                visits.push(Visit { age, values });
            }
            Ok((
                Subject {
                    id: format!("s{i:0id_width$}"),
                    visits,
                },
                indiv,
                redrawn,
            ))
        })
        .collect();

    let mut subjects = Vec::with_capacity(spec.n_subjects);
    let mut individuals = Vec::with_capacity(spec.n_subjects);
    let mut redrawn_visits = 0usize;
    for r in results {
        let (subject, indiv, redrawn) = r?;
        subjects.push(subject);
        individuals.push(indiv);
        redrawn_visits += redrawn;
    }

    let total_visits: usize = subjects.iter().map(|s| s.visits.len()).sum();
    let rate = redrawn_visits as f64 / (redrawn_visits + total_visits).max(1) as f64;
    if rate > MAX_REDRAW_RATE {
        return Err(Error::numerical(format!(
            "{:.0}% of visit draws left the positive domain; lower noise_std",
            rate * 100.0
        )));
    }

    let dataset = LongitudinalDataset::new(subjects, interp.num_nodes())?;
    Ok(SimulatedCohort {
        dataset,
        individuals,
        redrawn_visits,
    })
}

/// Random connected graph: a random spanning tree plus extra random edges,
/// with lengths uniform in `[0.2, 2.0)`. Used by synthetic benchmarks.
pub fn random_connected_network<F: Real>(
    n_nodes: usize,
    extra_edges: usize,
    seed: u64,
) -> Result<MeshNetwork<F>> {
    let mut rng = rng::master(seed ^ 0x006e_6574_776f_726b);
    let mut edges: Vec<(usize, usize, F)> = Vec::with_capacity(n_nodes - 1 + extra_edges);
    for i in 1..n_nodes {
        let parent = rng.random_range(0..i);
        let len = F::cast(0.2) + F::cast(1.8) * F::unit_uniform(&mut rng);
        edges.push((parent, i, len));
    }
    let mut added = 0usize;
    let mut guard = 0usize;
    while added < extra_edges && guard < extra_edges * 20 {
        guard += 1;
        let a = rng.random_range(0..n_nodes);
        let b = rng.random_range(0..n_nodes);
        if a == b {
            continue;
        }
        let len = F::cast(0.2) + F::cast(1.8) * F::unit_uniform(&mut rng);
        edges.push((a, b, len));
        added += 1;
    }
    MeshNetwork::new(n_nodes, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_interpolator, select_control_nodes};

    fn setup(noise_std: f64) -> (CohortSpec<f64>, InterpolationOperator<f64>) {
        let net = random_connected_network::<f64>(12, 6, 3).unwrap();
        let full = net.full_distances().unwrap();
        let cset = select_control_nodes(&net, &full, 4, 5).unwrap();
        let rect = full.select_rows(cset.indices()).unwrap();
        let interp = build_interpolator(&rect, &cset).unwrap();
        let population = PopulationParameters {
            t0: 72.0,
            beta_p: vec![2.0, 2.2, 1.8, 2.4],
            beta_v: vec![-0.05, -0.04, -0.06, -0.03],
            noise_std,
            hyper_xi_std: 0.3,
            hyper_tau_std: 3.0,
            hyper_w_std: 0.05,
        };
        let spec = CohortSpec {
            n_subjects: 40,
            visits: VisitCount::Fixed(4),
            baseline_age: (66.0, 74.0),
            visit_interval: 1.0,
            population,
            seed: 11,
        };
        (spec, interp)
    }

    #[test]
    fn zero_noise_reproduces_forward_maps_exactly() {
        let (mut spec, interp) = setup(0.0);
        spec.n_subjects = 5;
        let cohort = simulate_cohort(&spec, &interp).unwrap();
        assert_eq!(cohort.redrawn_visits, 0);
        let model = RealizedModel::from_population(&interp, &spec.population).unwrap();
        for (subject, indiv) in cohort.dataset.subjects().iter().zip(&cohort.individuals) {
            let w_raw = interp.interpolate(&indiv.w_coeffs).unwrap();
            for visit in &subject.visits {
                let clean = model
                    .predict_from_raw_shift(&w_raw, indiv.xi, indiv.tau, visit.age)
                    .unwrap();
                assert_eq!(visit.values, clean);
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_cohorts() {
        let (spec, interp) = setup(0.08);
        let a = simulate_cohort(&spec, &interp).unwrap();
        let b = simulate_cohort(&spec, &interp).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.individuals, b.individuals);
    }

    #[test]
    fn empirical_noise_std_matches_requested_level() {
        let (mut spec, interp) = setup(0.1);
        // 12 nodes x 4 visits x ~220 subjects > 1e4 residuals
        spec.n_subjects = 220;
        let cohort = simulate_cohort(&spec, &interp).unwrap();
        let model = RealizedModel::from_population(&interp, &spec.population).unwrap();
        let mut sq = 0.0;
        let mut n = 0.0;
        for (subject, indiv) in cohort.dataset.subjects().iter().zip(&cohort.individuals) {
            let w_raw = interp.interpolate(&indiv.w_coeffs).unwrap();
            for visit in &subject.visits {
                let clean = model
                    .predict_from_raw_shift(&w_raw, indiv.xi, indiv.tau, visit.age)
                    .unwrap();
                for (y, c) in visit.values.iter().zip(&clean) {
                    sq += (y - c) * (y - c);
                    n += 1.0;
                }
            }
        }
        let empirical = (sq / n).sqrt();
        assert!(
            (empirical - 0.1).abs() / 0.1 < 0.02,
            "empirical noise std {empirical}"
        );
    }

    #[test]
    fn latent_moments_match_priors_within_standard_errors() {
        let (mut spec, interp) = setup(0.05);
        spec.n_subjects = 600;
        let cohort = simulate_cohort(&spec, &interp).unwrap();
        let n = cohort.individuals.len() as f64;
        let xi_mean: f64 = cohort.individuals.iter().map(|i| i.xi).sum::<f64>() / n;
        let tau_mean: f64 = cohort.individuals.iter().map(|i| i.tau).sum::<f64>() / n;
        let xi_sd = (cohort.individuals.iter().map(|i| i.xi * i.xi).sum::<f64>() / n
            - xi_mean * xi_mean)
            .sqrt();
        let tau_sd = (cohort.individuals.iter().map(|i| i.tau * i.tau).sum::<f64>() / n
            - tau_mean * tau_mean)
            .sqrt();
        // 3 standard errors: se(mean) = sd/sqrt(n), se(sd) ~ sd/sqrt(2n)
        assert!(xi_mean.abs() < 3.0 * 0.3 / n.sqrt(), "xi mean {xi_mean}");
        assert!(tau_mean.abs() < 3.0 * 3.0 / n.sqrt(), "tau mean {tau_mean}");
        assert!((xi_sd - 0.3).abs() < 3.0 * 0.3 / (2.0 * n).sqrt(), "xi sd {xi_sd}");
        assert!((tau_sd - 3.0).abs() < 3.0 * 3.0 / (2.0 * n).sqrt(), "tau sd {tau_sd}");
    }

    #[test]
    fn rejection_keeps_emitted_values_positive() {
        let (mut spec, interp) = setup(0.2);
        spec.population.beta_p = vec![0.9, 1.0, 0.8, 1.1];
        let cohort = simulate_cohort(&spec, &interp).unwrap();
        assert!(cohort.redrawn_visits > 0, "fixture should exercise redraws");
        for subject in cohort.dataset.subjects() {
            for visit in &subject.visits {
                assert!(visit.values.iter().all(|&v| v > 0.0));
            }
        }
    }

    #[test]
    fn excessive_rejection_rate_aborts_with_advice() {
        let (mut spec, interp) = setup(3.0);
        // values ~1 with noise 3: most draws leave the positive domain
        spec.population.beta_p = vec![0.5, 0.5, 0.5, 0.5];
        let err = simulate_cohort(&spec, &interp).unwrap_err();
        assert!(err.to_string().contains("noise_std"), "{err}");
    }

    #[test]
    fn visit_count_ranges_are_respected() {
        let (mut spec, interp) = setup(0.05);
        spec.visits = VisitCount::Range(2, 6);
        let cohort = simulate_cohort(&spec, &interp).unwrap();
        for subject in cohort.dataset.subjects() {
            assert!((2..=6).contains(&subject.visits.len()));
        }
    }
}
