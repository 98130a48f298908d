//! The generative model: population fields, individual trajectories, noise
//! model and sufficient statistics.
//!
//! Population coefficients at the control nodes define a positive value
//! field `p` and a velocity field `v` over the graph. A subject bends the
//! group trajectory with a log-acceleration `xi`, an onset shift `tau` and a
//! space-shift field, parameterized by control-node coefficients and
//! projected orthogonal to the velocity field. Observations are the subject
//! trajectory plus i.i.d. Gaussian noise per node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{checked_exp, node_trajectory, NodeGeodesic, TimeWarp};
use crate::network::{InterpolationOperator, NodeField};
use crate::scalar::Real;

/// ln(sqrt(2 pi))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Fixed effects: reference time, field coefficients, noise level and the
/// random-effect scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParameters<F> {
    pub t0: F,
    pub beta_p: Vec<F>,
    pub beta_v: Vec<F>,
    pub noise_std: F,
    pub hyper_xi_std: F,
    pub hyper_tau_std: F,
    pub hyper_w_std: F,
}

impl<F: Real> PopulationParameters<F> {
    /// Check scalar ranges and that the realized p-field is strictly
    /// positive everywhere.
    pub fn validate(&self, interp: &InterpolationOperator<F>) -> Result<()> {
        if !(self.noise_std > F::zero()) || !self.noise_std.is_finite() {
            return Err(Error::validation(format!(
                "noise_std must be positive, got {}",
                self.noise_std
            )));
        }
        for (name, v) in [
            ("hyper_xi_std", self.hyper_xi_std),
            ("hyper_tau_std", self.hyper_tau_std),
            ("hyper_w_std", self.hyper_w_std),
        ] {
            if !(v > F::zero()) || !v.is_finite() {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.t0.is_finite() {
            return Err(Error::validation("t0 must be finite"));
        }
        realize_fields(self, interp)?;
        Ok(())
    }
}

/// Random effects for one subject. The acceleration factor is
/// `alpha = exp(xi)`, positive by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualParameters<F> {
    pub xi: F,
    pub tau: F,
    pub w_coeffs: Vec<F>,
}

impl<F: Real> IndividualParameters<F> {
    /// The identity transformation: the subject follows the group trajectory.
    pub fn identity(n_controls: usize) -> Self {
        IndividualParameters {
            xi: F::zero(),
            tau: F::zero(),
            w_coeffs: vec![F::zero(); n_controls],
        }
    }

    pub fn acceleration(&self) -> F {
        self.xi.exp()
    }
}

/// One observed measurement map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit<F> {
    pub age: F,
    pub values: Vec<F>,
}

/// All visits of one subject, ordered by age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject<F> {
    pub id: String,
    pub visits: Vec<Visit<F>>,
}

/// Validated longitudinal dataset on a fixed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset<F> {
    subjects: Vec<Subject<F>>,
    num_nodes: usize,
}

impl<F: Real> LongitudinalDataset<F> {
    /// Validate widths, age ordering and the manifold constraint (every
    /// value finite and strictly positive).
    pub fn new(subjects: Vec<Subject<F>>, num_nodes: usize) -> Result<Self> {
        for subject in &subjects {
            let mut prev_age: Option<F> = None;
            for (j, visit) in subject.visits.iter().enumerate() {
                if !visit.age.is_finite() {
                    return Err(Error::validation(format!(
                        "subject {} visit {j}: age is not finite",
                        subject.id
                    )));
                }
                if let Some(prev) = prev_age {
                    if !(visit.age > prev) {
                        return Err(Error::validation(format!(
                            "subject {} visit {j}: ages must be strictly increasing ({} then {})",
                            subject.id, prev, visit.age
                        )));
                    }
                }
                prev_age = Some(visit.age);
                if visit.values.len() != num_nodes {
                    return Err(Error::validation(format!(
                        "subject {} visit {j}: {} values, expected {num_nodes}",
                        subject.id,
                        visit.values.len()
                    )));
                }
                for (k, &v) in visit.values.iter().enumerate() {
                    if !v.is_finite() || !(v > F::zero()) {
                        return Err(Error::validation(format!(
                            "subject {} visit {j} node {k}: value {v} must be finite and positive",
                            subject.id
                        )));
                    }
                }
            }
        }
        Ok(LongitudinalDataset { subjects, num_nodes })
    }

    pub fn subjects(&self) -> &[Subject<F>] {
        &self.subjects
    }

    pub fn num_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn total_visits(&self) -> usize {
        self.subjects.iter().map(|s| s.visits.len()).sum()
    }

    /// Number of scalar observations (visits times nodes).
    pub fn total_scalar_obs(&self) -> usize {
        self.total_visits() * self.num_nodes
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Euclidean projection of `w` onto the orthogonal complement of `v`:
/// `w - (<w,v>/<v,v>) v`. Returns `w` unchanged when `v` is all zero.
pub fn project_orthogonal<F: Real>(w_field: &[F], v_field: &[F]) -> NodeField<F> {
    let coef = projection_coef(w_field, v_field);
    w_field
        .iter()
        .zip(v_field)
        .map(|(&w, &v)| w - coef * v)
        .collect()
}

/// `<w,v>/<v,v>`, or zero when `v` is all zero.
pub fn projection_coef<F: Real>(w_field: &[F], v_field: &[F]) -> F {
    let vv = dot(v_field, v_field);
    if vv == F::zero() {
        F::zero()
    } else {
        dot(w_field, v_field) / vv
    }
}

/// Interpolate the p- and v-fields from the population coefficients.
///
/// A nonpositive interpolated p value makes the population state invalid
/// (the manifold requires p > 0); such states are rejected, not repaired.
pub fn realize_fields<F: Real>(
    pop: &PopulationParameters<F>,
    interp: &InterpolationOperator<F>,
) -> Result<(NodeField<F>, NodeField<F>)> {
    let p_field = interp.interpolate(&pop.beta_p)?;
    if let Some((k, &bad)) = p_field
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > F::zero()) || !v.is_finite())
    {
        return Err(Error::invalid_state(format!(
            "invalid population state: p-field entry {bad} at node {k}"
        )));
    }
    let v_field = interp.interpolate(&pop.beta_v)?;
    Ok((p_field, v_field))
}

/// Realized population state: the fields plus the quantities shared by every
/// subject evaluation. This is the evaluation backbone for the likelihood,
/// the sampler and prediction.
#[derive(Debug, Clone)]
pub struct RealizedModel<'a, F> {
    interp: &'a InterpolationOperator<F>,
    t0: F,
    p_field: NodeField<F>,
    v_field: NodeField<F>,
    // 1 / p per node; the trajectory evaluation multiplies by the reciprocal
    // so the cached value must match node_trajectory bit for bit.
    inv_p: NodeField<F>,
    v_norm_sq: F,
}

impl<'a, F: Real> RealizedModel<'a, F> {
    pub fn new(
        interp: &'a InterpolationOperator<F>,
        t0: F,
        beta_p: &[F],
        beta_v: &[F],
    ) -> Result<Self> {
        let p_field = interp.interpolate(beta_p)?;
        if let Some((k, &bad)) = p_field
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > F::zero()) || !v.is_finite())
        {
            return Err(Error::invalid_state(format!(
                "invalid population state: p-field entry {bad} at node {k}"
            )));
        }
        let v_field = interp.interpolate(beta_v)?;
        let inv_p = p_field.iter().map(|&p| F::one() / p).collect();
        let v_norm_sq = dot(&v_field, &v_field);
        Ok(RealizedModel {
            interp,
            t0,
            p_field,
            v_field,
            inv_p,
            v_norm_sq,
        })
    }

    pub fn from_population(
        interp: &'a InterpolationOperator<F>,
        pop: &PopulationParameters<F>,
    ) -> Result<Self> {
        Self::new(interp, pop.t0, &pop.beta_p, &pop.beta_v)
    }

    pub fn t0(&self) -> F {
        self.t0
    }

    pub fn p_field(&self) -> &[F] {
        &self.p_field
    }

    pub fn v_field(&self) -> &[F] {
        &self.v_field
    }

    pub fn interp(&self) -> &InterpolationOperator<F> {
        self.interp
    }

    pub fn num_nodes(&self) -> usize {
        self.p_field.len()
    }

    /// Noiseless prediction at time `t` from an unprojected space-shift
    /// field. Projects, then evaluates the per-node trajectory.
    pub fn predict_from_raw_shift(
        &self,
        w_raw: &[F],
        xi: F,
        tau: F,
        t: F,
    ) -> Result<NodeField<F>> {
        let w_field = project_orthogonal(w_raw, &self.v_field);
        let warp = TimeWarp::new(xi.exp(), tau, self.t0)?;
        let mut out = Vec::with_capacity(self.p_field.len());
        for k in 0..self.p_field.len() {
            let geo = NodeGeodesic {
                p: self.p_field[k],
                v: self.v_field[k],
                t0: self.t0,
            };
            out.push(node_trajectory(&geo, w_field[k], &warp, t)?);
        }
        Ok(out)
    }

    /// Residual sum of squares of one subject's visits against the model.
    ///
    /// This is the sampler's hot path; it evaluates exactly the same
    /// floating-point expressions as [`node_trajectory`], so cached values
    /// agree bitwise with `forward_map` output. The exponent guard is
    /// checked once per call (worst exponent seen) instead of per node,
    /// which keeps the inner loop branch-free; a guard violation discards
    /// the whole evaluation exactly as the per-node check would.
    pub fn subject_rss(&self, visits: &[Visit<F>], xi: F, tau: F, w_raw: &[F]) -> Result<F> {
        let n = self.p_field.len();
        let coef = if self.v_norm_sq == F::zero() {
            F::zero()
        } else {
            dot(w_raw, &self.v_field) / self.v_norm_sq
        };
        let mut w_field = Vec::with_capacity(n);
        for k in 0..n {
            w_field.push(w_raw[k] - coef * self.v_field[k]);
        }
        let alpha = xi.exp();
        let p = &self.p_field[..n];
        let v = &self.v_field[..n];
        let ip = &self.inv_p[..n];
        let w = &w_field[..n];
        let mut rss = F::zero();
        let mut worst = F::zero();
        for visit in visits {
            let warped_offset = alpha * (visit.age - self.t0 - tau);
            let y = &visit.values[..n];
            for k in 0..n {
                let exponent = (w[k] + v[k] * warped_offset) * ip[k];
                let a = exponent.abs();
                if a > worst {
                    worst = a;
                }
                let pred = p[k] * exponent.exp();
                let r = y[k] - pred;
                rss = rss + r * r;
            }
        }
        if !(worst <= F::exp_guard()) {
            return Err(Error::invalid_state(format!(
                "exponent {worst} outside +/-{} guard",
                F::exp_guard()
            )));
        }
        Ok(rss)
    }

    /// Gradient of the per-subject log posterior with respect to `(xi, tau)`.
    ///
    /// Derived from the trajectory in product form: with
    /// `u_j = alpha (t_j - t0 - tau)`,
    /// `d pred / d xi = pred * (v/p) * u_j` and
    /// `d pred / d tau = -pred * (v/p) * alpha`.
    pub fn xi_tau_gradient(
        &self,
        visits: &[Visit<F>],
        indiv: &IndividualParameters<F>,
        pop: &PopulationParameters<F>,
    ) -> Result<(F, F)> {
        let n = self.p_field.len();
        let w_raw = self.interp.interpolate(&indiv.w_coeffs)?;
        let coef = if self.v_norm_sq == F::zero() {
            F::zero()
        } else {
            dot(&w_raw, &self.v_field) / self.v_norm_sq
        };
        let mut w_field = Vec::with_capacity(n);
        for k in 0..n {
            w_field.push(w_raw[k] - coef * self.v_field[k]);
        }
        let alpha = indiv.xi.exp();
        let inv_var = F::one() / (pop.noise_std * pop.noise_std);
        let mut g_xi = F::zero();
        let mut g_tau = F::zero();
        for visit in visits {
            let u = alpha * (visit.age - self.t0 - indiv.tau);
            for k in 0..n {
                let b = self.v_field[k] / self.p_field[k];
                let pred =
                    self.p_field[k] * checked_exp((w_field[k] + self.v_field[k] * u) * self.inv_p[k])?;
                let r = visit.values[k] - pred;
                g_xi = g_xi + r * inv_var * pred * b * u;
                g_tau = g_tau - r * inv_var * pred * b * alpha;
            }
        }
        g_xi = g_xi - indiv.xi / (pop.hyper_xi_std * pop.hyper_xi_std);
        g_tau = g_tau - indiv.tau / (pop.hyper_tau_std * pop.hyper_tau_std);
        Ok((g_xi, g_tau))
    }
}

/// Noiseless model prediction for one subject at time `t`.
pub fn forward_map<F: Real>(
    pop: &PopulationParameters<F>,
    indiv: &IndividualParameters<F>,
    interp: &InterpolationOperator<F>,
    t: F,
) -> Result<NodeField<F>> {
    let model = RealizedModel::from_population(interp, pop)?;
    let w_raw = interp.interpolate(&indiv.w_coeffs)?;
    model.predict_from_raw_shift(&w_raw, indiv.xi, indiv.tau, t)
}

/// Log density of N(mean, std^2) at `x`.
pub fn gaussian_log_density<F: Real>(x: F, mean: F, std: F) -> F {
    let z = (x - mean) / std;
    -(std.ln() + F::cast(LN_SQRT_2PI)) - z * z / F::cast(2.0)
}

/// Data log-likelihood over the whole cohort:
/// `sum_{i,j} [ -N_v ln(sigma sqrt(2 pi)) - ||y_ij - f_i(t_ij)||^2 / (2 sigma^2) ]`.
pub fn log_likelihood<F: Real>(
    data: &LongitudinalDataset<F>,
    pop: &PopulationParameters<F>,
    all_indiv: &[IndividualParameters<F>],
    interp: &InterpolationOperator<F>,
) -> Result<F> {
    if all_indiv.len() != data.num_subjects() {
        return Err(Error::validation(format!(
            "{} individual parameter sets for {} subjects",
            all_indiv.len(),
            data.num_subjects()
        )));
    }
    let model = RealizedModel::from_population(interp, pop)?;
    let mut rss = F::zero();
    for (subject, indiv) in data.subjects().iter().zip(all_indiv) {
        let w_raw = interp.interpolate(&indiv.w_coeffs)?;
        rss = rss + model.subject_rss(&subject.visits, indiv.xi, indiv.tau, &w_raw)?;
    }
    let n_scalar = F::cast(data.total_scalar_obs() as f64);
    let sigma = pop.noise_std;
    let norm = -(sigma.ln() + F::cast(LN_SQRT_2PI)) * n_scalar;
    Ok(norm - rss / (F::cast(2.0) * sigma * sigma))
}

/// Per-subject Metropolis target: the subject's data log-likelihood plus the
/// log densities of its random effects under the priors.
pub fn log_posterior_individual<F: Real>(
    subject: &Subject<F>,
    pop: &PopulationParameters<F>,
    indiv: &IndividualParameters<F>,
    interp: &InterpolationOperator<F>,
) -> Result<F> {
    let model = RealizedModel::from_population(interp, pop)?;
    let w_raw = interp.interpolate(&indiv.w_coeffs)?;
    let rss = model.subject_rss(&subject.visits, indiv.xi, indiv.tau, &w_raw)?;
    let n_scalar = F::cast((subject.visits.len() * interp.num_nodes()) as f64);
    let sigma = pop.noise_std;
    let loglik = -(sigma.ln() + F::cast(LN_SQRT_2PI)) * n_scalar
        - rss / (F::cast(2.0) * sigma * sigma);
    Ok(loglik + individual_prior_log_density(indiv, pop))
}

/// Log density of the random-effect priors at `indiv`.
pub fn individual_prior_log_density<F: Real>(
    indiv: &IndividualParameters<F>,
    pop: &PopulationParameters<F>,
) -> F {
    let mut lp = gaussian_log_density(indiv.xi, F::zero(), pop.hyper_xi_std)
        + gaussian_log_density(indiv.tau, F::zero(), pop.hyper_tau_std);
    for &w in &indiv.w_coeffs {
        lp = lp + gaussian_log_density(w, F::zero(), pop.hyper_w_std);
    }
    lp
}

/// M-step aggregates: residual sums, latent moments (as sums plus counts so
/// partitions add exactly) and the current population-latent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStatistics<F> {
    pub residual_ss: F,
    pub n_subjects: usize,
    pub n_visits: usize,
    pub n_scalar_obs: usize,
    pub n_w_entries: usize,
    pub xi_sum: F,
    pub xi_sq_sum: F,
    pub tau_sum: F,
    pub tau_sq_sum: F,
    pub w_sum: F,
    pub w_sq_sum: F,
    pub t0: F,
    pub beta_p: Vec<F>,
    pub beta_v: Vec<F>,
}

impl<F: Real> SufficientStatistics<F> {
    /// Merge statistics over a disjoint subject partition sharing the same
    /// population latents.
    pub fn merge(&self, other: &Self) -> Self {
        debug_assert_eq!(self.t0, other.t0);
        SufficientStatistics {
            residual_ss: self.residual_ss + other.residual_ss,
            n_subjects: self.n_subjects + other.n_subjects,
            n_visits: self.n_visits + other.n_visits,
            n_scalar_obs: self.n_scalar_obs + other.n_scalar_obs,
            n_w_entries: self.n_w_entries + other.n_w_entries,
            xi_sum: self.xi_sum + other.xi_sum,
            xi_sq_sum: self.xi_sq_sum + other.xi_sq_sum,
            tau_sum: self.tau_sum + other.tau_sum,
            tau_sq_sum: self.tau_sq_sum + other.tau_sq_sum,
            w_sum: self.w_sum + other.w_sum,
            w_sq_sum: self.w_sq_sum + other.w_sq_sum,
            t0: self.t0,
            beta_p: self.beta_p.clone(),
            beta_v: self.beta_v.clone(),
        }
    }

    /// Componentwise relaxation `self += eps * (fresh - self)` used by the
    /// stochastic approximation step. A unit step assigns exactly (the
    /// incremental form would round).
    pub fn relax_toward(&mut self, fresh: &Self, eps: F) {
        debug_assert_eq!(self.n_subjects, fresh.n_subjects);
        if eps == F::one() {
            *self = fresh.clone();
            return;
        }
        let step = |acc: &mut F, new: F| *acc = *acc + eps * (new - *acc);
        step(&mut self.residual_ss, fresh.residual_ss);
        step(&mut self.xi_sum, fresh.xi_sum);
        step(&mut self.xi_sq_sum, fresh.xi_sq_sum);
        step(&mut self.tau_sum, fresh.tau_sum);
        step(&mut self.tau_sq_sum, fresh.tau_sq_sum);
        step(&mut self.w_sum, fresh.w_sum);
        step(&mut self.w_sq_sum, fresh.w_sq_sum);
        step(&mut self.t0, fresh.t0);
        for (acc, &new) in self.beta_p.iter_mut().zip(&fresh.beta_p) {
            *acc = *acc + eps * (new - *acc);
        }
        for (acc, &new) in self.beta_v.iter_mut().zip(&fresh.beta_v) {
            *acc = *acc + eps * (new - *acc);
        }
    }

    pub fn xi_first_moment(&self) -> F {
        self.xi_sum / F::cast(self.n_subjects as f64)
    }

    pub fn xi_second_moment(&self) -> F {
        self.xi_sq_sum / F::cast(self.n_subjects as f64)
    }

    pub fn tau_first_moment(&self) -> F {
        self.tau_sum / F::cast(self.n_subjects as f64)
    }

    pub fn tau_second_moment(&self) -> F {
        self.tau_sq_sum / F::cast(self.n_subjects as f64)
    }

    pub fn w_first_moment(&self) -> F {
        self.w_sum / F::cast(self.n_w_entries as f64)
    }

    pub fn w_second_moment(&self) -> F {
        self.w_sq_sum / F::cast(self.n_w_entries as f64)
    }
}

/// Aggregate the statistics at the current latent state.
pub fn compute_sufficient_statistics<F: Real>(
    data: &LongitudinalDataset<F>,
    pop: &PopulationParameters<F>,
    all_indiv: &[IndividualParameters<F>],
    interp: &InterpolationOperator<F>,
) -> Result<SufficientStatistics<F>> {
    if all_indiv.len() != data.num_subjects() {
        return Err(Error::validation(format!(
            "{} individual parameter sets for {} subjects",
            all_indiv.len(),
            data.num_subjects()
        )));
    }
    let model = RealizedModel::from_population(interp, pop)?;
    let mut rss = F::zero();
    for (subject, indiv) in data.subjects().iter().zip(all_indiv) {
        let w_raw = interp.interpolate(&indiv.w_coeffs)?;
        rss = rss + model.subject_rss(&subject.visits, indiv.xi, indiv.tau, &w_raw)?;
    }
    Ok(statistics_from_parts(
        rss, data, pop.t0, &pop.beta_p, &pop.beta_v, all_indiv,
    ))
}

/// Assemble the statistics from an already-known residual sum (the sampler
/// caches per-subject residuals and sums them in subject order).
pub fn statistics_from_parts<F: Real>(
    residual_ss: F,
    data: &LongitudinalDataset<F>,
    t0: F,
    beta_p: &[F],
    beta_v: &[F],
    all_indiv: &[IndividualParameters<F>],
) -> SufficientStatistics<F> {
    let mut xi_sum = F::zero();
    let mut xi_sq_sum = F::zero();
    let mut tau_sum = F::zero();
    let mut tau_sq_sum = F::zero();
    let mut w_sum = F::zero();
    let mut w_sq_sum = F::zero();
    let mut n_w_entries = 0usize;
    for indiv in all_indiv {
        xi_sum = xi_sum + indiv.xi;
        xi_sq_sum = xi_sq_sum + indiv.xi * indiv.xi;
        tau_sum = tau_sum + indiv.tau;
        tau_sq_sum = tau_sq_sum + indiv.tau * indiv.tau;
        for &w in &indiv.w_coeffs {
            w_sum = w_sum + w;
            w_sq_sum = w_sq_sum + w * w;
            n_w_entries += 1;
        }
    }
    SufficientStatistics {
        residual_ss,
        n_subjects: data.num_subjects(),
        n_visits: data.total_visits(),
        n_scalar_obs: data.total_scalar_obs(),
        n_w_entries,
        xi_sum,
        xi_sq_sum,
        tau_sum,
        tau_sq_sum,
        w_sum,
        w_sq_sum,
        t0,
        beta_p: beta_p.to_vec(),
        beta_v: beta_v.to_vec(),
    }
}
