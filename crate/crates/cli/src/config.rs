//! Run configuration: a TOML file with per-command sections, plus
//! command-line overrides. Unknown keys are rejected; numeric ranges are
//! enforced by the owning core types when the sections are converted.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use netprog_core::inference::{ProposalScales, SamplerConfig};
use netprog_core::model::PopulationParameters;
use netprog_core::personalize::{PersonalizationConfig, PersonalizationMode};
use netprog_core::simulate::VisitCount;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub paths: PathsSection,
    pub network: Option<NetworkSection>,
    pub sampler: Option<SamplerSection>,
    pub cohort: Option<CohortSection>,
    pub personalize: Option<PersonalizeSection>,
    pub predict: Option<PredictSection>,
    pub export: Option<ExportSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub mesh_edges: Option<PathBuf>,
    pub mesh_vertices: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub individuals: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n_control: usize,
    /// Kernel bandwidth override; omitted = mean nearest-control distance.
    pub bandwidth: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub n_iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub sa_exponent: Option<f64>,
    pub target_acceptance: Option<f64>,
    pub adaptation_rate: Option<f64>,
    pub trace_interval: Option<usize>,
    pub hyper_warmup: Option<usize>,
    pub seed: Option<u64>,
    pub proposal_stds: Option<ProposalStdsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalStdsSection {
    pub t0: f64,
    pub beta_p: f64,
    pub beta_v: f64,
    pub xi: f64,
    pub tau: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSection {
    pub n_subjects: usize,
    pub visits: VisitSpec,
    pub baseline_age_min: f64,
    pub baseline_age_max: f64,
    pub visit_interval: f64,
    pub seed: Option<u64>,
    pub population: PopulationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VisitSpec {
    Fixed(usize),
    Range { min: usize, max: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub t0: f64,
    pub beta_p: Vec<f64>,
    pub beta_v: Vec<f64>,
    pub noise_std: f64,
    pub hyper_xi_std: f64,
    pub hyper_tau_std: f64,
    pub hyper_w_std: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonalizeSection {
    pub mode: Option<PersonalizeMode>,
    pub n_mcmc_iterations: Option<usize>,
    pub seed: Option<u64>,
    pub step_size: Option<f64>,
    pub max_steps: Option<usize>,
    pub tolerance: Option<f64>,
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PersonalizeMode {
    Map,
    PosteriorMean,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub times: Vec<f64>,
    pub subjects: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSection {
    pub ages: Vec<f64>,
    /// Personalized trajectory to export; default is the mean scenario.
    pub subject: Option<String>,
    pub grid_start: Option<f64>,
    pub grid_stop: Option<f64>,
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub write_distances: bool,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub mesh: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, ov: &Overrides) {
        if let Some(mesh) = &ov.mesh {
            self.paths.mesh_edges = Some(mesh.clone());
        }
        if let Some(data) = &ov.data {
            self.paths.data = Some(data.clone());
        }
        if let Some(out) = &ov.out {
            self.paths.out_dir = Some(out.clone());
        }
        if let Some(seed) = ov.seed {
            self.sampler.get_or_insert_with(Default::default).seed = Some(seed);
            if let Some(cohort) = self.cohort.as_mut() {
                cohort.seed = Some(seed);
            }
            self.personalize.get_or_insert_with(Default::default).seed = Some(seed);
        }
        if let Some(n) = ov.iterations {
            self.sampler.get_or_insert_with(Default::default).n_iterations = Some(n);
        }
    }

    pub fn mesh_edges(&self) -> CliResult<&Path> {
        self.paths
            .mesh_edges
            .as_deref()
            .ok_or_else(|| CliError::Validation("no mesh edge list configured (paths.mesh_edges or --mesh)".into()))
    }

    pub fn data(&self) -> CliResult<&Path> {
        self.paths
            .data
            .as_deref()
            .ok_or_else(|| CliError::Validation("no dataset configured (paths.data or --data)".into()))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.paths
            .out_dir
            .as_deref()
            .ok_or_else(|| CliError::Validation("no output directory configured (paths.out_dir or --out)".into()))
    }

    pub fn model_path(&self) -> CliResult<PathBuf> {
        if let Some(p) = &self.paths.model {
            return Ok(p.clone());
        }
        Ok(self.out_dir()?.join("model.json"))
    }

    pub fn individuals_path(&self) -> CliResult<PathBuf> {
        if let Some(p) = &self.paths.individuals {
            return Ok(p.clone());
        }
        Ok(self.out_dir()?.join("individuals.json"))
    }

    pub fn sampler_config(&self, threads: usize) -> CliResult<SamplerConfig<f64>> {
        let mut config = SamplerConfig::<f64>::default();
        if let Some(section) = &self.sampler {
            if let Some(v) = section.n_iterations {
                config.n_iterations = v;
                // keep the default ratio when only the budget is given
                if section.burn_in.is_none() {
                    config.burn_in = (v * 3) / 10;
                }
            }
            if let Some(v) = section.burn_in {
                config.burn_in = v;
            }
            if let Some(v) = section.sa_exponent {
                config.sa_exponent = v;
            }
            if let Some(v) = section.target_acceptance {
                config.target_acceptance = v;
            }
            if let Some(v) = section.adaptation_rate {
                config.adaptation_rate = v;
            }
            if let Some(v) = section.trace_interval {
                config.trace_interval = v;
            }
            if let Some(v) = section.hyper_warmup {
                config.hyper_warmup = v;
            }
            if let Some(v) = section.seed {
                config.seed = v;
            }
            if let Some(p) = &section.proposal_stds {
                config.initial_proposal_stds = Some(ProposalScales {
                    t0: p.t0,
                    beta_p: p.beta_p,
                    beta_v: p.beta_v,
                    xi: p.xi,
                    tau: p.tau,
                    w: p.w,
                });
            }
        }
        config.hyper_warmup = config.hyper_warmup.min(config.burn_in);
        config.threads = threads;
        config.validate()?;
        Ok(config)
    }

    pub fn personalization_config(&self) -> CliResult<PersonalizationConfig<f64>> {
        let mut config = PersonalizationConfig::<f64>::default();
        if let Some(section) = &self.personalize {
            if let Some(mode) = section.mode {
                config.mode = match mode {
                    PersonalizeMode::Map => PersonalizationMode::Map,
                    PersonalizeMode::PosteriorMean => PersonalizationMode::PosteriorMean,
                };
            }
            if let Some(v) = section.n_mcmc_iterations {
                config.n_mcmc_iterations = v;
            }
            if let Some(v) = section.seed {
                config.seed = v;
            }
            if let Some(v) = section.step_size {
                config.step_size = v;
            }
            if let Some(v) = section.max_steps {
                config.max_steps = v;
            }
            if let Some(v) = section.tolerance {
                config.tolerance = v;
            }
            if let Some(v) = section.rounds {
                config.rounds = v;
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn cohort_section(&self) -> CliResult<&CohortSection> {
        self.cohort
            .as_ref()
            .ok_or_else(|| CliError::Validation("missing [cohort] section".into()))
    }
}

impl CohortSection {
    pub fn population(&self) -> PopulationParameters<f64> {
        PopulationParameters {
            t0: self.population.t0,
            beta_p: self.population.beta_p.clone(),
            beta_v: self.population.beta_v.clone(),
            noise_std: self.population.noise_std,
            hyper_xi_std: self.population.hyper_xi_std,
            hyper_tau_std: self.population.hyper_tau_std,
            hyper_w_std: self.population.hyper_w_std,
        }
    }

    pub fn visit_count(&self) -> VisitCount {
        match self.visits {
            VisitSpec::Fixed(n) => VisitCount::Fixed(n),
            VisitSpec::Range { min, max } => VisitCount::Range(min, max),
        }
    }
}
