//! JSON artifacts: the model bundle (schema `format: 1`, self-sufficient for
//! personalization given the mesh), per-subject individual parameters, the
//! simulation ground-truth sidecar, and the fit trace CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use netprog_core::inference::{FitResult, TraceRecord};
use netprog_core::model::{IndividualParameters, PopulationParameters};
use netprog_core::network::{ControlNodeSet, InterpolationOperator, MeshNetwork};

use crate::{CliError, CliResult};

pub const BUNDLE_FORMAT: u32 = 1;

/// Fitted model bundle: population parameters plus the control-node layout
/// needed to rebuild the interpolation operator on the original mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format: u32,
    pub num_nodes: usize,
    pub control_indices: Vec<usize>,
    pub bandwidth: f64,
    pub population: PopulationParameters<f64>,
}

impl ModelBundle {
    pub fn new(interp: &InterpolationOperator<f64>, population: PopulationParameters<f64>) -> Self {
        ModelBundle {
            format: BUNDLE_FORMAT,
            num_nodes: interp.num_nodes(),
            control_indices: interp.control().indices().to_vec(),
            bandwidth: interp.control().bandwidth(),
            population,
        }
    }

    /// Rebuild the interpolation operator on `net` from the stored control
    /// layout.
    pub fn interpolator(&self, net: &MeshNetwork<f64>) -> CliResult<InterpolationOperator<f64>> {
        if net.num_nodes() != self.num_nodes {
            return Err(CliError::Validation(format!(
                "mesh has {} nodes but the model was fitted on {}",
                net.num_nodes(),
                self.num_nodes
            )));
        }
        let cset = ControlNodeSet::new(self.control_indices.clone(), self.bandwidth, self.num_nodes)?;
        let rect = net.geodesic_distances(cset.indices())?;
        Ok(netprog_core::network::build_interpolator(&rect, &cset)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualRecord {
    pub id: String,
    pub xi: f64,
    pub tau: f64,
    pub w_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndividualsFile {
    pub format: u32,
    pub individuals: Vec<IndividualRecord>,
}

impl IndividualsFile {
    pub fn from_parameters(ids: &[String], params: &[IndividualParameters<f64>]) -> Self {
        IndividualsFile {
            format: BUNDLE_FORMAT,
            individuals: ids
                .iter()
                .zip(params)
                .map(|(id, p)| IndividualRecord {
                    id: id.clone(),
                    xi: p.xi,
                    tau: p.tau,
                    w_coeffs: p.w_coeffs.clone(),
                })
                .collect(),
        }
    }

    pub fn find(&self, id: &str) -> CliResult<IndividualParameters<f64>> {
        self.individuals
            .iter()
            .find(|r| r.id == id)
            .map(|r| IndividualParameters {
                xi: r.xi,
                tau: r.tau,
                w_coeffs: r.w_coeffs.clone(),
            })
            .ok_or_else(|| CliError::Validation(format!("subject {id} not found in individuals file")))
    }
}

/// Simulation sidecar: the generating model and the true random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub format: u32,
    pub model: ModelBundle,
    pub individuals: IndividualsFile,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut body = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    body.push(b'\n');
    super::write_atomic(path, &body)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn read_model(path: &Path) -> CliResult<ModelBundle> {
    let bundle: ModelBundle = read_json(path)?;
    if bundle.format != BUNDLE_FORMAT {
        return Err(CliError::Validation(format!(
            "{}: unsupported bundle format {}",
            path.display(),
            bundle.format
        )));
    }
    Ok(bundle)
}

/// Fit trace CSV: one row per recorded iteration.
pub fn write_trace(path: &Path, trace: &[TraceRecord<f64>]) -> CliResult<()> {
    let mut out = String::from(
        "iteration,sigma,t0,accept_t0,accept_beta_p,accept_beta_v,accept_xi_tau,accept_w,log_likelihood\n",
    );
    for rec in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            rec.iteration,
            super::fmt_full(rec.sigma),
            super::fmt_full(rec.t0),
            super::fmt_full(rec.acceptance.t0),
            super::fmt_full(rec.acceptance.beta_p),
            super::fmt_full(rec.acceptance.beta_v),
            super::fmt_full(rec.acceptance.xi_tau),
            super::fmt_full(rec.acceptance.w),
            super::fmt_full(rec.log_likelihood),
        ));
    }
    super::write_atomic(path, out.as_bytes())
}

/// Write the three fit artifacts (`model.json`, `trace.csv`,
/// `individuals.json`) into `out_dir`.
pub fn write_fit_outputs(
    out_dir: &Path,
    interp: &InterpolationOperator<f64>,
    result: &FitResult<f64>,
) -> CliResult<()> {
    let bundle = ModelBundle::new(interp, result.population.clone());
    write_json(&out_dir.join("model.json"), &bundle)?;
    write_trace(&out_dir.join("trace.csv"), &result.trace)?;
    let individuals =
        IndividualsFile::from_parameters(&result.subject_ids, &result.individuals_mean);
    write_json(&out_dir.join("individuals.json"), &individuals)?;
    Ok(())
}
