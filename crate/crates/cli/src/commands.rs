//! The five subcommands. Each is a batch run: read inputs, compute, write
//! outputs atomically.

use rayon::prelude::*;

use netprog_core::inference;
use netprog_core::model::IndividualParameters;
use netprog_core::network::{
    build_interpolator, select_control_nodes, InterpolationOperator, MeshNetwork,
};
use netprog_core::personalize;
use netprog_core::rng;
use netprog_core::simulate::{simulate_cohort, CohortSpec};

use crate::config::RunConfig;
use crate::io::bundle::{
    read_json, read_model, write_fit_outputs, write_json, IndividualRecord, IndividualsFile,
    ModelBundle, TruthFile,
};
use crate::io::dataset::{dataset_header, load_dataset, write_dataset};
use crate::io::mesh::{load_mesh, write_distance_matrix};
use crate::io::{fmt_full, write_atomic};
use crate::{threads_from_env, CliError, CliResult};

fn load_configured_mesh(config: &RunConfig) -> CliResult<MeshNetwork<f64>> {
    load_mesh(
        config.mesh_edges()?,
        config.paths.mesh_vertices.as_deref(),
    )
}

/// Select control nodes and build the interpolation operator for a fresh
/// network (fit and simulate). The full distance matrix exists only for the
/// selection step; interpolation uses the control-row slice.
fn build_network_artifacts(
    config: &RunConfig,
    net: &MeshNetwork<f64>,
) -> CliResult<InterpolationOperator<f64>> {
    let section = config
        .network
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [network] section".into()))?;
    let full = net.full_distances()?;
    let seed = section.seed.unwrap_or(0);
    let mut cset = select_control_nodes(net, &full, section.n_control, seed)?;
    if let Some(bw) = section.bandwidth {
        cset = netprog_core::network::ControlNodeSet::new(
            cset.indices().to_vec(),
            bw,
            net.num_nodes(),
        )?;
    }
    let rect = full.select_rows(cset.indices())?;
    Ok(build_interpolator(&rect, &cset)?)
}

/// Rebuild the operator for an existing model bundle (personalize, predict,
/// export): only control-to-all distances are computed.
fn rebuild_from_bundle(
    config: &RunConfig,
    bundle: &ModelBundle,
) -> CliResult<(MeshNetwork<f64>, InterpolationOperator<f64>)> {
    let net = load_configured_mesh(config)?;
    let interp = bundle.interpolator(&net)?;
    Ok((net, interp))
}

pub fn cmd_fit(config: &RunConfig) -> CliResult<()> {
    let out_dir = config.out_dir()?.to_path_buf();
    let net = load_configured_mesh(config)?;
    let interp = build_network_artifacts(config, &net)?;
    let data = load_dataset(config.data()?)?;
    let sampler = config.sampler_config(threads_from_env())?;
    let result = inference::fit(&data, &interp, &sampler)?;
    write_fit_outputs(&out_dir, &interp, &result)
}

pub fn cmd_simulate(config: &RunConfig) -> CliResult<()> {
    let out_dir = config.out_dir()?.to_path_buf();
    let net = load_configured_mesh(config)?;
    let interp = build_network_artifacts(config, &net)?;
    let section = config.cohort_section()?;
    let spec = CohortSpec {
        n_subjects: section.n_subjects,
        visits: section.visit_count(),
        baseline_age: (section.baseline_age_min, section.baseline_age_max),
        visit_interval: section.visit_interval,
        population: section.population(),
        seed: section.seed.unwrap_or(0),
    };
    let cohort = run_pool(threads_from_env(), || simulate_cohort(&spec, &interp))??;
    if cohort.redrawn_visits > 0 {
        eprintln!(
            "note: {} visit draw(s) redrawn to stay on the positive domain",
            cohort.redrawn_visits
        );
    }
    write_dataset(&out_dir.join("data.csv"), &cohort.dataset)?;
    let ids: Vec<String> = cohort
        .dataset
        .subjects()
        .iter()
        .map(|s| s.id.clone())
        .collect();
    let truth = TruthFile {
        format: crate::io::bundle::BUNDLE_FORMAT,
        model: ModelBundle::new(&interp, spec.population.clone()),
        individuals: IndividualsFile::from_parameters(&ids, &cohort.individuals),
    };
    write_json(&out_dir.join("truth.json"), &truth)
}

pub fn cmd_personalize(config: &RunConfig) -> CliResult<()> {
    let bundle = read_model(&config.model_path()?)?;
    let (_net, interp) = rebuild_from_bundle(config, &bundle)?;
    let data = load_dataset(config.data()?)?;
    if data.num_nodes() != interp.num_nodes() {
        return Err(CliError::Validation(format!(
            "dataset has {} nodes but the model was fitted on {}",
            data.num_nodes(),
            interp.num_nodes()
        )));
    }
    let base = config.personalization_config()?;
    let threads = threads_from_env();
    let params = run_pool(threads, || -> CliResult<Vec<IndividualParameters<f64>>> {
        data.subjects()
            .par_iter()
            .enumerate()
            .map(|(i, subject)| {
                let mut cfg = base.clone();
                cfg.seed = rng::stream_seed(base.seed, 7, i as u64);
                Ok(personalize::personalize(
                    &subject.visits,
                    &bundle.population,
                    &interp,
                    &cfg,
                )?)
            })
            .collect()
    })??;
    let ids: Vec<String> = data.subjects().iter().map(|s| s.id.clone()).collect();
    let out = IndividualsFile::from_parameters(&ids, &params);
    write_json(&config.individuals_path()?, &out)
}

pub fn cmd_predict(config: &RunConfig) -> CliResult<()> {
    let bundle = read_model(&config.model_path()?)?;
    let (_net, interp) = rebuild_from_bundle(config, &bundle)?;
    let individuals: IndividualsFile = read_json(&config.individuals_path()?)?;
    let section = config
        .predict
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [predict] section".into()))?;
    if section.times.is_empty() {
        return Err(CliError::Validation("predict.times must not be empty".into()));
    }
    let selected: Vec<&IndividualRecord> = match &section.subjects {
        Some(ids) => ids
            .iter()
            .map(|id| {
                individuals
                    .individuals
                    .iter()
                    .find(|r| &r.id == id)
                    .ok_or_else(|| {
                        CliError::Validation(format!("subject {id} not found in individuals file"))
                    })
            })
            .collect::<CliResult<_>>()?,
        None => individuals.individuals.iter().collect(),
    };

    let mut out = dataset_header(interp.num_nodes());
    out.push('\n');
    for record in selected {
        let indiv = IndividualParameters {
            xi: record.xi,
            tau: record.tau,
            w_coeffs: record.w_coeffs.clone(),
        };
        let maps = personalize::predict(&bundle.population, &indiv, &interp, &section.times)?;
        for (t, map) in section.times.iter().zip(maps) {
            out.push_str(&record.id);
            out.push(',');
            out.push_str(&fmt_full(*t));
            for v in map {
                out.push(',');
                out.push_str(&fmt_full(v));
            }
            out.push('\n');
        }
    }
    write_atomic(&config.out_dir()?.join("predictions.csv"), out.as_bytes())
}

pub fn cmd_export(config: &RunConfig) -> CliResult<()> {
    let out_dir = config.out_dir()?.to_path_buf();
    let bundle = read_model(&config.model_path()?)?;
    let (net, interp) = rebuild_from_bundle(config, &bundle)?;
    let section = config
        .export
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [export] section".into()))?;
    if section.ages.is_empty() {
        return Err(CliError::Validation("export.ages must not be empty".into()));
    }

    let indiv = match &section.subject {
        Some(id) => {
            let individuals: IndividualsFile = read_json(&config.individuals_path()?)?;
            individuals.find(id)?
        }
        None => IndividualParameters::identity(interp.num_controls()),
    };

    // one map per requested age
    let maps = personalize::predict(&bundle.population, &indiv, &interp, &section.ages)?;
    for (age, map) in section.ages.iter().zip(&maps) {
        let mut out = String::from("node,value\n");
        for (k, v) in map.iter().enumerate() {
            out.push_str(&format!("{k},{}\n", fmt_full(*v)));
        }
        write_atomic(&out_dir.join(format!("map_{age}.csv")), out.as_bytes())?;
    }

    // per-node trajectory curves on a time grid
    let (lo, hi) = section
        .ages
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| {
            (l.min(a), h.max(a))
        });
    let start = section.grid_start.unwrap_or(lo - 5.0);
    let stop = section.grid_stop.unwrap_or(hi + 5.0);
    let points = section.grid_points.unwrap_or(101);
    if !(stop > start) || points < 2 {
        return Err(CliError::Validation(
            "export grid needs stop > start and at least 2 points".into(),
        ));
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect();
    let curves = personalize::predict(&bundle.population, &indiv, &interp, &grid)?;
    let mut out = String::from("node,age,value\n");
    for (t, map) in grid.iter().zip(&curves) {
        for (k, v) in map.iter().enumerate() {
            out.push_str(&format!("{k},{},{}\n", fmt_full(*t), fmt_full(*v)));
        }
    }
    write_atomic(&out_dir.join("trajectories.csv"), out.as_bytes())?;

    if section.write_distances {
        let full = net.full_distances()?;
        write_distance_matrix(&out_dir.join("distances.csv"), &full)?;
    }
    Ok(())
}

/// Run `f` inside a scoped pool of `threads` workers (0 = ambient pool).
fn run_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
