//! End-to-end command tests against the built binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn netprog() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netprog"))
}

fn run(args: &[&str]) -> Output {
    netprog().args(args).output().expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write(path: &Path, content: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, content).unwrap();
}

/// Five-node path graph, unit lengths.
fn write_smoke_mesh(dir: &Path) -> PathBuf {
    let path = dir.join("mesh.csv");
    write(
        &path,
        "src,dst,length\n0,1,1.0\n1,2,1.0\n2,3,1.0\n3,4,1.0\n",
    );
    path
}

fn smoke_config(dir: &Path, seed: u64) -> PathBuf {
    let mesh = write_smoke_mesh(dir);
    let path = dir.join("run.toml");
    write(
        &path,
        &format!(
            r#"
[paths]
mesh_edges = "{mesh}"
data = "{dir}/data.csv"
out_dir = "{dir}/out"

[network]
n_control = 2
seed = 1

[sampler]
n_iterations = 10
burn_in = 3
seed = {seed}

[cohort]
n_subjects = 3
visits = 2
baseline_age_min = 66.0
baseline_age_max = 74.0
visit_interval = 1.0
seed = {seed}

[cohort.population]
t0 = 72.0
beta_p = [2.0, 2.4]
beta_v = [-0.05, -0.08]
noise_std = 0.05
hyper_xi_std = 0.3
hyper_tau_std = 3.0
hyper_w_std = 0.05
"#,
            mesh = mesh.display(),
            dir = dir.display(),
        ),
    );
    path
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 1);
    // no data.csv has been produced
    let out = run(&["fit", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("data.csv"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    write(&path, "[sampler]\nnot_a_key = 3\n");
    let out = run(&["fit", "--config", path.to_str().unwrap()]);
    assert_exit(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}

#[test]
fn malformed_mesh_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 1);
    write(&dir.path().join("mesh.csv"), "src,dst,length\n0,1,zero\n");
    write(&dir.path().join("data.csv"), "subject_id,age,node_0\ns0,70,2.0\n");
    let out = run(&["fit", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn smoke_pipeline_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 42);
    let config = config.to_str().unwrap();
    let out_dir = dir.path().join("out");

    // simulate writes data.csv + truth.json into out/, the fit reads from
    // the configured data path
    let out = run(&["simulate", "--config", config]);
    assert_exit(&out, 0);
    assert!(out_dir.join("truth.json").exists());
    std::fs::copy(out_dir.join("data.csv"), dir.path().join("data.csv")).unwrap();

    let out = run(&["fit", "--config", config]);
    assert_exit(&out, 0);
    for artifact in ["model.json", "trace.csv", "individuals.json"] {
        assert!(out_dir.join(artifact).exists(), "{artifact} missing");
    }

    // trace has one row per interval plus the final iteration
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.lines().count() >= 2);
    assert!(trace.starts_with("iteration,sigma,t0,"));

    let out = run(&["personalize", "--config", config]);
    assert_exit(&out, 0);

    // predict at two ages for every subject
    let config2 = dir.path().join("predict.toml");
    let base = std::fs::read_to_string(config).unwrap();
    write(
        &config2,
        &format!("{base}\n[predict]\ntimes = [70.0, 72.5]\n"),
    );
    let out = run(&["predict", "--config", config2.to_str().unwrap()]);
    assert_exit(&out, 0);
    let predictions = std::fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 3 * 2);

    let config3 = dir.path().join("export.toml");
    write(
        &config3,
        &format!("{base}\n[export]\nages = [65.0, 74.0]\ngrid_points = 11\n"),
    );
    let out = run(&["export", "--config", config3.to_str().unwrap()]);
    assert_exit(&out, 0);
    assert!(out_dir.join("map_65.csv").exists());
    assert!(out_dir.join("map_74.csv").exists());
    let trajectories = std::fs::read_to_string(out_dir.join("trajectories.csv")).unwrap();
    assert_eq!(trajectories.lines().count(), 1 + 11 * 5);
}

#[test]
fn vertex_table_mesh_feeds_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    // unit square ring in 3-space; lengths derived from coordinates
    write(
        &dir.path().join("vertices.csv"),
        "id,x,y,z\n0,0,0,0\n1,1,0,0\n2,1,1,0\n3,0,1,0\n",
    );
    write(&dir.path().join("edges.csv"), "src,dst\n0,1\n1,2\n2,3\n3,0\n");
    let config = dir.path().join("run.toml");
    write(
        &config,
        &format!(
            r#"
[paths]
mesh_edges = "{dir}/edges.csv"
mesh_vertices = "{dir}/vertices.csv"
out_dir = "{dir}/out"

[network]
n_control = 2
seed = 1

[cohort]
n_subjects = 2
visits = 2
baseline_age_min = 66.0
baseline_age_max = 74.0
visit_interval = 1.0
seed = 6

[cohort.population]
t0 = 72.0
beta_p = [2.0, 2.4]
beta_v = [-0.05, -0.08]
noise_std = 0.05
hyper_xi_std = 0.3
hyper_tau_std = 3.0
hyper_w_std = 0.05
"#,
            dir = dir.path().display(),
        ),
    );
    let out = run(&["simulate", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 0);
    let data = std::fs::read_to_string(dir.path().join("out/data.csv")).unwrap();
    assert!(data.starts_with("subject_id,age,node_0,node_1,node_2,node_3"));
}

#[test]
fn export_writes_full_distance_matrix_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 13);
    let config_path = config.to_str().unwrap();
    assert_exit(&run(&["simulate", "--config", config_path]), 0);
    std::fs::copy(
        dir.path().join("out/data.csv"),
        dir.path().join("data.csv"),
    )
    .unwrap();
    assert_exit(&run(&["fit", "--config", config_path]), 0);
    let base = std::fs::read_to_string(config_path).unwrap();
    let config2 = dir.path().join("export.toml");
    write(
        &config2,
        &format!("{base}\n[export]\nages = [70.0]\nwrite_distances = true\n"),
    );
    assert_exit(&run(&["export", "--config", config2.to_str().unwrap()]), 0);
    let distances = std::fs::read_to_string(dir.path().join("out/distances.csv")).unwrap();
    let rows: Vec<&str> = distances.lines().collect();
    assert_eq!(rows.len(), 5);
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[i], 0.0);
    }
    // path graph: distance from node 0 to node 4 is 4
    let first: Vec<f64> = rows[0].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(first[4], 4.0);
}

#[test]
fn rerunning_fit_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 7);
    let config = config.to_str().unwrap();
    assert_exit(&run(&["simulate", "--config", config]), 0);
    std::fs::copy(
        dir.path().join("out/data.csv"),
        dir.path().join("data.csv"),
    )
    .unwrap();

    assert_exit(&run(&["fit", "--config", config]), 0);
    let first = std::fs::read(dir.path().join("out/model.json")).unwrap();
    assert_exit(&run(&["fit", "--config", config]), 0);
    let second = std::fs::read(dir.path().join("out/model.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn export_at_reference_time_outputs_the_p_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 3);
    let config_path = config.to_str().unwrap();
    assert_exit(&run(&["simulate", "--config", config_path]), 0);
    std::fs::copy(
        dir.path().join("out/data.csv"),
        dir.path().join("data.csv"),
    )
    .unwrap();
    assert_exit(&run(&["fit", "--config", config_path]), 0);

    // the exported mean-scenario map at t0 must equal the realized p-field
    let bundle: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/model.json")).unwrap(),
    )
    .unwrap();
    let t0 = bundle["population"]["t0"].as_f64().unwrap();
    let base = std::fs::read_to_string(config_path).unwrap();
    let config2 = dir.path().join("export_t0.toml");
    write(&config2, &format!("{base}\n[export]\nages = [{t0}]\n"));
    assert_exit(&run(&["export", "--config", config2.to_str().unwrap()]), 0);

    let map = std::fs::read_to_string(dir.path().join(format!("out/map_{t0}.csv"))).unwrap();
    let values: Vec<f64> = map
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();

    // realize the p-field from the bundle through the library
    let model = netprog::io::bundle::read_model(&dir.path().join("out/model.json")).unwrap();
    let net = netprog::io::mesh::load_edge_list(&dir.path().join("mesh.csv")).unwrap();
    let interp = model.interpolator(&net).unwrap();
    let (p_field, _) =
        netprog_core::model::realize_fields(&model.population, &interp).unwrap();
    assert_eq!(values.len(), p_field.len());
    for (got, want) in values.iter().zip(&p_field) {
        assert!(
            (got - want).abs() <= 1e-12 * want.abs(),
            "map value {got} vs p-field {want}"
        );
    }
}

#[test]
fn predict_and_export_share_one_formula() {
    let dir = tempfile::tempdir().unwrap();
    let config = smoke_config(dir.path(), 11);
    let config_path = config.to_str().unwrap();
    assert_exit(&run(&["simulate", "--config", config_path]), 0);
    std::fs::copy(
        dir.path().join("out/data.csv"),
        dir.path().join("data.csv"),
    )
    .unwrap();
    assert_exit(&run(&["fit", "--config", config_path]), 0);
    assert_exit(&run(&["personalize", "--config", config_path]), 0);

    // training ages of subject s0
    let data = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let ages: Vec<String> = data
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("s0,"))
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert_eq!(ages.len(), 2);

    let base = std::fs::read_to_string(config_path).unwrap();
    let predict_cfg = dir.path().join("predict.toml");
    write(
        &predict_cfg,
        &format!(
            "{base}\n[predict]\ntimes = [{}]\nsubjects = [\"s0\"]\n",
            ages.join(", ")
        ),
    );
    assert_exit(&run(&["predict", "--config", predict_cfg.to_str().unwrap()]), 0);

    let export_cfg = dir.path().join("export.toml");
    write(
        &export_cfg,
        &format!(
            "{base}\n[export]\nages = [{}]\nsubject = \"s0\"\n",
            ages.join(", ")
        ),
    );
    assert_exit(&run(&["export", "--config", export_cfg.to_str().unwrap()]), 0);

    let predictions = std::fs::read_to_string(dir.path().join("out/predictions.csv")).unwrap();
    for (row, age) in predictions.lines().skip(1).zip(&ages) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], "s0");
        // the exported per-age map must contain the identical decimal strings
        let age_f: f64 = age.parse().unwrap();
        let map = std::fs::read_to_string(dir.path().join(format!("out/map_{age_f}.csv"))).unwrap();
        let map_values: Vec<&str> = map
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(&fields[2..], &map_values[..], "age {age}");
    }
}
