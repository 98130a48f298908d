//! Mesh input: an edge list CSV `src,dst,length`, or a vertex table
//! `id,x,y,z` plus an edge list `src,dst` whose lengths are the Euclidean
//! vertex distances.

use std::path::Path;

use netprog_core::network::MeshNetwork;

use crate::{CliError, CliResult};

fn parse_field<T: std::str::FromStr>(
    raw: &str,
    what: &str,
    path: &Path,
    line: usize,
) -> CliResult<T> {
    raw.trim().parse::<T>().map_err(|_| {
        CliError::Validation(format!(
            "{} line {line}: cannot parse {what} from {raw:?}",
            path.display()
        ))
    })
}

/// Load an edge list with lengths. Header must be `src,dst,length`.
pub fn load_edge_list(path: &Path) -> CliResult<MeshNetwork<f64>> {
    let mut reader = open_csv(path)?;
    expect_header(&reader.headers().cloned(), &["src", "dst", "length"], path)?;
    let mut edges = Vec::new();
    let mut max_node = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record
            .map_err(|e| CliError::Validation(format!("{} line {line}: {e}", path.display())))?;
        if record.len() != 3 {
            return Err(CliError::Validation(format!(
                "{} line {line}: expected 3 fields, found {}",
                path.display(),
                record.len()
            )));
        }
        let src: usize = parse_field(&record[0], "src", path, line)?;
        let dst: usize = parse_field(&record[1], "dst", path, line)?;
        let length: f64 = parse_field(&record[2], "length", path, line)?;
        max_node = max_node.max(src).max(dst);
        edges.push((src, dst, length));
    }
    if edges.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: edge list is empty",
            path.display()
        )));
    }
    Ok(MeshNetwork::new(max_node + 1, &edges)?)
}

/// Load vertices `id,x,y,z` plus a length-free edge list `src,dst`.
pub fn load_vertex_mesh(vertices: &Path, edges: &Path) -> CliResult<MeshNetwork<f64>> {
    let mut reader = open_csv(vertices)?;
    expect_header(&reader.headers().cloned(), &["id", "x", "y", "z"], vertices)?;
    let mut rows: Vec<(usize, [f64; 3])> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| {
            CliError::Validation(format!("{} line {line}: {e}", vertices.display()))
        })?;
        let id: usize = parse_field(&record[0], "id", vertices, line)?;
        let x: f64 = parse_field(&record[1], "x", vertices, line)?;
        let y: f64 = parse_field(&record[2], "y", vertices, line)?;
        let z: f64 = parse_field(&record[3], "z", vertices, line)?;
        rows.push((id, [x, y, z]));
    }
    let n = rows.len();
    let mut coords = vec![None; n];
    for (id, c) in rows {
        if id >= n {
            return Err(CliError::Validation(format!(
                "{}: vertex id {id} out of range for {n} vertices",
                vertices.display()
            )));
        }
        if coords[id].replace(c).is_some() {
            return Err(CliError::Validation(format!(
                "{}: duplicate vertex id {id}",
                vertices.display()
            )));
        }
    }
    let coords: Vec<[f64; 3]> = coords
        .into_iter()
        .map(|c| c.ok_or_else(|| CliError::Validation(format!("{}: missing vertex ids", vertices.display()))))
        .collect::<CliResult<_>>()?;

    let mut reader = open_csv(edges)?;
    expect_header(&reader.headers().cloned(), &["src", "dst"], edges)?;
    let mut pairs = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record =
            record.map_err(|e| CliError::Validation(format!("{} line {line}: {e}", edges.display())))?;
        let src: usize = parse_field(&record[0], "src", edges, line)?;
        let dst: usize = parse_field(&record[1], "dst", edges, line)?;
        pairs.push((src, dst));
    }
    Ok(MeshNetwork::from_vertices(coords, &pairs)?)
}

/// Load the mesh from the configured inputs: vertices + edges when a vertex
/// table is given, otherwise a self-contained edge list.
pub fn load_mesh(edges: &Path, vertices: Option<&Path>) -> CliResult<MeshNetwork<f64>> {
    match vertices {
        Some(v) => load_vertex_mesh(v, edges),
        None => load_edge_list(edges),
    }
}

/// Row-major distance matrix CSV at full precision, no header.
pub fn write_distance_matrix(
    path: &Path,
    matrix: &netprog_core::network::DistanceMatrix<f64>,
) -> CliResult<()> {
    let mut out = String::new();
    for row in 0..matrix.sources().len() {
        let fields: Vec<String> = matrix.row(row).iter().map(|&d| super::fmt_full(d)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    super::write_atomic(path, out.as_bytes())
}

fn open_csv(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))
}

fn expect_header(
    headers: &Result<csv::StringRecord, csv::Error>,
    expected: &[&str],
    path: &Path,
) -> CliResult<()> {
    let headers = headers
        .as_ref()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let actual: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
    if actual != expected {
        return Err(CliError::Validation(format!(
            "{} line 1: expected header {:?}, found {:?}",
            path.display(),
            expected.join(","),
            actual.join(",")
        )));
    }
    Ok(())
}
