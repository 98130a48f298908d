//! The fixed measurement graph and its kernel interpolation machinery.
//!
//! A [`MeshNetwork`] is an undirected weighted graph shared by every subject.
//! Geodesic (shortest-path) distances on it feed a Gaussian kernel that maps
//! a sparse set of control-node coefficients to smooth per-node fields: the
//! value at node `x` is `sum_i K(x, x_{d_i}) * beta_i`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Per-node scalar field (length `num_nodes`).
pub type NodeField<F> = Vec<F>;

/// Undirected weighted graph with optional vertex coordinates.
#[derive(Debug, Clone)]
pub struct MeshNetwork<F> {
    num_nodes: usize,
    edges: Vec<(usize, usize, F)>,
    adjacency: Vec<Vec<(usize, F)>>,
    vertex_coords: Option<Vec<[F; 3]>>,
}

impl<F: Real> MeshNetwork<F> {
    /// Build and validate a network from an explicit edge list.
    ///
    /// Edges are undirected; duplicates (in either orientation) collapse to
    /// the shortest stated length. Self-loops, dangling indices and
    /// nonpositive lengths are rejected.
    pub fn new(num_nodes: usize, edges: &[(usize, usize, F)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::validation("network must have at least one node"));
        }
        let mut dedup: Vec<(usize, usize, F)> = Vec::with_capacity(edges.len());
        let mut seen: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for &(a, b, len) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::validation(format!(
                    "edge ({a},{b}) index out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::validation(format!("self-loop edge at node {a}")));
            }
            if !(len > F::zero()) || !len.is_finite() {
                return Err(Error::validation(format!(
                    "edge ({a},{b}) has nonpositive length {len}"
                )));
            }
            let key = (a.min(b), a.max(b));
            match seen.get(&key) {
                Some(&slot) => {
                    if len < dedup[slot].2 {
                        dedup[slot].2 = len;
                    }
                }
                None => {
                    seen.insert(key, dedup.len());
                    dedup.push((key.0, key.1, len));
                }
            }
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b, len) in &dedup {
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }
        Ok(MeshNetwork {
            num_nodes,
            edges: dedup,
            adjacency,
            vertex_coords: None,
        })
    }

    /// Build a network from vertex coordinates plus index pairs; edge lengths
    /// are the Euclidean distances between endpoints.
    pub fn from_vertices(coords: Vec<[F; 3]>, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = coords.len();
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::validation(format!(
                    "edge ({a},{b}) index out of range for {n} vertices"
                )));
            }
            let (ca, cb) = (coords[a], coords[b]);
            let mut sq = F::zero();
            for d in 0..3 {
                let diff = ca[d] - cb[d];
                sq = sq + diff * diff;
            }
            edges.push((a, b, sq.sqrt()));
        }
        let mut net = Self::new(n, &edges)?;
        net.vertex_coords = Some(coords);
        Ok(net)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize, F)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, F)] {
        &self.adjacency[node]
    }

    pub fn vertex_coords(&self) -> Option<&[[F; 3]]> {
        self.vertex_coords.as_deref()
    }

    /// Shortest-path distances from each source to every node.
    ///
    /// One Dijkstra run per source; runs are independent and execute in
    /// parallel, with rows assembled in source order so the result is
    /// deterministic. Fails if any node is unreachable.
    pub fn geodesic_distances(&self, sources: &[usize]) -> Result<DistanceMatrix<F>> {
        for &s in sources {
            if s >= self.num_nodes {
                return Err(Error::validation(format!(
                    "source node {s} out of range for {} nodes",
                    self.num_nodes
                )));
            }
        }
        let rows: Vec<Result<Vec<F>>> = sources
            .par_iter()
            .map(|&s| {
                let dist = self.dijkstra_from(s);
                if let Some(bad) = dist.iter().position(|d| !d.is_finite()) {
                    let component = self.component_of(bad);
                    return Err(Error::validation(format!(
                        "node {bad} unreachable from source {s}; disconnected component {component:?}"
                    )));
                }
                Ok(dist)
            })
            .collect();
        let mut data = Vec::with_capacity(sources.len() * self.num_nodes);
        for row in rows {
            data.extend(row?);
        }
        Ok(DistanceMatrix {
            sources: sources.to_vec(),
            num_nodes: self.num_nodes,
            data,
        })
    }

    /// Full distance matrix (all nodes as sources).
    pub fn full_distances(&self) -> Result<DistanceMatrix<F>> {
        let all: Vec<usize> = (0..self.num_nodes).collect();
        self.geodesic_distances(&all)
    }

    fn dijkstra_from(&self, start: usize) -> Vec<F> {
        let mut dist = vec![F::infinity(); self.num_nodes];
        let mut heap = BinaryHeap::new();
        dist[start] = F::zero();
        heap.push(HeapEntry {
            cost: F::zero(),
            node: start,
        });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, len) in &self.adjacency[node] {
                let candidate = cost + len;
                if candidate < dist[next] {
                    dist[next] = candidate;
                    heap.push(HeapEntry {
                        cost: candidate,
                        node: next,
                    });
                }
            }
        }
        dist
    }

    /// Nodes in the connected component containing `node` (for diagnostics).
    fn component_of(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.num_nodes];
        let mut queue = std::collections::VecDeque::from([node]);
        seen[node] = true;
        let mut out = Vec::new();
        while let Some(k) = queue.pop_front() {
            out.push(k);
            for &(next, _) in &self.adjacency[k] {
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Min-heap entry for Dijkstra.
struct HeapEntry<F> {
    cost: F,
    node: usize,
}

impl<F: PartialOrd> PartialEq for HeapEntry<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<F: PartialOrd> Eq for HeapEntry<F> {}
impl<F: PartialOrd> PartialOrd for HeapEntry<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<F: PartialOrd> Ord for HeapEntry<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; ties broken on node index to keep the
        // ordering total for nonfinite costs.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Geodesic distances from a subset of source nodes to every node.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<F> {
    sources: Vec<usize>,
    num_nodes: usize,
    data: Vec<F>,
}

impl<F: Real> DistanceMatrix<F> {
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// True when every node is a source, in index order.
    pub fn is_full(&self) -> bool {
        self.sources.len() == self.num_nodes
            && self.sources.iter().enumerate().all(|(i, &s)| i == s)
    }

    /// Distance from the `row`-th source to `node`.
    pub fn get(&self, row: usize, node: usize) -> F {
        self.data[row * self.num_nodes + node]
    }

    pub fn row(&self, row: usize) -> &[F] {
        &self.data[row * self.num_nodes..(row + 1) * self.num_nodes]
    }

    /// Restrict the rows to a subset of the current sources.
    pub fn select_rows(&self, sources: &[usize]) -> Result<DistanceMatrix<F>> {
        let mut data = Vec::with_capacity(sources.len() * self.num_nodes);
        for &s in sources {
            let row = self
                .sources
                .iter()
                .position(|&x| x == s)
                .ok_or_else(|| Error::validation(format!("node {s} is not a stored source")))?;
            data.extend_from_slice(self.row(row));
        }
        Ok(DistanceMatrix {
            sources: sources.to_vec(),
            num_nodes: self.num_nodes,
            data,
        })
    }
}

/// Sparse set of nodes carrying the free field coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlNodeSet<F> {
    indices: Vec<usize>,
    bandwidth: F,
}

impl<F: Real> ControlNodeSet<F> {
    pub fn new(indices: Vec<usize>, bandwidth: F, num_nodes: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::validation("control node set must not be empty"));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::validation("control node indices must be distinct"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= num_nodes) {
            return Err(Error::validation(format!(
                "control node {bad} out of range for {num_nodes} nodes"
            )));
        }
        if !(bandwidth > F::zero()) || !bandwidth.is_finite() {
            return Err(Error::validation(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(ControlNodeSet { indices, bandwidth })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bandwidth(&self) -> F {
        self.bandwidth
    }
}

/// Greedy farthest-point sampling of `n_control` nodes.
///
/// The first node is a seeded uniform draw; each following pick maximizes the
/// minimum geodesic distance to the nodes already chosen (ties go to the
/// smallest index). The default bandwidth is the mean distance from the
/// remaining nodes to their nearest control node.
pub fn select_control_nodes<F: Real>(
    net: &MeshNetwork<F>,
    distances: &DistanceMatrix<F>,
    n_control: usize,
    seed: u64,
) -> Result<ControlNodeSet<F>> {
    let n = net.num_nodes();
    if !distances.is_full() || distances.num_nodes() != n {
        return Err(Error::validation(
            "control selection needs the full distance matrix",
        ));
    }
    if n_control == 0 || n_control > n {
        return Err(Error::validation(format!(
            "n_control must be in 1..={n}, got {n_control}"
        )));
    }

    let mut rng = rng::master(seed);
    let first = rng.random_range(0..n);
    let mut chosen = Vec::with_capacity(n_control);
    chosen.push(first);

    // min_dist[k] = distance from node k to the nearest chosen node
    let mut min_dist: Vec<F> = distances.row(first).to_vec();
    while chosen.len() < n_control {
        let mut best = 0usize;
        let mut best_dist = F::neg_infinity();
        for (k, &d) in min_dist.iter().enumerate() {
            if d > best_dist {
                best_dist = d;
                best = k;
            }
        }
        chosen.push(best);
        for (k, d) in min_dist.iter_mut().enumerate() {
            let nd = distances.get(best, k);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let bandwidth = default_bandwidth(&chosen, &min_dist, distances);
    ControlNodeSet::new(chosen, bandwidth, n)
}

/// Mean distance from non-control nodes to their nearest control node.
///
/// When every node is a control node that mean is empty, so fall back to the
/// mean nearest-other-control distance (and to 1 for a single-node graph).
fn default_bandwidth<F: Real>(
    chosen: &[usize],
    min_dist: &[F],
    distances: &DistanceMatrix<F>,
) -> F {
    let is_control: std::collections::HashSet<usize> = chosen.iter().copied().collect();
    let mut sum = F::zero();
    let mut count = 0usize;
    for (k, &d) in min_dist.iter().enumerate() {
        if !is_control.contains(&k) {
            sum = sum + d;
            count += 1;
        }
    }
    if count > 0 {
        return sum / F::cast(count as f64);
    }
    let mut sum = F::zero();
    let mut count = 0usize;
    for &a in chosen {
        let mut nearest = F::infinity();
        for &b in chosen {
            if a != b {
                let d = distances.get(a, b);
                if d < nearest {
                    nearest = d;
                }
            }
        }
        if nearest.is_finite() {
            sum = sum + nearest;
            count += 1;
        }
    }
    if count > 0 {
        sum / F::cast(count as f64)
    } else {
        F::one()
    }
}

/// Gaussian kernel profile `exp(-(d/bandwidth)^2 / 2)`.
///
/// Total on `d >= 0`, `bandwidth > 0`; equals 1 exactly at `d = 0` and
/// depends on its arguments only through the ratio `d / bandwidth`.
pub fn kernel_weight<F: Real>(d: F, bandwidth: F) -> F {
    debug_assert!(d >= F::zero() && bandwidth > F::zero());
    let u = d / bandwidth;
    (-u * u / F::cast(2.0)).exp()
}

/// Kernel weights from every node to every control node (`num_nodes` rows by
/// `num_controls` columns).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolationOperator<F> {
    weights: Vec<F>,
    num_nodes: usize,
    control: ControlNodeSet<F>,
}

/// Evaluate the kernel against the control-to-all distance rows and store
/// the transpose, so each node owns a contiguous row of weights.
pub fn build_interpolator<F: Real>(
    distances: &DistanceMatrix<F>,
    control: &ControlNodeSet<F>,
) -> Result<InterpolationOperator<F>> {
    if distances.sources() != control.indices() {
        return Err(Error::validation(
            "distance matrix rows must match the control node set",
        ));
    }
    let n = distances.num_nodes();
    let nc = control.len();
    let bw = control.bandwidth();
    let mut weights = vec![F::zero(); n * nc];
    for (c, _) in control.indices().iter().enumerate() {
        let row = distances.row(c);
        for k in 0..n {
            weights[k * nc + c] = kernel_weight(row[k], bw);
        }
    }
    Ok(InterpolationOperator {
        weights,
        num_nodes: n,
        control: control.clone(),
    })
}

impl<F: Real> InterpolationOperator<F> {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_controls(&self) -> usize {
        self.control.len()
    }

    pub fn control(&self) -> &ControlNodeSet<F> {
        &self.control
    }

    /// Kernel weight between node `k` and control column `c`.
    pub fn weight(&self, k: usize, c: usize) -> F {
        self.weights[k * self.control.len() + c]
    }

    /// Weights of node `k` against all control nodes.
    pub fn node_row(&self, k: usize) -> &[F] {
        let nc = self.control.len();
        &self.weights[k * nc..(k + 1) * nc]
    }

    /// Matrix-vector product mapping coefficients to a node field; exactly
    /// linear in `beta`.
    pub fn interpolate(&self, beta: &[F]) -> Result<NodeField<F>> {
        let nc = self.control.len();
        if beta.len() != nc {
            return Err(Error::validation(format!(
                "coefficient vector has length {}, expected {nc}",
                beta.len()
            )));
        }
        let mut field = Vec::with_capacity(self.num_nodes);
        for k in 0..self.num_nodes {
            let row = self.node_row(k);
            let mut acc = F::zero();
            for (w, b) in row.iter().zip(beta) {
                acc = acc + *w * *b;
            }
            field.push(acc);
        }
        Ok(field)
    }

    /// Interpolate into a caller-provided buffer (hot path of the sampler).
    pub fn interpolate_into(&self, beta: &[F], field: &mut NodeField<F>) -> Result<()> {
        let nc = self.control.len();
        if beta.len() != nc {
            return Err(Error::validation(format!(
                "coefficient vector has length {}, expected {nc}",
                beta.len()
            )));
        }
        field.clear();
        field.reserve(self.num_nodes);
        for k in 0..self.num_nodes {
            let row = self.node_row(k);
            let mut acc = F::zero();
            for (w, b) in row.iter().zip(beta) {
                acc = acc + *w * *b;
            }
            field.push(acc);
        }
        Ok(())
    }
}
