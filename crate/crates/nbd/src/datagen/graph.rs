//! Shortest-path regression tasks on synthetic weighted graphs: grid
//! topologies with uniform-quantized or noisy edge weights, landmark
//! shortest-distance node features (directional on asymmetric graphs),
//! standardization plus Gaussian noise, distractor features, and exact
//! pair distances normalized to mean 1 over the training split.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledPair, LabeledPairSet};
use crate::error::{NbdError, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphDataset {
    /// Cubic grid, edges wrap around, undirected.
    ThreeD,
    /// Two objects on a 2-d grid (4-d state), no wrap, undirected.
    Taxi,
    /// Cubic grid with wrap but only the forward edge per axis (directed).
    ThreeDD,
    /// 2-d grid, no wrap, independently sampled forward/reverse weights.
    Traffic,
    /// Traffic plus diagonal connections.
    Octagon,
}

impl GraphDataset {
    pub fn is_asymmetric(&self) -> bool {
        matches!(self, GraphDataset::ThreeDD | GraphDataset::Traffic | GraphDataset::Octagon)
    }

    /// Per-axis grid size at desk scale.
    pub fn desk_grid(&self) -> usize {
        match self {
            GraphDataset::ThreeD | GraphDataset::ThreeDD => 10,
            GraphDataset::Taxi => 6,
            GraphDataset::Traffic | GraphDataset::Octagon => 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub dataset: GraphDataset,
    /// Per-axis grid size.
    pub grid: usize,
    pub landmarks: usize,
    pub distractors: usize,
    pub noise_sigma: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub seed: u64,
    /// Force every edge weight to 1 (diagnostic for known geodesics).
    pub unit_weights: bool,
}

impl GraphSpec {
    pub fn desk(dataset: GraphDataset, seed: u64) -> Self {
        GraphSpec {
            dataset,
            grid: dataset.desk_grid(),
            landmarks: 32,
            distractors: 96,
            noise_sigma: 0.2,
            train_pairs: 20_000,
            test_pairs: 4_000,
            seed,
            unit_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 {
            return Err(NbdError::Config("grid size must be at least 3".into()));
        }
        if self.landmarks == 0 || self.train_pairs == 0 || self.test_pairs == 0 {
            return Err(NbdError::Config(
                "landmarks and pair counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The weighted graph with exact shortest-path queries.
pub struct GraphOracle {
    adj: Vec<Vec<(u32, f64)>>,
    radj: Vec<Vec<(u32, f64)>>,
    asymmetric: bool,
}

impl GraphOracle {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn is_asymmetric(&self) -> bool {
        self.asymmetric
    }

    fn push_edge(&mut self, u: usize, v: usize, w: f64) {
        self.adj[u].push((v as u32, w));
        self.radj[v].push((u as u32, w));
    }

    /// Single-source shortest distances over out-edges (or in-edges when
    /// `reverse`, giving distances *to* the source).
    pub fn dijkstra(&self, src: usize, reverse: bool) -> Vec<f64> {
        let adj = if reverse { &self.radj } else { &self.adj };
        let mut dist = vec![f64::INFINITY; adj.len()];
        let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Reverse((0, src as u32)));
        while let Some(Reverse((dk, u))) = heap.pop() {
            let du = f64::from_bits(dk);
            if du > dist[u as usize] {
                continue;
            }
            for &(v, w) in &adj[u as usize] {
                let nd = du + w;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Reverse((nd.to_bits(), v)));
                }
            }
        }
        dist
    }

    /// Point-to-point search with a zero heuristic (equivalent to Dijkstra
    /// with early exit); the cross-check oracle for pair distances.
    pub fn astar_zero(&self, src: usize, dst: usize) -> Result<f64> {
        let mut dist = vec![f64::INFINITY; self.adj.len()];
        let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Reverse((0, src as u32)));
        while let Some(Reverse((dk, u))) = heap.pop() {
            let du = f64::from_bits(dk);
            if u as usize == dst {
                return Ok(du);
            }
            if du > dist[u as usize] {
                continue;
            }
            for &(v, w) in &self.adj[u as usize] {
                let nd = du + w;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Reverse((nd.to_bits(), v)));
                }
            }
        }
        Err(NbdError::Disconnected(src, dst))
    }
}

// Nonnegative f64 keys order correctly through their bit patterns, which
// the heap entries above rely on.

fn quantized_weight(rng: &mut ChaCha8Rng, unit: bool) -> f64 {
    if unit {
        1.0
    } else {
        rng.gen_range(1..=100) as f64 / 100.0
    }
}

fn noisy_weight(rng: &mut ChaCha8Rng, mean: f64, unit: bool) -> f64 {
    if unit {
        return 1.0;
    }
    // Spread around the quantized mean, clamped away from zero.
    let normal = Normal::new(mean, 0.1).expect("normal");
    normal.sample(rng).max(0.01)
}

fn build_graph(spec: &GraphSpec, rng: &mut ChaCha8Rng) -> GraphOracle {
    let g = spec.grid;
    let n = match spec.dataset {
        GraphDataset::ThreeD | GraphDataset::ThreeDD => g * g * g,
        GraphDataset::Taxi => g * g * g * g,
        GraphDataset::Traffic | GraphDataset::Octagon => g * g,
    };
    let mut oracle = GraphOracle {
        adj: vec![Vec::new(); n],
        radj: vec![Vec::new(); n],
        asymmetric: spec.dataset.is_asymmetric(),
    };
    match spec.dataset {
        GraphDataset::ThreeD => {
            // Wrap-around cube; one weight per undirected edge.
            for x in 0..g {
                for y in 0..g {
                    for z in 0..g {
                        let u = (x * g + y) * g + z;
                        for (nx, ny, nz) in
                            [((x + 1) % g, y, z), (x, (y + 1) % g, z), (x, y, (z + 1) % g)]
                        {
                            let v = (nx * g + ny) * g + nz;
                            let w = quantized_weight(rng, spec.unit_weights);
                            oracle.push_edge(u, v, w);
                            oracle.push_edge(v, u, w);
                        }
                    }
                }
            }
        }
        GraphDataset::ThreeDD => {
            // Same cube but only the forward edge in each dimension.
            for x in 0..g {
                for y in 0..g {
                    for z in 0..g {
                        let u = (x * g + y) * g + z;
                        for (nx, ny, nz) in
                            [((x + 1) % g, y, z), (x, (y + 1) % g, z), (x, y, (z + 1) % g)]
                        {
                            let v = (nx * g + ny) * g + nz;
                            let w = quantized_weight(rng, spec.unit_weights);
                            oracle.push_edge(u, v, w);
                        }
                    }
                }
            }
        }
        GraphDataset::Taxi => {
            // Two objects on a g x g board; a move shifts one object one
            // step with no wrap.
            let id = |a: usize, b: usize, c: usize, d: usize| ((a * g + b) * g + c) * g + d;
            for a in 0..g {
                for b in 0..g {
                    for c in 0..g {
                        for d in 0..g {
                            let u = id(a, b, c, d);
                            if a + 1 < g {
                                let v = id(a + 1, b, c, d);
                                let w = quantized_weight(rng, spec.unit_weights);
                                oracle.push_edge(u, v, w);
                                oracle.push_edge(v, u, w);
                            }
                            if b + 1 < g {
                                let v = id(a, b + 1, c, d);
                                let w = quantized_weight(rng, spec.unit_weights);
                                oracle.push_edge(u, v, w);
                                oracle.push_edge(v, u, w);
                            }
                            if c + 1 < g {
                                let v = id(a, b, c + 1, d);
                                let w = quantized_weight(rng, spec.unit_weights);
                                oracle.push_edge(u, v, w);
                                oracle.push_edge(v, u, w);
                            }
                            if d + 1 < g {
                                let v = id(a, b, c, d + 1);
                                let w = quantized_weight(rng, spec.unit_weights);
                                oracle.push_edge(u, v, w);
                                oracle.push_edge(v, u, w);
                            }
                        }
                    }
                }
            }
        }
        GraphDataset::Traffic | GraphDataset::Octagon => {
            let diag = spec.dataset == GraphDataset::Octagon;
            let id = |x: usize, y: usize| x * g + y;
            let gi = g as isize;
            let mut steps: Vec<(isize, isize)> = vec![(1, 0), (0, 1)];
            if diag {
                steps.push((1, 1));
                steps.push((1, -1));
            }
            for x in 0..g {
                for y in 0..g {
                    for &(dx, dy) in &steps {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if nx < 0 || ny < 0 || nx >= gi || ny >= gi {
                            continue;
                        }
                        let u = id(x, y);
                        let v = id(nx as usize, ny as usize);
                        let mean = quantized_weight(rng, spec.unit_weights);
                        let wf = noisy_weight(rng, mean, spec.unit_weights);
                        let wr = noisy_weight(rng, mean, spec.unit_weights);
                        oracle.push_edge(u, v, wf);
                        oracle.push_edge(v, u, wr);
                    }
                }
            }
        }
    }
    oracle
}

/// The generated task: feature pairs with normalized path-length targets
/// plus the exact oracle.
pub struct GraphTask {
    pub train: LabeledPairSet,
    pub test: LabeledPairSet,
    pub oracle: GraphOracle,
    /// Node features before pairing (rows = nodes).
    pub features: Mat,
    /// Mean raw train distance used for normalization.
    pub mean_distance: f64,
}

pub fn gen_graph_task(spec: &GraphSpec) -> Result<GraphTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let oracle = build_graph(spec, &mut rng);
    let n = oracle.node_count();
    if spec.landmarks > n {
        return Err(NbdError::Config(format!("{} landmarks exceed {n} nodes", spec.landmarks)));
    }

    // Distinct landmark nodes.
    let mut landmarks: Vec<usize> = Vec::new();
    while landmarks.len() < spec.landmarks {
        let c = rng.gen_range(0..n);
        if !landmarks.contains(&c) {
            landmarks.push(c);
        }
    }

    // Landmark distance features; directional on asymmetric graphs.
    let per_landmark = if oracle.is_asymmetric() { 2 } else { 1 };
    let lm_dim = spec.landmarks * per_landmark;
    let mut feats = Mat::zeros(n, lm_dim + spec.distractors);
    for (li, &lm) in landmarks.iter().enumerate() {
        let from_lm = oracle.dijkstra(lm, false);
        for u in 0..n {
            if !from_lm[u].is_finite() {
                return Err(NbdError::Disconnected(lm, u));
            }
            feats[(u, li)] = from_lm[u];
        }
        if oracle.is_asymmetric() {
            let to_lm = oracle.dijkstra(lm, true);
            for u in 0..n {
                if !to_lm[u].is_finite() {
                    return Err(NbdError::Disconnected(u, lm));
                }
                feats[(u, spec.landmarks + li)] = to_lm[u];
            }
        }
    }
    // Standardize landmark columns, then add observation noise.
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for j in 0..lm_dim {
        let mean: f64 = (0..n).map(|u| feats[(u, j)]).sum::<f64>() / n as f64;
        let var: f64 = (0..n).map(|u| (feats[(u, j)] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-9);
        for u in 0..n {
            feats[(u, j)] = (feats[(u, j)] - mean) / std;
        }
    }
    for u in 0..n {
        for j in 0..lm_dim {
            feats[(u, j)] += normal.sample(&mut rng) * spec.noise_sigma;
        }
        for j in 0..spec.distractors {
            feats[(u, lm_dim + j)] = normal.sample(&mut rng);
        }
    }

    // Sample pairs and compute exact distances, caching one Dijkstra per
    // distinct source.
    let total = spec.train_pairs + spec.test_pairs;
    let pairs: Vec<(usize, usize)> = (0..total)
        .map(|_| loop {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u != v {
                break (u, v);
            }
        })
        .collect();
    let mut cache: std::collections::HashMap<usize, Vec<f64>> = std::collections::HashMap::new();
    let mut raw = Vec::with_capacity(total);
    for &(u, v) in &pairs {
        let dist = cache.entry(u).or_insert_with(|| oracle.dijkstra(u, false));
        let d = dist[v];
        if !d.is_finite() {
            return Err(NbdError::Disconnected(u, v));
        }
        raw.push(d);
    }
    let mean_distance =
        raw[..spec.train_pairs].iter().sum::<f64>() / spec.train_pairs as f64;

    let dim = feats.cols();
    let mut train = LabeledPairSet::new(dim);
    let mut test = LabeledPairSet::new(dim);
    for (i, &(u, v)) in pairs.iter().enumerate() {
        let rec = LabeledPair {
            a: feats.row(u).to_vec(),
            b: feats.row(v).to_vec(),
            target: raw[i] / mean_distance,
        };
        if i < spec.train_pairs {
            train.push(rec);
        } else {
            test.push(rec);
        }
    }
    Ok(GraphTask { train, test, oracle, features: feats, mean_distance })
}
