//! Side-information graphs.
//!
//! Vertices are indexed cache-major, `v = k·Δ + δ`: vertex `(k, δ)` is
//! subfile `δ` of the file requested by cache `k` (with `Δ = 1` the vertex
//! is simply cache `k`). Adjacency is a dense bit-matrix; loops are kept in
//! a separate bitset because the delivery algorithms treat them as "served
//! locally" rather than as edges.

use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rand::Rng;
use thiserror::Error;

use crate::model::{CacheNetworkConfig, DemandVector, Placement, RngSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("placement covers {placement} caches but configuration has K = {k}")]
    CacheCountMismatch { placement: usize, k: usize },
    #[error("demand vector has {demands} entries but configuration has K = {k}")]
    DemandCountMismatch { demands: usize, k: usize },
    #[error("placement item universe {placement} differs from N·Δ = {expected}")]
    UniverseMismatch { placement: usize, expected: usize },
    #[error("demand {file} outside library of {n} files")]
    DemandOutOfRange { file: usize, n: usize },
    #[error("independent-edge models are only defined for file caching (Δ = 1), got Δ = {0}")]
    SubfileModel(usize),
    #[error("vertex {vertex} out of range for {vertices} vertices")]
    VertexOutOfRange { vertex: usize, vertices: usize },
    #[error("self-edge on vertex {0}; loops are passed separately")]
    SelfEdge(usize),
}

/// `(cache, subfile)` coordinates of a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VertexMeta {
    pub cache: usize,
    pub subfile: usize,
}

/// Side-information digraph: `u → v` iff the cache of `u` stores the item
/// wanted at `v`; a loop iff a vertex's own cache stores its item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfoDigraph {
    delta: usize,
    loops: FixedBitSet,
    out: Vec<FixedBitSet>,
}

/// Undirected side-information graph: `{u, v}` iff both `u → v` and
/// `v → u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfoGraph {
    delta: usize,
    loops: FixedBitSet,
    adj: Vec<FixedBitSet>,
}

impl SideInfoDigraph {
    pub fn num_vertices(&self) -> usize {
        self.out.len()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn has_loop(&self, v: usize) -> bool {
        self.loops.contains(v)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from != to && self.out[from].contains(to)
    }

    pub fn out_neighbors(&self, v: usize) -> &FixedBitSet {
        &self.out[v]
    }

    pub fn vertex_meta(&self, v: usize) -> VertexMeta {
        meta(v, self.delta)
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|row| row.count_ones(..)).sum()
    }

    pub fn loop_count(&self) -> usize {
        self.loops.count_ones(..)
    }
}

impl SideInfoGraph {
    /// Graph for file caching from explicit loops and undirected edges.
    pub fn from_edges(
        vertices: usize,
        loops: &[usize],
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let check = |v: usize| {
            if v < vertices {
                Ok(())
            } else {
                Err(GraphError::VertexOutOfRange { vertex: v, vertices })
            }
        };
        let mut g = Self::empty(vertices, 1);
        for &v in loops {
            check(v)?;
            g.loops.insert(v);
        }
        for &(u, v) in edges {
            check(u)?;
            check(v)?;
            if u == v {
                return Err(GraphError::SelfEdge(u));
            }
            g.adj[u].insert(v);
            g.adj[v].insert(u);
        }
        Ok(g)
    }

    fn empty(vertices: usize, delta: usize) -> Self {
        Self {
            delta,
            loops: FixedBitSet::with_capacity(vertices),
            adj: vec![FixedBitSet::with_capacity(vertices); vertices],
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn has_loop(&self, v: usize) -> bool {
        self.loops.contains(v)
    }

    pub fn loops(&self) -> &FixedBitSet {
        &self.loops
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        u != v && self.adj[u].contains(v)
    }

    pub fn neighbors(&self, v: usize) -> &FixedBitSet {
        &self.adj[v]
    }

    pub fn vertex_meta(&self, v: usize) -> VertexMeta {
        meta(v, self.delta)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|row| row.count_ones(..)).sum::<usize>() / 2
    }

    pub fn loop_count(&self) -> usize {
        self.loops.count_ones(..)
    }

    pub fn unlooped(&self) -> impl Iterator<Item = usize> + '_ {
        self.loops.zeroes()
    }

    /// Whether every pair in `vertices` is adjacent.
    pub fn is_clique(&self, vertices: &[usize]) -> bool {
        vertices
            .iter()
            .enumerate()
            .all(|(i, &u)| vertices[i + 1..].iter().all(|&v| self.is_adjacent(u, v)))
    }

    /// Debug dump, one line per vertex: `v loop:{0|1} neighbors:a,b,...`.
    /// Not a stable format.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for v in 0..self.num_vertices() {
            let neighbors: Vec<String> = self.adj[v].ones().map(|u| u.to_string()).collect();
            let _ = writeln!(
                out,
                "{v} loop:{} neighbors:{}",
                self.has_loop(v) as u8,
                neighbors.join(",")
            );
        }
        out
    }

    /// Inverse of [`SideInfoGraph::to_adjacency_text`] (file caching only).
    pub fn from_adjacency_text(text: &str) -> Option<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut g = Self::empty(lines.len(), 1);
        for (expected, line) in lines.iter().enumerate() {
            let mut parts = line.split_whitespace();
            let v: usize = parts.next()?.parse().ok()?;
            if v != expected {
                return None;
            }
            match parts.next()?.strip_prefix("loop:")? {
                "1" => g.loops.insert(v),
                "0" => {}
                _ => return None,
            }
            let list = parts.next()?.strip_prefix("neighbors:")?;
            for u in list.split(',').filter(|s| !s.is_empty()) {
                let u: usize = u.parse().ok()?;
                if u >= lines.len() || u == v {
                    return None;
                }
                g.adj[v].insert(u);
            }
        }
        let symmetric = (0..g.num_vertices()).all(|v| g.adj[v].ones().all(|u| g.adj[u].contains(v)));
        symmetric.then_some(g)
    }
}

fn meta(v: usize, delta: usize) -> VertexMeta {
    VertexMeta {
        cache: v / delta,
        subfile: v % delta,
    }
}

/// Item wanted at vertex `v`: subfile `δ` of the file requested by cache `k`.
pub(crate) fn demanded_item(d: &DemandVector, delta: usize, v: usize) -> usize {
    d.file(v / delta) * delta + v % delta
}

/// Exact side-information digraph of a placement and demand vector.
pub fn build_digraph(
    p: &Placement,
    d: &DemandVector,
    cfg: &CacheNetworkConfig,
) -> Result<SideInfoDigraph, GraphError> {
    let k = cfg.k();
    if p.num_caches() != k {
        return Err(GraphError::CacheCountMismatch {
            placement: p.num_caches(),
            k,
        });
    }
    if d.len() != k {
        return Err(GraphError::DemandCountMismatch { demands: d.len(), k });
    }
    if p.item_universe_size() != cfg.item_universe() {
        return Err(GraphError::UniverseMismatch {
            placement: p.item_universe_size(),
            expected: cfg.item_universe(),
        });
    }
    if let Some(&f) = d.files().iter().find(|&&f| f as usize >= cfg.n()) {
        return Err(GraphError::DemandOutOfRange {
            file: f as usize,
            n: cfg.n(),
        });
    }

    let delta = cfg.delta();
    let vertices = cfg.num_vertices();
    let mut loops = FixedBitSet::with_capacity(vertices);
    let mut out = vec![FixedBitSet::with_capacity(vertices); vertices];
    for v in 0..vertices {
        let item = demanded_item(d, delta, v);
        let owner = v / delta;
        if p.stores(owner, item) {
            loops.insert(v);
        }
        // Cache l holding the item yields Δ parallel edges (l, θ) → v.
        for l in (0..k).filter(|&l| l != owner && p.stores(l, item)) {
            out[l * delta..(l + 1) * delta].iter_mut().for_each(|row| row.insert(v));
        }
    }
    Ok(SideInfoDigraph { delta, loops, out })
}

/// Keeps the bidirectional edges of `dg`; loops are copied.
pub fn build_graph(dg: &SideInfoDigraph) -> SideInfoGraph {
    let vertices = dg.num_vertices();
    let mut adj = vec![FixedBitSet::with_capacity(vertices); vertices];
    for u in 0..vertices {
        for v in dg.out[u].ones().filter(|&v| v > u) {
            if dg.out[v].contains(u) {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
    }
    SideInfoGraph {
        delta: dg.delta,
        loops: dg.loops.clone(),
        adj,
    }
}

fn require_file_caching(cfg: &CacheNetworkConfig) -> Result<(), GraphError> {
    if cfg.delta() == 1 {
        Ok(())
    } else {
        Err(GraphError::SubfileModel(cfg.delta()))
    }
}

/// Independent-edge digraph model: each of the `K²` edge/loop indicators is
/// Bernoulli(q).
pub fn generate_da(cfg: &CacheNetworkConfig, rng: RngSpec) -> Result<SideInfoDigraph, GraphError> {
    require_file_caching(cfg)?;
    let q = cfg.q_f64();
    let k = cfg.k();
    let mut rng = rng.rng();
    let mut loops = FixedBitSet::with_capacity(k);
    let mut out = vec![FixedBitSet::with_capacity(k); k];
    for (u, row) in out.iter_mut().enumerate() {
        for v in 0..k {
            let present = rng.random_bool(q);
            if !present {
                continue;
            }
            if u == v {
                loops.insert(u);
            } else {
                row.insert(v);
            }
        }
    }
    Ok(SideInfoDigraph {
        delta: 1,
        loops,
        out,
    })
}

/// Independent-edge graph model: edges Bernoulli(q²), loops Bernoulli(q).
pub fn generate_ga(cfg: &CacheNetworkConfig, rng: RngSpec) -> Result<SideInfoGraph, GraphError> {
    require_file_caching(cfg)?;
    let q = cfg.q_f64();
    let q2 = q * q;
    let k = cfg.k();
    let mut rng = rng.rng();
    let mut g = SideInfoGraph::empty(k, 1);
    for u in 0..k {
        if rng.random_bool(q) {
            g.loops.insert(u);
        }
        for v in u + 1..k {
            if rng.random_bool(q2) {
                g.adj[u].insert(v);
                g.adj[v].insert(u);
            }
        }
    }
    Ok(g)
}
