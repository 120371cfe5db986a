//! Delivery: greedy clique cover and online matching on a side-information
//! graph, plus rate accounting and decodability checks.
//!
//! Vertices arrive in label order `0, 1, …, V−1`. Looped vertices are served
//! from their own cache and never appear in a message. Every message is the
//! XOR of the items wanted by the vertices of one clique.

use fixedbitset::FixedBitSet;
use num_rational::Ratio;
use rand::seq::IndexedRandom;
use thiserror::Error;

use crate::graphs::{demanded_item, SideInfoGraph};
use crate::model::{CacheNetworkConfig, DemandVector, Placement, RngSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeliveryError {
    #[error("delivery covers {result} vertices but configuration has K·Δ = {expected}")]
    VertexCountMismatch { result: usize, expected: usize },
    #[error("placement covers {placement} caches, demand vector {demands}, configuration K = {k}")]
    InstanceMismatch {
        placement: usize,
        demands: usize,
        k: usize,
    },
    #[error("message {message} contains vertex {vertex} out of range")]
    VertexOutOfRange { message: usize, vertex: usize },
    #[error("message {message} is not a clique")]
    NotAClique { message: usize },
    #[error("message {message} is empty")]
    EmptyMessage { message: usize },
    #[error("vertex {0} appears in more than one message")]
    Overlap(usize),
    #[error("looped vertex {0} appears in a message")]
    LoopedCovered(usize),
    #[error("unlooped vertex {0} is not served")]
    Uncovered(usize),
}

/// Output of one delivery round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryResult {
    messages: Vec<Vec<usize>>,
    num_vertices: usize,
    delta: usize,
    histogram: Vec<u64>,
    covered: FixedBitSet,
    skipped_looped: Vec<usize>,
}

impl DeliveryResult {
    pub fn new(
        messages: Vec<Vec<usize>>,
        num_vertices: usize,
        delta: usize,
        skipped_looped: Vec<usize>,
    ) -> Self {
        let mut histogram = vec![0u64; num_vertices + 1];
        let mut covered = FixedBitSet::with_capacity(num_vertices);
        for msg in &messages {
            if msg.len() <= num_vertices {
                histogram[msg.len()] += 1;
            }
            for &v in msg.iter().filter(|&&v| v < num_vertices) {
                covered.insert(v);
            }
        }
        Self {
            messages,
            num_vertices,
            delta,
            histogram,
            covered,
            skipped_looped,
        }
    }

    /// Transmissions, each the vertex set XOR-ed into one message.
    pub fn messages(&self) -> &[Vec<usize>] {
        &self.messages
    }

    pub fn num_messages(&self) -> usize {
        self.messages.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Rate in file units: messages / Δ.
    pub fn rate_files(&self) -> Ratio<u64> {
        Ratio::new(self.messages.len() as u64, self.delta as u64)
    }

    pub fn rate_f64(&self) -> f64 {
        self.messages.len() as f64 / self.delta as f64
    }

    /// `histogram[s]` counts messages of clique size `s`; index 0 is unused.
    pub fn clique_histogram(&self) -> &[u64] {
        &self.histogram
    }

    pub fn max_clique(&self) -> usize {
        self.messages.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn covered(&self) -> &FixedBitSet {
        &self.covered
    }

    pub fn skipped_looped(&self) -> &[usize] {
        &self.skipped_looped
    }

    /// Checks that messages are disjoint cliques of `g` covering exactly its
    /// unlooped vertices.
    pub fn validate_cover(&self, g: &SideInfoGraph) -> Result<(), DeliveryError> {
        if g.num_vertices() != self.num_vertices {
            return Err(DeliveryError::VertexCountMismatch {
                result: self.num_vertices,
                expected: g.num_vertices(),
            });
        }
        let mut seen = FixedBitSet::with_capacity(self.num_vertices);
        for (i, msg) in self.messages.iter().enumerate() {
            if msg.is_empty() {
                return Err(DeliveryError::EmptyMessage { message: i });
            }
            for &v in msg {
                if v >= self.num_vertices {
                    return Err(DeliveryError::VertexOutOfRange { message: i, vertex: v });
                }
                if seen.put(v) {
                    return Err(DeliveryError::Overlap(v));
                }
                if g.has_loop(v) {
                    return Err(DeliveryError::LoopedCovered(v));
                }
            }
            if !g.is_clique(msg) {
                return Err(DeliveryError::NotAClique { message: i });
            }
        }
        match g.unlooped().find(|&v| !seen.contains(v)) {
            Some(v) => Err(DeliveryError::Uncovered(v)),
            None => Ok(()),
        }
    }
}

/// Greedy clique cover.
///
/// Each arriving unlooped vertex joins one of the largest previously formed
/// cliques whose members are all adjacent to it (ties broken uniformly at
/// random), or opens a new singleton clique when none is suitable.
pub fn clique_cover_deliver(g: &SideInfoGraph, rng: RngSpec) -> DeliveryResult {
    let vertices = g.num_vertices();
    let mut rng = rng.rng();
    let mut members: Vec<FixedBitSet> = Vec::new();
    let mut lists: Vec<Vec<usize>> = Vec::new();
    // by_size[s] holds ids of cliques currently of size s.
    let mut by_size: Vec<Vec<usize>> = vec![Vec::new(); vertices + 2];
    let mut skipped = Vec::new();
    let mut suitable = Vec::new();

    for v in 0..vertices {
        if g.has_loop(v) {
            skipped.push(v);
            continue;
        }
        let neighbors = g.neighbors(v);
        let degree = neighbors.count_ones(..);
        suitable.clear();
        let mut size = degree.min(vertices);
        while size >= 1 {
            suitable.extend(
                by_size[size]
                    .iter()
                    .copied()
                    .filter(|&id| members[id].is_subset(neighbors)),
            );
            if !suitable.is_empty() {
                break;
            }
            size -= 1;
        }
        match suitable.choose(&mut rng) {
            Some(&id) => {
                let slot = by_size[size].iter().position(|&c| c == id).unwrap();
                by_size[size].remove(slot);
                by_size[size + 1].push(id);
                members[id].insert(v);
                lists[id].push(v);
            }
            None => {
                let mut set = FixedBitSet::with_capacity(vertices);
                set.insert(v);
                by_size[1].push(members.len());
                members.push(set);
                lists.push(vec![v]);
            }
        }
    }
    DeliveryResult::new(lists, vertices, g.delta(), skipped)
}

/// Online greedy matching.
///
/// An arriving unlooped vertex is paired with a uniformly random unmatched,
/// unlooped, previously arrived neighbour if one exists; vertices still
/// unmatched at the end are sent uncoded.
pub fn matching_deliver(g: &SideInfoGraph, rng: RngSpec) -> DeliveryResult {
    let vertices = g.num_vertices();
    let mut rng = rng.rng();
    let mut waiting = FixedBitSet::with_capacity(vertices);
    let mut messages = Vec::new();
    let mut skipped = Vec::new();
    let mut candidates = Vec::new();

    for v in 0..vertices {
        if g.has_loop(v) {
            skipped.push(v);
            continue;
        }
        candidates.clear();
        candidates.extend(g.neighbors(v).intersection(&waiting));
        match candidates.choose(&mut rng) {
            Some(&s) => {
                waiting.set(s, false);
                messages.push(vec![s, v]);
            }
            None => waiting.insert(v),
        }
    }
    messages.extend(waiting.ones().map(|v| vec![v]));
    DeliveryResult::new(messages, vertices, g.delta(), skipped)
}

/// Whether every served cache can decode its item from its message.
///
/// For every message and every vertex in it, the vertex's cache must store
/// the items of all other vertices in the message (so XOR-ing them out
/// leaves its own item). Also requires every unlooped vertex to be served
/// exactly once and no looped vertex to be served.
pub fn verify_decodability(
    res: &DeliveryResult,
    p: &Placement,
    d: &DemandVector,
    cfg: &CacheNetworkConfig,
) -> Result<bool, DeliveryError> {
    let k = cfg.k();
    if p.num_caches() != k || d.len() != k || p.item_universe_size() != cfg.item_universe() {
        return Err(DeliveryError::InstanceMismatch {
            placement: p.num_caches(),
            demands: d.len(),
            k,
        });
    }
    if res.num_vertices != cfg.num_vertices() || res.delta != cfg.delta() {
        return Err(DeliveryError::VertexCountMismatch {
            result: res.num_vertices,
            expected: cfg.num_vertices(),
        });
    }
    let delta = cfg.delta();
    let mut served = vec![0u32; res.num_vertices];
    for (i, msg) in res.messages.iter().enumerate() {
        for &v in msg {
            if v >= res.num_vertices {
                return Err(DeliveryError::VertexOutOfRange { message: i, vertex: v });
            }
            served[v] += 1;
        }
        for &v in msg {
            let cache = v / delta;
            let decodable = msg
                .iter()
                .filter(|&&u| u != v)
                .all(|&u| p.stores(cache, demanded_item(d, delta, u)));
            if !decodable {
                return Ok(false);
            }
        }
    }
    let all_served = (0..res.num_vertices).all(|v| {
        let looped = p.stores(v / delta, demanded_item(d, delta, v));
        served[v] == if looped { 0 } else { 1 }
    });
    Ok(all_served)
}

/// Fraction of vertices covered by cliques of size at least 3.
pub fn large_clique_coverage(res: &DeliveryResult) -> Ratio<u64> {
    if res.num_vertices == 0 {
        return Ratio::from_integer(0);
    }
    let covered: u64 = res
        .histogram
        .iter()
        .enumerate()
        .skip(3)
        .map(|(s, &count)| s as u64 * count)
        .sum();
    Ratio::new(covered, res.num_vertices as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_digraph, build_graph, generate_ga};
    use crate::model::{draw_demands, place};

    fn seeded() -> RngSpec {
        RngSpec::new(42, 0)
    }

    #[test]
    fn all_looped_sends_nothing() {
        let g = SideInfoGraph::from_edges(4, &[0, 1, 2, 3], &[(0, 1)]).unwrap();
        for res in [clique_cover_deliver(&g, seeded()), matching_deliver(&g, seeded())] {
            assert_eq!(res.num_messages(), 0);
            assert_eq!(res.rate_files(), Ratio::from_integer(0));
            assert_eq!(res.skipped_looped(), &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn edgeless_graph_sends_singletons() {
        let g = SideInfoGraph::from_edges(5, &[], &[]).unwrap();
        for res in [clique_cover_deliver(&g, seeded()), matching_deliver(&g, seeded())] {
            assert_eq!(res.num_messages(), 5);
            assert_eq!(res.rate_files(), Ratio::from_integer(5));
            assert_eq!(res.clique_histogram()[1], 5);
        }
    }

    #[test]
    fn clique_cover_hand_trace() {
        // Labels 1..4 of the worked example map to vertices 0..3.
        let g = SideInfoGraph::from_edges(4, &[], &[(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap();
        let res = clique_cover_deliver(&g, seeded());
        assert_eq!(res.messages(), &[vec![0, 1, 2], vec![3]]);
        assert_eq!(res.rate_files(), Ratio::from_integer(2));
        res.validate_cover(&g).unwrap();
    }

    #[test]
    fn clique_cover_prefers_largest_suitable() {
        // 0-1 form a pair, 2 is alone; 3 is adjacent to all of them.
        let g = SideInfoGraph::from_edges(4, &[], &[(0, 1), (0, 3), (1, 3), (2, 3)]).unwrap();
        for s in 0..20 {
            let res = clique_cover_deliver(&g, RngSpec::new(s, 0));
            assert_eq!(res.messages(), &[vec![0, 1, 3], vec![2]]);
        }
    }

    #[test]
    fn clique_cover_breaks_ties_uniformly() {
        // Vertex 2 sees two singleton cliques {0}, {1}.
        let g = SideInfoGraph::from_edges(3, &[], &[(0, 2), (1, 2)]).unwrap();
        let trials = 4000;
        let joined_first = (0..trials)
            .filter(|&s| clique_cover_deliver(&g, RngSpec::new(s, 0)).messages()[0] == [0, 2])
            .count();
        let sd = (trials as f64 * 0.25).sqrt();
        assert!((joined_first as f64 - trials as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn matching_complete_graph() {
        let edges: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let g = SideInfoGraph::from_edges(4, &[], &edges).unwrap();
        let res = matching_deliver(&g, seeded());
        assert_eq!(res.num_messages(), 2);
        assert_eq!(res.clique_histogram()[2], 2);
        res.validate_cover(&g).unwrap();
    }

    #[test]
    fn matching_path_hand_trace() {
        let g = SideInfoGraph::from_edges(3, &[], &[(0, 1), (1, 2)]).unwrap();
        let res = matching_deliver(&g, seeded());
        assert_eq!(res.messages(), &[vec![0, 1], vec![2]]);
        assert_eq!(res.rate_files(), Ratio::from_integer(2));
    }

    #[test]
    fn matching_ignores_looped_neighbors() {
        let g = SideInfoGraph::from_edges(3, &[1], &[(0, 1), (1, 2)]).unwrap();
        let res = matching_deliver(&g, seeded());
        assert_eq!(res.messages(), &[vec![0], vec![2]]);
    }

    #[test]
    fn coverage_examples() {
        let singles = DeliveryResult::new(vec![vec![0], vec![1]], 2, 1, vec![]);
        assert_eq!(large_clique_coverage(&singles), Ratio::from_integer(0));
        let triple = DeliveryResult::new(vec![vec![0, 1, 2]], 3, 1, vec![]);
        assert_eq!(large_clique_coverage(&triple), Ratio::from_integer(1));
        let mixed = DeliveryResult::new(
            vec![vec![0], vec![1], vec![2, 3], vec![4, 5, 6, 7]],
            8,
            1,
            vec![],
        );
        assert_eq!(mixed.clique_histogram()[1..5], [2, 1, 0, 1]);
        assert_eq!(large_clique_coverage(&mixed), Ratio::new(1, 2));
    }

    #[test]
    fn subfile_rate_divides_by_delta() {
        let res = DeliveryResult::new(vec![vec![0], vec![1, 2], vec![3]], 4, 2, vec![]);
        assert_eq!(res.rate_files(), Ratio::new(3, 2));
        assert_eq!(res.rate_f64(), 1.5);
    }

    #[test]
    fn validate_cover_detects_defects() {
        let g = SideInfoGraph::from_edges(3, &[2], &[(0, 1)]).unwrap();
        let ok = DeliveryResult::new(vec![vec![0, 1]], 3, 1, vec![2]);
        ok.validate_cover(&g).unwrap();
        let overlap = DeliveryResult::new(vec![vec![0, 1], vec![1]], 3, 1, vec![]);
        assert_eq!(overlap.validate_cover(&g), Err(DeliveryError::Overlap(1)));
        let missing = DeliveryResult::new(vec![vec![0]], 3, 1, vec![]);
        assert_eq!(missing.validate_cover(&g), Err(DeliveryError::Uncovered(1)));
        let looped = DeliveryResult::new(vec![vec![0, 1], vec![2]], 3, 1, vec![]);
        assert_eq!(looped.validate_cover(&g), Err(DeliveryError::LoopedCovered(2)));
        let g2 = SideInfoGraph::from_edges(3, &[], &[(0, 1)]).unwrap();
        let bad = DeliveryResult::new(vec![vec![0, 1, 2]], 3, 1, vec![]);
        assert_eq!(bad.validate_cover(&g2), Err(DeliveryError::NotAClique { message: 0 }));
    }

    #[test]
    fn decodability_and_mutation() {
        let cfg = CacheNetworkConfig::files(3, 6, 2).unwrap();
        // Caches 0,1,2 want files 0,1,2; each holds the other two.
        let p = Placement::from_sets(&cfg, &[vec![1, 2], vec![0, 2], vec![0, 1]]).unwrap();
        let d = DemandVector::new(vec![0, 1, 2], &cfg).unwrap();
        let g = build_graph(&build_digraph(&p, &d, &cfg).unwrap());
        let res = clique_cover_deliver(&g, seeded());
        assert_eq!(res.messages(), &[vec![0, 1, 2]]);
        assert!(verify_decodability(&res, &p, &d, &cfg).unwrap());

        // Cache 2 loses file 1 (replaced by an undemanded file).
        let broken = Placement::from_sets(&cfg, &[vec![1, 2], vec![0, 2], vec![0, 5]]).unwrap();
        assert!(!verify_decodability(&res, &broken, &d, &cfg).unwrap());
    }

    #[test]
    fn decodability_requires_full_service() {
        let cfg = CacheNetworkConfig::files(2, 4, 1).unwrap();
        let p = Placement::from_sets(&cfg, &[vec![3], vec![3]]).unwrap();
        let d = DemandVector::new(vec![0, 1], &cfg).unwrap();
        let partial = DeliveryResult::new(vec![vec![0]], 2, 1, vec![]);
        assert!(!verify_decodability(&partial, &p, &d, &cfg).unwrap());
        let other = CacheNetworkConfig::files(3, 4, 1).unwrap();
        assert!(verify_decodability(&partial, &p, &d, &other).is_err());
    }

    #[test]
    fn exact_instances_decode() {
        let cfg = CacheNetworkConfig::new(10, 30, 9, 2).unwrap();
        for t in 0..100 {
            let s = RngSpec::new(5, t);
            let p = place(&cfg, s.child(RngSpec::PLACEMENT));
            let d = draw_demands(&cfg, s.child(RngSpec::DEMANDS));
            let g = build_graph(&build_digraph(&p, &d, &cfg).unwrap());
            let cc = clique_cover_deliver(&g, s.child(RngSpec::DELIVERY));
            cc.validate_cover(&g).unwrap();
            assert!(verify_decodability(&cc, &p, &d, &cfg).unwrap());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = CacheNetworkConfig::files(40, 100, 40).unwrap();
        let g = generate_ga(&cfg, RngSpec::new(3, 3)).unwrap();
        assert_eq!(clique_cover_deliver(&g, seeded()), clique_cover_deliver(&g, seeded()));
        assert_eq!(matching_deliver(&g, seeded()), matching_deliver(&g, seeded()));
    }
}
