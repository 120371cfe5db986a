//! Problem instances, demand generation, placement and the shared
//! randomness contract.

use std::collections::HashSet;

use fixedbitset::FixedBitSet;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("number of caches K must be at least 1")]
    NoCaches,
    #[error("library size N must be at least 1")]
    EmptyLibrary,
    #[error("cache capacity M = {m} exceeds library size N = {n}")]
    CapacityExceedsLibrary { m: usize, n: usize },
    #[error("subfiles per file must be at least 1")]
    NoSubfiles,
    #[error("item universe N·Δ = {0} does not fit in 32-bit item indices")]
    UniverseTooLarge(usize),
    #[error("expected one entry per cache ({expected}), got {got}")]
    WrongLength { got: usize, expected: usize },
    #[error("placement cache {cache} stores {got} items, expected {expected}")]
    WrongCacheLoad {
        cache: usize,
        got: usize,
        expected: usize,
    },
    #[error("placement item {item} outside universe of {universe}")]
    ItemOutOfRange { item: usize, universe: usize },
    #[error("demand {file} outside library of {n} files")]
    DemandOutOfRange { file: usize, n: usize },
}

/// The `(K, N, M, Δ)` problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheNetworkConfig {
    k: usize,
    n: usize,
    m: usize,
    delta: usize,
}

impl CacheNetworkConfig {
    pub fn new(k: usize, n: usize, m: usize, delta: usize) -> Result<Self, ConfigError> {
        if k == 0 {
            return Err(ConfigError::NoCaches);
        }
        if n == 0 {
            return Err(ConfigError::EmptyLibrary);
        }
        if m > n {
            return Err(ConfigError::CapacityExceedsLibrary { m, n });
        }
        if delta == 0 {
            return Err(ConfigError::NoSubfiles);
        }
        let universe = n.saturating_mul(delta);
        if universe > u32::MAX as usize {
            return Err(ConfigError::UniverseTooLarge(universe));
        }
        Ok(Self { k, n, m, delta })
    }

    /// File caching (`Δ = 1`).
    pub fn files(k: usize, n: usize, m: usize) -> Result<Self, ConfigError> {
        Self::new(k, n, m, 1)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    /// Exact caching probability `M/N`.
    pub fn q(&self) -> Ratio<u64> {
        Ratio::new(self.m as u64, self.n as u64)
    }

    pub fn q_f64(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Number of (sub)file items in the library, `N·Δ`.
    pub fn item_universe(&self) -> usize {
        self.n * self.delta
    }

    /// Items stored per cache, `M·Δ`.
    pub fn items_per_cache(&self) -> usize {
        self.m * self.delta
    }

    /// Vertices of the side-information graphs, `K·Δ`.
    pub fn num_vertices(&self) -> usize {
        self.k * self.delta
    }

    pub fn with_k(&self, k: usize) -> Result<Self, ConfigError> {
        Self::new(k, self.n, self.m, self.delta)
    }

    pub fn with_m(&self, m: usize) -> Result<Self, ConfigError> {
        Self::new(self.k, self.n, m, self.delta)
    }

    pub fn with_delta(&self, delta: usize) -> Result<Self, ConfigError> {
        Self::new(self.k, self.n, self.m, delta)
    }
}

/// Seed for one reproducible random stream.
///
/// A stream is a ChaCha8 generator keyed by `master_seed` and positioned on
/// the 64-bit ChaCha stream `stream_id`. Sub-streams for the independent
/// components of a trial come from [`RngSpec::child`], which hashes the
/// parent stream id together with a component label through SplitMix64.
/// Nothing depends on thread scheduling, so serial and parallel runs draw
/// identical values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub const PLACEMENT: u64 = 1;
    pub const DEMANDS: u64 = 2;
    pub const GRAPH: u64 = 3;
    pub const DELIVERY: u64 = 4;

    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Independent sub-stream for the component `label`.
    pub fn child(&self, label: u64) -> Self {
        let mixed = splitmix64(splitmix64(self.stream_id) ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03));
        Self {
            master_seed: self.master_seed,
            stream_id: mixed,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One requested file index per cache.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DemandVector(Vec<u32>);

impl DemandVector {
    pub fn new(files: Vec<u32>, cfg: &CacheNetworkConfig) -> Result<Self, ConfigError> {
        if files.len() != cfg.k() {
            return Err(ConfigError::WrongLength {
                got: files.len(),
                expected: cfg.k(),
            });
        }
        if let Some(&f) = files.iter().find(|&&f| f as usize >= cfg.n()) {
            return Err(ConfigError::DemandOutOfRange {
                file: f as usize,
                n: cfg.n(),
            });
        }
        Ok(Self(files))
    }

    pub fn files(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn file(&self, cache: usize) -> usize {
        self.0[cache] as usize
    }
}

/// `K` independent uniform draws over `[0, N)`.
pub fn draw_demands(cfg: &CacheNetworkConfig, rng: RngSpec) -> DemandVector {
    let mut rng = rng.rng();
    let n = cfg.n() as u32;
    DemandVector((0..cfg.k()).map(|_| rng.random_range(0..n)).collect())
}

/// Number of distinct files requested, `N_e(d)`.
pub fn distinct_count(d: &DemandVector) -> usize {
    d.0.iter().collect::<HashSet<_>>().len()
}

/// Per-cache stored item sets. An item is a file when `Δ = 1` and subfile
/// `δ` of file `f` (item index `f·Δ + δ`) otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    stored: Vec<FixedBitSet>,
    universe: usize,
    capacity: usize,
}

impl Placement {
    /// Builds a placement from explicit item lists; every cache must hold
    /// exactly `M·Δ` distinct items.
    pub fn from_sets(cfg: &CacheNetworkConfig, sets: &[Vec<usize>]) -> Result<Self, ConfigError> {
        if sets.len() != cfg.k() {
            return Err(ConfigError::WrongLength {
                got: sets.len(),
                expected: cfg.k(),
            });
        }
        let universe = cfg.item_universe();
        let capacity = cfg.items_per_cache();
        let mut stored = Vec::with_capacity(sets.len());
        for (cache, items) in sets.iter().enumerate() {
            let mut bits = FixedBitSet::with_capacity(universe);
            for &item in items {
                if item >= universe {
                    return Err(ConfigError::ItemOutOfRange { item, universe });
                }
                bits.insert(item);
            }
            if bits.count_ones(..) != capacity {
                return Err(ConfigError::WrongCacheLoad {
                    cache,
                    got: bits.count_ones(..),
                    expected: capacity,
                });
            }
            stored.push(bits);
        }
        Ok(Self {
            stored,
            universe,
            capacity,
        })
    }

    pub fn num_caches(&self) -> usize {
        self.stored.len()
    }

    pub fn item_universe_size(&self) -> usize {
        self.universe
    }

    pub fn per_cache_capacity(&self) -> usize {
        self.capacity
    }

    pub fn stores(&self, cache: usize, item: usize) -> bool {
        self.stored[cache].contains(item)
    }

    pub fn stored(&self, cache: usize) -> &FixedBitSet {
        &self.stored[cache]
    }

    pub fn items(&self, cache: usize) -> impl Iterator<Item = usize> + '_ {
        self.stored[cache].ones()
    }
}

/// Each cache independently stores a uniformly random `(M·Δ)`-subset of the
/// `N·Δ` items (partial Fisher-Yates).
pub fn place(cfg: &CacheNetworkConfig, rng: RngSpec) -> Placement {
    let mut rng = rng.rng();
    let universe = cfg.item_universe();
    let capacity = cfg.items_per_cache();
    let mut pool: Vec<u32> = (0..universe as u32).collect();
    let stored = (0..cfg.k())
        .map(|_| {
            let mut bits = FixedBitSet::with_capacity(universe);
            if capacity == universe {
                bits.insert_range(..);
            } else if capacity > 0 {
                let (chosen, _) = pool.partial_shuffle(&mut rng, capacity);
                for &item in chosen.iter() {
                    bits.insert(item as usize);
                }
            }
            bits
        })
        .collect();
    Placement {
        stored,
        universe,
        capacity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_within_3sigma(hits: u64, trials: u64, p: f64) -> bool {
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        (hits as f64 - mean).abs() <= 3.0 * sd
    }

    #[test]
    fn config_rejects_invalid() {
        assert_eq!(CacheNetworkConfig::new(0, 10, 1, 1), Err(ConfigError::NoCaches));
        assert_eq!(CacheNetworkConfig::new(1, 0, 0, 1), Err(ConfigError::EmptyLibrary));
        assert!(matches!(
            CacheNetworkConfig::new(2, 3, 4, 1),
            Err(ConfigError::CapacityExceedsLibrary { .. })
        ));
        assert_eq!(CacheNetworkConfig::new(2, 3, 1, 0), Err(ConfigError::NoSubfiles));
    }

    #[test]
    fn q_is_exact_rational() {
        let cfg = CacheNetworkConfig::files(5, 1000, 300).unwrap();
        assert_eq!(cfg.q(), Ratio::new(3, 10));
        assert_eq!(cfg.q_f64(), 0.3);
    }

    #[test]
    fn single_file_forces_demands() {
        let cfg = CacheNetworkConfig::files(3, 1, 0).unwrap();
        let d = draw_demands(&cfg, RngSpec::new(9, 0));
        assert_eq!(d.files(), &[0, 0, 0]);
    }

    #[test]
    fn demand_frequency_matches_uniform() {
        let cfg = CacheNetworkConfig::files(4, 2, 1).unwrap();
        let vectors = 100_000u64;
        let mut zeros = 0u64;
        for t in 0..vectors {
            let d = draw_demands(&cfg, RngSpec::new(11, t));
            zeros += d.files().iter().filter(|&&f| f == 0).count() as u64;
        }
        assert!(binomial_within_3sigma(zeros, vectors * 4, 0.5), "zeros = {zeros}");
    }

    #[test]
    fn distinct_count_examples() {
        let cfg3 = CacheNetworkConfig::files(3, 10, 0).unwrap();
        let cfg4 = CacheNetworkConfig::files(4, 10, 0).unwrap();
        assert_eq!(distinct_count(&DemandVector::new(vec![0, 0, 0], &cfg3).unwrap()), 1);
        assert_eq!(distinct_count(&DemandVector::new(vec![0, 1, 2], &cfg3).unwrap()), 3);
        assert_eq!(distinct_count(&DemandVector::new(vec![5, 2, 5, 9], &cfg4).unwrap()), 3);
    }

    #[test]
    fn demand_vector_validates() {
        let cfg = CacheNetworkConfig::files(2, 3, 0).unwrap();
        assert!(DemandVector::new(vec![0], &cfg).is_err());
        assert!(matches!(
            DemandVector::new(vec![0, 3], &cfg),
            Err(ConfigError::DemandOutOfRange { file: 3, n: 3 })
        ));
    }

    #[test]
    fn full_and_empty_caches() {
        let full = CacheNetworkConfig::new(3, 7, 7, 2).unwrap();
        let p = place(&full, RngSpec::new(1, 0));
        for k in 0..3 {
            assert_eq!(p.items(k).count(), 14);
        }
        let empty = CacheNetworkConfig::new(3, 7, 0, 2).unwrap();
        let p = place(&empty, RngSpec::new(1, 0));
        for k in 0..3 {
            assert_eq!(p.items(k).count(), 0);
        }
    }

    #[test]
    fn placement_marginal_is_q() {
        let cfg = CacheNetworkConfig::files(2, 10, 3).unwrap();
        let trials = 100_000u64;
        let mut hits = 0u64;
        for t in 0..trials {
            let p = place(&cfg, RngSpec::new(5, t));
            assert_eq!(p.items(0).count(), 3);
            assert_eq!(p.items(1).count(), 3);
            hits += p.stores(0, 0) as u64;
        }
        assert!(binomial_within_3sigma(hits, trials, 0.3), "hits = {hits}");
    }

    #[test]
    fn caches_store_independently() {
        // P(file 0 in both caches) = q² when caches are independent.
        let cfg = CacheNetworkConfig::files(2, 10, 3).unwrap();
        let trials = 100_000u64;
        let both: u64 = (0..trials)
            .map(|t| {
                let p = place(&cfg, RngSpec::new(6, t));
                (p.stores(0, 0) && p.stores(1, 0)) as u64
            })
            .sum();
        assert!(binomial_within_3sigma(both, trials, 0.09), "both = {both}");
    }

    #[test]
    fn same_spec_same_draws() {
        let cfg = CacheNetworkConfig::new(6, 40, 9, 3).unwrap();
        let spec = RngSpec::new(77, 3);
        assert_eq!(place(&cfg, spec), place(&cfg, spec));
        assert_eq!(draw_demands(&cfg, spec), draw_demands(&cfg, spec));
        assert_ne!(spec.child(RngSpec::PLACEMENT), spec.child(RngSpec::DEMANDS));
    }

    #[test]
    fn from_sets_checks_capacity() {
        let cfg = CacheNetworkConfig::files(2, 4, 2).unwrap();
        assert!(Placement::from_sets(&cfg, &[vec![0, 1], vec![2, 3]]).is_ok());
        assert!(Placement::from_sets(&cfg, &[vec![0], vec![2, 3]]).is_err());
        assert!(Placement::from_sets(&cfg, &[vec![0, 9], vec![2, 3]]).is_err());
    }
}
