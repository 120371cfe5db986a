//! Monte-Carlo trial orchestration.
//!
//! Trial `t` of an experiment draws everything from `RngSpec(seed, t)` and
//! its children, trials run in parallel on the rayon pool, and the per-trial
//! outcomes are reduced sequentially in trial order. The result therefore
//! does not depend on how many threads ran it.

use std::io::Write;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnalyticsError, RatePoint, RateScheme, RateSource};
use crate::delivery::{
    clique_cover_deliver, large_clique_coverage, matching_deliver, verify_decodability,
    DeliveryError, DeliveryResult,
};
use crate::graphs::{build_digraph, build_graph, generate_ga, GraphError, SideInfoGraph};
use crate::model::{
    distinct_count, draw_demands, place, CacheNetworkConfig, ConfigError, RngSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Cfcm,
    Cfcc,
    Cscc,
    Uncoded,
}

impl Scheme {
    pub fn rate_scheme(self, delta: usize) -> RateScheme {
        match self {
            Scheme::Cfcm => RateScheme::Cfcm,
            Scheme::Cfcc => RateScheme::Cfcc,
            Scheme::Cscc => RateScheme::Cscc { delta },
            Scheme::Uncoded => RateScheme::Uncoded,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cfcm => "cfcm",
            Scheme::Cfcc => "cfcc",
            Scheme::Cscc => "cscc",
            Scheme::Uncoded => "uncoded",
        }
    }
}

/// Where side-information graphs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum GraphSource {
    /// Placement and demands drawn, graph built exactly.
    #[default]
    Exact,
    /// Independent-edge model (file caching only).
    Asymptotic,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment needs at least one trial")]
    NoTrials,
    #[error("scheme {scheme:?} requires Δ = 1, got Δ = {delta}")]
    FileSchemeWithSubfiles { scheme: Scheme, delta: usize },
    #[error("asymptotic graphs are only defined for Δ = 1")]
    AsymptoticSubfiles,
    #[error("uncoded delivery has no graph; use the exact source")]
    UncodedAsymptotic,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial {trial}: {source}")]
    Graph { trial: u64, source: GraphError },
    #[error("trial {trial}: {source}")]
    Delivery { trial: u64, source: DeliveryError },
    #[error("trial {trial}: messages are not decodable")]
    NotDecodable { trial: u64 },
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("K sweep value {k} does not scale N = {n}, M = {m} to integers at fixed K/N")]
    RatioNotIntegral { k: usize, n: usize, m: usize },
    #[error("writing trial dump: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub cfg: CacheNetworkConfig,
    pub scheme: Scheme,
    pub trials: u64,
    pub master_seed: u64,
    pub source: GraphSource,
}

impl ExperimentSpec {
    pub fn new(cfg: CacheNetworkConfig, scheme: Scheme, trials: u64, master_seed: u64) -> Self {
        Self {
            cfg,
            scheme,
            trials,
            master_seed,
            source: GraphSource::Exact,
        }
    }

    pub fn asymptotic(mut self) -> Self {
        self.source = GraphSource::Asymptotic;
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::NoTrials);
        }
        let delta = self.cfg.delta();
        if matches!(self.scheme, Scheme::Cfcm | Scheme::Cfcc) && delta != 1 {
            return Err(ExperimentError::FileSchemeWithSubfiles {
                scheme: self.scheme,
                delta,
            });
        }
        if self.source == GraphSource::Asymptotic {
            if delta != 1 {
                return Err(ExperimentError::AsymptoticSubfiles);
            }
            if self.scheme == Scheme::Uncoded {
                return Err(ExperimentError::UncodedAsymptotic);
            }
        }
        Ok(())
    }
}

/// What one trial produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub rate: f64,
    pub n_messages: usize,
    pub max_clique: usize,
    /// Message counts by clique size (index = size); empty for uncoded.
    pub histogram: Vec<u64>,
    pub large_clique_coverage: f64,
}

/// Aggregate over the trials of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `√trials`.
    pub stderr: f64,
    pub trials: u64,
    /// Mean message count per clique size (index = size).
    pub histogram_mean: Vec<f64>,
    pub large_clique_coverage_mean: f64,
}

impl Estimate {
    fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let n = outcomes.len() as f64;
        let mean = outcomes.iter().map(|o| o.rate).sum::<f64>() / n;
        let var = if outcomes.len() > 1 {
            outcomes.iter().map(|o| (o.rate - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let width = outcomes.iter().map(|o| o.histogram.len()).max().unwrap_or(0);
        let mut histogram_mean = vec![0.0; width];
        for o in outcomes {
            for (slot, &c) in histogram_mean.iter_mut().zip(&o.histogram) {
                *slot += c as f64;
            }
        }
        histogram_mean.iter_mut().for_each(|h| *h /= n);
        Self {
            mean,
            stderr: (var / n).sqrt(),
            trials: outcomes.len() as u64,
            histogram_mean,
            large_clique_coverage_mean: outcomes.iter().map(|o| o.large_clique_coverage).sum::<f64>() / n,
        }
    }
}

fn outcome(res: &DeliveryResult) -> TrialOutcome {
    TrialOutcome {
        rate: res.rate_f64(),
        n_messages: res.num_messages(),
        max_clique: res.max_clique(),
        histogram: res.clique_histogram().to_vec(),
        large_clique_coverage: large_clique_coverage(res).to_f64().unwrap_or(0.0),
    }
}

fn deliver(scheme: Scheme, g: &SideInfoGraph, rng: RngSpec) -> DeliveryResult {
    match scheme {
        Scheme::Cfcm => matching_deliver(g, rng),
        _ => clique_cover_deliver(g, rng),
    }
}

/// Runs trial `trial` of `spec`.
pub fn run_trial(spec: &ExperimentSpec, trial: u64) -> Result<TrialOutcome, ExperimentError> {
    let cfg = &spec.cfg;
    let stream = RngSpec::new(spec.master_seed, trial);
    if spec.source == GraphSource::Asymptotic {
        let g = generate_ga(cfg, stream.child(RngSpec::GRAPH))
            .map_err(|source| ExperimentError::Graph { trial, source })?;
        let res = deliver(spec.scheme, &g, stream.child(RngSpec::DELIVERY));
        res.validate_cover(&g)
            .map_err(|source| ExperimentError::Delivery { trial, source })?;
        return Ok(outcome(&res));
    }

    let demands = draw_demands(cfg, stream.child(RngSpec::DEMANDS));
    if spec.scheme == Scheme::Uncoded {
        let distinct = distinct_count(&demands);
        return Ok(TrialOutcome {
            rate: distinct as f64 * (1.0 - cfg.q_f64()),
            n_messages: distinct,
            max_clique: 1,
            histogram: Vec::new(),
            large_clique_coverage: 0.0,
        });
    }
    let placement = place(cfg, stream.child(RngSpec::PLACEMENT));
    let dg = build_digraph(&placement, &demands, cfg)
        .map_err(|source| ExperimentError::Graph { trial, source })?;
    let g = build_graph(&dg);
    let res = deliver(spec.scheme, &g, stream.child(RngSpec::DELIVERY));
    res.validate_cover(&g)
        .map_err(|source| ExperimentError::Delivery { trial, source })?;
    let ok = verify_decodability(&res, &placement, &demands, cfg)
        .map_err(|source| ExperimentError::Delivery { trial, source })?;
    if !ok {
        return Err(ExperimentError::NotDecodable { trial });
    }
    Ok(outcome(&res))
}

/// Runs every trial and returns the aggregate plus per-trial outcomes in
/// trial order.
pub fn run_experiment_detailed(
    spec: &ExperimentSpec,
) -> Result<(Estimate, Vec<TrialOutcome>), ExperimentError> {
    spec.validate()?;
    let outcomes = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((Estimate::from_outcomes(&outcomes), outcomes))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Estimate, ExperimentError> {
    run_experiment_detailed(spec).map(|(estimate, _)| estimate)
}

/// Per-trial CSV: `trial,scheme,K,N,M,delta,rate,n_messages,max_clique`.
pub fn write_trial_csv<W: Write>(
    out: W,
    spec: &ExperimentSpec,
    outcomes: &[TrialOutcome],
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ExperimentError::Io(e.into());
    w.write_record(["trial", "scheme", "K", "N", "M", "delta", "rate", "n_messages", "max_clique"])
        .map_err(io)?;
    let cfg = &spec.cfg;
    for (t, o) in outcomes.iter().enumerate() {
        w.write_record([
            t.to_string(),
            spec.scheme.name().to_string(),
            cfg.k().to_string(),
            cfg.n().to_string(),
            cfg.m().to_string(),
            cfg.delta().to_string(),
            o.rate.to_string(),
            o.n_messages.to_string(),
            o.max_clique.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    M,
    /// With `hold_ratio`, `N` and `M` scale with `K` so `K/N` and `M/N`
    /// stay fixed.
    K { hold_ratio: bool },
    Delta,
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: usize,
    pub cfg: Option<CacheNetworkConfig>,
    pub estimate: Result<Estimate, ExperimentError>,
    pub analytic: Option<Result<RatePoint, AnalyticsError>>,
}

impl SweepPoint {
    /// The Monte-Carlo result as a rate point, if the trials succeeded.
    pub fn monte_carlo_point(&self, scheme: Scheme) -> Option<RatePoint> {
        let (cfg, est) = (self.cfg?, self.estimate.as_ref().ok()?);
        Some(RatePoint {
            scheme: scheme.rate_scheme(cfg.delta()),
            source: RateSource::MonteCarlo,
            k: cfg.k(),
            n: cfg.n(),
            m: cfg.m(),
            delta: cfg.delta(),
            rate: est.mean,
            stderr: est.stderr,
            trials: est.trials as usize,
        })
    }
}

pub fn sweep_config(
    base: &CacheNetworkConfig,
    axis: SweepAxis,
    value: usize,
) -> Result<CacheNetworkConfig, ExperimentError> {
    Ok(match axis {
        SweepAxis::M => base.with_m(value)?,
        SweepAxis::Delta => base.with_delta(value)?,
        SweepAxis::K { hold_ratio: false } => base.with_k(value)?,
        SweepAxis::K { hold_ratio: true } => {
            let (k0, n0, m0) = (base.k(), base.n(), base.m());
            if !(value * n0).is_multiple_of(k0) || !(value * m0).is_multiple_of(k0) {
                return Err(ExperimentError::RatioNotIntegral {
                    k: value,
                    n: n0,
                    m: m0,
                });
            }
            CacheNetworkConfig::new(value, value * n0 / k0, value * m0 / k0, base.delta())?
        }
    })
}

/// One Monte-Carlo estimate and its analytic companion per value, in input
/// order. Failures are recorded per point.
pub fn run_sweep(base: &ExperimentSpec, axis: SweepAxis, values: &[usize]) -> Vec<SweepPoint> {
    values
        .iter()
        .map(|&value| match sweep_config(&base.cfg, axis, value) {
            Ok(cfg) => {
                let spec = ExperimentSpec { cfg, ..*base };
                let scheme = base.scheme.rate_scheme(cfg.delta());
                SweepPoint {
                    value,
                    cfg: Some(cfg),
                    estimate: run_experiment(&spec),
                    analytic: Some(RatePoint::analytic(scheme, cfg.k(), cfg.n(), cfg.m())),
                }
            }
            Err(e) => SweepPoint {
                value,
                cfg: None,
                estimate: Err(e),
                analytic: None,
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncoded_single_user() {
        let cfg = CacheNetworkConfig::files(1, 10, 5).unwrap();
        let est = run_experiment(&ExperimentSpec::new(cfg, Scheme::Uncoded, 100_000, 3)).unwrap();
        assert!((est.mean - 0.5).abs() <= 3.0 * est.stderr + 1e-12, "{est:?}");
    }

    #[test]
    fn full_caches_give_zero_rate() {
        let cfg = CacheNetworkConfig::files(20, 50, 50).unwrap();
        for scheme in [Scheme::Cfcc, Scheme::Cfcm, Scheme::Uncoded] {
            let est = run_experiment(&ExperimentSpec::new(cfg, scheme, 200, 7)).unwrap();
            assert_eq!((est.mean, est.stderr), (0.0, 0.0));
        }
    }

    #[test]
    fn empty_caches_give_k() {
        let cfg = CacheNetworkConfig::files(20, 50, 0).unwrap();
        let est = run_experiment(&ExperimentSpec::new(cfg, Scheme::Cfcc, 50, 7)).unwrap();
        assert_eq!(est.mean, 20.0);
    }

    #[test]
    fn spec_validation() {
        let sub = CacheNetworkConfig::new(5, 10, 2, 2).unwrap();
        let file = CacheNetworkConfig::files(5, 10, 2).unwrap();
        assert!(matches!(
            run_experiment(&ExperimentSpec::new(sub, Scheme::Cfcc, 10, 1)),
            Err(ExperimentError::FileSchemeWithSubfiles { .. })
        ));
        assert!(matches!(
            run_experiment(&ExperimentSpec::new(sub, Scheme::Cscc, 10, 1).asymptotic()),
            Err(ExperimentError::AsymptoticSubfiles)
        ));
        assert!(matches!(
            run_experiment(&ExperimentSpec::new(file, Scheme::Uncoded, 10, 1).asymptotic()),
            Err(ExperimentError::UncodedAsymptotic)
        ));
        assert!(matches!(
            run_experiment(&ExperimentSpec::new(file, Scheme::Cfcc, 0, 1)),
            Err(ExperimentError::NoTrials)
        ));
    }

    #[test]
    fn reproducible_across_pools() {
        let cfg = CacheNetworkConfig::files(30, 200, 40).unwrap();
        let spec = ExperimentSpec::new(cfg, Scheme::Cfcc, 300, 99);
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| run_experiment(&spec)).unwrap();
        let b = wide.install(|| run_experiment(&spec)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    }

    #[test]
    fn stderr_shrinks_with_trials() {
        let cfg = CacheNetworkConfig::files(30, 300, 60).unwrap();
        let small = run_experiment(&ExperimentSpec::new(cfg, Scheme::Cfcc, 2000, 5).asymptotic()).unwrap();
        let large = run_experiment(&ExperimentSpec::new(cfg, Scheme::Cfcc, 8000, 5).asymptotic()).unwrap();
        let ratio = small.stderr / large.stderr;
        assert!((ratio - 2.0).abs() < 0.3, "ratio = {ratio}");
    }

    #[test]
    fn matching_histogram_support() {
        let cfg = CacheNetworkConfig::files(40, 400, 120).unwrap();
        let est = run_experiment(&ExperimentSpec::new(cfg, Scheme::Cfcm, 200, 5)).unwrap();
        assert!(est.histogram_mean.iter().skip(3).all(|&h| h == 0.0));
        assert_eq!(est.large_clique_coverage_mean, 0.0);
    }

    #[test]
    fn trial_dump_format() {
        let cfg = CacheNetworkConfig::files(4, 10, 3).unwrap();
        let spec = ExperimentSpec::new(cfg, Scheme::Cfcc, 3, 1);
        let (_, outcomes) = run_experiment_detailed(&spec).unwrap();
        let mut buf = Vec::new();
        write_trial_csv(&mut buf, &spec, &outcomes).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,scheme,K,N,M,delta,rate,n_messages,max_clique");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,cfcc,4,10,3,1,"));
    }

    #[test]
    fn sweep_m_endpoints() {
        let cfg = CacheNetworkConfig::files(20, 100, 0).unwrap();
        let base = ExperimentSpec::new(cfg, Scheme::Cfcc, 50, 2);
        let points = run_sweep(&base, SweepAxis::M, &[0, 100, 101]);
        assert_eq!(points.len(), 3);
        assert_eq!(points[0].estimate.as_ref().unwrap().mean, 20.0);
        assert_eq!(points[1].estimate.as_ref().unwrap().mean, 0.0);
        assert!(points[2].estimate.is_err());
        let analytic = points[0].analytic.as_ref().unwrap().as_ref().unwrap();
        assert!((analytic.rate - 20.0).abs() < 1e-9);
    }

    #[test]
    fn k_sweep_holds_ratio() {
        let base = CacheNetworkConfig::files(10, 100, 20).unwrap();
        let cfg = sweep_config(&base, SweepAxis::K { hold_ratio: true }, 40).unwrap();
        assert_eq!((cfg.k(), cfg.n(), cfg.m()), (40, 400, 80));
        let odd = CacheNetworkConfig::files(4, 10, 2).unwrap();
        assert!(sweep_config(&odd, SweepAxis::K { hold_ratio: true }, 3).is_err());
        let cfg = sweep_config(&odd, SweepAxis::K { hold_ratio: false }, 3).unwrap();
        assert_eq!((cfg.k(), cfg.n(), cfg.m()), (3, 10, 2));
    }
}
