//! Decentralized coded file caching.
//!
//! Each of `K` caches stores `M` whole files (or `M·Δ` subfiles) drawn
//! uniformly from a library of `N`; the server then serves a random demand
//! vector by XOR-ing the requests of caches that form cliques in the
//! side-information graph. This crate simulates that pipeline and evaluates
//! the closed-form and differential-equation approximations of its expected
//! delivery rate.
//!
//! Module map:
//!
//! - [`model`]: problem instance, demands, placement, seeded randomness
//! - [`graphs`]: side-information digraph/graph, independent-edge models
//! - [`delivery`]: greedy clique cover and online matching delivery
//! - [`analytics`]: rate formulas, the clique-cover ODE, exact combinatorics
//! - [`montecarlo`]: trial orchestration and sweeps
//! - [`cli`]: the `cache-sim` command-line front-end

pub mod analytics;
pub mod cli;
pub mod delivery;
pub mod graphs;
pub mod model;
pub mod montecarlo;

pub use analytics::{
    coding_gains, prob_distinct, rate_cfcc_analytic, rate_cfcm_analytic, rate_csc_opt_analytic,
    rate_cscc_approx, rate_uncoded_analytic, solve_clique_cover_ode, surjection_count,
    AnalyticsError, DriftSign, Gains, OdeSolution,
};
pub use delivery::{
    clique_cover_deliver, large_clique_coverage, matching_deliver, verify_decodability,
    DeliveryError, DeliveryResult,
};
pub use graphs::{
    build_digraph, build_graph, generate_da, generate_ga, GraphError, SideInfoDigraph,
    SideInfoGraph, VertexMeta,
};
pub use model::{
    distinct_count, draw_demands, place, CacheNetworkConfig, ConfigError, DemandVector,
    Placement, RngSpec,
};
pub use montecarlo::{
    run_experiment, run_sweep, Estimate, ExperimentError, ExperimentSpec, GraphSource, Scheme,
    SweepAxis, SweepPoint,
};
