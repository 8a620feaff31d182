// SPDX-License-Identifier: Apache-2.0

//! Edge-differentially-private release of networks by dyadwise randomized
//! response, and ERGM inference on the released networks.

pub mod attributes;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod mcmc;
pub mod privacy;
pub mod seeds;
pub mod terms;

pub use attributes::{load_attributes, parse_attributes, NodeAttributes};
pub use eval::{run_experiment, summarize, ExperimentPlan, ExperimentReport, MechanismSpec, Method};
pub use graph::{hamming_distance, load_edge_list, parse_edge_list, toggle_dyad, write_edge_list, DyadIndex, Graph};
pub use inference::{
    denoise, dyad_independent_fit, exact_fit_small, kl_utility, mcmle_fit, missing_data_fit, FitConfig, FitMethod,
    FitResult, InferenceError, KlConfig, KlEstimate,
};
pub use mcmc::{init_graph, sample_conditional, sample_ergm, ChainConfig, InitStrategy, Proposal, SampleSet};
pub use privacy::{
    epsilon_of, feasible_bounds, log_mechanism_prob, optimal_pq, release, verify_edp, MechanismConfig, MechanismParams,
    PrivacyMode, RiskReport,
};
pub use terms::{compute_stats, Model, ModelSpec, TermSpec};
