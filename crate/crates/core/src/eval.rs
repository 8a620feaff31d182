// SPDX-License-Identifier: Apache-2.0

//! Risk-utility experiments: repeated private releases of one network, naive
//! and missing-data fits of every release, and KL/bias/MSE summaries against
//! the fit on the original network.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::NodeAttributes;
use crate::graph::Graph;
use crate::inference::{
    dyad_independent_fit, kl_utility, mcmle_fit, missing_data_fit, FitConfig, FitResult, InferenceError, KlConfig,
};
use crate::mcmc::ChainConfig;
use crate::privacy::{release, MechanismConfig, MechanismParams, PrivacyError, PrivacyMode};
use crate::seeds::derive_seed;
use crate::terms::{Model, ModelSpec, TermError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("experiment plan: {0}")]
    Plan(String),
    #[error("reference fit on the original network failed: {0}")]
    Reference(String),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// One mechanism in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismSpec {
    /// Uniform flip probability `π`, i.e. `p = q = 1 - π`.
    UniformPi(f64),
    UniformEps(f64),
    /// A parsed mechanism config under a display name.
    Named {
        name: String,
        config: MechanismConfig,
    },
}

impl MechanismSpec {
    /// Label used in CSV output.
    pub fn label(&self) -> String {
        match self {
            MechanismSpec::UniformPi(pi) => format!("pi={pi}"),
            MechanismSpec::UniformEps(e) => format!("eps={e}"),
            MechanismSpec::Named { name, .. } => name.clone(),
        }
    }

    pub fn resolve(&self, attrs: &NodeAttributes, directed: bool) -> Result<MechanismParams, PrivacyError> {
        match self {
            MechanismSpec::UniformPi(pi) => MechanismParams::uniform_pi(attrs.n(), directed, *pi),
            MechanismSpec::UniformEps(e) => MechanismParams::uniform(attrs.n(), directed, *e),
            MechanismSpec::Named { config, .. } => config.resolve(attrs, directed, PrivacyMode::Private),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// MC-MLE treating the release as the true network.
    Naive,
    /// Missing-data MLE using the mechanism.
    Missing,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Missing => "missing",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub model: ModelSpec,
    pub graph: Graph,
    pub attrs: NodeAttributes,
    pub mechanisms: Vec<MechanismSpec>,
    /// Releases per mechanism, `B`.
    pub replicates: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    /// Fit settings; chain seeds are replaced per replicate.
    pub fit: FitConfig,
    pub kl: KlConfig,
    /// Worker threads for replicates. Results do not depend on it.
    pub workers: usize,
}

impl ExperimentPlan {
    /// Plan with `B = 20`, both methods, and chain settings sized for the graph.
    pub fn new(
        model: ModelSpec,
        graph: Graph,
        attrs: NodeAttributes,
        mechanisms: Vec<MechanismSpec>,
        seed: u64,
    ) -> Self {
        let n = graph.n();
        Self {
            model,
            graph,
            attrs,
            mechanisms,
            replicates: 20,
            base_seed: seed,
            methods: vec![Method::Naive, Method::Missing],
            fit: FitConfig::for_nodes(n, 1000, seed),
            kl: KlConfig::for_nodes(n, 500, seed),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.replicates == 0 {
            return Err(EvalError::Plan("replicates must be at least 1".into()));
        }
        if self.mechanisms.is_empty() {
            return Err(EvalError::Plan("no mechanisms to sweep".into()));
        }
        if self.methods.is_empty() {
            return Err(EvalError::Plan("no fitting methods selected".into()));
        }
        if self.workers == 0 {
            return Err(EvalError::Plan("workers must be at least 1".into()));
        }
        if self.mechanisms.len() >= 1 << 32 || self.replicates >= 1 << 32 {
            return Err(EvalError::Plan("sweep too large".into()));
        }
        for m in &self.mechanisms {
            if let MechanismSpec::UniformPi(pi) = m {
                if !(*pi > 0.0 && *pi < 0.5) {
                    return Err(EvalError::Plan(format!("pi = {pi} is outside (0, 0.5)")));
                }
            }
        }
        let labels: std::collections::BTreeSet<String> = self.mechanisms.iter().map(MechanismSpec::label).collect();
        if labels.len() != self.mechanisms.len() {
            return Err(EvalError::Plan("mechanism labels must be distinct".into()));
        }
        if labels
            .iter()
            .any(|l| l.contains(',') || l.contains('"') || l.contains('\n'))
        {
            return Err(EvalError::Plan(
                "mechanism labels may not contain commas, quotes or newlines".into(),
            ));
        }
        Ok(())
    }
}

/// Seed of the release for replicate `b` of mechanism `m`.
pub fn replicate_seed(base: u64, m: usize, b: usize) -> u64 {
    derive_seed(base, m as u64, b as u64)
}

/// One fit of one release.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub mechanism: usize,
    pub replicate: usize,
    pub method: Method,
    /// Release seed.
    pub seed: u64,
    pub converged: bool,
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// KL against the reference fit; only for converged fits.
    pub kl: Option<f64>,
    pub kl_raw: Option<f64>,
    pub error: Option<String>,
}

impl ReplicateFit {
    /// Counts toward aggregates.
    pub fn is_ok(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

/// Mean, bias and MSE of one coordinate over the successful fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mechanism: usize,
    pub method: Method,
    pub parameter: usize,
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub bias: f64,
    pub mse: f64,
    /// Population variance of the estimates.
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub labels: Vec<String>,
    pub mechanisms: Vec<String>,
    pub methods: Vec<Method>,
    pub reference: FitResult,
    pub fits: Vec<ReplicateFit>,
    pub aggregates: Vec<Aggregate>,
}

fn fit_seed(release_seed: u64, method: Method, purpose: u64) -> u64 {
    derive_seed(release_seed, method as u64 + 1, purpose)
}

fn reference_fit(model: &Model, plan: &ExperimentPlan) -> Result<FitResult, EvalError> {
    let fit = if model.is_dyad_independent() {
        dyad_independent_fit(model, &plan.graph, &plan.attrs)
    } else {
        let cfg = FitConfig {
            chain: plan
                .fit
                .chain
                .with_seed(derive_seed(plan.base_seed, u32::MAX as u64, 0)),
            ..plan.fit.clone()
        };
        mcmle_fit(model, &plan.graph, &plan.attrs, None, &cfg)
    }
    .map_err(|e| EvalError::Reference(e.to_string()))?;
    if !fit.converged {
        return Err(EvalError::Reference("did not converge".into()));
    }
    Ok(fit)
}

fn with_seed(fit: &FitConfig, seed: u64) -> FitConfig {
    FitConfig {
        chain: fit.chain.with_seed(seed),
        ..fit.clone()
    }
}

fn kl_config(kl: &KlConfig, seed: u64) -> KlConfig {
    KlConfig {
        chain: ChainConfig {
            seed,
            ..kl.chain.clone()
        },
        ..kl.clone()
    }
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    model: &Model,
    plan: &ExperimentPlan,
    gamma: &MechanismParams,
    reference: &FitResult,
    mechanism: usize,
    replicate: usize,
    method: Method,
    y: &Graph,
    seed: u64,
) -> ReplicateFit {
    let fcfg = with_seed(&plan.fit, fit_seed(seed, method, 0));
    let result = match method {
        Method::Naive => mcmle_fit(model, y, &plan.attrs, None, &fcfg),
        Method::Missing => missing_data_fit(model, y, &plan.attrs, gamma, None, &fcfg),
    };
    let mut out = ReplicateFit {
        mechanism,
        replicate,
        method,
        seed,
        converged: false,
        theta: Vec::new(),
        std_errors: Vec::new(),
        kl: None,
        kl_raw: None,
        error: None,
    };
    match result {
        Err(e) => out.error = Some(e.to_string()),
        Ok(fit) => {
            out.converged = fit.converged;
            if fit.converged {
                let kcfg = kl_config(&plan.kl, fit_seed(seed, method, 1));
                match kl_utility(model, &reference.theta, &fit.theta, &plan.graph, &kcfg) {
                    Ok(k) => {
                        out.kl = Some(k.kl);
                        out.kl_raw = Some(k.raw);
                    }
                    Err(e) => out.error = Some(format!("kl: {e}")),
                }
            }
            out.theta = fit.theta;
            out.std_errors = fit.std_errors;
        }
    }
    out
}

/// Runs every (mechanism, replicate, method) cell of the plan.
///
/// Per-replicate failures are recorded and excluded from aggregates; a
/// failed reference fit aborts.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentReport, EvalError> {
    plan.validate()?;
    let model = Model::new(&plan.model, &plan.attrs, plan.graph.is_directed())?;
    model.check_graph(&plan.graph)?;
    let gammas: Vec<MechanismParams> = plan
        .mechanisms
        .iter()
        .map(|m| m.resolve(&plan.attrs, plan.graph.is_directed()))
        .collect::<Result<_, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| EvalError::Plan(format!("thread pool: {e}")))?;
    pool.install(|| {
        let reference = reference_fit(&model, plan)?;
        let cells: Vec<(usize, usize)> = (0..gammas.len())
            .flat_map(|m| (0..plan.replicates).map(move |b| (m, b)))
            .collect();
        let fits: Vec<ReplicateFit> = cells
            .par_iter()
            .map(|&(m, b)| -> Result<Vec<ReplicateFit>, EvalError> {
                let seed = replicate_seed(plan.base_seed, m, b);
                let y = release(&plan.graph, &gammas[m], seed)?;
                Ok(plan
                    .methods
                    .iter()
                    .map(|&method| run_one(&model, plan, &gammas[m], &reference, m, b, method, &y, seed))
                    .collect())
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        let aggregates = aggregate(&fits, &reference.theta, gammas.len(), &plan.methods);
        Ok(ExperimentReport {
            labels: model.labels().to_vec(),
            mechanisms: plan.mechanisms.iter().map(MechanismSpec::label).collect(),
            methods: plan.methods.clone(),
            reference,
            fits,
            aggregates,
        })
    })
}

/// Mean, bias `mean - ref`, MSE `mean((θ - ref)^2)` and variance per
/// (mechanism, method, coordinate), over the fits that converged.
pub fn aggregate(fits: &[ReplicateFit], reference: &[f64], mechanisms: usize, methods: &[Method]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for m in 0..mechanisms {
        for &method in methods {
            let cell: Vec<&ReplicateFit> = fits.iter().filter(|f| f.mechanism == m && f.method == method).collect();
            let ok: Vec<&&ReplicateFit> = cell.iter().filter(|f| f.is_ok()).collect();
            for (k, &r) in reference.iter().enumerate() {
                let count = ok.len();
                let (mean, mse, variance) = if count == 0 {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    let c = count as f64;
                    let mean = ok.iter().map(|f| f.theta[k]).sum::<f64>() / c;
                    let mse = ok.iter().map(|f| (f.theta[k] - r).powi(2)).sum::<f64>() / c;
                    let var = ok.iter().map(|f| (f.theta[k] - mean).powi(2)).sum::<f64>() / c;
                    (mean, mse, var)
                };
                out.push(Aggregate {
                    mechanism: m,
                    method,
                    parameter: k,
                    count,
                    failures: cell.len() - count,
                    mean,
                    bias: mean - r,
                    mse,
                    variance,
                });
            }
        }
    }
    out
}

impl ExperimentReport {
    pub fn aggregate(&self, mechanism: usize, method: Method, parameter: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.mechanism == mechanism && a.method == method && a.parameter == parameter)
    }

    /// KL values of converged fits for one cell.
    pub fn kl_values(&self, mechanism: usize, method: Method) -> Vec<f64> {
        self.fits
            .iter()
            .filter(|f| f.mechanism == mechanism && f.method == method && f.is_ok())
            .filter_map(|f| f.kl)
            .collect()
    }

    pub fn median_kl(&self, mechanism: usize, method: Method) -> Option<f64> {
        median(self.kl_values(mechanism, method))
    }
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub const SUMMARY_HEADER: &str = "mechanism,parameter,mle,missing_estimate,missing_mse,missing_bias,missing_failures,naive_estimate,naive_mse,naive_bias,naive_failures";
pub const KL_HEADER: &str = "mechanism,method,replicate,kl";
pub const FITS_HEADER: &str = "mechanism,method,replicate,seed,converged,parameter,estimate,std_error";

/// CSV renderings of an [`ExperimentReport`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryTables {
    pub summary: String,
    pub kl_long: String,
    pub fits_long: String,
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

/// Renders `summary.csv`, `kl_long.csv` and `fits_long.csv`.
///
/// Cells for a method that was not run, or with no successful fit, are `NA`.
pub fn summarize(report: &ExperimentReport) -> Result<SummaryTables, EvalError> {
    if report.fits.is_empty() {
        return Err(EvalError::Plan("empty report".into()));
    }
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (m, mech) in report.mechanisms.iter().enumerate() {
        for (k, label) in report.labels.iter().enumerate() {
            let _ = write!(summary, "{mech},{label},{}", num(report.reference.theta[k]));
            for method in [Method::Missing, Method::Naive] {
                match report.aggregate(m, method, k) {
                    Some(a) => {
                        let _ = write!(
                            summary,
                            ",{},{},{},{}",
                            num(a.mean),
                            num(a.mse),
                            num(a.bias),
                            a.failures
                        );
                    }
                    None => summary.push_str(",NA,NA,NA,NA"),
                }
            }
            summary.push('\n');
        }
    }
    let mut kl_long = format!("{KL_HEADER}\n");
    let mut fits_long = format!("{FITS_HEADER}\n");
    for f in &report.fits {
        let mech = &report.mechanisms[f.mechanism];
        if f.is_ok() {
            if let Some(kl) = f.kl {
                let _ = writeln!(kl_long, "{mech},{},{},{}", f.method.as_str(), f.replicate, num(kl));
            }
        }
        for (k, label) in report.labels.iter().enumerate() {
            let est = f.theta.get(k).copied().unwrap_or(f64::NAN);
            let se = f.std_errors.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                fits_long,
                "{mech},{},{},{},{},{label},{},{}",
                f.method.as_str(),
                f.replicate,
                f.seed,
                f.is_ok(),
                num(est),
                num(se)
            );
        }
    }
    Ok(SummaryTables {
        summary,
        kl_long,
        fits_long,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(m: usize, b: usize, method: Method, theta: Vec<f64>, ok: bool) -> ReplicateFit {
        ReplicateFit {
            mechanism: m,
            replicate: b,
            method,
            seed: 0,
            converged: ok,
            std_errors: vec![0.1; theta.len()],
            theta,
            kl: ok.then_some(0.5),
            kl_raw: ok.then_some(0.5),
            error: None,
        }
    }

    #[test]
    fn mse_decomposes() {
        let fits = vec![
            fit(0, 0, Method::Naive, vec![1.0, -2.0], true),
            fit(0, 1, Method::Naive, vec![1.5, -1.0], true),
            fit(0, 2, Method::Naive, vec![0.2, -1.5], true),
            fit(0, 3, Method::Naive, vec![9.0, 9.0], false),
        ];
        let agg = aggregate(&fits, &[0.8, -1.2], 1, &[Method::Naive]);
        assert_eq!(agg.len(), 2);
        for a in &agg {
            assert_eq!(a.count, 3);
            assert_eq!(a.failures, 1);
            assert!((a.mse - (a.bias * a.bias + a.variance)).abs() < 1e-12);
        }
    }

    #[test]
    fn replicate_seeds_distinct() {
        let mut seen = std::collections::HashSet::new();
        for m in 0..8 {
            for b in 0..100 {
                assert!(seen.insert(replicate_seed(42, m, b)));
            }
        }
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
