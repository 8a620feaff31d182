// SPDX-License-Identifier: Apache-2.0

//! Subcommand bodies. Each one loads inputs, calls into `dpergm`, and
//! writes text outputs plus a manifest.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dpergm::eval::{run_experiment, summarize, ExperimentPlan, MechanismSpec};
use dpergm::graph::{load_edge_list, write_edge_list, Graph};
use dpergm::inference::{mcmle_fit, missing_data_fit, FitConfig};
use dpergm::mcmc::{sample_ergm, ChainConfig};
use dpergm::privacy::{
    epsilon_from_pi, epsilon_of, feasible_bounds, optimal_pq, release, MechanismConfig, MechanismParams, PrivacyMode,
};
use dpergm::seeds::derive_seed;
use dpergm::terms::{Model, ModelSpec};
use dpergm::{load_attributes, NodeAttributes};

use crate::manifest::{digest_file, FileDigest, Manifest, Outputs};
use crate::settings::Settings;

pub const OUT_DIR_ENV: &str = "DPERGM_OUT_DIR";

/// Uniform flip probabilities used when `evaluate` gets no `--pi`.
const DEFAULT_SWEEP: [f64; 4] = [0.005, 0.01, 0.02, 0.05];

/// What a command produced, for the exit code.
pub struct Finished {
    pub manifest: Manifest,
    pub converged: bool,
}

struct Inputs {
    n: usize,
    digests: Vec<FileDigest>,
}

impl Inputs {
    fn track(&mut self, path: &Path) -> Result<()> {
        self.digests.push(digest_file(path)?);
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Attribute rows: non-blank, non-comment lines after the header.
fn attribute_rows(path: &Path) -> Result<usize> {
    let text = read(path)?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .count();
    Ok(rows.saturating_sub(1))
}

/// Largest node id in an edge-list file.
fn max_edge_id(path: &Path) -> Result<usize> {
    let text = read(path)?;
    let mut max = 0;
    for line in text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        for tok in line.split_whitespace() {
            let id: usize = tok
                .parse()
                .map_err(|_| anyhow!("{}: bad node id {tok:?}", path.display()))?;
            max = max.max(id);
        }
    }
    Ok(max)
}

/// Node count from `--nodes`, else the attribute file, else the edge list.
fn node_count(s: &Settings) -> Result<usize> {
    if let Some(n) = s.nodes {
        return Ok(n);
    }
    if let Some(a) = &s.attrs {
        return attribute_rows(a);
    }
    if let Some(g) = &s.graph {
        return max_edge_id(g);
    }
    bail!("cannot tell the node count: give --nodes, --attrs or --graph")
}

fn inputs(s: &Settings) -> Result<Inputs> {
    Ok(Inputs {
        n: node_count(s)?,
        digests: Vec::new(),
    })
}

fn graph(s: &Settings, inp: &mut Inputs) -> Result<Graph> {
    let path = s.require_graph()?;
    inp.track(path)?;
    Ok(load_edge_list(path, inp.n, s.directed())?)
}

fn attrs(s: &Settings, inp: &mut Inputs) -> Result<NodeAttributes> {
    match &s.attrs {
        Some(path) => {
            inp.track(path)?;
            Ok(load_attributes(path, inp.n)?)
        }
        None => Ok(NodeAttributes::empty(inp.n)),
    }
}

fn model(s: &Settings, z: &NodeAttributes, inp: &mut Inputs) -> Result<Model> {
    let path = s.require_model()?;
    inp.track(path)?;
    let spec = ModelSpec::parse(&read(path)?)?;
    Ok(Model::new(&spec, z, s.directed())?)
}

fn mechanism_config(path: &Path, inp: &mut Inputs) -> Result<MechanismConfig> {
    inp.track(path)?;
    Ok(MechanismConfig::parse(&read(path)?)?)
}

fn mechanism(s: &Settings, z: &NodeAttributes, inp: &mut Inputs) -> Result<Option<MechanismParams>> {
    let Some(path) = &s.mechanism else {
        return Ok(None);
    };
    let mode = if s.non_dp.unwrap_or(false) {
        PrivacyMode::NonDp
    } else {
        PrivacyMode::Private
    };
    Ok(Some(mechanism_config(path, inp)?.resolve(z, s.directed(), mode)?))
}

fn chain(s: &mut Settings, n: usize, default_samples: usize) -> ChainConfig {
    let base = ChainConfig::for_nodes(n, default_samples, s.seed());
    let c = ChainConfig {
        burn_in: s.burn_in.unwrap_or(base.burn_in),
        interval: s.interval.unwrap_or(base.interval),
        samples: s.samples.unwrap_or(base.samples),
        ..base
    };
    s.burn_in = Some(c.burn_in);
    s.interval = Some(c.interval);
    s.samples = Some(c.samples);
    c
}

fn fit_config(s: &mut Settings, n: usize) -> FitConfig {
    let chain = chain(s, n, 1000);
    let mut cfg = FitConfig::for_nodes(n, chain.samples, chain.seed);
    cfg.chain = chain;
    cfg.max_iterations = s.max_iterations.unwrap_or(cfg.max_iterations);
    s.max_iterations = Some(cfg.max_iterations);
    cfg
}

/// Fills the defaults every command shares so the manifest is explicit.
fn pin_common(s: &mut Settings) {
    s.seed = Some(s.seed());
    s.workers = Some(s.workers());
    s.directed = Some(s.directed());
    s.non_dp = Some(s.non_dp.unwrap_or(false));
    s.allow_nonconverged = Some(s.allow_nonconverged.unwrap_or(false));
}

fn manifest(command: &str, mut s: Settings, seeds: Vec<u64>, inp: Inputs) -> Manifest {
    s.out_dir = None;
    Manifest {
        tool: "dpergm".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        settings: s,
        seeds,
        inputs: inp.digests,
        outputs: Vec::new(),
    }
}

fn out_dir(s: &Settings) -> std::path::PathBuf {
    s.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(Into::into))
        .unwrap_or_else(|| ".".into())
}

pub fn release_cmd(mut s: Settings) -> Result<Finished> {
    pin_common(&mut s);
    let mut inp = inputs(&s)?;
    let x = graph(&s, &mut inp)?;
    let z = attrs(&s, &mut inp)?;
    let gamma = mechanism(&s, &z, &mut inp)?.ok_or_else(|| anyhow!("--mechanism is required"))?;
    let b = s.replicates.unwrap_or(1);
    s.replicates = Some(b);
    let risk = gamma.risk_report();
    println!("{risk}");
    let mut out = Outputs::create(out_dir(&s))?;
    out.write("risk.txt", &format!("{risk}\n"))?;
    let mut seeds = vec![s.seed()];
    for r in 1..=b {
        let seed = derive_seed(s.seed(), 0, r as u64);
        let y = release(&x, &gamma, seed)?;
        out.write(&format!("release_{r}.edges"), &write_edge_list(&y))?;
        seeds.push(seed);
    }
    let manifest = out.finish(manifest("release", s, seeds, inp))?;
    Ok(Finished {
        manifest,
        converged: true,
    })
}

pub fn fit_cmd(mut s: Settings) -> Result<Finished> {
    pin_common(&mut s);
    let mut inp = inputs(&s)?;
    let y = graph(&s, &mut inp)?;
    let z = attrs(&s, &mut inp)?;
    let m = model(&s, &z, &mut inp)?;
    let gamma = mechanism(&s, &z, &mut inp)?;
    let cfg = fit_config(&mut s, inp.n);
    let fit = match &gamma {
        Some(g) => missing_data_fit(&m, &y, &z, g, None, &cfg)?,
        None => mcmle_fit(&m, &y, &z, None, &cfg)?,
    };
    let table = fit.report_table();
    println!("{table}");
    let mut out = Outputs::create(out_dir(&s))?;
    out.write("fit.txt", &format!("{table}\n"))?;
    out.write("fit.csv", &fit.to_csv())?;
    out.write("fit.json", &(serde_json::to_string_pretty(&fit)? + "\n"))?;
    let seed = s.seed();
    let manifest = out.finish(manifest("fit", s, vec![seed], inp))?;
    Ok(Finished {
        manifest,
        converged: fit.converged,
    })
}

pub fn simulate_cmd(mut s: Settings) -> Result<Finished> {
    pin_common(&mut s);
    let mut inp = inputs(&s)?;
    let z = attrs(&s, &mut inp)?;
    let m = model(&s, &z, &mut inp)?;
    let theta = s.theta.clone().ok_or_else(|| anyhow!("--theta is required"))?;
    let init = match &s.graph {
        Some(_) => graph(&s, &mut inp)?,
        None => Graph::new(inp.n, s.directed())?,
    };
    let mut cfg = chain(&mut s, inp.n, 1);
    cfg.keep_graphs = true;
    let sample = sample_ergm(&m, &theta, &init, &cfg)?;
    let mut out = Outputs::create(out_dir(&s))?;
    out.write("stats.csv", &sample.to_csv(m.labels()))?;
    for (k, g) in sample.graphs.iter().flatten().enumerate() {
        out.write(&format!("simulated_{}.edges", k + 1), &write_edge_list(g))?;
    }
    println!("{} draws, acceptance rate {:.4}", sample.len(), sample.acceptance_rate);
    let seed = s.seed();
    let manifest = out.finish(manifest("simulate", s, vec![seed], inp))?;
    Ok(Finished {
        manifest,
        converged: true,
    })
}

pub fn evaluate_cmd(mut s: Settings) -> Result<Finished> {
    pin_common(&mut s);
    let mut inp = inputs(&s)?;
    let x = graph(&s, &mut inp)?;
    let z = attrs(&s, &mut inp)?;
    let model_path = s.require_model()?.to_path_buf();
    inp.track(&model_path)?;
    let spec = ModelSpec::parse(&read(&model_path)?)?;
    let pis = s.pi.clone().unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    s.pi = Some(pis.clone());
    let mut mechanisms: Vec<MechanismSpec> = pis.into_iter().map(MechanismSpec::UniformPi).collect();
    if let Some(path) = s.mechanism.clone() {
        let name = path
            .file_stem()
            .map_or("mechanism".into(), |n| n.to_string_lossy().into_owned());
        let config = mechanism_config(&path, &mut inp)?;
        mechanisms.push(MechanismSpec::Named { name, config });
    }
    let n = inp.n;
    let mut plan = ExperimentPlan::new(spec, x, z, mechanisms, s.seed());
    plan.replicates = s.replicates.unwrap_or(plan.replicates);
    s.replicates = Some(plan.replicates);
    plan.fit = fit_config(&mut s, n);
    let kl_samples = s.kl_samples.unwrap_or(plan.kl.chain.samples);
    s.kl_samples = Some(kl_samples);
    plan.kl.chain = ChainConfig {
        samples: kl_samples,
        ..plan.fit.chain.clone()
    };
    plan.workers = s.workers();
    let report = run_experiment(&plan)?;
    let tables = summarize(&report)?;
    let mut out = Outputs::create(out_dir(&s))?;
    out.write("summary.csv", &tables.summary)?;
    out.write("kl_long.csv", &tables.kl_long)?;
    out.write("fits_long.csv", &tables.fits_long)?;
    out.write("reference.txt", &format!("{}\n", report.reference.report_table()))?;
    let failures = report.fits.iter().filter(|f| !f.is_ok()).count();
    println!("{} fits, {failures} failed or did not converge", report.fits.len());
    print!("{}", tables.summary);
    let seed = s.seed();
    let manifest = out.finish(manifest("evaluate", s, vec![seed], inp))?;
    Ok(Finished {
        manifest,
        converged: true,
    })
}

/// Which quantities `epsilon` was given.
pub struct EpsilonArgs {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub eps: Option<f64>,
    pub pi: Option<f64>,
}

pub fn epsilon_cmd(a: EpsilonArgs) -> Result<String> {
    let (p, q, eps) = match (a.p, a.q, a.eps, a.pi) {
        (None, None, None, Some(pi)) => {
            let eps = epsilon_from_pi(pi)?;
            (1.0 - pi, 1.0 - pi, eps)
        }
        (None, None, Some(eps), None) => {
            let (p, q) = optimal_pq(eps)?;
            (p, q, eps)
        }
        (Some(p), Some(q), None, None) => (p, q, epsilon_of(p, q)),
        (Some(p), None, Some(eps), None) => {
            let (lb, ub) = feasible_bounds(p, eps)?;
            return Ok(format!(
                "p        {p:.6}\nepsilon  {eps:.4}\nLB(p)    {lb:.6}\nUB(p)    {ub:.6}\n\
                 q is feasible at this epsilon iff LB(p) <= q <= UB(p)\n"
            ));
        }
        _ => bail!("give exactly one of: --pi; --eps; --p and --q; --p and --eps"),
    };
    let mut out = format!("epsilon  {eps:.4}\np        {p:.6}\nq        {q:.6}\n");
    if p == q {
        out.push_str(&format!("pi       {:.6}\n", 1.0 - p));
    }
    if eps.is_finite() && p > 0.0 && p < 1.0 {
        let (lb, ub) = feasible_bounds(p, eps)?;
        out.push_str(&format!("LB(p)    {lb:.6}\nUB(p)    {ub:.6}\n"));
    }
    Ok(out)
}
