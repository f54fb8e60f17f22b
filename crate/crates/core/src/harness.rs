//! Experiment runner: seeding, replications and CSV/JSON persistence.
//!
//! Trace CSV columns: `t, ape, aqd, coordinated, msgs_total, est_err_m,
//! cost_agent_0..N`. Missing values are empty fields. Every file starts with
//! `#` comment lines holding the code version and the resolved config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{make_algorithm, AlgorithmKind};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::mdp::QTable;
use crate::oracle::Oracle;
use crate::rng::{replication_seed, stream, Stream};
use crate::sim::{simulate, MetricTrace, TraceRow};
use crate::wireless::{init_topology, WirelessEnv};

pub const VERSION: &str = concat!("mamemq ", env!("CARGO_PKG_VERSION"));

/// Environment of a run seeded with `seed`.
pub fn build_env(cfg: &ExperimentConfig, seed: u64) -> Result<WirelessEnv> {
    let topo = init_topology(&cfg.network, &mut stream(seed, Stream::Topology))?;
    WirelessEnv::new(cfg.network.clone(), topo)
}

/// Oracle for the topology of `env`, when it fits the budget.
pub fn build_oracle(cfg: &ExperimentConfig, env: &WirelessEnv) -> Result<Option<Oracle>> {
    Oracle::build(&cfg.network, &env.topology, cfg.schedule.gamma, cfg.run.oracle_budget)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: MetricTrace,
    pub oracle: Option<Oracle>,
    /// Final learned joint values over the oracle's reachable states.
    pub final_q: Option<QTable>,
}

/// One full run of `kind` with `seed`.
pub fn run_once(cfg: &ExperimentConfig, kind: AlgorithmKind, seed: u64) -> Result<RunOutcome> {
    let mut env = build_env(cfg, seed)?;
    let oracle = build_oracle(cfg, &env)?;
    let mut algo = make_algorithm(kind, cfg, &env, seed)?;
    let trace = simulate(cfg, &mut env, algo.as_mut(), oracle.as_ref(), seed)?;
    let final_q = oracle.as_ref().map(|o| o.tabulate(&|s, a| algo.joint_value(s, a)));
    Ok(RunOutcome { trace, oracle, final_q })
}

fn header(out: &mut impl Write, cfg: &ExperimentConfig, extra: &str) -> Result<()> {
    writeln!(out, "# {VERSION}")?;
    writeln!(out, "# config {}", serde_json::to_string(cfg)?)?;
    if !extra.is_empty() {
        writeln!(out, "# {extra}")?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a trace as CSV.
pub fn write_trace_csv(out: impl Write, cfg: &ExperimentConfig, trace: &MetricTrace) -> Result<()> {
    let mut out = BufWriter::new(out);
    header(
        &mut out,
        cfg,
        &format!("algorithm {} seed {} stride {}", trace.summary.algorithm, trace.summary.seed, trace.stride),
    )?;
    let mut w = csv::Writer::from_writer(out);
    let mut cols: Vec<String> = ["t", "ape", "aqd", "coordinated", "msgs_total", "est_err_m"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..cfg.network.n_tx).map(|i| format!("cost_agent_{i}")));
    w.write_record(&cols)?;
    for r in &trace.rows {
        let mut rec = vec![
            r.t.to_string(),
            opt(r.ape),
            opt(r.aqd),
            (r.coordinated as u8).to_string(),
            r.msgs_total.to_string(),
            opt(r.est_err_m),
        ];
        rec.extend(r.costs.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a joint table over the oracle's reachable states.
pub fn write_joint_table_csv(out: impl Write, cfg: &ExperimentConfig, oracle: &Oracle, q: &QTable) -> Result<()> {
    let mut out = BufWriter::new(out);
    header(&mut out, cfg, "joint action values over reachable joint states")?;
    let mut w = csv::Writer::from_writer(out);
    let n = oracle.joint.n_agents;
    let mut cols = vec!["state".to_string()];
    cols.extend((0..n).map(|i| format!("s_agent_{i}")));
    cols.extend((0..q.n_actions()).map(|j| format!("q_{j}")));
    w.write_record(&cols)?;
    for (k, s) in oracle.states.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(s.iter().map(|x| x.to_string()));
        rec.extend(q.row(k).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the optimal joint policy with the validity flag of every joint action.
pub fn write_policy_csv(out: impl Write, cfg: &ExperimentConfig, oracle: &Oracle) -> Result<()> {
    let mut out = BufWriter::new(out);
    header(&mut out, cfg, "optimal joint policy")?;
    let mut w = csv::Writer::from_writer(out);
    let n = oracle.joint.n_agents;
    let mut cols = vec!["state".to_string()];
    cols.extend((0..n).map(|i| format!("s_agent_{i}")));
    cols.push("action".into());
    cols.extend((0..n).map(|i| format!("a_agent_{i}")));
    let n_a = oracle.joint.n_joint_actions();
    cols.extend((0..n_a).map(|j| format!("valid_{j}")));
    w.write_record(&cols)?;
    for (k, s) in oracle.states.iter().enumerate() {
        let a = oracle.policy.action_of[k];
        let mut rec = vec![k.to_string()];
        rec.extend(s.iter().map(|x| x.to_string()));
        rec.push(a.to_string());
        rec.extend(oracle.joint.decode_action(a).iter().map(|x| x.to_string()));
        rec.extend(oracle.mask.row(k).iter().map(|&v| (v as u8).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub t: u64,
    pub ape: Option<MeanStd>,
    pub aqd: Option<MeanStd>,
    pub coordinated: Option<MeanStd>,
    pub msgs_total: Option<MeanStd>,
    pub est_err_m: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub version: String,
    pub algorithm: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub final_ape: Option<MeanStd>,
    pub final_aqd: Option<MeanStd>,
    pub runtime_s: Option<MeanStd>,
    pub coordinated_fraction: Option<MeanStd>,
    pub msgs_total: Option<MeanStd>,
    pub rows: Vec<AggregateRow>,
}

/// Mean/std of every metric across replication traces sharing one grid.
pub fn aggregate(cfg: &ExperimentConfig, algorithm: &str, seeds: Vec<u64>, traces: &[MetricTrace]) -> Result<Aggregate> {
    let n_rows = traces.first().map_or(0, |t| t.rows.len());
    if traces.iter().any(|t| t.rows.len() != n_rows) {
        return Err(Error::ShapeMismatch("replication traces differ in length".into()));
    }
    let col = |f: &dyn Fn(&TraceRow) -> Option<f64>, k: usize| MeanStd::of(traces.iter().filter_map(|t| f(&t.rows[k])));
    let rows = (0..n_rows)
        .map(|k| AggregateRow {
            t: traces[0].rows[k].t,
            ape: col(&|r| r.ape, k),
            aqd: col(&|r| r.aqd, k),
            coordinated: col(&|r| Some(r.coordinated as u8 as f64), k),
            msgs_total: col(&|r| Some(r.msgs_total as f64), k),
            est_err_m: col(&|r| r.est_err_m, k),
        })
        .collect();
    Ok(Aggregate {
        version: VERSION.to_string(),
        algorithm: algorithm.to_string(),
        seed: cfg.run.seed,
        seeds,
        config: cfg.clone(),
        final_ape: MeanStd::of(traces.iter().filter_map(|t| t.summary.final_ape)),
        final_aqd: MeanStd::of(traces.iter().filter_map(|t| t.summary.final_aqd)),
        runtime_s: MeanStd::of(traces.iter().map(|t| t.summary.runtime_s)),
        coordinated_fraction: MeanStd::of(traces.iter().map(|t| t.summary.coordinated_fraction)),
        msgs_total: MeanStd::of(traces.iter().map(|t| t.summary.messages.total() as f64)),
        rows,
    })
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFiles {
    pub traces: Vec<PathBuf>,
    pub final_tables: Vec<PathBuf>,
    pub aggregate: PathBuf,
}

/// Runs every replication in parallel and writes one trace CSV per
/// replication, the final joint table when the oracle is available, and one
/// aggregate JSON.
pub fn run_experiment(cfg: &ExperimentConfig, kind: AlgorithmKind, out_dir: &Path) -> Result<ExperimentFiles> {
    cfg.validate()?;
    if cfg.run.replications == 0 {
        return Err(Error::Config("run.replications must be at least 1".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let seeds: Vec<u64> = (0..cfg.run.replications as u64)
        .map(|r| replication_seed(cfg.run.seed, r))
        .collect();
    let outcomes = seeds
        .par_iter()
        .map(|&s| run_once(cfg, kind, s))
        .collect::<Result<Vec<_>>>()?;

    let name = kind.as_str();
    let mut files = ExperimentFiles {
        traces: Vec::new(),
        final_tables: Vec::new(),
        aggregate: out_dir.join(format!("{name}_aggregate.json")),
    };
    for (r, o) in outcomes.iter().enumerate() {
        let path = out_dir.join(format!("{name}_rep{r}.csv"));
        write_trace_csv(File::create(&path)?, cfg, &o.trace)?;
        files.traces.push(path);
        if let (Some(oracle), Some(q)) = (&o.oracle, &o.final_q) {
            let path = out_dir.join(format!("{name}_rep{r}_q.csv"));
            write_joint_table_csv(File::create(&path)?, cfg, oracle, q)?;
            files.final_tables.push(path);
        }
    }
    let traces: Vec<MetricTrace> = outcomes.into_iter().map(|o| o.trace).collect();
    let agg = aggregate(cfg, name, seeds, &traces)?;
    let mut out = BufWriter::new(File::create(&files.aggregate)?);
    serde_json::to_writer_pretty(&mut out, &agg)?;
    out.flush()?;
    Ok(files)
}

/// Solves the joint MDP for replication 0's topology and writes the optimal
/// policy and values. Returns `None` when the joint space exceeds the budget.
pub fn dump_oracle(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Option<(PathBuf, PathBuf)>> {
    cfg.validate()?;
    let env = build_env(cfg, replication_seed(cfg.run.seed, 0))?;
    let Some(oracle) = build_oracle(cfg, &env)? else {
        return Ok(None);
    };
    std::fs::create_dir_all(out_dir)?;
    let policy = out_dir.join("oracle_policy.csv");
    let values = out_dir.join("oracle_q.csv");
    write_policy_csv(File::create(&policy)?, cfg, &oracle)?;
    write_joint_table_csv(File::create(&values)?, cfg, &oracle, &oracle.q)?;
    Ok(Some((policy, values)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_two_points() {
        let m = MeanStd::of([0.0, 2.0]).unwrap();
        assert_eq!((m.mean, m.std, m.n), (1.0, 1.0, 2));
        assert!(MeanStd::of(std::iter::empty()).is_none());
    }
}
