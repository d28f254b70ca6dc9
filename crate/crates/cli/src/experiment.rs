//! Simulation sweeps: every `(policy, seed)` cell of a spec.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ehsched::harvest::{gen_deterministic, gen_markov, gen_poisson, DensityProfile};
use ehsched::metrics::{
    density, efficiency_checkpoints, rr_efficiency_prediction, theorem4_lower_bound,
    urop_lower_bound, EfficiencyReport, Normalization,
};
use ehsched::oracle::offline_optimum;
use ehsched::{run_simulation, HarvestTrace, NetworkConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::{ExperimentSpec, Process, SpecError};
use crate::OutputFormat;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("simulation failed for {policy}, seed {seed}: {source}")]
    Simulation {
        policy: String,
        seed: u64,
        source: ehsched::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

/// One `(policy, seed)` result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub policy: String,
    pub process: String,
    pub m: usize,
    pub k: usize,
    pub horizon: usize,
    /// Nominal network density of the profile.
    pub density: f64,
    pub seed: u64,
    pub efficiency: f64,
    pub jain: Option<f64>,
    pub bound_t4: f64,
    /// `None` when the density lies outside `(0, 1)`.
    pub bound_t5: Option<f64>,
    pub rr_prediction: f64,
    pub realized_density: f64,
    pub total_sent: u64,
    pub opt_throughput: u64,
    pub normalization: Normalization,
    pub packet_bound: u64,
    pub oracle_opt: Option<u64>,
    pub idle_channel_slots: usize,
    pub violations: usize,
    pub sent_per_node: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub policy: String,
    pub seed: u64,
    pub slot: usize,
    pub efficiency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    pub mean_efficiency: f64,
    pub min_efficiency: f64,
    pub mean_jain: Option<f64>,
    pub mean_bound_t4: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub name: String,
    pub spec: ExperimentSpec,
    pub rows: Vec<RunRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub summary: Vec<PolicySummary>,
    #[serde(skip)]
    pub slot_logs: Vec<(String, u64, String)>,
}

impl ExperimentResults {
    pub fn rows_for(&self, policy: &str) -> impl Iterator<Item = &RunRow> + '_ {
        let policy = policy.to_string();
        self.rows.iter().filter(move |r| r.policy == policy)
    }

    pub fn summary_for(&self, policy: &str) -> Option<&PolicySummary> {
        self.summary.iter().find(|s| s.policy == policy)
    }
}

pub fn generate_trace(
    process: &Process,
    cfg: &NetworkConfig,
    profile: &DensityProfile,
    seed: u64,
) -> ehsched::Result<HarvestTrace> {
    match process {
        Process::Deterministic => gen_deterministic(cfg, profile),
        Process::Poisson => gen_poisson(cfg, profile, seed),
        Process::Markov { .. } => {
            let params = process.markov_params().expect("markov process has params");
            gen_markov(cfg, profile, &params, seed)
        }
    }
}

struct Cell {
    policy_idx: usize,
    seed_idx: usize,
    row: RunRow,
    checkpoints: Vec<Checkpoint>,
    slot_log: Option<String>,
}

/// Run every `(policy, seed)` cell; seeds execute in parallel, results are
/// ordered by policy (spec order) and then seed (spec order).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults, RunError> {
    spec.validate()?;
    spec.validate_for_simulation()?;
    let cfg = spec.network_config()?;
    let profile = spec.density_profile()?;
    let nominal_d = profile.network_density();
    let bound_t5 = urop_lower_bound(&cfg, nominal_d).ok();
    let checkpoints = spec.checkpoints();
    let seeds = spec.run.seeds.list();
    let want_logs = spec.output.slot_logs.is_some();

    let per_seed: Vec<Vec<Cell>> = seeds
        .par_iter()
        .enumerate()
        .map(|(seed_idx, &seed)| -> Result<Vec<Cell>, RunError> {
            let fail = |policy: &str, source| RunError::Simulation {
                policy: policy.to_string(),
                seed,
                source,
            };
            let trace = generate_trace(&spec.process, &cfg, &profile, seed)
                .map_err(|e| fail("trace", e))?;
            let oracle = if spec.run.use_oracle_norm {
                Some(offline_optimum(&trace, &cfg).map_err(|e| fail("oracle", e))?)
            } else {
                None
            };
            let realized = density(&trace, &cfg);
            let rr_pred =
                rr_efficiency_prediction(&trace, &cfg, 0).map_err(|e| fail("rr prediction", e))?;

            spec.policies
                .iter()
                .enumerate()
                .map(|(policy_idx, p)| {
                    let label = p.to_string();
                    let mut policy = p.build(cfg.nodes, cfg.channels, seed);
                    let run = run_simulation(&cfg, &trace, policy.as_mut())
                        .map_err(|e| fail(&label, e))?
                        .with_seed(seed);
                    let report = EfficiencyReport::new(&run, &trace, oracle);
                    let slot_log = want_logs.then(|| {
                        let mut buf = Vec::new();
                        run.write_slot_log(&mut buf).expect("writing to memory");
                        String::from_utf8(buf).expect("slot log is ascii")
                    });
                    Ok(Cell {
                        policy_idx,
                        seed_idx,
                        checkpoints: efficiency_checkpoints(&run, &trace, &checkpoints)
                            .into_iter()
                            .map(|(slot, efficiency)| Checkpoint {
                                policy: label.clone(),
                                seed,
                                slot,
                                efficiency,
                            })
                            .collect(),
                        row: RunRow {
                            policy: label,
                            process: spec.process.name().to_string(),
                            m: cfg.nodes,
                            k: cfg.channels,
                            horizon: cfg.horizon,
                            density: nominal_d,
                            seed,
                            efficiency: report.efficiency,
                            jain: report.jain,
                            bound_t4: theorem4_lower_bound(&run, &trace),
                            bound_t5,
                            rr_prediction: rr_pred,
                            realized_density: realized,
                            total_sent: report.total_sent,
                            opt_throughput: report.opt_throughput,
                            normalization: report.normalization,
                            packet_bound: report.packet_bound,
                            oracle_opt: report.oracle_opt,
                            idle_channel_slots: run.idle_channel_slots(),
                            violations: run.violations.len(),
                            sent_per_node: run.sent_per_node(),
                        },
                        slot_log,
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut cells: Vec<Cell> = per_seed.into_iter().flatten().collect();
    cells.sort_by_key(|c| (c.policy_idx, c.seed_idx));

    let mut rows = Vec::with_capacity(cells.len());
    let mut cps = Vec::new();
    let mut slot_logs = Vec::new();
    for c in cells {
        if let Some(log) = c.slot_log {
            slot_logs.push((c.row.policy.clone(), c.row.seed, log));
        }
        cps.extend(c.checkpoints);
        rows.push(c.row);
    }
    let summary = summarize(spec, &rows);
    Ok(ExperimentResults {
        name: spec.name().to_string(),
        spec: spec.clone(),
        rows,
        checkpoints: cps,
        summary,
        slot_logs,
    })
}

fn summarize(spec: &ExperimentSpec, rows: &[RunRow]) -> Vec<PolicySummary> {
    let mut labels: Vec<String> = spec.policies.iter().map(|p| p.to_string()).collect();
    labels.dedup();
    labels
        .into_iter()
        .map(|policy| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.policy == policy).collect();
            let n = mine.len() as f64;
            let jains: Vec<f64> = mine.iter().filter_map(|r| r.jain).collect();
            PolicySummary {
                runs: mine.len(),
                mean_efficiency: mine.iter().map(|r| r.efficiency).sum::<f64>() / n,
                min_efficiency: mine
                    .iter()
                    .map(|r| r.efficiency)
                    .fold(f64::INFINITY, f64::min),
                mean_jain: (!jains.is_empty())
                    .then(|| jains.iter().sum::<f64>() / jains.len() as f64),
                mean_bound_t4: mine.iter().map(|r| r.bound_t4).sum::<f64>() / n,
                violations: mine.iter().map(|r| r.violations).sum(),
                policy,
            }
        })
        .collect()
}

pub const CSV_HEADER: &str =
    "policy,process,m,k,N,D,seed,efficiency,jain,bound_t4,bound_t5,rr_prediction";

fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub fn results_csv(rows: &[RunRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.process,
            r.m,
            r.k,
            r.horizon,
            fmt_f(r.density),
            r.seed,
            fmt_f(r.efficiency),
            fmt_opt(r.jain),
            fmt_f(r.bound_t4),
            fmt_opt(r.bound_t5),
            fmt_f(r.rr_prediction),
        )
        .expect("writing to a string");
    }
    out
}

pub fn checkpoints_csv(cps: &[Checkpoint]) -> String {
    let mut out = String::from("policy,seed,slot,efficiency\n");
    for c in cps {
        writeln!(
            out,
            "{},{},{},{}",
            c.policy,
            c.seed,
            c.slot,
            fmt_f(c.efficiency)
        )
        .expect("writing to a string");
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    let err = |source| RunError::Write {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(err)?;
    }
    std::fs::write(path, contents).map_err(err)
}

/// Write the result files selected by `format` under `out_dir`; returns
/// the paths written.
pub fn write_outputs(
    results: &ExperimentResults,
    out_dir: &Path,
    format: Option<OutputFormat>,
) -> Result<Vec<PathBuf>, RunError> {
    let out = &results.spec.output;
    let mut written = Vec::new();
    if format != Some(OutputFormat::Json) {
        let p = out_dir.join(&out.csv);
        write_file(&p, &results_csv(&results.rows))?;
        written.push(p);
        if !results.checkpoints.is_empty() {
            let p = out_dir.join(&out.checkpoints);
            write_file(&p, &checkpoints_csv(&results.checkpoints))?;
            written.push(p);
        }
    }
    if format != Some(OutputFormat::Csv) {
        let p = out_dir.join(&out.json);
        let json = serde_json::to_string_pretty(results).expect("results serialize");
        write_file(&p, &(json + "\n"))?;
        written.push(p);
    }
    if let Some(dir) = &out.slot_logs {
        for (policy, seed, log) in &results.slot_logs {
            let safe: String = policy
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect();
            let p = out_dir.join(dir).join(format!("{safe}_seed{seed}.csv"));
            write_file(&p, log)?;
            written.push(p);
        }
    }
    Ok(written)
}
