//! The five subcommands. Each is a pure function of its configuration and
//! inputs; files go under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use kkm_core::cost::{predict, CostPhase};
use kkm_core::distributed::{phase, run_clustering, Algorithm, DistOptions, Fault};
use kkm_core::fabric::CommLedger;
use kkm_core::linalg::DenseMatrix;
use kkm_core::oracle::{fit_full, fit_sliding_window, ClusterTrace};
use kkm_core::{KkmError, Scalar};

use crate::config::{AlgoChoice, Precision, RunConfig, DEFAULT_D, DEFAULT_N};
use crate::error::CliError;
use crate::libsvm::{parse_libsvm, write_libsvm, ParseOptions};
use crate::metrics::adjusted_rand_index;
use crate::synth::generate;

/// Sliding-window block width when none is configured.
pub const DEFAULT_BLOCK: usize = 64;
/// Relative tolerance on shifted objectives in `verify`.
pub const OBJECTIVE_RTOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub points: DenseMatrix<f64>,
    /// Ground-truth class ids, when known.
    pub truth: Option<Vec<u32>>,
}

/// Reads `--data` (with `n`/`d` as sampling caps) or generates the synthetic
/// set described by the config.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            let opts = ParseOptions {
                dim: None,
                d_limit: cfg.d,
                n_limit: cfg.n,
                seed: cfg.seed,
            };
            let data = parse_libsvm(BufReader::new(file), &opts)?;
            let truth = data.class_ids();
            Ok(Dataset {
                points: data.points,
                truth: Some(truth),
            })
        }
        None => {
            let s = generate(
                cfg.gen,
                cfg.n.unwrap_or(DEFAULT_N),
                cfg.d.unwrap_or(DEFAULT_D),
                cfg.k,
                cfg.seed,
            )?;
            Ok(Dataset {
                points: s.points,
                truth: Some(s.labels),
            })
        }
    }
}

/// Rejects configurations the selected algorithm cannot partition.
pub fn check_preconditions(cfg: &RunConfig, n: usize) -> Result<(), CliError> {
    cfg.fit_config().validate(n)?;
    if let AlgoChoice::Dist(alg) = cfg.algo {
        alg.check(n, cfg.k, cfg.ranks)?;
    }
    if cfg.algo == AlgoChoice::Window {
        if let Some(b) = cfg.block {
            if b > n {
                return Err(KkmError::InvalidConfig(format!("window block {b} exceeds n={n}")).into());
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Execution<T> {
    pub trace: ClusterTrace<T>,
    pub ledger: CommLedger,
}

/// Runs the configured algorithm on `points` converted to `T`.
pub fn execute<T: Scalar>(
    cfg: &RunConfig,
    points: &DenseMatrix<f64>,
    fault: Option<Fault>,
) -> Result<Execution<T>, CliError> {
    check_preconditions(cfg, points.rows())?;
    let pts: DenseMatrix<T> = points.cast();
    let mut fit = cfg.fit_config();
    Ok(match cfg.algo {
        AlgoChoice::Seq => Execution {
            trace: fit_full(&pts, &fit)?,
            ledger: CommLedger::empty(1),
        },
        AlgoChoice::Window => {
            fit.window_block = Some(cfg.block.unwrap_or(DEFAULT_BLOCK.min(points.rows())));
            Execution {
                trace: fit_sliding_window(&pts, &fit)?,
                ledger: CommLedger::empty(1),
            }
        }
        AlgoChoice::Dist(alg) => {
            let opts = DistOptions {
                schedule: cfg.schedule,
                fault,
            };
            let out = run_clustering(alg, &pts, &fit, cfg.ranks, &opts)?;
            Execution {
                trace: out.trace,
                ledger: out.ledger,
            }
        }
    })
}

pub fn assignments_csv(labels: &[u32]) -> String {
    let mut out = String::from("point,cluster\n");
    for (j, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{j},{l}");
    }
    out
}

/// Iterations are numbered from 1.
pub fn trace_csv<T: Scalar>(trace: &ClusterTrace<T>) -> String {
    let mut out = String::from("iteration,shifted_objective,changed_points\n");
    for (t, it) in trace.iterations.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", t + 1, it.shifted_objective, it.changed);
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub n: usize,
    pub d: usize,
    pub iterations: usize,
    pub final_objective: f64,
    pub total_words: usize,
    /// Agreement with the ground truth, when known.
    pub ari: Option<f64>,
}

fn run_typed<T: Scalar>(cfg: &RunConfig, data: &Dataset) -> Result<RunSummary, CliError> {
    let exec = execute::<T>(cfg, &data.points, None)?;
    let labels = exec
        .trace
        .final_assignments()
        .map(|a| a.as_slice().to_vec())
        .unwrap_or_default();
    write_file(&cfg.out, "assignments.csv", &assignments_csv(&labels))?;
    write_file(&cfg.out, "trace.csv", &trace_csv(&exec.trace))?;
    write_file(&cfg.out, "ledger.csv", &exec.ledger.to_csv(&phase::STANDARD))?;
    Ok(RunSummary {
        n: data.points.rows(),
        d: data.points.cols(),
        iterations: exec.trace.iterations_run(),
        final_objective: exec
            .trace
            .objectives()
            .last()
            .and_then(|v| v.to_f64())
            .unwrap_or(f64::NAN),
        total_words: exec.ledger.total().words,
        ari: data.truth.as_ref().map(|t| adjusted_rand_index(t, &labels)),
    })
}

/// Writes `assignments.csv`, `trace.csv` and `ledger.csv`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let data = load_dataset(cfg)?;
    match cfg.precision {
        Precision::F64 => run_typed::<f64>(cfg, &data),
        Precision::F32 => run_typed::<f32>(cfg, &data),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// First diverging iteration (1-based) and what diverged.
    Fail { iteration: usize, reason: String },
    Skip(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyCase {
    pub algo: AlgoChoice,
    pub ranks: usize,
    pub verdict: Verdict,
}

impl std::fmt::Display for VerifyCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (algo, p) = (self.algo, self.ranks);
        match &self.verdict {
            Verdict::Pass => write!(f, "PASS {algo} P={p}"),
            Verdict::Fail { iteration, reason } => write!(f, "FAIL {algo} P={p}: at iteration {iteration} ({reason})"),
            Verdict::Skip(why) => write!(f, "SKIP {algo} P={p}: {why}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub cases: Vec<VerifyCase>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| !matches!(c.verdict, Verdict::Fail { .. }))
    }

    pub fn lines(&self) -> Vec<String> {
        self.cases.iter().map(|c| c.to_string()).collect()
    }
}

fn objectives_agree(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= OBJECTIVE_RTOL * a.abs().max(b.abs())
}

/// Compares two traces iteration by iteration.
pub fn compare_traces<T: Scalar>(oracle: &ClusterTrace<T>, got: &ClusterTrace<T>) -> Verdict {
    for (t, (a, b)) in oracle.iterations.iter().zip(&got.iterations).enumerate() {
        if a.assignments != b.assignments {
            return Verdict::Fail {
                iteration: t + 1,
                reason: "assignments differ".into(),
            };
        }
        let (oa, ob) = (
            a.shifted_objective.to_f64().unwrap_or(f64::NAN),
            b.shifted_objective.to_f64().unwrap_or(f64::NAN),
        );
        if !objectives_agree(oa, ob) {
            return Verdict::Fail {
                iteration: t + 1,
                reason: format!("objective {ob} vs {oa}"),
            };
        }
    }
    if oracle.iterations.len() != got.iterations.len() {
        return Verdict::Fail {
            iteration: oracle.iterations.len().min(got.iterations.len()) + 1,
            reason: format!("{} iterations vs {}", got.iterations.len(), oracle.iterations.len()),
        };
    }
    Verdict::Pass
}

fn verify_typed<T: Scalar>(
    base: &RunConfig,
    points: &DenseMatrix<f64>,
    algos: &[AlgoChoice],
    rank_list: &[usize],
    fault: Option<Fault>,
) -> Result<VerifyReport, CliError> {
    let oracle_cfg = RunConfig {
        algo: AlgoChoice::Seq,
        ranks: 1,
        ..base.clone()
    };
    let oracle = execute::<T>(&oracle_cfg, points, None)?.trace;
    let mut cases = Vec::new();
    for &algo in algos {
        // Sequential variants have no rank count to sweep.
        let ranks: &[usize] = match algo {
            AlgoChoice::Dist(_) => rank_list,
            _ => &[1],
        };
        for &p in ranks {
            let cfg = RunConfig {
                algo,
                ranks: p,
                ..base.clone()
            };
            let verdict = match check_preconditions(&cfg, points.rows()) {
                Err(e) => Verdict::Skip(e.to_string()),
                Ok(()) => compare_traces(&oracle, &execute::<T>(&cfg, points, fault)?.trace),
            };
            cases.push(VerifyCase {
                algo,
                ranks: p,
                verdict,
            });
        }
    }
    Ok(VerifyReport { cases })
}

/// Runs the sequential oracle, then every (algorithm, P) pair against it.
pub fn cmd_verify(
    base: &RunConfig,
    algos: &[AlgoChoice],
    rank_list: &[usize],
    fault: Option<Fault>,
) -> Result<VerifyReport, CliError> {
    let data = load_dataset(base)?;
    match base.precision {
        Precision::F64 => verify_typed::<f64>(base, &data.points, algos, rank_list, fault),
        Precision::F32 => verify_typed::<f32>(base, &data.points, algos, rank_list, fault),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub phase: CostPhase,
    pub ranks: usize,
    /// Largest per-rank word count, per iteration for repeating phases.
    pub measured_words: f64,
    pub predicted_words: f64,
}

impl BenchRow {
    pub fn ratio(&self) -> f64 {
        if self.predicted_words == 0.0 && self.measured_words == 0.0 {
            1.0
        } else {
            self.measured_words / self.predicted_words
        }
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("algorithm,phase,P,measured_words,predicted_words,ratio\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.algorithm,
            r.phase,
            r.ranks,
            r.measured_words,
            r.predicted_words,
            r.ratio()
        );
    }
    out
}

/// Measured words of every cost phase an algorithm has a prediction for.
pub fn bench_rows<T: Scalar>(
    algorithm: Algorithm,
    ranks: usize,
    points: &DenseMatrix<f64>,
    cfg: &RunConfig,
) -> Result<Vec<BenchRow>, CliError> {
    let cfg = RunConfig {
        algo: AlgoChoice::Dist(algorithm),
        ranks,
        ..cfg.clone()
    };
    let exec = execute::<T>(&cfg, points, None)?;
    let (n, d) = points.shape();
    let iterations = exec.trace.iterations_run().max(1) as f64;
    let mut rows = Vec::new();
    for cp in CostPhase::ALL {
        let predicted = match predict(algorithm, cp, n, d, cfg.k, ranks) {
            Ok(p) => p.words,
            Err(KkmError::UnknownCostPair { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let mut measured = exec.ledger.max_rank_words(cp.ledger_phases()) as f64;
        if cp.per_iteration() {
            measured /= iterations;
        }
        rows.push(BenchRow {
            algorithm,
            phase: cp,
            ranks,
            measured_words: measured,
            predicted_words: predicted,
        });
    }
    Ok(rows)
}

/// Sweeps algorithms and rank counts; infeasible pairs are reported on
/// stderr and left out. Writes `bench.csv`.
pub fn cmd_bench(base: &RunConfig, algos: &[Algorithm], rank_list: &[usize]) -> Result<Vec<BenchRow>, CliError> {
    let data = load_dataset(base)?;
    let mut rows = Vec::new();
    for &alg in algos {
        for &p in rank_list {
            if let Err(e) = alg.check(data.points.rows(), base.k, p) {
                eprintln!("skip {alg} P={p}: {e}");
                continue;
            }
            rows.extend(match base.precision {
                Precision::F64 => bench_rows::<f64>(alg, p, &data.points, base)?,
                Precision::F32 => bench_rows::<f32>(alg, p, &data.points, base)?,
            });
        }
    }
    write_file(&base.out, "bench.csv", &bench_csv(&rows))?;
    Ok(rows)
}

/// Cost-model table over the given rank counts; pairs without a formula
/// and non-square grids are left out.
pub fn predict_csv(n: usize, d: usize, k: usize, rank_list: &[usize]) -> Result<String, CliError> {
    let mut out = String::from("algorithm,phase,n,d,k,P,latency,words\n");
    for alg in Algorithm::ALL {
        for &p in rank_list {
            if alg.grid(p).is_err() {
                continue;
            }
            for cp in CostPhase::ALL {
                match predict(alg, cp, n, d, k, p) {
                    Ok(t) => {
                        let _ = writeln!(out, "{alg},{cp},{n},{d},{k},{p},{},{}", t.latency, t.words);
                    }
                    Err(KkmError::UnknownCostPair { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    Ok(out)
}

/// Writes `predict.csv` and returns its contents.
pub fn cmd_predict(base: &RunConfig, rank_list: &[usize]) -> Result<String, CliError> {
    let csv = predict_csv(
        base.n.unwrap_or(DEFAULT_N),
        base.d.unwrap_or(DEFAULT_D),
        base.k,
        rank_list,
    )?;
    write_file(&base.out, "predict.csv", &csv)?;
    Ok(csv)
}

/// Writes the configured dataset as `data.libsvm`, labels being class ids.
pub fn cmd_gen(base: &RunConfig) -> Result<Dataset, CliError> {
    let data = load_dataset(base)?;
    let labels: Vec<f64> = data
        .truth
        .as_ref()
        .map(|t| t.iter().map(|&l| l as f64).collect())
        .unwrap_or_else(|| vec![0.0; data.points.rows()]);
    write_file(&base.out, "data.libsvm", &write_libsvm(&data.points, &labels))?;
    Ok(data)
}
