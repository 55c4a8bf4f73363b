//! Paired multi-start runs and their summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use nashdyn::classify::{check_boundary_gne, classify_with, FixedPointReport, Verdict};
use nashdyn::constrained::{run_constrained, Location};
use nashdyn::dynamics::{run, IterateTrace, Status};
use nashdyn::{Game, JointPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, Method};
use crate::error::{BenchError, Result};
use crate::io::write_trace_csv;

/// Uniform sample from the box `[lo, hi)` drawn from stream `run` of the
/// generator keyed by `seed`. Independent of how runs are scheduled.
pub fn sample_uniform(seed: u64, run: u64, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    DVector::from_iterator(
        lo.len(),
        lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)),
    )
}

/// Hex SHA-256 of the initial points' bit patterns.
pub fn init_digest(points: &[DVector<f64>]) -> String {
    let mut h = Sha256::new();
    for p in points {
        h.update((p.len() as u64).to_le_bytes());
        for v in p.iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub z0: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub final_point: Vec<f64>,
    pub final_omega_norm: f64,
    /// Classification of the terminal point of converged or stationary runs.
    pub report: Option<FixedPointReport>,
    /// Solver error, or classification error of the terminal point.
    pub error: Option<String>,
    pub warnings: usize,
}

impl RunRecord {
    pub fn verdict(&self) -> Option<Verdict> {
        self.report.as_ref().map(|r| r.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// First member's terminal point.
    pub point: Vec<f64>,
    pub verdict: Verdict,
    pub count: usize,
    /// Verdict tally over all members.
    pub verdicts: BTreeMap<String, usize>,
    pub runs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterStats {
    pub min: usize,
    pub median: f64,
    pub max: usize,
}

/// Iteration differences `iters(method) − iters(reference)` on matched inits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifferences {
    pub reference: String,
    pub median: f64,
    pub differences: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub n_runs: usize,
    pub n_converged: usize,
    pub n_stationary: usize,
    pub n_diverged: usize,
    pub n_maxiter: usize,
    /// Runs ended by an evaluation or numeric error.
    pub n_failed: usize,
    /// Over all runs; unfinished runs count with their iteration budget.
    pub iterations: IterStats,
    pub clusters: Vec<Cluster>,
    pub paired: Option<PairedDifferences>,
    pub runs: Vec<RunRecord>,
}

impl AlgorithmSummary {
    pub fn median_iterations(&self) -> f64 {
        self.iterations.median
    }

    pub fn converged_runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.status == Status::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Seconds since the Unix epoch. The only field that varies between
    /// identical sweeps.
    pub generated_at: u64,
    pub problem: String,
    pub seed: u64,
    pub count: usize,
    pub init_digest: String,
    pub reference: Option<String>,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl SweepSummary {
    pub fn algorithm(&self, method: Method) -> Option<&AlgorithmSummary> {
        self.algorithms
            .iter()
            .find(|a| a.algorithm == method.as_str())
    }

    /// JSON with the timestamp zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.generated_at = 0;
        serde_json::to_string(&c).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Write `<dir>/<method>_<run>.csv` for every run.
    pub trace_dir: Option<PathBuf>,
    /// Return the full traces alongside the summary.
    pub keep_traces: bool,
}

pub struct SweepOutput {
    pub summary: SweepSummary,
    /// `(method, run, trace)` when [`SweepOptions::keep_traces`] is set.
    pub traces: Vec<(Method, usize, IterateTrace)>,
}

impl Experiment {
    /// Run `method` from `z0` with its configured solver settings.
    pub fn run_method(&self, method: Method, z0: &DVector<f64>) -> nashdyn::Result<IterateTrace> {
        let cfg = self.solver(method).ok_or_else(|| {
            nashdyn::Error::Argument(format!("{method} is not part of this experiment"))
        })?;
        let (n, m) = self.dims();
        let start = JointPoint::new(z0.clone(), n, m)?;
        match method {
            Method::Plain(a) => run(a, &self.game, &start, cfg),
            Method::SecondConstrained => match &self.set {
                Some(set) => run_constrained(&self.game, set, &start, cfg),
                None => Err(nashdyn::Error::Argument(
                    "second_constrained needs a constraint".into(),
                )),
            },
        }
    }

    /// Classify a terminal point the way `method` should be judged: boundary
    /// points of the projected solver by the normal-cone test, everything
    /// else by the unconstrained test.
    pub fn classify_terminal(
        &self,
        method: Method,
        z: &DVector<f64>,
    ) -> nashdyn::Result<FixedPointReport> {
        let mut cfg = self.solver(method).unwrap_or(&self.config.solver).clone();
        if let Some(t) = self.config.classify_tol {
            cfg.tol = t;
        }
        if let (Method::SecondConstrained, Some(set)) = (method, &self.set) {
            let loc = set.locate(z)?;
            if loc == Location::Boundary || (loc == Location::Interior && set.has_empty_interior())
            {
                return check_boundary_gne(&self.game, set, z, cfg.tol);
            }
        }
        classify_with(&self.game, z, &cfg)
    }

    fn record(
        &self,
        method: Method,
        run: usize,
        z0: &DVector<f64>,
        trace: nashdyn::Result<IterateTrace>,
    ) -> (RunRecord, Option<IterateTrace>) {
        match trace {
            Ok(tr) => {
                let final_point: Vec<f64> = tr.final_point.values().iter().copied().collect();
                let (report, class_err) = if tr.status.is_terminal_point() {
                    match self.classify_terminal(method, tr.final_point.values()) {
                        Ok(r) => (Some(r), None),
                        Err(e) => (None, Some(format!("classification failed: {e}"))),
                    }
                } else {
                    (None, None)
                };
                let rec = RunRecord {
                    run,
                    z0: z0.iter().copied().collect(),
                    status: tr.status,
                    iterations: tr.iterations(),
                    final_point,
                    final_omega_norm: tr.final_omega_norm(),
                    report,
                    error: tr.error.clone().or(class_err),
                    warnings: tr.warnings.len(),
                };
                (rec, Some(tr))
            }
            Err(e) => {
                let status = match e {
                    nashdyn::Error::Evaluation { .. } => Status::EvalError,
                    _ => Status::NumericError,
                };
                let rec = RunRecord {
                    run,
                    z0: z0.iter().copied().collect(),
                    status,
                    iterations: 0,
                    final_point: z0.iter().copied().collect(),
                    final_omega_norm: f64::NAN,
                    report: None,
                    error: Some(e.to_string()),
                    warnings: 0,
                };
                (rec, None)
            }
        }
    }
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
    }
}

fn median_i64(values: &[i64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

/// Greedy clustering of terminal points in run order.
pub fn cluster_terminal_points(runs: &[RunRecord], radius: f64) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for r in runs {
        let Some(report) = &r.report else { continue };
        let z = DVector::from_column_slice(&r.final_point);
        let hit = clusters.iter_mut().find(|c| {
            let p = DVector::from_column_slice(&c.point);
            (&z - &p).norm() <= radius * p.norm().max(1.0)
        });
        let c = match hit {
            Some(c) => c,
            None => {
                clusters.push(Cluster {
                    point: r.final_point.clone(),
                    verdict: report.verdict,
                    count: 0,
                    verdicts: BTreeMap::new(),
                    runs: Vec::new(),
                });
                clusters.last_mut().expect("just pushed")
            }
        };
        c.count += 1;
        c.runs.push(r.run);
        *c.verdicts
            .entry(report.verdict.as_str().to_string())
            .or_insert(0) += 1;
    }
    clusters
}

fn summarize(method: Method, runs: Vec<RunRecord>, radius: f64) -> AlgorithmSummary {
    let count = |s: Status| runs.iter().filter(|r| r.status == s).count();
    let mut iters: Vec<usize> = runs.iter().map(|r| r.iterations).collect();
    iters.sort_unstable();
    AlgorithmSummary {
        algorithm: method.as_str().to_string(),
        n_runs: runs.len(),
        n_converged: count(Status::Converged),
        n_stationary: count(Status::Stationary),
        n_diverged: count(Status::Diverged),
        n_maxiter: count(Status::MaxIters),
        n_failed: count(Status::EvalError) + count(Status::NumericError),
        iterations: IterStats {
            min: iters.first().copied().unwrap_or(0),
            median: median(&iters),
            max: iters.last().copied().unwrap_or(0),
        },
        clusters: cluster_terminal_points(&runs, radius),
        paired: None,
        runs,
    }
}

/// Run every method from every initial point.
///
/// Individual run failures are recorded in the summary; only trace I/O
/// errors abort.
pub fn sweep(exp: &Experiment, opts: &SweepOptions) -> Result<SweepOutput> {
    let inits = exp.initial_points();
    let methods: Vec<Method> = exp.methods().collect();
    if let Some(dir) = &opts.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|mi| (0..inits.len()).map(move |run| (mi, run)))
        .collect();
    log::info!(
        "sweep: {} methods x {} inits on {}",
        methods.len(),
        inits.len(),
        exp.game.name()
    );

    let results: Vec<Result<(RunRecord, Option<IterateTrace>)>> = jobs
        .par_iter()
        .map(|&(mi, run)| {
            let method = methods[mi];
            let z0 = &inits[run];
            let (rec, trace) = exp.record(method, run, z0, exp.run_method(method, z0));
            if let (Some(dir), Some(tr)) = (&opts.trace_dir, &trace) {
                write_trace_csv(tr, &trace_path(dir, method, run))?;
            }
            Ok((rec, if opts.keep_traces { trace } else { None }))
        })
        .collect();

    let mut per_method: Vec<Vec<RunRecord>> = vec![Vec::with_capacity(inits.len()); methods.len()];
    let mut traces = Vec::new();
    for (&(mi, run), res) in jobs.iter().zip(results) {
        let (rec, trace) = res?;
        per_method[mi].push(rec);
        if let Some(tr) = trace {
            traces.push((methods[mi], run, tr));
        }
    }

    let radius = exp.config.cluster_radius;
    let mut algorithms: Vec<AlgorithmSummary> = methods
        .iter()
        .zip(per_method)
        .map(|(&m, runs)| summarize(m, runs, radius))
        .collect();
    let reference = exp.config.reference();
    if let Some(r) = reference {
        let base: Vec<i64> = algorithms
            .iter()
            .find(|a| a.algorithm == r.as_str())
            .map(|a| a.runs.iter().map(|x| x.iterations as i64).collect())
            .unwrap_or_default();
        for a in algorithms.iter_mut().filter(|a| a.algorithm != r.as_str()) {
            let differences: Vec<i64> = a
                .runs
                .iter()
                .zip(&base)
                .map(|(x, b)| x.iterations as i64 - b)
                .collect();
            a.paired = Some(PairedDifferences {
                reference: r.as_str().to_string(),
                median: median_i64(&differences),
                differences,
            });
        }
    }

    let summary = SweepSummary {
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        problem: exp.game.name().to_string(),
        seed: exp.config.seed,
        count: inits.len(),
        init_digest: init_digest(&inits),
        reference: reference.map(|r| r.as_str().to_string()),
        algorithms,
    };
    Ok(SweepOutput { summary, traces })
}

pub fn trace_path(dir: &Path, method: Method, run: usize) -> PathBuf {
    dir.join(format!("{}_{run:05}.csv", method.as_str()))
}

/// Re-classify every converged terminal point and compare verdicts.
pub fn revalidate(exp: &Experiment, summary: &SweepSummary) -> Result<()> {
    for a in &summary.algorithms {
        let method: Method = a.algorithm.parse()?;
        for r in a.converged_runs() {
            let stored = r.report.as_ref().ok_or_else(|| {
                BenchError::Numeric(format!(
                    "{} run {} converged without a report",
                    a.algorithm, r.run
                ))
            })?;
            let fresh =
                exp.classify_terminal(method, &DVector::from_column_slice(&r.final_point))?;
            if fresh.verdict != stored.verdict {
                return Err(BenchError::Numeric(format!(
                    "{} run {}: stored verdict {} but reclassified as {}",
                    a.algorithm, r.run, stored.verdict, fresh.verdict
                )));
            }
        }
    }
    Ok(())
}
