use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use nashdyn::classify::{estimate_rate_from_errors, RateOptions};
use nashdyn::dynamics::Status;
use nashdyn_bench::config::{ExperimentConfig, InitSpec, Method};
use nashdyn_bench::io::{
    read_trace_csv, solve_plot_data, sweep_plot_data, write_summary_json, write_text,
};
use nashdyn_bench::sweep::{sweep, SweepOptions};
use nashdyn_bench::{BenchError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "nashdyn",
    version,
    about = "Solve, sweep and inspect smooth zero-sum games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run each configured algorithm once and write its trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Run only this algorithm.
        #[arg(long)]
        algo: Option<String>,
        /// Initial point, overriding the config.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Directory for `<algorithm>.csv` traces and `plot.csv`; replaces the
        /// config's trace and plot paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired multi-start comparison from seeded random initial points.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify a point of the configured problem.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        point: Vec<f64>,
    },
    /// Estimate the convergence order of a trace CSV towards `zstar`.
    Rate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        zstar: Vec<f64>,
        /// Number of trailing records to fit.
        #[arg(long, default_value_t = 20)]
        tail: usize,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| BenchError::Numeric(e.to_string()))
}

fn solve(
    config: PathBuf,
    algo: Option<String>,
    x0: Option<Vec<f64>>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(name) = algo {
        let m: Method = name.parse()?;
        cfg.algorithms = vec![m];
        cfg.reference = None;
        cfg.overrides
            .retain(|k, _| k.parse::<Method>().is_ok_and(|x| x == m));
    }
    let z0 = match (x0, &cfg.init) {
        (Some(v), _) => v,
        (None, InitSpec::Fixed { z0 }) => z0.clone(),
        (None, InitSpec::UniformBox { .. }) => {
            let exp = cfg.clone().prepare()?;
            log::info!("no fixed initial point; using the first sample of the init box");
            exp.initial_point(0).iter().copied().collect()
        }
    };
    cfg.init = InitSpec::Fixed { z0 };
    let exp = cfg.prepare()?;
    let output = sweep(
        &exp,
        &SweepOptions {
            trace_dir: None,
            keep_traces: true,
        },
    )?;

    let plot_path = match &out {
        Some(d) => Some(d.join("plot.csv")),
        None => exp.config.output.plot_data_path.clone().or_else(|| {
            exp.config
                .output
                .trace_dir
                .as_ref()
                .map(|d| d.join("plot.csv"))
        }),
    };
    let dir = out.or_else(|| exp.config.output.trace_dir.clone());
    let mut traces = Vec::new();
    let mut numeric_failure = None;
    for (method, _, trace) in output.traces {
        let rec = output
            .summary
            .algorithm(method)
            .and_then(|a| a.runs.first());
        let verdict = rec
            .and_then(|r| r.verdict())
            .map_or("-".to_string(), |v| v.to_string());
        let final_z: Vec<String> = trace
            .final_point
            .values()
            .iter()
            .map(|v| format!("{v:.8}"))
            .collect();
        println!(
            "{:<20} {:<13} iters {:>6}  |w| {:.3e}  z = ({})  {verdict}",
            method.as_str(),
            trace.status.as_str(),
            trace.iterations(),
            trace.final_omega_norm(),
            final_z.join(", ")
        );
        if matches!(trace.status, Status::EvalError | Status::NumericError) {
            numeric_failure = Some(format!(
                "{method}: {}",
                trace.error.clone().unwrap_or_default()
            ));
        }
        if let Some(d) = &dir {
            nashdyn_bench::io::write_trace_csv(&trace, &d.join(format!("{method}.csv")))?;
        }
        traces.push((method, trace));
    }
    if let Some(p) = plot_path {
        write_text(&p, &solve_plot_data(&traces))?;
    }
    if let Some(p) = &exp.config.output.summary_path {
        write_summary_json(&output.summary, p)?;
    }
    match numeric_failure {
        Some(msg) => Err(BenchError::Numeric(msg)),
        None => Ok(()),
    }
}

fn run_sweep(config: PathBuf, count: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(c) = count {
        match &mut cfg.init {
            InitSpec::UniformBox { count, .. } => *count = c,
            InitSpec::Fixed { .. } => {
                return Err(BenchError::Config(
                    "--count needs init.mode = \"uniform_box\"".into(),
                ));
            }
        }
    }
    let exp = cfg.prepare()?;
    let opts = SweepOptions {
        trace_dir: exp.config.output.trace_dir.clone(),
        keep_traces: false,
    };
    let summary = sweep(&exp, &opts)?.summary;
    println!(
        "{} runs per algorithm on {}, seed {}",
        summary.count, summary.problem, summary.seed
    );
    for a in &summary.algorithms {
        let paired = a.paired.as_ref().map_or(String::new(), |p| {
            format!("  median diff vs {} {:+}", p.reference, p.median)
        });
        println!(
            "{:<20} converged {:>5}  stationary {:>5}  max_iters {:>5}  diverged {:>5}  failed {:>5}  median iters {:>8}{paired}",
            a.algorithm, a.n_converged, a.n_stationary, a.n_maxiter, a.n_diverged, a.n_failed, a.iterations.median
        );
        for c in &a.clusters {
            let p: Vec<String> = c.point.iter().map(|v| format!("{v:.5}")).collect();
            println!("    ({}) x{} {}", p.join(", "), c.count, c.verdict);
        }
    }
    match &exp.config.output.summary_path {
        Some(p) => write_summary_json(&summary, p)?,
        None => println!("{}", to_json(&summary)?),
    }
    if let Some(p) = &exp.config.output.plot_data_path {
        write_text(p, &sweep_plot_data(&summary))?;
    }
    Ok(())
}

fn classify(config: PathBuf, point: Vec<f64>) -> Result<()> {
    let exp = ExperimentConfig::load(&config)?.prepare()?;
    let (n, m) = exp.dims();
    if point.len() != n + m {
        return Err(BenchError::Config(format!(
            "--point has {} entries, the problem has {}",
            point.len(),
            n + m
        )));
    }
    // with a constraint, boundary points get the normal-cone test
    let method = if exp.set.is_some() {
        Method::SecondConstrained
    } else {
        exp.methods()
            .next()
            .expect("prepare checks algorithms is non-empty")
    };
    let report = exp.classify_terminal(method, &DVector::from_vec(point))?;
    println!("{}", to_json(&report)?);
    Ok(())
}

fn rate(trace: PathBuf, zstar: Vec<f64>, tail: usize) -> Result<()> {
    let table = read_trace_csv(&trace)?;
    if table.rows.is_empty() {
        return Err(BenchError::Config(format!(
            "{} has no data rows",
            trace.display()
        )));
    }
    if table.rows[0].z.len() != zstar.len() {
        return Err(BenchError::Config(format!(
            "--zstar has {} entries, the trace has {}",
            zstar.len(),
            table.rows[0].z.len()
        )));
    }
    let start = table.rows.len().saturating_sub(tail + 1);
    let errors: Vec<f64> = table.rows[start..]
        .iter()
        .map(|r| {
            r.z.iter()
                .zip(&zstar)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    println!(
        "{}",
        to_json(&estimate_rate_from_errors(&errors, &RateOptions::default()))?
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve {
            config,
            algo,
            x0,
            out,
        } => solve(config, algo, x0, out),
        Command::Sweep {
            config,
            count,
            seed,
        } => run_sweep(config, count, seed),
        Command::Classify { config, point } => classify(config, point),
        Command::Rate { trace, zstar, tail } => rate(trace, zstar, tail),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
