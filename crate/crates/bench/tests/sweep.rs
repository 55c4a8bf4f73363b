use nalgebra::DVector;
use nashdyn::classify::Verdict;
use nashdyn::dynamics::{Algorithm, Mode, Status};
use nashdyn_bench::config::{ExperimentConfig, Method};
use nashdyn_bench::io::{parse_trace_csv, read_trace_csv, sweep_plot_data, trace_csv_string};
use nashdyn_bench::sweep::{
    cluster_terminal_points, init_digest, revalidate, sample_uniform, trace_path, RunRecord,
};
use nashdyn_bench::{sweep, SweepOptions};
use proptest::prelude::*;

fn toy(count: usize, seed: u64) -> String {
    format!(
        r#"
algorithms = ["second", "gda"]
seed = {seed}

[problem]
kind = "toy2d"
negate = true

[init]
mode = "uniform_box"
lo = -15.0
hi = 15.0
count = {count}

[solver]
alpha = 0.05
max_iters = 3000

[overrides.gda]
alpha = 0.01
"#
    )
}

fn prepare(text: &str) -> nashdyn_bench::Experiment {
    ExperimentConfig::from_toml_str(text)
        .unwrap()
        .prepare()
        .unwrap()
}

#[test]
fn sweeps_are_reproducible() {
    let exp = prepare(&toy(12, 3));
    let a = sweep(&exp, &SweepOptions::default()).unwrap().summary;
    let b = sweep(&exp, &SweepOptions::default()).unwrap().summary;
    assert_eq!(a.canonical_json(), b.canonical_json());
    let other = sweep(&prepare(&toy(12, 4)), &SweepOptions::default())
        .unwrap()
        .summary;
    assert_ne!(a.init_digest, other.init_digest);
}

#[test]
fn every_algorithm_sees_the_same_inits() {
    let exp = prepare(&toy(10, 5));
    let s = sweep(&exp, &SweepOptions::default()).unwrap().summary;
    assert_eq!(s.init_digest, init_digest(&exp.initial_points()));
    let second = s.algorithm(Method::Plain(Algorithm::Second)).unwrap();
    let gda = s.algorithm(Method::Plain(Algorithm::Gda)).unwrap();
    for (a, b) in second.runs.iter().zip(&gda.runs) {
        assert_eq!(a.z0, b.z0);
    }
    let paired = gda.paired.as_ref().unwrap();
    assert_eq!(paired.reference, "second");
    for ((d, a), b) in paired.differences.iter().zip(&gda.runs).zip(&second.runs) {
        assert_eq!(*d, a.iterations as i64 - b.iterations as i64);
    }
    assert!(second.paired.is_none());
}

#[test]
fn growing_the_count_keeps_earlier_inits() {
    let small = prepare(&toy(5, 9)).initial_points();
    let large = prepare(&toy(50, 9)).initial_points();
    assert_eq!(small[..], large[..5]);
}

#[test]
fn single_run_sweep() {
    let exp = prepare(&toy(1, 1));
    let s = sweep(&exp, &SweepOptions::default()).unwrap().summary;
    for a in &s.algorithms {
        assert_eq!(a.n_runs, 1);
        assert_eq!(a.iterations.min, a.iterations.max);
        assert_eq!(a.iterations.median, a.iterations.min as f64);
    }
    revalidate(&exp, &s).unwrap();
}

#[test]
fn converged_points_are_classified_and_revalidate() {
    let exp = prepare(&toy(16, 2));
    let s = sweep(&exp, &SweepOptions::default()).unwrap().summary;
    let gda = s.algorithm(Method::Plain(Algorithm::Gda)).unwrap();
    assert!(gda.n_converged > 0);
    for r in gda.converged_runs() {
        assert!(r.final_omega_norm <= 1e-5);
        assert!(r.verdict().is_some());
    }
    let clustered: usize = gda.clusters.iter().map(|c| c.count).sum();
    assert_eq!(clustered, gda.n_converged + gda.n_stationary);
    revalidate(&exp, &s).unwrap();

    let mut tampered = s.clone();
    let a = &mut tampered.algorithms[1];
    let run = a
        .runs
        .iter_mut()
        .find(|r| r.status == Status::Converged)
        .unwrap();
    let report = run.report.as_mut().unwrap();
    report.verdict = if report.verdict == Verdict::StrictLocalNash {
        Verdict::NonNashCritical
    } else {
        Verdict::StrictLocalNash
    };
    assert!(revalidate(&exp, &tampered).is_err());
}

#[test]
fn traces_are_written_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let exp = prepare(&toy(3, 1));
    let out = sweep(
        &exp,
        &SweepOptions {
            trace_dir: Some(dir.path().into()),
            keep_traces: true,
        },
    )
    .unwrap();
    assert_eq!(out.traces.len(), 6);
    for (m, run, trace) in &out.traces {
        let table = read_trace_csv(&trace_path(dir.path(), *m, *run)).unwrap();
        assert_eq!(table.status, Some(trace.status));
        assert_eq!(table.rows.len(), trace.steps.len());
        let last = table.rows.last().unwrap();
        assert_eq!(
            last.z,
            trace
                .final_point
                .values()
                .iter()
                .copied()
                .collect::<Vec<_>>()
        );
    }
    let plot = sweep_plot_data(&out.summary);
    assert_eq!(plot.lines().count(), 1 + 6);
}

#[test]
fn bilinear_gauss_newton_halves_omega() {
    let exp = prepare(
        r#"
algorithms = ["second"]
[problem]
kind = "bilinear"
A = [[2.0, 1.0], [0.0, 3.0]]
[init]
mode = "fixed"
z0 = [1.0, -2.0, 0.5, 3.0]
[solver]
alpha = 0.5
line_search = "fixed"
gn_damping_cap = 0.0
epsilon_switch = 1e-300
tol = 1e-9
"#,
    );
    let m = Method::Plain(Algorithm::Second);
    let trace = exp.run_method(m, &exp.initial_point(0)).unwrap();
    assert_eq!(trace.status, Status::Converged);
    let gn: Vec<f64> = trace
        .steps
        .iter()
        .filter(|s| s.mode == Mode::GaussNewton)
        .map(|s| s.omega_norm)
        .collect();
    assert!(gn.len() > 20);
    for w in gn.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() <= 1e-10, "ratio {}", w[1] / w[0]);
    }
}

#[test]
fn clustering_merges_nearby_points() {
    let rec = |run: usize, p: [f64; 2], status| RunRecord {
        run,
        z0: vec![0.0, 0.0],
        status,
        iterations: 1,
        final_point: p.to_vec(),
        final_omega_norm: 0.0,
        report: None,
        error: None,
        warnings: 0,
    };
    let exp = prepare(&toy(1, 1));
    let m = Method::Plain(Algorithm::Second);
    let with_report = |mut r: RunRecord| {
        r.report = Some(
            exp.classify_terminal(m, &DVector::from_column_slice(&r.final_point))
                .unwrap(),
        );
        r
    };
    let runs = vec![
        with_report(rec(0, [1.0, 1.0], Status::Converged)),
        with_report(rec(1, [1.0 + 1e-6, 1.0], Status::Converged)),
        with_report(rec(2, [3.0, 1.0], Status::Converged)),
        rec(3, [1.0, 1.0], Status::MaxIters),
    ];
    let clusters = cluster_terminal_points(&runs, 1e-4);
    assert_eq!(clusters.len(), 2);
    assert_eq!(clusters[0].runs, vec![0, 1]);
    assert_eq!(clusters[1].runs, vec![2]);
}

proptest! {
    #[test]
    fn samples_stay_in_the_box(seed in any::<u64>(), run in 0u64..10_000, lo in -50.0f64..50.0, w in 1e-3f64..20.0) {
        let z = sample_uniform(seed, run, &[lo, lo - 1.0], &[lo + w, lo - 1.0 + w]);
        prop_assert!(z[0] >= lo && z[0] < lo + w);
        prop_assert!(z[1] >= lo - 1.0 && z[1] < lo - 1.0 + w);
        prop_assert_eq!(z.clone(), sample_uniform(seed, run, &[lo, lo - 1.0], &[lo + w, lo - 1.0 + w]));
    }

    #[test]
    fn trace_csv_round_trips_exactly(z0 in prop::collection::vec(-10.0f64..10.0, 2)) {
        let exp = prepare(&toy(1, 1));
        let trace = exp.run_method(Method::Plain(Algorithm::Second), &DVector::from_vec(z0)).unwrap();
        let table = parse_trace_csv(&trace_csv_string(&trace)).unwrap();
        prop_assert_eq!(table.status, Some(trace.status));
        for (row, s) in table.rows.iter().zip(&trace.steps) {
            prop_assert_eq!(row.k, s.k);
            prop_assert_eq!(row.mode, s.mode);
            prop_assert_eq!(row.alpha.to_bits(), s.alpha.to_bits());
            prop_assert_eq!(row.omega_norm.to_bits(), s.omega_norm.to_bits());
            prop_assert_eq!(row.merit.to_bits(), s.merit.to_bits());
            prop_assert_eq!(&row.z, &s.z.iter().copied().collect::<Vec<_>>());
        }
    }
}
