//! Acceptance suite. Each test checks one criterion and prints a single
//! `[PASS]`/`[FAIL]` line; run with `--nocapture` to see them.

mod common;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use traffic_mtl::cli::{cmd_compare, cmd_gen, DataArgs};
use traffic_mtl::config::RunConfig;
use traffic_mtl::data::{fit_normalizer, make_windows, split_series, TaskLayout, TaskMode, TimeSeries};
use traffic_mtl::experiment::{improvement, median, run_seeds, train_arm, ExperimentConfig};
use traffic_mtl::network::{Dims, HiddenActivation};
use traffic_mtl::synthgen::{generate, SynthConfig};
use traffic_mtl::trainer::{init_params, lm_step, LeastSquares, LmConfig, LmState, OutputLayerProblem, StepOutcome, StopReason};

fn verdict(id: &str, title: &str, ok: bool, detail: String) {
    println!("[{}] {id} {title}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} {title} failed: {detail}");
}

const TABLE_I: [(&str, f64, f64, f64); 6] = [
    ("Cf", 93.03, 86.26, 7.28),
    ("Db", 55.04, 52.85, 3.98),
    ("Ff", 85.28, 82.02, 3.82),
    ("Gb", 84.89, 82.90, 2.34),
    ("Hi", 92.28, 88.02, 4.62),
    ("Bb", 77.46, 70.25, 9.31),
];

#[test]
fn ac1_metric_fidelity() {
    let mut worst: f64 = 0.0;
    for (_, stl, mtl, e) in TABLE_I {
        worst = worst.max((improvement(stl, mtl).unwrap() - e).abs());
    }
    let bb = improvement(77.46, 70.25).unwrap();
    let ok = worst <= 0.01 && (bb - 9.31).abs() <= 0.01;
    verdict(
        "AC1",
        "metric fidelity",
        ok,
        format!("max |e - reported| = {worst:.4} pp (tol 0.01); Bb e = {bb:.4}%"),
    );
}

#[test]
fn ac2_jacobian_matches_finite_differences() {
    let mut details = Vec::new();
    let mut ok = true;
    for (seed, k) in [(101u64, 3usize), (202, 1)] {
        let dims = Dims::new(5, 15, k).unwrap();
        let p = common::random_params(seed, dims);
        let data = common::random_data(seed + 1, 8, 5, k);
        let analytic = p.jacobian(&data).unwrap();
        let fd = common::fd_jacobian(&p, &data, 1e-5);
        let err = common::max_relative_error(&analytic, &fd, 1e-3);
        ok &= err < 1e-5;
        details.push(format!("5-15-{k}: {err:.2e}"));
    }
    verdict(
        "AC2",
        "jacobian vs central FD (h=1e-5)",
        ok,
        format!("max relative error {} (tol 1e-5)", details.join(", ")),
    );
}

#[test]
fn ac3_lm_step_matches_normal_equations() {
    let dims = Dims::new(5, 5, 3).unwrap();
    let base = init_params(5, dims).with_activation(HiddenActivation::Identity);
    let data = common::random_data(77, 40, 5, 3);
    let problem = OutputLayerProblem::new(&base, &data).unwrap();
    let cfg = LmConfig {
        mu_init: 1e-12,
        mu_max: 1.0,
        ..Default::default()
    };
    let state = LmState::new(&problem, problem.initial(), &cfg).unwrap();
    let (next, outcome) = lm_step(&state, &problem, &cfg).unwrap();

    // Oracle: per output j, features [h(u), 1] with h = W1 u + b1, and the
    // normal equations solved by nalgebra's LU.
    let (n, h) = (data.len(), dims.hidden);
    let mut features = DMatrix::<f64>::zeros(n, h + 1);
    for i in 0..n {
        let u = data.inputs().row(i);
        for q in 0..h {
            features[(i, q)] = base.b1[q] + (0..5).map(|l| base.w1[(q, l)] * u[l]).sum::<f64>();
        }
        features[(i, h)] = 1.0;
    }
    let gram = features.transpose() * &features;
    let mut expected = vec![0.0; problem.num_params()];
    for j in 0..3 {
        let t = DVector::from_iterator(n, (0..n).map(|i| data.targets()[(i, j)]));
        let beta = gram.clone().lu().solve(&(features.transpose() * t)).unwrap();
        for q in 0..h {
            expected[j * h + q] = beta[q];
        }
        expected[3 * h + j] = beta[h];
    }
    let diff = next
        .x
        .iter()
        .zip(&expected)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    verdict(
        "AC3",
        "LM oracle equivalence",
        outcome == StepOutcome::Accepted && diff < 1e-8,
        format!("accepted = {}, max |x1 - x_ls| = {diff:.2e} (tol 1e-8)", outcome == StepOutcome::Accepted),
    );
}

fn non_increasing(state: &LmState) -> bool {
    state.history.windows(2).all(|w| w[1].mse <= w[0].mse)
}

#[test]
fn ac4_training_contract() {
    let synth = SynthConfig {
        noise_std: 0.0,
        ..Default::default()
    };
    let series = generate(&synth, "Bb").unwrap();
    let mut goal_ok = true;
    let mut mono_ok = true;
    let mut worst_epochs = 0;
    for seed in 1..=10u64 {
        let mut cfg = ExperimentConfig::default();
        cfg.lm.seed = seed;
        let stl = train_arm(&series, TaskMode::Stl, &cfg).unwrap();
        goal_ok &= stl.stop == StopReason::GoalReached && stl.state.mse <= 0.006;
        worst_epochs = worst_epochs.max(stl.state.epoch);
        mono_ok &= non_increasing(&stl.state);
        let mtl = train_arm(&series, TaskMode::Mtl, &cfg).unwrap();
        mono_ok &= non_increasing(&mtl.state);
    }
    verdict(
        "AC4",
        "training contract",
        goal_ok && mono_ok && worst_epochs <= 300,
        format!(
            "STL goal 0.006 reached on all seeds 1..10: {goal_ok} (max {worst_epochs} epochs); \
             non-increasing MSE on every run: {mono_ok}"
        ),
    );
}

#[test]
fn ac5_mtl_benefit() {
    let synth = SynthConfig::default();
    assert_eq!(synth.ar_coeff, 0.6);
    let series = generate(&synth, "Bb").unwrap();
    assert_eq!(series.len(), 2400);
    let seeds: Vec<u64> = (1..=10).collect();
    let comps = run_seeds(&series, &ExperimentConfig::default(), &seeds).unwrap();
    let imps: Vec<f64> = comps.iter().map(|c| c.report.improvement_pct).collect();
    let med = median(&imps).unwrap();
    let listed: Vec<String> = imps.iter().map(|e| format!("{e:.2}")).collect();
    verdict(
        "AC5",
        "MTL benefit",
        med > 0.0,
        format!("median improvement {med:.2}% over seeds 1..10 [{}]", listed.join(", ")),
    );
}

#[test]
fn ac6_protocol_integrity() {
    let (len, train_count, m) = (2400usize, 2112usize, 5usize);
    // Enumeration oracle: count anchors whose window and targets fit and
    // whose main target lies in the test slice.
    let count = |offsets: &[isize]| {
        (0..len)
            .filter(|&n| {
                n >= train_count
                    && n >= m
                    && offsets.iter().all(|&o| {
                        let t = n as isize + o;
                        t >= 0 && (t as usize) < len
                    })
            })
            .count()
    };
    let want_mtl = count(&[-1, 0, 1]);
    let want_stl = count(&[0]);

    let synth = SynthConfig::default();
    let series = generate(&synth, "Bb").unwrap();
    let (train, test) = split_series(&series, train_count).unwrap();
    let norm = fit_normalizer(train).unwrap();
    let z = norm.normalize_all(series.values());
    let mtl = TaskLayout::mtl(m).unwrap();
    let stl = TaskLayout::stl(m).unwrap();
    let got_mtl = make_windows(&z, &mtl, mtl.test_range(len, train_count)).unwrap().len();
    let got_stl = make_windows(&z, &stl, stl.test_range(len, train_count)).unwrap().len();

    // Mutation: rewrite every test value and refit.
    let mut mutated = series.values().to_vec();
    for (i, v) in mutated[train_count..].iter_mut().enumerate() {
        *v = 10_000.0 + 37.0 * i as f64;
    }
    let mutated = TimeSeries::new("Bb", mutated).unwrap();
    let (mtrain, _) = split_series(&mutated, train_count).unwrap();
    let norm_after = fit_normalizer(mtrain).unwrap();

    let ok = test.len() == 288
        && want_mtl == 287
        && want_stl == 288
        && got_mtl == want_mtl
        && got_stl == want_stl
        && norm_after == norm;
    verdict(
        "AC6",
        "protocol integrity",
        ok,
        format!(
            "test slice {} points; MTL anchors {got_mtl} (oracle {want_mtl}); STL anchors {got_stl} \
             (oracle {want_stl}); normalizer unchanged under test mutation: {}",
            test.len(),
            norm_after == norm
        ),
    );
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn ac7_compare_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let data = tmp.path().join("flows.csv");
    let mut log = Vec::new();
    cmd_gen(&cfg, &data, None, &mut log).unwrap();
    let args = DataArgs {
        data: data.clone(),
        link: None,
    };
    let (a, b) = (tmp.path().join("run-a"), tmp.path().join("run-b"));
    cmd_compare(&cfg, &args, &a, None, None, &mut log).unwrap();
    cmd_compare(&cfg, &args, &b, None, None, &mut log).unwrap();
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    verdict(
        "AC7",
        "determinism",
        fa.len() == 3 && fa == fb,
        format!("files {names:?} byte-identical across two runs: {}", fa == fb),
    );
}
