//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! and enforcing its runtime cap. Run with `--nocapture` to see the lines.

use std::time::Instant;

use madi::accum::KahanSum;
use madi::design::{Frame, SampleEnumeration};
use madi::estimators::{
    di_ht_point, di_ht_variance_estimate, difference_point, difference_variance_estimate,
    difference_variance_true, ht_point, madi_variance_estimate, MadiContext,
};
use madi::models::{
    fit_forest, fit_ols, fit_tree, fit_zero, ForestParams, TrainingSet, TreeParams,
};
use madi::npd::{generate_npd, Scenario};
use madi::population::{Partition, Population};
use madi::rng::{stream, StreamDomain};
use madi::simulation::{
    required_sample_size, run_grid, srs_variance_at, theoretical_cv, SampleSizeInputs,
    SimulationConfig, Strategy,
};

/// Reference values reported for the original register extract. The source
/// data is not available, so these are recorded as metadata only; no test
/// targets them numerically. The suite asserts the qualitative patterns on
/// synthetic populations instead.
const REFERENCE_ONLY: &[(&str, f64)] = &[
    ("correlation of study value and selection propensity", 0.599),
    ("register-subset mean (SEK)", 350_037.0),
    ("complement mean (SEK)", 206_584.0),
    ("required n, expansion estimator at 1% CV", 3044.0),
    ("required n, regression estimator at 1% CV", 269.0),
];

struct Gate {
    index: u32,
    what: &'static str,
    start: Instant,
    cap_seconds: f64,
    passed: bool,
}

impl Gate {
    fn open(index: u32, what: &'static str, cap_seconds: f64) -> Self {
        Self {
            index,
            what,
            start: Instant::now(),
            cap_seconds,
            passed: false,
        }
    }

    fn pass(mut self) {
        let elapsed = self.start.elapsed().as_secs_f64();
        assert!(
            elapsed < self.cap_seconds,
            "criterion {} exceeded its {}s runtime cap: {elapsed:.1}s",
            self.index,
            self.cap_seconds
        );
        self.passed = true;
        println!(
            "acceptance {} PASS {} ({elapsed:.2}s; cap {}s)",
            self.index, self.what, self.cap_seconds
        );
    }
}

impl Drop for Gate {
    fn drop(&mut self) {
        if !self.passed {
            println!("acceptance {} FAIL {}", self.index, self.what);
        }
    }
}

fn rel_ok(mean: f64, truth: f64, tol: f64) -> bool {
    if truth == 0.0 {
        mean == 0.0
    } else {
        (mean - truth).abs() <= tol * truth.abs()
    }
}

struct Fixture {
    pop: Population,
    partition: Partition,
}

fn fixtures() -> Vec<Fixture> {
    let build = |y: &[f64], a_rows: &[usize]| {
        let n = y.len();
        let x: Vec<f64> = (0..n)
            .flat_map(|i| [i as f64 + 0.5 * ((i * 2) % 3) as f64, ((i * 5) % 7) as f64])
            .collect();
        let pop = Population::new((1..=n as u64).collect(), y.to_vec(), x, 2).unwrap();
        let delta: Vec<bool> = (0..n).map(|r| a_rows.contains(&r)).collect();
        let partition = Partition::new(&pop, delta).unwrap();
        Fixture { pop, partition }
    };
    vec![
        build(&[5.0, 1.0, 7.0, 2.0, 4.0, 9.0], &[0, 2, 5]),
        build(&[3.0, 8.0, 1.0, 9.0, 4.0, 7.0, 2.0], &[1, 3, 6]),
        build(&[3.0, 8.0, 1.0, 9.0, 4.0, 7.0, 2.0, 6.0], &[0, 1, 3, 5]),
    ]
}

fn enumeration_mean<F: Fn(&madi::design::Sample) -> f64>(frame: &Frame, n: usize, f: F) -> f64 {
    let mut acc = KahanSum::new();
    let mut count = 0usize;
    for sample in SampleEnumeration::new(frame, n).unwrap() {
        acc.add(f(&sample));
        count += 1;
    }
    acc.value() / count as f64
}

#[test]
fn acceptance_1_exact_unbiasedness_oracles() {
    let gate = Gate::open(
        1,
        "exact unbiasedness of points and variance estimators",
        10.0,
    );
    const TOL: f64 = 1e-9;

    for fixture in fixtures() {
        let pop = &fixture.pop;
        let partition = &fixture.partition;
        let t_y = pop.total_y();
        let frame_u = Frame::population(pop);
        let frame_b = Frame::complement(partition);
        let n_total = pop.len();
        let n_b = partition.n_b();

        // three distinct fixed proxies over U
        let proxies: [Vec<f64>; 3] = [
            vec![0.0; n_total],
            vec![5.0; n_total],
            pop.y()
                .iter()
                .enumerate()
                .map(|(i, &v)| 0.8 * v + (i % 3) as f64)
                .collect(),
        ];

        for n in 1..=n_total {
            // HT point
            let mean = enumeration_mean(&frame_u, n, |s| ht_point(s, &s.y_values(pop)));
            assert!(
                rel_ok(mean, t_y, TOL),
                "HT point: n={n} mean={mean} t_y={t_y}"
            );
            // difference points
            for proxy in &proxies {
                let mean = enumeration_mean(&frame_u, n, |s| difference_point(pop, s, proxy));
                assert!(rel_ok(mean, t_y, TOL), "difference point: n={n}");
            }
            // difference variance estimators vs the true design variance
            if n >= 2 {
                for proxy in &proxies {
                    let d: Vec<f64> = pop.y().iter().zip(proxy).map(|(&y, &p)| y - p).collect();
                    let truth = difference_variance_true(n_total, n, &d).unwrap();
                    let mean = enumeration_mean(&frame_u, n, |s| {
                        let d_s: Vec<f64> = s.rows().iter().map(|&r| d[r as usize]).collect();
                        difference_variance_estimate(s, &d_s).unwrap()
                    });
                    assert!(
                        rel_ok(mean, truth, TOL),
                        "difference variance: n={n} mean={mean} truth={truth}"
                    );
                }
            }
        }

        // register-trained models: OLS and a forest
        let train = TrainingSet::from_register(pop, partition).unwrap();
        let models = [
            fit_zero(pop.aux_dim()),
            fit_ols(&train, true).unwrap(),
            fit_forest(
                &train,
                &ForestParams {
                    n_trees: 12,
                    min_leaf: 1,
                    seed: 5,
                    ..Default::default()
                },
            )
            .unwrap(),
        ];

        for n in 1..=n_b {
            // B-frame expansion of the register estimator
            let mean = enumeration_mean(&frame_b, n, |s| {
                di_ht_point(pop, partition, Some(s))
                    .unwrap()
                    .point()
                    .unwrap()
            });
            assert!(rel_ok(mean, t_y, TOL), "register+HT point: n_b={n}");
            if n >= 2 {
                let y_b: Vec<f64> = frame_b
                    .rows()
                    .iter()
                    .map(|&r| pop.y_at(r as usize))
                    .collect();
                let truth = difference_variance_true(n_b, n, &y_b).unwrap();
                let mean = enumeration_mean(&frame_b, n, |s| {
                    di_ht_variance_estimate(s, &s.y_values(pop)).unwrap()
                });
                assert!(rel_ok(mean, truth, TOL), "register+HT variance: n_b={n}");
            }

            for model in &models {
                let ctx = MadiContext::new(pop, partition, model).unwrap();
                let mean = enumeration_mean(&frame_b, n, |s| ctx.point(pop, s).point().unwrap());
                assert!(
                    rel_ok(mean, t_y, TOL),
                    "model-assisted point: n_b={n} model={} mean={mean} t_y={t_y}",
                    model.kind_label()
                );
                if n >= 2 {
                    let e_b: Vec<f64> = frame_b
                        .rows()
                        .iter()
                        .map(|&r| {
                            pop.y_at(r as usize) - model.predict(pop.x_row(r as usize)).unwrap()
                        })
                        .collect();
                    let truth = difference_variance_true(n_b, n, &e_b).unwrap();
                    let mean = enumeration_mean(&frame_b, n, |s| {
                        madi_variance_estimate(s, &ctx.residuals(pop, s)).unwrap()
                    });
                    assert!(
                        rel_ok(mean, truth, TOL),
                        "model-assisted variance: n_b={n} model={}",
                        model.kind_label()
                    );
                }
            }
        }
    }
    gate.pass();
}

#[test]
fn acceptance_2_reduction_identities_bitwise() {
    let gate = Gate::open(2, "reduction identities hold bit-for-bit per sample", 1.0);

    let fixture = &fixtures()[0];
    let pop = &fixture.pop;
    let partition = &fixture.partition;
    let frame_u = Frame::population(pop);
    let frame_b = Frame::complement(partition);

    // zero-proxy difference estimator equals the plain expansion estimator
    let zero_proxy = vec![0.0; pop.len()];
    for n in 1..=pop.len() {
        for s in SampleEnumeration::new(&frame_u, n).unwrap() {
            let diff = difference_point(pop, &s, &zero_proxy);
            let ht = ht_point(&s, &s.y_values(pop));
            assert_eq!(
                diff.to_bits(),
                ht.to_bits(),
                "zero-proxy reduction at n={n}"
            );
        }
    }

    // zero-model integration estimator equals the register+HT form
    let zero_model = fit_zero(pop.aux_dim());
    let ctx = MadiContext::new(pop, partition, &zero_model).unwrap();
    for n in 1..=partition.n_b() {
        for s in SampleEnumeration::new(&frame_b, n).unwrap() {
            let madi = ctx.point(pop, &s).point().unwrap();
            let di = di_ht_point(pop, partition, Some(&s))
                .unwrap()
                .point()
                .unwrap();
            assert_eq!(
                madi.to_bits(),
                di.to_bits(),
                "zero-model reduction at n_b={n}"
            );
        }
    }

    // a single-tree forest without bootstrap trying all features per split
    // is exactly the plain tree
    let xs: Vec<f64> = (0..60)
        .flat_map(|i| [(i as f64) * 0.37, ((i * 11) % 17) as f64])
        .collect();
    let y: Vec<f64> = (0..60)
        .map(|i| ((i as f64) * 0.4).sin() * 5.0 + (i % 4) as f64)
        .collect();
    let train = TrainingSet::new((1..=60).collect(), xs, y, 2).unwrap();
    let forest = fit_forest(
        &train,
        &ForestParams {
            n_trees: 1,
            mtry: Some(2),
            min_leaf: 2,
            max_depth: None,
            bootstrap: false,
            seed: 31,
        },
    )
    .unwrap();
    let tree = fit_tree(
        &train,
        &TreeParams {
            min_leaf: 2,
            max_depth: None,
        },
    )
    .unwrap();
    for probe in 0..1000 {
        let x = [probe as f64 * 0.033, (probe % 19) as f64];
        let a = forest.predict(&x).unwrap();
        let b = tree.predict(&x).unwrap();
        assert_eq!(
            a.to_bits(),
            b.to_bits(),
            "forest/tree reduction at probe {probe}"
        );
    }
    gate.pass();
}

fn sim1_population() -> Population {
    Population::synthetic(1, 10_000, 12).unwrap()
}

fn sim1_partition(pop: &Population) -> Partition {
    let (partition, _) = generate_npd(pop, Scenario::Sim1, 0.7, 2).unwrap();
    partition
}

#[test]
fn acceptance_3_greg_bias_decay() {
    let gate = Gate::open(3, "regression-estimator bias decays with n", 300.0);
    let pop = sim1_population();
    let t_y = pop.total_y();
    let config = SimulationConfig {
        strategies: vec![Strategy::SrsUGreg],
        grid: vec![100, 800],
        replicates: 2000,
        master_seed: 42,
        ..Default::default()
    };
    let report = run_grid(&config, &pop, None).unwrap();
    let at100 = report.cell(Strategy::SrsUGreg, 100).unwrap();
    let at800 = report.cell(Strategy::SrsUGreg, 800).unwrap();
    let bias100 = at100.bias.expect("some replicates fit at n=100").abs();
    let bias800 = at800.bias.expect("fits at n=800").abs();
    assert!(
        bias800 / t_y < 0.003,
        "relative bias at n=800 is {:.5}",
        bias800 / t_y
    );
    assert!(
        bias800 < bias100,
        "bias should shrink: {bias800} vs {bias100}"
    );
    gate.pass();
}

#[test]
fn acceptance_4_model_assisted_coverage() {
    let gate = Gate::open(4, "model-assisted coverage within the 95% band", 600.0);
    let pop = sim1_population();
    let partition = sim1_partition(&pop);
    let config = SimulationConfig {
        strategies: vec![Strategy::SrsBMadiRf, Strategy::SrsBMadiOls],
        grid: vec![100, 400],
        replicates: 1000,
        master_seed: 42,
        ..Default::default()
    };
    let report = run_grid(&config, &pop, Some(&partition)).unwrap();
    for strategy in [Strategy::SrsBMadiRf, Strategy::SrsBMadiOls] {
        for n in [100, 400] {
            let coverage = report.cell(strategy, n).unwrap().coverage.unwrap();
            assert!(
                (0.93..=0.97).contains(&coverage),
                "{} at n={n}: coverage {coverage}",
                strategy.id()
            );
        }
    }
    gate.pass();
}

#[test]
fn acceptance_5_rmse_ordering_and_greg_na() {
    let gate = Gate::open(5, "RMSE ordering of the strategies and small-n NA", 900.0);
    let pop = sim1_population();
    let partition = sim1_partition(&pop);
    let config = SimulationConfig {
        strategies: vec![
            Strategy::SrsUHt,
            Strategy::SrsUGreg,
            Strategy::SrsBDiHt,
            Strategy::SrsBMadiOls,
            Strategy::SrsBMadiRf,
        ],
        grid: vec![25, 100, 400, 800],
        replicates: 1000,
        master_seed: 42,
        ..Default::default()
    };
    let report = run_grid(&config, &pop, Some(&partition)).unwrap();
    for n in [100usize, 400, 800] {
        let rmse = |s: Strategy| report.cell(s, n).unwrap().rmse.unwrap();
        let (rf, ols, di, ht) = (
            rmse(Strategy::SrsBMadiRf),
            rmse(Strategy::SrsBMadiOls),
            rmse(Strategy::SrsBDiHt),
            rmse(Strategy::SrsUHt),
        );
        assert!(rf < ols, "n={n}: forest {rf} !< linear {ols}");
        assert!(rf < di, "n={n}: forest {rf} !< register+HT {di}");
        assert!(ols < ht, "n={n}: linear {ols} !< expansion {ht}");
        assert!(di < ht, "n={n}: register+HT {di} !< expansion {ht}");
    }
    let greg25 = report.cell(Strategy::SrsUGreg, 25).unwrap();
    assert!(
        greg25.na_count > 0,
        "regression estimator should fail on some n=25 samples with p=12"
    );
    gate.pass();
}

#[test]
fn acceptance_6_sample_size_formulas() {
    let gate = Gate::open(6, "sample-size planner solves the CV target", 1.0);

    // the worked example
    let inputs = SampleSizeInputs {
        frame_size: 1000,
        variance: 4.0,
        total: 10_000.0,
        cv_target: 0.01,
    };
    assert_eq!(required_sample_size(&inputs).unwrap(), 286);

    // 20 randomized fixtures with interior solutions: CV flips at n
    use rand::Rng;
    let mut rng = stream(2024, StreamDomain::Sampling, 99, 0, 0);
    let mut checked = 0;
    while checked < 20 {
        let frame_size = rng.random_range(50..5000usize);
        let variance = rng.random_range(0.5..50.0f64);
        let total = rng.random_range(1e3..1e6f64);
        let cv_target = rng.random_range(0.002..0.1f64);
        let inputs = SampleSizeInputs {
            frame_size,
            variance,
            total,
            cv_target,
        };
        let n = required_sample_size(&inputs).unwrap();
        if n <= 2 || n >= frame_size {
            continue; // clamped; the flip property is about interior solutions
        }
        let cv_at =
            |k: usize| theoretical_cv(srs_variance_at(frame_size, k, variance), total).unwrap();
        assert!(
            cv_at(n) <= cv_target,
            "fixture {checked}: CV({n}) = {} > {cv_target}",
            cv_at(n)
        );
        assert!(
            cv_at(n - 1) > cv_target,
            "fixture {checked}: CV({}) = {} <= {cv_target}",
            n - 1,
            cv_at(n - 1)
        );
        checked += 1;
    }
    gate.pass();
}

#[test]
fn acceptance_7_npd_scenario_contracts() {
    let gate = Gate::open(7, "nonprobability scenario contracts", 60.0);
    let pop = Population::synthetic(3, 2000, 6).unwrap();
    let expected_zeros = (0.05 * pop.len() as f64).round() as usize;

    for seed in 0..20u64 {
        // paired scenarios share their forced-zero set through the stream
        let (part5, prop5) = generate_npd(&pop, Scenario::K(5), 0.7, seed).unwrap();
        let (part6, prop6) = generate_npd(&pop, Scenario::K(6), 0.7, seed).unwrap();
        let (prop5, prop6) = (prop5.unwrap(), prop6.unwrap());
        let zeros5: Vec<usize> = (0..pop.len())
            .filter(|&r| prop5.theta()[r] == 0.0)
            .collect();
        let zeros6: Vec<usize> = (0..pop.len())
            .filter(|&r| prop6.theta()[r] == 0.0)
            .collect();
        assert_eq!(zeros5.len(), expected_zeros, "seed {seed}");
        assert_eq!(zeros5, zeros6, "seed {seed}: forced-zero sets differ");
        for &row in &zeros5 {
            assert!(
                !part5.in_a(row),
                "seed {seed}: zero-propensity unit entered A"
            );
            assert!(
                !part6.in_a(row),
                "seed {seed}: zero-propensity unit entered A"
            );
        }
    }

    // selection-bias directions, deterministic given the seeds
    for seed in [0u64, 1, 2, 3, 4] {
        let expect_higher_in_a = |scenario: Scenario, expect: bool| {
            let (part, _) = generate_npd(&pop, scenario, 0.7, seed).unwrap();
            let (mean_a, mean_b) = part.mean_y(&pop);
            let (mean_a, mean_b) = (mean_a.unwrap(), mean_b.unwrap());
            assert_eq!(
                mean_a > mean_b,
                expect,
                "{} seed {seed}: mean_a={mean_a} mean_b={mean_b}",
                scenario.label()
            );
        };
        expect_higher_in_a(Scenario::K(1), true);
        expect_higher_in_a(Scenario::K(2), false);
        expect_higher_in_a(Scenario::K(3), true);
        expect_higher_in_a(Scenario::K(4), false);
        expect_higher_in_a(Scenario::K(7), false);
        expect_higher_in_a(Scenario::K(8), true);
    }
    gate.pass();
}

#[test]
fn acceptance_8_reference_values_are_metadata_only() {
    let gate = Gate::open(
        8,
        "source-register values recorded as reference metadata",
        1.0,
    );
    // The original register extract is unavailable, so these numbers cannot
    // be reproduced; the suite pins qualitative patterns only. This test
    // records the constants and checks that nothing more is claimed.
    for (what, value) in REFERENCE_ONLY {
        assert!(value.is_finite());
        println!("reference only (source register, not reproducible): {what} = {value}");
    }
    // the analogous synthetic quantities exist and have the right signs,
    // without targeting the register numbers
    let pop = sim1_population();
    let (partition, propensity) = generate_npd(&pop, Scenario::Sim1, 0.7, 2).unwrap();
    let corr = madi::population::correlation(pop.y(), propensity.unwrap().theta()).unwrap();
    assert!(corr > 0.4, "synthetic selection correlation {corr}");
    let (mean_a, mean_b) = partition.mean_y(&pop);
    assert!(mean_a.unwrap() > mean_b.unwrap());
    gate.pass();
}

#[test]
fn acceptance_9_thread_count_does_not_change_reports() {
    let gate = Gate::open(9, "reports byte-identical across thread counts", 120.0);
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.conf");
    std::fs::write(
        &config_path,
        "pop_seed = 3\npop_n = 2000\npop_p = 6\nscenario = sim1\nfraction = 0.7\n\
         npd_seed = 4\nstrategies = srs_u_ht, srs_u_rf, srs_b_di_ht, srs_b_di_rf, \
         srs_b_madi_ols, srs_b_madi_rf\ngrid = 20,40\nreplicates = 50\nseed = 12\ntrees = 20\n",
    )
    .unwrap();

    let run = |threads: usize, out: &str| {
        let out_dir = dir.path().join(out);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_madi"))
            .args([
                "simulate",
                "--config",
                config_path.to_str().unwrap(),
                "--threads",
                &threads.to_string(),
                "--out-dir",
                out_dir.to_str().unwrap(),
            ])
            .status()
            .expect("run simulate");
        assert!(status.success(), "simulate --threads {threads} failed");
        out_dir
    };
    let one = run(1, "t1");
    let four = run(4, "t4");
    for file in [
        "report.csv",
        "plot_bias.csv",
        "plot_rmse.csv",
        "plot_coverage.csv",
        "scatter_y_theta.csv",
    ] {
        let a = std::fs::read(one.join(file)).unwrap();
        let b = std::fs::read(four.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between thread counts");
    }
    gate.pass();
}
