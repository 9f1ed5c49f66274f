//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Statistical criteria run on fixed seeds so the suite is
//! deterministic; tolerances are pinned in the assertions.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines.

mod common;

use common::*;
use mfp::data::{Dataset, VariableKind, VariableMeta};
use mfp::fp::{best_fp, PowerTuple};
use mfp::fsp::{run_fsp, FspOptions};
use mfp::influence::{flag_influential, loo_scan, pair_scan, AdjustMode};
use mfp::plasmode::{self, PredictorProfile, SlicePreset, TrueModel};
use mfp::select::{fit_mfp, impose_forms, r2_reduction, MfpOptions};
use mfp::FpForm;
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

fn pass(criterion: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {criterion} ({name}): PASS ({detail})");
}

/// Criterion 1: best-FP search and the function selection deviances match
/// an independent exhaustive 44-model refit oracle on random fixtures.
#[test]
fn acceptance_1_oracle_equivalence() {
    let t0 = Instant::now();
    let mut checked = 0;
    for i in 0..25u64 {
        let n = 40 + (i as usize * 7) % 81; // n in 40..=120
        let n_adjust = 1 + (i as usize) % 3; // 1..=3 adjusters
        let f = random_fixture(42_000 + i, n, n_adjust);
        let adjust_mat = {
            let refs: Vec<&[f64]> = f.adjust.iter().map(|c| c.as_slice()).collect();
            mfp::Mat::from_columns(&refs)
        };

        for degree in [1u8, 2] {
            let got = best_fp(&f.x, &f.y, Some(&adjust_mat), degree).unwrap();
            let want = oracle_best_fp(&f.x, &f.y, &f.adjust, degree);
            let want_powers = match want.p2 {
                None => PowerTuple::fp1(want.p1),
                Some(q) => PowerTuple::fp2(want.p1, q),
            };
            assert_eq!(got.powers, want_powers, "fixture {i} degree {degree}");
            let dev_got = (n as f64) * (got.fit.rss / n as f64).ln();
            let dev_want = (n as f64) * (want.rss / n as f64).ln();
            assert!(
                (dev_got - dev_want).abs() <= 1e-8,
                "fixture {i} degree {degree}: deviance {dev_got} vs {dev_want}"
            );
        }

        let res = run_fsp(&f.x, &f.y, Some(&adjust_mat), &FspOptions::at_level(0.05)).unwrap();
        let want = oracle_fsp(&f.x, &f.y, &f.adjust);
        assert!((res.dd_fp2_null - want.dd_fp2_null).abs() <= 1e-8);
        assert!((res.dd_fp2_linear - want.dd_fp2_linear).abs() <= 1e-8);
        assert!((res.dd_fp2_fp1.unwrap() - want.dd_fp2_fp1).abs() <= 1e-8);
        assert_eq!(res.best_fp1, PowerTuple::fp1(want.best1.p1));
        let want2 = match want.best2.p2 {
            None => unreachable!("degree 2 always returns a pair"),
            Some(q) => PowerTuple::fp2(want.best2.p1, q),
        };
        assert_eq!(res.best_fp2.unwrap(), want2);
        checked += 1;
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30 s");
    pass(
        1,
        "oracle equivalence",
        format!("{checked} fixtures, both degrees, in {elapsed:.2?}"),
    );
}

/// Criterion 2: the quantile function reproduces the six published
/// chi-square critical values to +/-0.001.
#[test]
fn acceptance_2_chisq_table_fidelity() {
    let cases = [
        (0.05, 4u32, 9.488),
        (0.05, 3, 7.815),
        (0.05, 2, 5.991),
        (0.01, 4, 13.277),
        (0.01, 3, 11.345),
        (0.01, 2, 9.210),
    ];
    for (alpha, k, expect) in cases {
        let got = mfp::chisq_quantile(alpha, k);
        assert!(
            (got - expect).abs() <= 1e-3,
            "quantile({alpha}, {k}) = {got:.4}, expected {expect}"
        );
    }
    pass(
        2,
        "chi-square table fidelity",
        "6/6 critical values within 0.001".into(),
    );
}

/// Criterion 3: under a null outcome the first closed-test step rejects at
/// close to the nominal 5% rate (exact binomial 99% band for 1000 reps).
#[test]
fn acceptance_3_closed_test_type_i_error() {
    let t0 = Instant::now();
    let reps = 1000;
    let n = 250;
    let rejections: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng(100_000 + rep as u64);
            let x = lognormal_vec(&mut r, n, 1.2, 0.9);
            let y: Vec<f64> = (0..n).map(|_| draw_normal(&mut r)).collect();
            let res = run_fsp(&x, &y, None, &FspOptions::at_level(0.05)).unwrap();
            usize::from(res.p_fp2_null < 0.05)
        })
        .sum();
    let rate = rejections as f64 / reps as f64;
    let elapsed = t0.elapsed();
    assert!(
        (0.037..=0.064).contains(&rate),
        "step-1 rejection rate {rate} outside [0.037, 0.064]"
    );
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    pass(
        3,
        "closed-test type I error",
        format!("rate {rate:.3} in [0.037, 0.064], {reps} reps in {elapsed:.2?}"),
    );
}

/// Criterion 4: generator calibration at n = 5000 with one fixed seed:
/// noise variance, R-squared of the true linear predictor, and the
/// variable-importance structure under the true functional forms.
#[test]
fn acceptance_4_generator_calibration() {
    let t0 = Instant::now();
    let profile = PredictorProfile::reference();
    let ds = plasmode::generate_dataset(5000, &profile, 1).unwrap();

    let block = plasmode::generate_predictors(5000, &profile, 1).unwrap();
    let model = TrueModel::reference();
    let eta = model.eta(&block).unwrap();
    let y = ds.column("y").unwrap();
    let resid: Vec<f64> = y.iter().zip(&eta).map(|(a, b)| a - b).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    let noise_var = resid.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / resid.len() as f64;
    assert!(
        (0.45..=0.53).contains(&noise_var),
        "noise variance {noise_var} outside [0.45, 0.53]"
    );

    let r2 = {
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let me = eta.iter().sum::<f64>() / eta.len() as f64;
        let mut sxy = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for (a, b) in eta.iter().zip(y) {
            sxy += (a - me) * (b - my);
            sx += (a - me) * (a - me);
            sy += (b - my) * (b - my);
        }
        (sxy / (sx.sqrt() * sy.sqrt())).powi(2)
    };
    assert!(
        (0.47..=0.53).contains(&r2),
        "R2(eta; y) = {r2} outside [0.47, 0.53]"
    );

    let prepared = ds.prepared().unwrap();
    let imposed = impose_forms(
        &prepared,
        &TrueModel::reference().true_forms(),
        &MfpOptions::at_level(0.05),
    )
    .unwrap();
    let reductions = r2_reduction(&imposed, &prepared).unwrap();
    let get = |name: &str| {
        reductions
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .expect("variable present")
    };
    let (red5, red6) = (get("x5"), get("x6"));
    assert!(
        (50.0..=62.0).contains(&red5),
        "x5 R2 reduction {red5} outside [50, 62]"
    );
    assert!(
        (12.0..=22.0).contains(&red6),
        "x6 R2 reduction {red6} outside [12, 22]"
    );
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 1 min");
    pass(
        4,
        "generator calibration",
        format!(
            "noise var {noise_var:.3}, R2 {r2:.3}, x5 red {red5:.1}%, x6 red {red6:.1}% in {elapsed:.2?}"
        ),
    );
}

/// On-demand diagnostics behind the true-model-recovery criterion: the
/// per-margin null calibration of the closed test. Run with
/// `cargo test --test acceptance -- --ignored --nocapture`.
///
/// With a true FP1(0) relationship on x6-shaped data, the final FP2-vs-FP1
/// step should overshoot at about the nominal rate; with a null outcome on
/// x7-shaped data, any inclusion should appear at about the nominal rate.
/// These rates bound what a fixed block of seeds can demonstrate.
#[test]
#[ignore]
fn per_margin_null_calibration() {
    let profile = PredictorProfile::reference();
    let reps = 200;

    let fp2_overshoot: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let block =
                plasmode::generate_predictors(5000, &profile, 900_000 + rep as u64).unwrap();
            let xs: Vec<f64> = block.column("x6").unwrap().iter().map(|v| v + 1.0).collect();
            let mut r = rng(950_000 + rep as u64);
            let y: Vec<f64> = xs
                .iter()
                .map(|&v| 0.25 * v.ln() + 0.66 * draw_normal(&mut r))
                .collect();
            let res = run_fsp(&xs, &y, None, &FspOptions::at_level(0.05)).unwrap();
            usize::from(matches!(res.selection.form, FpForm::Fp2(_, _)))
        })
        .sum();

    let null_inclusion: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let block =
                plasmode::generate_predictors(5000, &profile, 700_000 + rep as u64).unwrap();
            let xs: Vec<f64> = block.column("x7").unwrap().iter().map(|v| v + 1.0).collect();
            let mut r = rng(750_000 + rep as u64);
            let y: Vec<f64> = (0..5000).map(|_| draw_normal(&mut r)).collect();
            let res = run_fsp(&xs, &y, None, &FspOptions::at_level(0.05)).unwrap();
            usize::from(res.selection.form != FpForm::Out)
        })
        .sum();

    println!(
        "null calibration at alpha 0.05: FP2 overshoot on true-FP1 x6 data {fp2_overshoot}/{reps}, \
         inclusion of null x7-shaped data {null_inclusion}/{reps}"
    );
    // generous 99%-ish binomial bands around the nominal 0.05
    assert!((3..=22).contains(&fp2_overshoot));
    assert!((3..=22).contains(&null_inclusion));
}

fn is_nonlinear(form: FpForm) -> bool {
    match form {
        FpForm::Out | FpForm::Linear => false,
        FpForm::Fp1(p) => p != 1.0,
        FpForm::Fp2(_, _) => true,
    }
}

fn is_out_or_linear(form: FpForm) -> bool {
    match form {
        FpForm::Out | FpForm::Linear => true,
        FpForm::Fp1(p) => p == 1.0,
        FpForm::Fp2(_, _) => false,
    }
}

/// Criterion 5: over ten seeds at n = 5000 the procedure recovers the true
/// structure of the strong variables and keeps the noise variable out; at
/// n = 125 the weak non-linear variable is excluded or linear.
///
/// The seed block (1..=10) is fixed in advance and the counts are printed
/// before asserting. Null-calibration measurements (see the type-I-error
/// criterion and the per-margin Monte Carlos in the diagnostics history)
/// put the per-seed probabilities near 0.95 for the x6/x7 events and near
/// 0.67 for the x1-at-125 event: the x1 curvature written into the
/// generating equation is genuinely detectable in about a third of n=125
/// samples, so that clause can fail on an unlucky block even though each
/// selection test holds its nominal level.
#[test]
fn acceptance_5_true_model_recovery() {
    let t0 = Instant::now();
    let profile = PredictorProfile::reference();
    let seeds: Vec<u64> = (1..=10).collect();
    let results: Vec<(FpForm, FpForm, FpForm, FpForm)> = seeds
        .par_iter()
        .map(|&seed| {
            let ds = plasmode::generate_dataset(5000, &profile, seed).unwrap();
            let prepared = ds.prepared().unwrap();
            let model = fit_mfp(&prepared, &MfpOptions::at_level(0.05)).unwrap();
            let form = |name: &str| model.term(name).unwrap().form;

            let small = plasmode::slice(&ds, SlicePreset::A125).unwrap();
            let small_model =
                fit_mfp(&small.prepared().unwrap(), &MfpOptions::at_level(0.05)).unwrap();
            (
                form("x5"),
                form("x6"),
                form("x7"),
                small_model.term("x1").unwrap().form,
            )
        })
        .collect();

    let x5_nonlinear = results.iter().filter(|r| is_nonlinear(r.0)).count();
    let x6_loglike = results
        .iter()
        .filter(|r| matches!(r.1, FpForm::Fp1(p) if (-0.5..=0.5).contains(&p)))
        .count();
    let x7_out = results.iter().filter(|r| r.2 == FpForm::Out).count();
    let x1_small_simple = results.iter().filter(|r| is_out_or_linear(r.3)).count();

    let elapsed = t0.elapsed();
    let ok = x5_nonlinear >= 9 && x6_loglike >= 9 && x7_out >= 9 && x1_small_simple >= 8;
    println!(
        "ACCEPTANCE 5 (true-model recovery): {} (x5 nonlinear {x5_nonlinear}/10 [>=9], \
         x6 log-like {x6_loglike}/10 [>=9], x7 out {x7_out}/10 [>=9], \
         x1@125 simple {x1_small_simple}/10 [>=8] in {elapsed:.2?})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(
        x5_nonlinear >= 9,
        "x5 non-linear in only {x5_nonlinear}/10 runs"
    );
    assert!(
        x6_loglike >= 9,
        "x6 log-like FP1 in only {x6_loglike}/10 runs"
    );
    assert!(x7_out >= 9, "x7 excluded in only {x7_out}/10 runs");
    assert!(
        x1_small_simple >= 8,
        "x1 excluded-or-linear at n=125 in only {x1_small_simple}/10 runs"
    );
    assert!(elapsed.as_secs() < 900, "took {elapsed:?}, budget 15 min");
}

/// The frozen planted-influential-point fixture: a clean log signal on 60
/// grid points plus one far-out observation pulled six noise-sd off the
/// curve. Verified against the full-refit oracle before freezing: the
/// planted point is the unique decision-flipping deletion.
fn planted_fixture() -> (Vec<f64>, Vec<f64>, usize) {
    let mut r = rng(1);
    let n = 60;
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 9.0 * i as f64 / (n - 1) as f64)
        .collect();
    let mut y: Vec<f64> = x
        .iter()
        .map(|&v| v.ln() + 0.1 * draw_normal(&mut r))
        .collect();
    let planted_x = 50.0 * 10.0; // 50 times the regular maximum
    x.push(planted_x);
    y.push(planted_x.ln() - 0.6); // six noise sd below the curve
    (x, y, n)
}

/// Criterion 6: the scan flags exactly the planted observation, and its
/// removal flips the selected function from FP2 to FP1.
#[test]
fn acceptance_6_planted_ip_detection() {
    let t0 = Instant::now();
    let (x, y, planted) = planted_fixture();

    let full = run_fsp(&x, &y, None, &FspOptions::at_level(0.05)).unwrap();
    assert!(
        matches!(full.selection.form, FpForm::Fp2(_, _)),
        "full data should select FP2, got {:?}",
        full.selection.form
    );

    let scan = loo_scan(&x, &y, None, &[0.05], 2).unwrap();
    let report = flag_influential(&scan, 0.05, "x", AdjustMode::Univariable);
    let flagged: Vec<usize> = report.flagged.iter().map(|d| d.first).collect();
    assert_eq!(
        flagged,
        vec![planted],
        "expected exactly the planted index {planted}, got {flagged:?}"
    );

    let reduced = run_fsp(
        &x[..planted],
        &y[..planted],
        None,
        &FspOptions::at_level(0.05),
    )
    .unwrap();
    assert!(
        matches!(reduced.selection.form, FpForm::Fp1(_)),
        "after removal the selection should be FP1, got {:?}",
        reduced.selection.form
    );
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    pass(
        6,
        "planted-IP detection",
        format!(
            "unique flag at obs {} flips {:?} -> {:?} in {elapsed:.2?}",
            planted + 1,
            full.selection.form,
            reduced.selection.form
        ),
    );
}

/// Criterion 7: the full pair scan at n = 250 produces exactly
/// n(n-1)/2 = 31,125 records within the time budget, and sampled records
/// agree with from-scratch double-deletion refits.
#[test]
fn acceptance_7_pair_scan_scale_and_count() {
    let profile = PredictorProfile::reference();
    let ds = plasmode::generate_dataset(5000, &profile, 1).unwrap();
    let a250 = plasmode::slice(&ds, SlicePreset::A250)
        .unwrap()
        .prepared()
        .unwrap();
    let x = a250.column("x5").unwrap();
    let y = a250.column("y").unwrap();

    let t0 = Instant::now();
    let scan = pair_scan(x, y, None, &[0.05, 0.01], 2).unwrap();
    let elapsed = t0.elapsed();
    assert_eq!(scan.records.len(), 31_125);
    assert!(
        elapsed.as_secs() < 300,
        "pair scan took {elapsed:?}, budget 5 min"
    );

    let mut r = rng(777);
    for _ in 0..100 {
        let rec = &scan.records[r.random_range(0..scan.records.len())];
        let (i, j) = (rec.deleted.first, rec.deleted.second.unwrap());
        let keep: Vec<usize> = (0..250).filter(|&k| k != i && k != j).collect();
        let xr: Vec<f64> = keep.iter().map(|&k| x[k]).collect();
        let yr: Vec<f64> = keep.iter().map(|&k| y[k]).collect();
        let want = oracle_fsp(&xr, &yr, &[]);
        assert!((rec.dd_fp2_null - want.dd_fp2_null).abs() <= 1e-8);
        assert!((rec.dd_fp2_linear - want.dd_fp2_linear).abs() <= 1e-8);
        assert!((rec.dd_fp2_fp1.unwrap() - want.dd_fp2_fp1).abs() <= 1e-8);
    }
    pass(
        7,
        "pair-scan scale and count",
        format!("31125 records in {elapsed:.2?}; 100 sampled records match refits"),
    );
}

/// Criterion 8: rescaling any continuous predictor by 0.01 or 100 changes
/// neither the inclusion decisions nor the selected powers.
#[test]
fn acceptance_8_scale_invariance() {
    for seed in 0..5u64 {
        let mut r = rng(55_000 + seed);
        let n = 100;
        let xa = lognormal_vec(&mut r, n, 0.8, 0.7);
        let xb = lognormal_vec(&mut r, n, 2.0, 0.5);
        let xc: Vec<f64> = (0..n)
            .map(|_| f64::from(r.random_range(0..2) == 1))
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.4 * xa[i].ln() + 0.1 * xb[i] + 0.5 * xc[i] + 0.8 * draw_normal(&mut r))
            .collect();
        let base_ds = Dataset::new(
            vec![
                VariableMeta::outcome("y"),
                VariableMeta::continuous("xa"),
                VariableMeta::continuous("xb"),
                VariableMeta::binary("xc"),
            ],
            vec![y.clone(), xa.clone(), xb.clone(), xc.clone()],
            "scale fixture",
        )
        .unwrap()
        .prepared()
        .unwrap();
        let base = fit_mfp(&base_ds, &MfpOptions::at_level(0.05)).unwrap();

        for (target, col) in [("xa", &xa), ("xb", &xb)] {
            for c in [0.01, 100.0] {
                let scaled: Vec<f64> = col.iter().map(|v| v * c).collect();
                let cols = vec![
                    y.clone(),
                    if target == "xa" {
                        scaled.clone()
                    } else {
                        xa.clone()
                    },
                    if target == "xb" {
                        scaled.clone()
                    } else {
                        xb.clone()
                    },
                    xc.clone(),
                ];
                let ds = Dataset::new(
                    vec![
                        VariableMeta::outcome("y"),
                        VariableMeta::continuous("xa"),
                        VariableMeta::continuous("xb"),
                        VariableMeta::binary("xc"),
                    ],
                    cols,
                    "scaled",
                )
                .unwrap()
                .prepared()
                .unwrap();
                let model = fit_mfp(&ds, &MfpOptions::at_level(0.05)).unwrap();
                assert_eq!(
                    base.forms(),
                    model.forms(),
                    "forms changed under {target} x {c} (seed {seed})"
                );
            }
        }
    }
    pass(
        8,
        "scale invariance",
        "5 fixtures x 2 predictors x {0.01, 100}: identical selections".into(),
    );
}

/// Criterion 9 (conditional): exact reproduction of the published
/// univariable selections and influential points requires the published
/// dataset, which only the user can supply (PUBLISHED_DATA environment variable
/// pointing at the file with columns y, x1..x10). Skipped when absent.
#[test]
fn acceptance_9_published_data_reproduction() {
    let Some(path) = std::env::var_os("PUBLISHED_DATA") else {
        println!(
            "ACCEPTANCE 9 (published-data reproduction): SKIPPED (set PUBLISHED_DATA to the published file to enable)"
        );
        return;
    };
    let schema = vec![
        VariableMeta::outcome("y"),
        VariableMeta::continuous("x1"),
        VariableMeta::binary("x2"),
        VariableMeta::continuous("x3"),
        VariableMeta {
            kind: VariableKind::Ordinal,
            ..VariableMeta::continuous("x4")
        },
        VariableMeta::continuous("x5"),
        VariableMeta::continuous("x6"),
        VariableMeta::continuous("x7"),
        VariableMeta::binary("x8"),
        VariableMeta {
            kind: VariableKind::Nominal,
            ..VariableMeta::continuous("x9")
        },
        VariableMeta::continuous("x10"),
    ];
    let ds = mfp::load_dataset(std::path::Path::new(&path), &schema).unwrap();
    let a250 = ds.slice_rows(1, 250, "A250").unwrap().prepared().unwrap();
    let y = a250.column("y").unwrap().to_vec();

    // published univariable selections and p-values (to 0.005)
    let expected: [(&str, FpForm, [f64; 3]); 6] = [
        ("x1", FpForm::Linear, [0.001, 0.165, 0.391]),
        ("x3", FpForm::Out, [0.856, 0.765, 0.659]),
        ("x5", FpForm::Fp2(0.0, 3.0), [0.000, 0.000, 0.033]),
        ("x6", FpForm::Fp1(0.0), [0.002, 0.046, 0.265]),
        ("x7", FpForm::Linear, [0.012, 0.449, 0.678]),
        ("x10", FpForm::Out, [0.135, 0.314, 0.295]),
    ];
    for (name, form, pvals) in expected {
        let x = a250.column(name).unwrap();
        let res = run_fsp(x, &y, None, &FspOptions::at_level(0.05)).unwrap();
        assert_eq!(res.selection.form, form, "selection for {name}");
        for (got, want) in [
            (res.p_fp2_null, pvals[0]),
            (res.p_fp2_linear, pvals[1]),
            (res.p_fp2_fp1.unwrap(), pvals[2]),
        ] {
            assert!(
                (got - want).abs() <= 0.005,
                "{name}: p-value {got:.4} vs published {want}"
            );
        }
    }

    // the three influential points of x5 at the 0.05 level
    let x5 = a250.column("x5").unwrap();
    let scan = loo_scan(x5, &y, None, &[0.05], 2).unwrap();
    let report = flag_influential(&scan, 0.05, "x5", AdjustMode::Univariable);
    let mut flagged: Vec<usize> = report.flagged.iter().map(|d| d.first + 1).collect();
    flagged.sort_unstable();
    assert_eq!(flagged, vec![16, 151, 175], "x5 influential points");
    pass(
        9,
        "published-data reproduction",
        "univariable selections, p-values and x5 IP set reproduced".into(),
    );
}
