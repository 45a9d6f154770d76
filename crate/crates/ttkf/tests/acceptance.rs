//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p ttkf --test acceptance -- --nocapture` to see the
//! per-criterion lines for passing tests too.

// `!(b < a)` keeps NaN window means from slipping through the monotone check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::sync::OnceLock;

use ndarray::Array1;

use ttkf::dense::{relative_frobenius_distance, repeated_kron, DenseTensor};
use ttkf::kalman::{
    contract_cov_oracle, dense_step, kk_outer_tn, DenseKalmanState, KalmanState, ModelSpec,
};
use ttkf::timing::{linear_fit_r2, run_scaling_sweep, ScalingConfig};
use ttkf::tt::{RoundingPolicy, TTMatrix, TensorTrain};
use ttkf::volterra::{
    build_ut, gen_experiment1, gen_mixer, identify, rmse, IdentifyOptions, IdentifyResult,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const EXPERIMENT_SEED: u64 = 61;
const SISO_SIGMA2: f64 = 1000.0;
const SISO_R: f64 = 1e-2;

fn pass(criterion: &str, detail: String) {
    println!("ACCEPT {criterion}: PASS — {detail}");
}

/// Degree-4 SISO run shared by criteria 2–4: 1000 samples, zero tolerance.
struct SisoRun {
    result: IdentifyResult,
}

fn siso_run_tau0() -> &'static SisoRun {
    static RUN: OnceLock<SisoRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let (record, truth) = gen_experiment1(EXPERIMENT_SEED, 1000).expect("generator");
        let opts = IdentifyOptions {
            inputs: 1,
            outputs: 1,
            memory: 4,
            degree: 4,
            init_variance: vec![SISO_SIGMA2],
            policy: RoundingPolicy::exact(),
            steps: None,
            truth: Some(truth),
        };
        let model = ModelSpec::time_invariant(vec![SISO_R]).expect("model");
        let result = identify(&opts, &model, &record).expect("identification run");
        SisoRun { result }
    })
}

fn run_siso_at_tolerance(tolerance: f64) -> IdentifyResult {
    let (record, truth) = gen_experiment1(EXPERIMENT_SEED, 1000).expect("generator");
    let opts = IdentifyOptions {
        inputs: 1,
        outputs: 1,
        memory: 4,
        degree: 4,
        init_variance: vec![SISO_SIGMA2],
        policy: RoundingPolicy::with_tolerance(tolerance).expect("policy"),
        steps: None,
        truth: Some(truth),
    };
    let model = ModelSpec::time_invariant(vec![SISO_R]).expect("model");
    identify(&opts, &model, &record).expect("identification run")
}

/// Criterion 1: on the 625-state setup with zero tolerance, the tensor-train
/// filter matches the dense Kalman filter within 1e-8 relative at each of
/// 200 steps, on both the mean and the covariance.
#[test]
fn acceptance_01_oracle_equivalence() {
    const STEPS: usize = 200;
    const BOUND: f64 = 1e-8;
    let (record, _) = gen_experiment1(EXPERIMENT_SEED, STEPS + 1).expect("generator");
    let model = ModelSpec::time_invariant(vec![SISO_R]).expect("model");
    let mut tn = KalmanState::init(&[SISO_SIGMA2], 5, 4, RoundingPolicy::exact()).expect("init");
    let mut dense = DenseKalmanState::init(&[SISO_SIGMA2], 625).expect("init");
    let mut mean_devs = Vec::with_capacity(STEPS);
    let mut cov_devs = Vec::with_capacity(STEPS);
    for t in 0..STEPS {
        let ut = build_ut(record.inputs(), t, 4).expect("u_t");
        let c = TensorTrain::rank1_from_vector(&ut, 4).expect("c");
        let c_dense = Array1::from_vec(c.contract_matrix().expect("c dense").column(0).to_vec());
        let y = [record.outputs()[0][t]];
        tn = tn.step(&model, &c, &y).expect("tn step").state;
        dense = dense_step(&dense, None, None, &c_dense, &[SISO_R], &y).expect("dense step");

        let tn_mean = tn.mean.contract_matrix().expect("mean");
        mean_devs.push(rel_l2(tn_mean.iter(), dense.mean.iter()));
        let tn_cov = contract_cov_oracle(&tn.cov).expect("cov");
        cov_devs.push(rel_l2(tn_cov[0].iter(), dense.cov[0].iter()));
    }
    let worst_mean = mean_devs.iter().cloned().fold(0.0_f64, f64::max);
    let worst_cov = cov_devs.iter().cloned().fold(0.0_f64, f64::max);
    let first_violation = mean_devs
        .iter()
        .zip(&cov_devs)
        .position(|(m, c)| *m > BOUND || *c > BOUND);
    println!(
        "criterion 1: worst mean dev {worst_mean:.3e}, worst cov dev {worst_cov:.3e}; \
         mean dev at t = 0/50/100/150/199: {:.2e}/{:.2e}/{:.2e}/{:.2e}/{:.2e}",
        mean_devs[0], mean_devs[50], mean_devs[100], mean_devs[150], mean_devs[199]
    );
    assert!(
        first_violation.is_none(),
        "criterion 1: deviation exceeds 1e-8 from t={} on; worst mean {worst_mean:.3e}, worst cov {worst_cov:.3e}",
        first_violation.unwrap()
    );
    pass(
        "criterion 1 (oracle equivalence)",
        format!("200 steps, worst mean dev {worst_mean:.3e}, worst cov dev {worst_cov:.3e} ≤ 1e-8"),
    );
}

/// Criterion 2: over 1000 steps at zero tolerance the relative error drops by
/// at least a factor of 10 from its value at step 1.
#[test]
fn acceptance_02_convergence() {
    let run = siso_run_tau0();
    let first = run.result.metrics[0].rel_err.expect("rel_err");
    let last = run.result.metrics.last().unwrap().rel_err.expect("rel_err");
    assert!(
        last * 10.0 <= first,
        "criterion 2: rel_err step1 {first:.4e} -> step1000 {last:.4e}, factor {}",
        first / last
    );
    pass(
        "criterion 2 (convergence)",
        format!("rel_err {first:.3e} -> {last:.3e} (factor {:.1})", first / last),
    );
}

/// Criterion 3: converged ranks at zero tolerance. Hard bound: mean ranks
/// elementwise ≤ (5, 25, 5) and covariance ranks ≤ (25, 625, 25). Observed
/// values are reported against the reference measurements (5, 15, 5) /
/// (25, 226, 25); the exact middle value depends on the numerical-rank
/// threshold.
#[test]
fn acceptance_03_rank_behavior_tau0() {
    let run = siso_run_tau0();
    let mean_ranks = run.result.state.mean.ranks();
    let cov_ranks = run.result.state.cov.ranks();
    let mean_bound = [5usize, 25, 5];
    let cov_bound = [25usize, 625, 25];
    for (k, (&r, &b)) in mean_ranks.iter().zip(&mean_bound).enumerate() {
        assert!(r <= b, "criterion 3: mean rank {k} is {r} > bound {b}");
    }
    for (k, (&r, &b)) in cov_ranks.iter().zip(&cov_bound).enumerate() {
        assert!(r <= b, "criterion 3: cov rank {k} is {r} > bound {b}");
    }
    pass(
        "criterion 3 (ranks at zero tolerance)",
        format!(
            "mean {mean_ranks:?} ≤ (5,25,5), reference (5,15,5); cov {cov_ranks:?} ≤ (25,625,25), reference (25,226,25)"
        ),
    );
}

/// Criterion 4: with tolerances 0.1, 0.5, 0.9 every mean/covariance rank is 1
/// at every step after the first, and the 100-step window means of the
/// relative error decrease monotonically.
#[test]
fn acceptance_04_aggressive_rounding() {
    let mut failures = Vec::new();
    for &tol in &[0.1, 0.5, 0.9] {
        let result = run_siso_at_tolerance(tol);
        let metrics = &result.metrics;
        // rank claim, diagnosed in detail before asserting
        let offenders: Vec<usize> = metrics
            .iter()
            .skip(1)
            .filter(|m| {
                m.mean_ranks.iter().any(|&r| r != 1) || m.cov_ranks.iter().any(|&r| r != 1)
            })
            .map(|m| m.t)
            .collect();
        let max_mean: usize =
            metrics.iter().flat_map(|m| m.mean_ranks.iter().copied()).max().unwrap();
        let max_cov: usize =
            metrics.iter().flat_map(|m| m.cov_ranks.iter().copied()).max().unwrap();
        // 100-step window means of the relative error
        let errs: Vec<f64> = metrics.iter().map(|m| m.rel_err.unwrap()).collect();
        let windows: Vec<f64> = errs
            .chunks(100)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        let window_violations: Vec<usize> = windows
            .windows(2)
            .enumerate()
            .filter(|(_, pair)| !(pair[1] < pair[0]))
            .map(|(i, _)| i)
            .collect();
        println!(
            "criterion 4, tolerance {tol}: max mean rank {max_mean}, max cov rank {max_cov}, \
             {} steps with rank > 1 (first {:?}), window means {:?}, violations {:?}",
            offenders.len(),
            offenders.first(),
            windows.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            window_violations
        );
        if !offenders.is_empty() {
            failures.push(format!(
                "tolerance {tol}: ranks exceed 1 on {} steps (t={}..{})",
                offenders.len(),
                offenders.first().unwrap(),
                offenders.last().unwrap()
            ));
        }
        if !window_violations.is_empty() {
            failures.push(format!(
                "tolerance {tol}: window means not strictly decreasing at windows {window_violations:?}"
            ));
        }
    }
    assert!(failures.is_empty(), "criterion 4: {}", failures.join("; "));
    pass(
        "criterion 4 (aggressive rounding)",
        "all ranks 1 after step 1 and window means strictly decreasing for tolerances 0.1/0.5/0.9"
            .into(),
    );
}

/// Criterion 5: the mixer experiment at desk scale. State length 21^7 is
/// never materialized; held-out RMSE improves with SNR and is within a factor
/// of 3 of the reference magnitudes 0.1778/0.097/0.034; mean ranks stay ≤ 20
/// at tolerance 0.1; peak filter storage stays below 100 MB.
#[test]
fn acceptance_05_mixer() {
    const FILTER_SPAN: usize = 5900;
    const HOLDOUT: usize = 100;
    const N: usize = 21;
    const D: usize = 7;
    let snrs = [12.0, 17.0, 26.0];
    let reference_rmse = [0.1778, 0.097, 0.034];
    let mut measured = Vec::new();
    let mut peak_bytes_all = 0usize;
    let mut max_rank_all = 0usize;
    for (&snr, &reference) in snrs.iter().zip(&reference_rmse) {
        let data = gen_mixer(EXPERIMENT_SEED, snr).expect("mixer data");
        let opts = IdentifyOptions {
            inputs: 2,
            outputs: 1,
            memory: 10,
            degree: D,
            init_variance: vec![SISO_SIGMA2],
            policy: RoundingPolicy::with_tolerance(0.1).expect("policy"),
            steps: Some(FILTER_SPAN),
            truth: None,
        };
        let model = ModelSpec::time_invariant(vec![SISO_R]).expect("model");
        let result = identify(&opts, &model, &data.record).expect("mixer identification");

        // peak storage from the per-step ranks (these counts are the exact
        // TT storage formulas instantiated)
        let peak_bytes = result
            .metrics
            .iter()
            .map(|m| 8 * (tt_storage(1, N, &m.mean_ranks) + ttm_storage(1, N, &m.cov_ranks)))
            .max()
            .unwrap();
        peak_bytes_all = peak_bytes_all.max(peak_bytes);
        let max_rank = result
            .metrics
            .iter()
            .flat_map(|m| m.mean_ranks.iter().copied())
            .max()
            .unwrap();
        max_rank_all = max_rank_all.max(max_rank);

        let mut simulated = Vec::with_capacity(HOLDOUT);
        for t in FILTER_SPAN..FILTER_SPAN + HOLDOUT {
            simulated.push(result.spec.simulate(data.record.inputs(), t).expect("simulate")[0]);
        }
        let err = rmse(&simulated, &data.reference[FILTER_SPAN..]);
        println!(
            "criterion 5, SNR {snr} dB: holdout RMSE {err:.4} (reference {reference}), max mean rank {max_rank}, peak state {} KiB",
            peak_bytes / 1024
        );
        measured.push(err);
    }
    let mut failures = Vec::new();
    for ((&snr, &reference), &err) in snrs.iter().zip(&reference_rmse).zip(&measured) {
        if !(err <= 3.0 * reference && err >= reference / 3.0) {
            failures.push(format!(
                "RMSE {err:.4} at SNR {snr} dB outside factor 3 of {reference}"
            ));
        }
    }
    if !(measured[0] > measured[1] && measured[1] > measured[2]) {
        failures.push(format!("RMSE not strictly decreasing with SNR: {measured:?}"));
    }
    if max_rank_all > 20 {
        failures.push(format!("max mean rank {max_rank_all} > 20"));
    }
    if peak_bytes_all >= 100_000_000 {
        failures.push(format!("peak state storage {peak_bytes_all} bytes ≥ 100 MB"));
    }
    assert!(failures.is_empty(), "criterion 5: {}", failures.join("; "));
    pass(
        "criterion 5 (mixer)",
        format!(
            "RMSE {:.4}/{:.4}/{:.4} decreasing with SNR, within factor 3 of 0.1778/0.097/0.034; max mean rank {max_rank_all} ≤ 20; peak state {} KiB",
            measured[0],
            measured[1],
            measured[2],
            peak_bytes_all / 1024
        ),
    );
}

/// Criterion 6: rounding keeps the promised relative accuracy on 100 random
/// trains for tolerances 1e-10, 1e-2, 0.5, and round-trips at tolerance 0.
#[test]
fn acceptance_06_rounding_guarantee() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = rng.gen_range(2..=6);
        let n = rng.gen_range(2..=6);
        let max_rank = rng.gen_range(2..=8);
        let mut cores = Vec::with_capacity(d);
        let mut ranks = vec![0usize; d - 1];
        for r in ranks.iter_mut() {
            *r = rng.gen_range(1..=max_rank);
        }
        for k in 0..d {
            let rl = if k == 0 { 1 } else { ranks[k - 1] };
            let rr = if k == d - 1 { 1 } else { ranks[k] };
            cores.push(
                DenseTensor::from_fn(vec![rl, n, rr], |_| rng.sample(StandardNormal)).unwrap(),
            );
        }
        let tt = TensorTrain::from_cores(cores).unwrap();
        let reference = tt.contract_full().unwrap();
        for &tol in &[0.0, 1e-10, 1e-2, 0.5] {
            let rounded = tt
                .rounded(&RoundingPolicy::with_tolerance(tol).unwrap())
                .unwrap_or_else(|e| panic!("case {case}: rounding failed: {e}"));
            let err = relative_frobenius_distance(&reference, &rounded.contract_full().unwrap());
            let bound = if tol == 0.0 { 1e-12 } else { tol };
            assert!(
                err <= bound,
                "criterion 6: case {case} (d={d}, n={n}): error {err:.3e} > tolerance {tol}"
            );
            if tol > 0.0 {
                worst = worst.max(err / tol);
            }
        }
    }
    pass(
        "criterion 6 (rounding guarantee)",
        format!("100 random trains, worst error/tolerance ratio {worst:.3}"),
    );
}

/// Criterion 7: the gain outer square contracts to the column-wise outer
/// product on 50 random instances.
#[test]
fn acceptance_07_gain_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let l = rng.gen_range(1..=4);
        let n = rng.gen_range(2..=4);
        let d = rng.gen_range(1..=4);
        let max_rank = rng.gen_range(1..=4);
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let rl = if k == 0 { l } else { max_rank };
            let rr = if k == d - 1 { 1 } else { max_rank };
            cores.push(
                DenseTensor::from_fn(vec![rl, n, rr], |_| rng.sample(StandardNormal)).unwrap(),
            );
        }
        let gain = TensorTrain::from_cores(cores).unwrap();
        let outer = kk_outer_tn(&gain).unwrap();
        let dense = outer.contract_full().unwrap();
        let kd = gain.contract_matrix().unwrap();
        let rows = kd.nrows();
        let mut err: f64 = 0.0;
        for b in 0..l {
            for i in 0..rows {
                for j in 0..rows {
                    let expect = kd[[i, b]] * kd[[j, b]];
                    err = err.max((dense.at(&[b, i, j]) - expect).abs());
                }
            }
        }
        let scale = kd.iter().map(|x| x * x).sum::<f64>();
        let rel = if scale > 0.0 { err / scale.sqrt() } else { err };
        assert!(rel <= 1e-12, "criterion 7: case {case} deviates by {rel:.3e}");
        worst = worst.max(rel);
    }
    pass("criterion 7 (gain outer square)", format!("50 instances, worst deviation {worst:.3e}"));
}

/// Criterion 8: with all ranks capped at 1 the median per-step time grows
/// linearly in the degree (R² of the least-squares line ≥ 0.9).
#[test]
fn acceptance_08_linear_scaling() {
    let cfg = ScalingConfig {
        degrees: (2..=8).collect(),
        mode_size: 32,
        iterations: 120,
        policy: RoundingPolicy::new(0.1, Some(1)).expect("policy"),
        seed: 800,
    };
    let points = run_scaling_sweep(&cfg).expect("sweep");
    let fit: Vec<(f64, f64)> =
        points.iter().map(|p| (p.degree as f64, p.median_seconds)).collect();
    let r2 = linear_fit_r2(&fit);
    for p in &points {
        println!(
            "criterion 8: d={} median step {:.1} µs",
            p.degree,
            p.median_seconds * 1e6
        );
    }
    assert!(r2 >= 0.9, "criterion 8: linear fit R² = {r2:.4} < 0.9 over {fit:?}");
    pass("criterion 8 (linear-in-d scaling)", format!("R² = {r2:.4} over d = 2..8"));
}

/// Criterion 9: the closed-form initializers contract to the zero matrix,
/// σ²·I and u^{⊗d}, and their storage counts equal the formulas exactly.
#[test]
fn acceptance_09_initializers() {
    // zero mean, batched
    let zeros = TensorTrain::zeros(3, &[5; 4]).expect("zeros");
    let dense = zeros.contract_full().expect("contract");
    assert!(dense.data().iter().all(|&x| x == 0.0), "criterion 9: zero train not zero");
    assert_eq!(zeros.storage_floats(), (3 + 4 - 1) * 5, "criterion 9: zero storage");
    assert!(zeros.ranks().iter().all(|&r| r == 1));

    // scaled identity covariance
    let sigma2 = [1000.0, 2.5];
    let cov = TTMatrix::scaled_identity(&sigma2, 3, 2).expect("identity");
    assert_eq!(cov.storage_floats(), (2 + 2 - 1) * 9, "criterion 9: identity storage");
    let dense = cov.contract_full().expect("contract");
    let mut worst: f64 = 0.0;
    for (b, &s) in sigma2.iter().enumerate() {
        for i in 0..9 {
            for j in 0..9 {
                let expect = if i == j { s } else { 0.0 };
                worst = worst.max((dense.at(&[b, i, j]) - expect).abs() / s);
            }
        }
    }
    assert!(worst <= 1e-12, "criterion 9: σ²I deviates by {worst:.3e}");

    // rank-one input power
    let u = [1.0, -0.5, 0.25, 2.0, 0.125];
    let tt = TensorTrain::rank1_from_vector(&u, 4).expect("rank1");
    assert_eq!(tt.storage_floats(), 5, "criterion 9: shared-core storage");
    let got = tt.contract_full().expect("contract");
    let expect = repeated_kron(&u, 4).expect("power");
    assert!(
        relative_frobenius_distance(&expect, &got.reshaped(vec![625]).expect("reshape")) <= 1e-12,
        "criterion 9: u^{{⊗d}} contraction mismatch"
    );
    pass(
        "criterion 9 (initializers)",
        "zeros (l+d−1)n, σ²·I (l+d−1)n², u^{⊗d} with n stored floats, contractions within 1e-12"
            .into(),
    );
}

fn rel_l2<'a>(
    got: impl Iterator<Item = &'a f64>,
    expect: impl Iterator<Item = &'a f64> + Clone,
) -> f64 {
    let norm: f64 = expect.clone().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = got.zip(expect).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / norm
    }
}

/// Mean-train storage in floats for uniform mode size `n`: the first core is
/// `l·n·r_1`, interior cores `r_{k-1}·n·r_k`, the last `r_{d-1}·n`.
fn tt_storage(l: usize, n: usize, ranks: &[usize]) -> usize {
    let Some((&first, _)) = ranks.split_first() else {
        return l * n;
    };
    let mut total = l * n * first;
    for w in ranks.windows(2) {
        total += w[0] * n * w[1];
    }
    total + ranks.last().unwrap() * n
}

fn ttm_storage(l: usize, n: usize, ranks: &[usize]) -> usize {
    tt_storage(l, n * n, ranks)
}
