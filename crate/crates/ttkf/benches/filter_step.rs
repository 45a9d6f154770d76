use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ttkf::kalman::{contract_cov_transition, predict_cov, KalmanState, ModelSpec, ProcessNoise, Transition};
use ttkf::parallel::set_parallel;
use ttkf::tt::{RoundingPolicy, TTMatrix, TensorTrain};
use ttkf::DenseTensor;

fn random_ttm(l: usize, n: usize, d: usize, rank: usize, seed: u64) -> TTMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let rl = if k == 0 { l } else { rank };
        let rr = if k == d - 1 { 1 } else { rank };
        cores.push(
            DenseTensor::from_fn(vec![rl, n, n, rr], |_| rng.sample(StandardNormal)).unwrap(),
        );
    }
    TTMatrix::from_cores(cores).unwrap()
}

/// One mixer-scale filter step (n = 21, d = 7, tolerance 0.1).
fn bench_step_mixer_scale(c: &mut Criterion) {
    let n = 21;
    let d = 7;
    let policy = RoundingPolicy::with_tolerance(0.1).unwrap();
    let model = ModelSpec::time_invariant(vec![0.01]).unwrap();
    // warm the state up so ranks are realistic
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut state = KalmanState::init(&[1000.0], n, d, policy).unwrap();
    for _ in 0..30 {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ct = TensorTrain::rank1_from_vector(&u, d).unwrap();
        let y: f64 = rng.sample(StandardNormal);
        state = state.step(&model, &ct, &[y]).unwrap().state;
    }
    let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ct = TensorTrain::rank1_from_vector(&u, d).unwrap();

    let mut group = c.benchmark_group("filter_step_mixer_scale");
    for parallel in modes() {
        group.bench_with_input(mode_id(parallel), &parallel, |b, &parallel| {
            set_parallel(parallel);
            b.iter(|| state.step(&model, &ct, &[0.5]).unwrap());
        });
    }
    group.finish();
    set_parallel(true);
}

/// Covariance propagation with a non-trivial transition: the per-core
/// contraction is the data-parallel hot spot.
fn bench_predict_cov(c: &mut Criterion) {
    let n = 6;
    let d = 6;
    let cov = random_ttm(1, n, d, 3, 7);
    let a = random_ttm(1, n, d, 2, 8);
    let policy = RoundingPolicy::with_tolerance(1e-8).unwrap();

    let mut group = c.benchmark_group("predict_cov");
    for parallel in modes() {
        group.bench_with_input(
            BenchmarkId::new("contract", label(parallel)),
            &parallel,
            |b, &parallel| {
                set_parallel(parallel);
                b.iter(|| contract_cov_transition(&cov, &a).unwrap());
            },
        );
        group.bench_with_input(
            BenchmarkId::new("full", label(parallel)),
            &parallel,
            |b, &parallel| {
                set_parallel(parallel);
                b.iter(|| {
                    predict_cov(
                        &cov,
                        &Transition::Matrix(a.clone()),
                        &ProcessNoise::Zero,
                        &policy,
                    )
                    .unwrap()
                });
            },
        );
    }
    group.finish();
    set_parallel(true);
}

fn bench_tt_round(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = 6;
    let n = 8;
    let rank = 24;
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let rl = if k == 0 { 1 } else { rank };
        let rr = if k == d - 1 { 1 } else { rank };
        cores.push(DenseTensor::from_fn(vec![rl, n, rr], |_| rng.sample(StandardNormal)).unwrap());
    }
    let tt = TensorTrain::from_cores(cores).unwrap();
    let policy = RoundingPolicy::with_tolerance(1e-2).unwrap();
    c.bench_function("tt_round_d6_n8_r24", |b| b.iter(|| tt.rounded(&policy).unwrap()));
}

fn modes() -> Vec<bool> {
    if cfg!(feature = "parallel") {
        vec![false, true]
    } else {
        vec![false]
    }
}

fn label(parallel: bool) -> &'static str {
    if parallel {
        "parallel"
    } else {
        "sequential"
    }
}

fn mode_id(parallel: bool) -> BenchmarkId {
    BenchmarkId::from_parameter(label(parallel))
}

criterion_group!(benches, bench_step_mixer_scale, bench_predict_cov, bench_tt_round);
criterion_main!(benches);
