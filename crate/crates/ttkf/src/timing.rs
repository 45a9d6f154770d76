//! Wall-clock measurement of filter steps for the scaling checks: per-step
//! cost with bounded ranks should grow linearly in the degree `d`.

use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::kalman::{dense_step, DenseKalmanState, KalmanState, ModelSpec};
use crate::parallel;
use crate::tt::{RoundingPolicy, TensorTrain};

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub degrees: Vec<usize>,
    pub mode_size: usize,
    pub iterations: usize,
    pub policy: RoundingPolicy,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub degree: usize,
    pub median_seconds: f64,
}

/// Median per-step time of the tensor-train filter for each degree in the
/// config. Runs on the sequential path so the measurement reflects the
/// core-wise work alone; the previous execution mode is restored afterwards.
pub fn run_scaling_sweep(cfg: &ScalingConfig) -> Result<Vec<ScalingPoint>> {
    let was_parallel = parallel::set_parallel(false);
    let result = (|| {
        let mut points = Vec::with_capacity(cfg.degrees.len());
        for &d in &cfg.degrees {
            let times = measure_tn_step_seconds(cfg.mode_size, d, &cfg.policy, cfg.iterations, cfg.seed)?;
            points.push(ScalingPoint { degree: d, median_seconds: median(times) });
        }
        Ok(points)
    })();
    parallel::set_parallel(was_parallel);
    result
}

/// Per-step times of the tensor-train filter on a synthetic run.
pub fn measure_tn_step_seconds(
    n: usize,
    d: usize,
    policy: &RoundingPolicy,
    iterations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ModelSpec::time_invariant(vec![0.01])?;
    let mut state = KalmanState::init(&[1000.0], n, d, policy.clone())?;
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c = TensorTrain::rank1_from_vector(&u, d)?;
        let y: f64 = rng.sample(StandardNormal);
        let started = Instant::now();
        state = state.step(&model, &c, &[y])?.state;
        times.push(started.elapsed().as_secs_f64());
    }
    Ok(times)
}

/// Per-step times of the dense reference filter; refuses state lengths the
/// oracle guard does not allow.
pub fn measure_dense_step_seconds(
    n: usize,
    d: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let state_len = n
        .checked_pow(d as u32)
        .ok_or(crate::Error::SizeGuard { size: usize::MAX, guard: crate::kalman::ORACLE_STATE_GUARD })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DenseKalmanState::init(&[1000.0], state_len)?;
    let r_diag = [0.01];
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c_tt = TensorTrain::rank1_from_vector(&u, d)?;
        let c = Array1::from_vec(c_tt.contract_matrix()?.column(0).to_vec());
        let y = [rng.sample::<f64, _>(StandardNormal)];
        let started = Instant::now();
        state = dense_step(&state, None, None, &c, &r_diag, &y)?;
        times.push(started.elapsed().as_secs_f64());
    }
    Ok(times)
}

pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("no NaN timings"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Coefficient of determination of the least-squares line through the points.
pub fn linear_fit_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 1.0;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let fit = mean_y + slope * (p.0 - mean_x);
            (p.1 - fit) * (p.1 - fit)
        })
        .sum();
    1.0 - ss_res / syy
}
