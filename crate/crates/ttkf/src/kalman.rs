//! Kalman filtering in tensor-train form.
//!
//! The filter tracks `l` state vectors of length `n^d` at once: the means as
//! a batched [`TensorTrain`], the covariances as a batched [`TTMatrix`]. One
//! step runs
//!
//! ```text
//! M⁺ = A·M           P⁺ = A·P·Aᵀ + Q            (predict)
//! v  = y − c·M⁺      s  = c·P⁺·cᵀ + R           (innovate)
//! K  = P⁺·cᵀ/s       M ← M⁺ + K·diag(v)         (gain, mean update)
//! P ← P⁺ − (K □ K)·diag(s)                      (covariance update)
//! ```
//!
//! per batch slice, with every quantity held and contracted core by core so
//! the `n^d`-long vectors never materialize. Ranks grow multiplicatively
//! under the predict contractions (`r_M·r_A`, `r_P·r_A²`), additively under
//! the updates, and quadratically under the gain square `K □ K`; rounding is
//! applied after each rank-growing operation on a fixed schedule.
//!
//! [`dense_step`] implements the same recursion on dense matrices and serves
//! as the brute-force oracle for everything above, up to
//! [`ORACLE_STATE_GUARD`] states.

use ndarray::{Array1, Array2, ShapeBuilder};

use crate::dense::{khatri_rao_unguarded, kronecker_unguarded, tensordot, DenseTensor};
use crate::error::{Error, Result};
use crate::parallel::try_map_indexed;
use crate::tt::{RoundingPolicy, TTMatrix, TensorTrain};

/// Largest state length `n^d` the dense oracle path will materialize.
pub const ORACLE_STATE_GUARD: usize = 4096;

/// Relative floor under the largest innovation variance; a slice falling
/// below it signals a corrupted covariance and aborts the step.
const VARIANCE_FLOOR: f64 = 1e-12;

/// State transition operator.
#[derive(Debug, Clone)]
pub enum Transition {
    /// `A = I`: prediction leaves the mean and covariance untouched.
    Identity,
    Matrix(TTMatrix),
}

/// Process noise covariance (diagonal per batch slice).
#[derive(Debug, Clone)]
pub enum ProcessNoise {
    Zero,
    Diagonal(TTMatrix),
}

/// Model description shared by all steps: transition, process noise, and the
/// per-output measurement-noise variances.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub transition: Transition,
    pub process_noise: ProcessNoise,
    pub measurement_variance: Vec<f64>,
}

impl ModelSpec {
    /// Time-invariant noise-free dynamics: `A = I`, `Q = 0`.
    pub fn time_invariant(measurement_variance: Vec<f64>) -> Result<Self> {
        let spec = ModelSpec {
            transition: Transition::Identity,
            process_noise: ProcessNoise::Zero,
            measurement_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.measurement_variance.is_empty() {
            return Err(Error::invalid("need at least one measurement variance"));
        }
        for (i, &r) in self.measurement_variance.iter().enumerate() {
            if !(r > 0.0) {
                return Err(Error::NonpositiveVariance { index: i, value: r });
            }
        }
        Ok(())
    }
}

/// Filter state: batched mean train, batched covariance train, step counter,
/// and the rounding policy applied after every rank-growing operation.
#[derive(Debug, Clone)]
pub struct KalmanState {
    pub mean: TensorTrain,
    pub cov: TTMatrix,
    pub t: usize,
    pub policy: RoundingPolicy,
}

impl KalmanState {
    pub fn new(mean: TensorTrain, cov: TTMatrix, policy: RoundingPolicy) -> Result<Self> {
        if mean.batch_size() != cov.batch_size() {
            return Err(Error::BatchMismatch {
                left: mean.batch_size(),
                right: cov.batch_size(),
            });
        }
        if mean.mode_dims() != cov.row_dims() || mean.mode_dims() != cov.col_dims() {
            return Err(Error::dim_mismatch(format!(
                "mean modes {:?} do not match covariance modes {:?}/{:?}",
                mean.mode_dims(),
                cov.row_dims(),
                cov.col_dims()
            )));
        }
        Ok(KalmanState { mean, cov, t: 0, policy })
    }

    /// Zero mean and `sigma2[b]·I` covariance per batch slice.
    pub fn init(sigma2: &[f64], n: usize, d: usize, policy: RoundingPolicy) -> Result<Self> {
        let l = sigma2.len();
        let mean = TensorTrain::zeros(l, &vec![n; d])?;
        let cov = TTMatrix::scaled_identity(sigma2, n, d)?;
        KalmanState::new(mean, cov, policy)
    }

    pub fn batch_size(&self) -> usize {
        self.mean.batch_size()
    }

    /// One full predict/update cycle for measurement row `c` and outputs `y`.
    pub fn step(&self, model: &ModelSpec, c: &TensorTrain, y: &[f64]) -> Result<StepResult> {
        let l = self.batch_size();
        if y.len() != l || model.measurement_variance.len() != l {
            return Err(Error::BatchMismatch { left: l, right: y.len() });
        }
        if c.batch_size() != 1 {
            return Err(Error::invalid("measurement train must have batch size 1"));
        }
        if c.mode_dims() != self.mean.mode_dims() {
            return Err(Error::dim_mismatch(format!(
                "measurement modes {:?} do not match state modes {:?}",
                c.mode_dims(),
                self.mean.mode_dims()
            )));
        }
        model.validate()?;

        let mean_pred = predict_mean(&self.mean, &model.transition, &self.policy)?;
        let cov_pred = predict_cov(
            &self.cov,
            &model.transition,
            &model.process_noise,
            &self.policy,
        )?;

        let v = innovation(y, &mean_pred, c)?;
        let s = innovation_variance(&cov_pred, c, &model.measurement_variance)?;
        let gain = kalman_gain(&cov_pred, c, &s, &self.policy)?;
        let mean = update_mean(&mean_pred, &gain, &v, &self.policy)?;
        let cov = update_cov(&cov_pred, &gain, &s, &self.policy)?;

        Ok(StepResult {
            state: KalmanState { mean, cov, t: self.t + 1, policy: self.policy.clone() },
            innovation: v,
            innovation_variance: s,
        })
    }
}

/// Outcome of one filter step: the new state plus the innovation and its
/// variance (both per batch slice), which drive the experiment metrics.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: KalmanState,
    pub innovation: Vec<f64>,
    pub innovation_variance: Vec<f64>,
}

/// `M⁺ = A·M`, rounded. `A = I` short-circuits.
pub fn predict_mean(
    mean: &TensorTrain,
    transition: &Transition,
    policy: &RoundingPolicy,
) -> Result<TensorTrain> {
    match transition {
        Transition::Identity => Ok(mean.clone()),
        Transition::Matrix(a) => contract_mean_transition(mean, a)?.rounded(policy),
    }
}

/// `P⁺ = A·P·Aᵀ + Q`: contraction, rounding, addition, rounding. The
/// identity / zero flags skip the corresponding stages.
pub fn predict_cov(
    cov: &TTMatrix,
    transition: &Transition,
    noise: &ProcessNoise,
    policy: &RoundingPolicy,
) -> Result<TTMatrix> {
    let propagated = match transition {
        Transition::Identity => cov.clone(),
        Transition::Matrix(a) => contract_cov_transition(cov, a)?.rounded(policy)?,
    };
    match noise {
        ProcessNoise::Zero => Ok(propagated),
        ProcessNoise::Diagonal(q) => {
            if q.batch_size() != cov.batch_size() {
                return Err(Error::BatchMismatch {
                    left: cov.batch_size(),
                    right: q.batch_size(),
                });
            }
            propagated.add(q)?.rounded(policy)
        }
    }
}

/// Core-wise contraction for the mean prediction; ranks multiply to
/// `r_M·r_A`. No rounding.
pub fn contract_mean_transition(mean: &TensorTrain, a: &TTMatrix) -> Result<TensorTrain> {
    if a.col_dims() != mean.mode_dims() {
        return Err(Error::dim_mismatch(format!(
            "transition column dims {:?} do not match mean modes {:?}",
            a.col_dims(),
            mean.mode_dims()
        )));
    }
    if a.batch_size() != 1 {
        return Err(Error::invalid("transition must have batch size 1"));
    }
    let d = mean.order();
    let cores = try_map_indexed(d, |k| {
        let m = mean.core(k);
        let g = a.core(k);
        // contract the mode index of M with the column index of A; merged
        // rank pairs keep M's rank fastest
        let t = tensordot(m, g, &[1], &[2])?; // (rM, rM', rA, n_row, rA')
        let t = t.permuted(&[0, 2, 3, 1, 4])?; // (rM, rA, n_row, rM', rA')
        let dims = t.dims().to_vec();
        t.into_reshaped(vec![dims[0] * dims[1], dims[2], dims[3] * dims[4]])
    })?;
    TensorTrain::from_cores(cores.into_iter().collect())
}

/// Core-wise double contraction for the covariance prediction; ranks grow to
/// `r_P·r_A²`. No rounding.
pub fn contract_cov_transition(cov: &TTMatrix, a: &TTMatrix) -> Result<TTMatrix> {
    if a.col_dims() != cov.row_dims() || a.col_dims() != cov.col_dims() {
        return Err(Error::dim_mismatch(format!(
            "transition column dims {:?} do not match covariance modes {:?}/{:?}",
            a.col_dims(),
            cov.row_dims(),
            cov.col_dims()
        )));
    }
    if a.batch_size() != 1 {
        return Err(Error::invalid("transition must have batch size 1"));
    }
    let d = cov.order();
    let cores = try_map_indexed(d, |k| {
        let p = cov.core(k);
        let g = a.core(k);
        // row side: contract P's row index with A's column index
        let t1 = tensordot(p, g, &[1], &[2])?; // (rP, nc_p, rP', rA, n_row, rA')
        // column side: contract P's column index with the second A's column index
        let t2 = tensordot(&t1, g, &[1], &[2])?; // (rP, rP', rA, n_row, rA', rA2, n_col, rA2')
        let t2 = t2.permuted(&[0, 2, 5, 3, 6, 1, 4, 7])?; // (rP, rA, rA2, row, col, rP', rA', rA2')
        let dims = t2.dims().to_vec();
        t2.into_reshaped(vec![
            dims[0] * dims[1] * dims[2],
            dims[3],
            dims[4],
            dims[5] * dims[6] * dims[7],
        ])
    })?;
    TTMatrix::from_cores(cores.into_iter().collect())
}

/// `v = y − c·M⁺`: per-core contractions followed by a sequential chain
/// product collapsing to an `l`-vector.
pub fn innovation(y: &[f64], mean_pred: &TensorTrain, c: &TensorTrain) -> Result<Vec<f64>> {
    let l = mean_pred.batch_size();
    if y.len() != l {
        return Err(Error::BatchMismatch { left: l, right: y.len() });
    }
    let projected = chain_collapse_pair(mean_pred, c)?;
    Ok(y.iter().zip(&projected).map(|(yi, mi)| yi - mi).collect())
}

/// `s = c·P⁺·cᵀ + diag(R)` per batch slice; errors if any slice comes out
/// nonpositive.
pub fn innovation_variance(
    cov_pred: &TTMatrix,
    c: &TensorTrain,
    r_diag: &[f64],
) -> Result<Vec<f64>> {
    let l = cov_pred.batch_size();
    if r_diag.len() != l {
        return Err(Error::BatchMismatch { left: l, right: r_diag.len() });
    }
    if c.mode_dims() != cov_pred.row_dims() || c.mode_dims() != cov_pred.col_dims() {
        return Err(Error::dim_mismatch(format!(
            "measurement modes {:?} do not match covariance modes {:?}",
            c.mode_dims(),
            cov_pred.row_dims()
        )));
    }
    let d = cov_pred.order();
    let mats = try_map_indexed(d, |k| {
        let p = cov_pred.core(k);
        let g = c.core(k);
        let t1 = tensordot(p, g, &[1], &[1])?; // (rP, nc, rP', rc, rc')
        let t2 = tensordot(&t1, g, &[1], &[1])?; // (rP, rP', rc, rc', rc2, rc2')
        let t = t2.permuted(&[0, 2, 4, 1, 3, 5])?; // (rP, rc, rc2, rP', rc', rc2')
        let dims = t.dims().to_vec();
        Ok(core_matrix(&t, dims[0] * dims[1] * dims[2], dims[3] * dims[4] * dims[5]))
    })?;
    let folded = fold_chain(mats);
    let mut s = Vec::with_capacity(l);
    for (b, &r) in r_diag.iter().enumerate() {
        let value = folded[[b, 0]] + r;
        if !(value > 0.0) {
            return Err(Error::NonpositiveVariance { index: b, value });
        }
        s.push(value);
    }
    Ok(s)
}

/// `K = P⁺·cᵀ·diag(s)⁻¹`: contraction on the column index everywhere, the
/// `1/s` scaling applied to the first core's batch mode only, then rounding.
pub fn kalman_gain(
    cov_pred: &TTMatrix,
    c: &TensorTrain,
    s: &[f64],
    policy: &RoundingPolicy,
) -> Result<TensorTrain> {
    let l = cov_pred.batch_size();
    if s.len() != l {
        return Err(Error::BatchMismatch { left: l, right: s.len() });
    }
    let s_max = s.iter().cloned().fold(0.0_f64, f64::max);
    let floor = VARIANCE_FLOOR * s_max;
    let mut inv = Vec::with_capacity(l);
    for (b, &sb) in s.iter().enumerate() {
        if !(sb > 0.0) {
            return Err(Error::NonpositiveVariance { index: b, value: sb });
        }
        if sb < floor {
            return Err(Error::VarianceUnderflow { index: b, value: sb, floor });
        }
        inv.push(1.0 / sb);
    }
    let raw = gain_cores(cov_pred, c)?;
    raw.scale_batch_slices(&inv)?.rounded(policy)
}

/// Pre-rounding gain contraction `P⁺ ×₂ c`; ranks are `r_P·r_c`.
pub(crate) fn gain_cores(cov_pred: &TTMatrix, c: &TensorTrain) -> Result<TensorTrain> {
    let d = cov_pred.order();
    let cores = try_map_indexed(d, |k| {
        let p = cov_pred.core(k);
        let g = c.core(k);
        let t = tensordot(p, g, &[2], &[1])?; // (rP, n_row, rP', rc, rc')
        let t = t.permuted(&[0, 3, 1, 2, 4])?; // (rP, rc, n_row, rP', rc')
        let dims = t.dims().to_vec();
        t.into_reshaped(vec![dims[0] * dims[1], dims[2], dims[3] * dims[4]])
    })?;
    TensorTrain::from_core_refs(cores.into_iter().map(std::sync::Arc::new).collect())
}

/// `M(t) = M⁺ + K·diag(v)`, rounded. The innovation scaling rides on the
/// gain's first core.
pub fn update_mean(
    mean_pred: &TensorTrain,
    gain: &TensorTrain,
    v: &[f64],
    policy: &RoundingPolicy,
) -> Result<TensorTrain> {
    let scaled = gain.scale_batch_slices(v)?;
    mean_pred.add(&scaled)?.rounded(policy)
}

/// Column-wise outer square `K □ K` in TT-matrix form.
///
/// The first core comes from the Khatri-Rao square of the reshaped first
/// gain core (reshape → permute → reshape); the remaining cores are tensor
/// Kronecker squares. Batch slice `b` of the contraction is the outer
/// product of gain column `b` with itself; every rank squares.
pub fn kk_outer_tn(gain: &TensorTrain) -> Result<TTMatrix> {
    let d = gain.order();
    let l = gain.batch_size();
    let cores = try_map_indexed(d, |k| {
        let g = gain.core(k);
        let (rl, n, rr) = (g.dims()[0], g.dims()[1], g.dims()[2]);
        if k == 0 {
            // reshape (l, n, rK) -> l × (n·rK), transpose, Khatri-Rao square
            let flat = g.reshaped(vec![l, n * rr])?;
            let flat_t = flat.permuted(&[1, 0])?;
            let kr = khatri_rao_unguarded(&flat_t, &flat_t)?; // ((n·rK)², l), second factor fast
            let split = kr.into_reshaped(vec![n, rr, n, rr, l])?;
            let arranged = split.permuted(&[4, 0, 2, 1, 3])?; // (l, n_row, n_col, rK_fast, rK_slow)
            arranged.into_reshaped(vec![l, n, n, rr * rr])
        } else {
            let sq = kronecker_unguarded(g, g)?; // (rK², n², rK'²), second copy fast
            sq.into_reshaped(vec![rl * rl, n, n, rr * rr])
        }
    })?;
    TTMatrix::from_cores(cores.into_iter().collect())
}

/// `P(t) = P⁺ − (K □ K)·diag(s)`: outer square, scale by `−s` on the first
/// core, add, round.
pub fn update_cov(
    cov_pred: &TTMatrix,
    gain: &TensorTrain,
    s: &[f64],
    policy: &RoundingPolicy,
) -> Result<TTMatrix> {
    let outer = kk_outer_tn(gain)?;
    let neg_s: Vec<f64> = s.iter().map(|&x| -x).collect();
    let scaled = outer.scale_batch_slices(&neg_s)?;
    cov_pred.add(&scaled)?.rounded(policy)
}

/// Collapse `c·M` to its `l` values: per-core two-train contractions (data
/// parallel) followed by a sequential left-to-right matrix chain.
fn chain_collapse_pair(mean: &TensorTrain, c: &TensorTrain) -> Result<Vec<f64>> {
    if c.mode_dims() != mean.mode_dims() {
        return Err(Error::dim_mismatch(format!(
            "measurement modes {:?} do not match mean modes {:?}",
            c.mode_dims(),
            mean.mode_dims()
        )));
    }
    let d = mean.order();
    let mats = try_map_indexed(d, |k| {
        let m = mean.core(k);
        let g = c.core(k);
        let t = tensordot(m, g, &[1], &[1])?; // (rM, rM', rc, rc')
        let t = t.permuted(&[0, 2, 1, 3])?; // (rM, rc, rM', rc')
        let dims = t.dims().to_vec();
        Ok(core_matrix(&t, dims[0] * dims[1], dims[2] * dims[3]))
    })?;
    let folded = fold_chain(mats);
    Ok(folded.column(0).to_vec())
}

fn core_matrix(t: &DenseTensor, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols).f(), t.data().to_vec()).expect("contiguous")
}

fn fold_chain(mats: Vec<Array2<f64>>) -> Array2<f64> {
    let mut iter = mats.into_iter();
    let mut acc = iter.next().expect("at least one core");
    for m in iter {
        acc = acc.dot(&m);
    }
    acc
}

// ---------------------------------------------------------------------------
// Dense oracle
// ---------------------------------------------------------------------------

/// Dense mirror of [`KalmanState`]: mean columns side by side, one covariance
/// matrix per batch slice.
#[derive(Debug, Clone)]
pub struct DenseKalmanState {
    pub mean: Array2<f64>,
    pub cov: Vec<Array2<f64>>,
}

impl DenseKalmanState {
    pub fn init(sigma2: &[f64], state_len: usize) -> Result<Self> {
        if state_len > ORACLE_STATE_GUARD {
            return Err(Error::SizeGuard { size: state_len, guard: ORACLE_STATE_GUARD });
        }
        let l = sigma2.len();
        let mean = Array2::zeros((state_len, l));
        let cov = sigma2.iter().map(|&s| Array2::eye(state_len) * s).collect();
        Ok(DenseKalmanState { mean, cov })
    }
}

/// Textbook predict/update on dense matrices, one scalar measurement per
/// batch slice. `transition`/`process_noise` of `None` mean `A = I` / `Q = 0`.
pub fn dense_step(
    state: &DenseKalmanState,
    transition: Option<&Array2<f64>>,
    process_noise_diag: Option<&[f64]>,
    c: &Array1<f64>,
    r_diag: &[f64],
    y: &[f64],
) -> Result<DenseKalmanState> {
    let n = state.mean.nrows();
    if n > ORACLE_STATE_GUARD {
        return Err(Error::SizeGuard { size: n, guard: ORACLE_STATE_GUARD });
    }
    let l = state.mean.ncols();
    if y.len() != l || r_diag.len() != l {
        return Err(Error::BatchMismatch { left: l, right: y.len() });
    }
    if c.len() != n {
        return Err(Error::dim_mismatch(format!(
            "measurement length {} does not match state length {n}",
            c.len()
        )));
    }
    // predict
    let mean_pred = match transition {
        Some(a) => a.dot(&state.mean),
        None => state.mean.clone(),
    };
    let mut cov_pred: Vec<Array2<f64>> = state
        .cov
        .iter()
        .map(|p| match transition {
            Some(a) => a.dot(p).dot(&a.t()),
            None => p.clone(),
        })
        .collect();
    if let Some(q) = process_noise_diag {
        if q.len() != l {
            return Err(Error::BatchMismatch { left: l, right: q.len() });
        }
        for (p, &qb) in cov_pred.iter_mut().zip(q) {
            for i in 0..n {
                p[[i, i]] += qb;
            }
        }
    }
    // update, slice by slice
    let mut mean = mean_pred.clone();
    let mut cov = Vec::with_capacity(l);
    for b in 0..l {
        let p = &cov_pred[b];
        let pc = p.dot(c);
        let s = c.dot(&pc) + r_diag[b];
        if !(s > 0.0) {
            return Err(Error::NonpositiveVariance { index: b, value: s });
        }
        let v = y[b] - c.dot(&mean_pred.column(b));
        let k = &pc / s;
        for i in 0..n {
            mean[[i, b]] += k[i] * v;
        }
        let mut p_new = p.clone();
        for j in 0..n {
            let kj = k[j] * s;
            for i in 0..n {
                p_new[[i, j]] -= k[i] * kj;
            }
        }
        cov.push(p_new);
    }
    Ok(DenseKalmanState { mean, cov })
}

/// Contract a TT-matrix covariance into dense slices under the oracle guard.
pub fn contract_cov_oracle(cov: &TTMatrix) -> Result<Vec<Array2<f64>>> {
    let rows: usize = cov.row_dims().iter().product();
    if rows > ORACLE_STATE_GUARD {
        return Err(Error::SizeGuard { size: rows, guard: ORACLE_STATE_GUARD });
    }
    let cols: usize = cov.col_dims().iter().product();
    let limit = cov.batch_size() * rows * cols;
    cov.contract_slices(limit)
}
