//! Tensor trains and tensor-train matrices with an extended first core.
//!
//! A [`TensorTrain`] is a chain of 3-way cores; core `k` has dims
//! `(r_{k-1}, n_k, r_k)` and the chain contracts over the shared rank
//! indices. The first core's leading mode is the batch index `l` (so `r_0 =
//! l`, and `l = 1` gives a plain TT); the trailing rank is pinned to
//! `r_d = 1`. The represented object is an `n_1···n_d × l` matrix whose
//! column `b` is the vectorization (first index fastest) of batch slice `b`.
//!
//! A [`TTMatrix`] carries a row and a column index per core — core `k` has
//! dims `(r_{k-1}, n_k_row, n_k_col, r_k)` — and represents an `l`-batch of
//! square matrices. Structural algorithms (addition, rounding) treat the two
//! free modes as one merged mode of size `n_row·n_col`, which is a free
//! reshape in the first-index-fastest layout.

mod round;

use std::sync::Arc;

use ndarray::Array2;

use crate::dense::DenseTensor;
use crate::error::{Error, Result};
use crate::DENSE_SIZE_GUARD;

pub(crate) type CoreRef = Arc<DenseTensor>;

/// Rank-truncation policy for rounding and TT-SVD.
///
/// `tolerance` is a *relative* Frobenius budget for the whole tensor: the
/// rounded result deviates from the input by at most `tolerance·‖x‖_F`. Each
/// of the `d−1` truncated SVDs receives the budget `tolerance·‖x‖_F/√(d−1)`.
/// At `tolerance = 0` the truncation instead drops singular values below
/// `max(rows, cols)·ε·σ_max`, recovering the exact numerical ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundingPolicy {
    tolerance: f64,
    max_rank: Option<usize>,
}

impl RoundingPolicy {
    pub fn new(tolerance: f64, max_rank: Option<usize>) -> Result<Self> {
        if !tolerance.is_finite() || tolerance < 0.0 {
            return Err(Error::invalid(format!("tolerance must be ≥ 0, got {tolerance}")));
        }
        if max_rank == Some(0) {
            return Err(Error::invalid("max_rank must be at least 1"));
        }
        Ok(RoundingPolicy { tolerance, max_rank })
    }

    /// Lossless policy: exact numerical ranks, no cap.
    pub fn exact() -> Self {
        RoundingPolicy { tolerance: 0.0, max_rank: None }
    }

    pub fn with_tolerance(tolerance: f64) -> Result<Self> {
        Self::new(tolerance, None)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn max_rank(&self) -> Option<usize> {
        self.max_rank
    }
}

/// Tensor train with a batched first core; represents an `n^d × l` matrix.
#[derive(Debug, Clone)]
pub struct TensorTrain {
    cores: Vec<CoreRef>,
}

/// Tensor-train matrix with a batched first core; represents an `l`-batch of
/// `∏n_row × ∏n_col` matrices.
#[derive(Debug, Clone)]
pub struct TTMatrix {
    cores: Vec<CoreRef>,
}

fn validate_chain(cores: &[CoreRef], order: usize) -> Result<()> {
    if cores.is_empty() {
        return Err(Error::invalid("a tensor train needs at least one core"));
    }
    let d = cores.len();
    for (k, core) in cores.iter().enumerate() {
        if core.order() != order {
            return Err(Error::dim_mismatch(format!(
                "core {k} must be {order}-way, got dims {:?}",
                core.dims()
            )));
        }
        if k + 1 < d {
            let right = *core.dims().last().unwrap();
            let next_left = cores[k + 1].dims()[0];
            if right != next_left {
                return Err(Error::dim_mismatch(format!(
                    "rank mismatch between cores {k} and {}: {right} vs {next_left}",
                    k + 1
                )));
            }
        }
    }
    let last = cores.last().unwrap();
    if *last.dims().last().unwrap() != 1 {
        return Err(Error::dim_mismatch(format!(
            "trailing rank must be 1, got {}",
            last.dims().last().unwrap()
        )));
    }
    Ok(())
}

fn interior_ranks(cores: &[CoreRef]) -> Vec<usize> {
    cores[..cores.len() - 1]
        .iter()
        .map(|c| *c.dims().last().unwrap())
        .collect()
}

fn unique_storage(cores: &[CoreRef]) -> usize {
    let mut seen: Vec<*const DenseTensor> = Vec::with_capacity(cores.len());
    let mut total = 0;
    for core in cores {
        let ptr = Arc::as_ptr(core);
        if !seen.contains(&ptr) {
            seen.push(ptr);
            total += core.len();
        }
    }
    total
}

/// Contract a chain of 3-way cores into the dense tensor `(l, m_1, ..., m_d)`.
/// `limit` bounds the number of entries of every intermediate.
pub(crate) fn contract_cores(cores: &[CoreRef], limit: usize) -> Result<DenseTensor> {
    use ndarray::ShapeBuilder;
    let l = cores[0].dims()[0];
    let mut size = l;
    for c in cores.iter() {
        size = size
            .checked_mul(c.dims()[1])
            .ok_or(Error::SizeGuard { size: usize::MAX, guard: limit })?;
    }
    if size > limit {
        return Err(Error::SizeGuard { size, guard: limit });
    }
    // Left-to-right chain of matrix products. Every carry is kept in
    // first-index-fastest (column-major) order, so regrouping the product
    // (rows × m·r') as ((rows·m) × r') is a pure reinterpretation.
    let (rows0, r1) = (l * cores[0].dims()[1], cores[0].dims()[2]);
    let mut carry = Array2::from_shape_vec((rows0, r1).f(), cores[0].data().to_vec())
        .expect("core buffer is contiguous");
    for core in &cores[1..] {
        let b = core.unfold_view(1); // r × (m·r')
        let prod = carry.dot(&b);
        let rows = prod.nrows() * core.dims()[1];
        let rp = core.dims()[2];
        let mut flat = Vec::with_capacity(rows * rp);
        for col in prod.columns() {
            flat.extend(col.iter());
        }
        carry = Array2::from_shape_vec((rows, rp).f(), flat).expect("shape");
    }
    let mut dims = Vec::with_capacity(cores.len() + 1);
    dims.push(l);
    dims.extend(cores.iter().map(|c| c.dims()[1]));
    let mut flat = Vec::with_capacity(carry.len());
    for col in carry.columns() {
        flat.extend(col.iter());
    }
    DenseTensor::new(dims, flat)
}

impl TensorTrain {
    pub fn from_cores(cores: Vec<DenseTensor>) -> Result<Self> {
        let cores: Vec<CoreRef> = cores.into_iter().map(Arc::new).collect();
        validate_chain(&cores, 3)?;
        Ok(TensorTrain { cores })
    }

    pub(crate) fn from_core_refs(cores: Vec<CoreRef>) -> Result<Self> {
        validate_chain(&cores, 3)?;
        Ok(TensorTrain { cores })
    }

    /// All-zero train representing the `∏n × l` zero matrix; every rank is 1
    /// and the storage is exactly `(l + d − 1)·n` numbers for uniform `n`.
    pub fn zeros(l: usize, mode_dims: &[usize]) -> Result<Self> {
        if l == 0 || mode_dims.is_empty() {
            return Err(Error::invalid("batch size and order must be positive"));
        }
        let mut cores = Vec::with_capacity(mode_dims.len());
        cores.push(Arc::new(DenseTensor::zeros(vec![l, mode_dims[0], 1])?));
        for &n in &mode_dims[1..] {
            cores.push(Arc::new(DenseTensor::zeros(vec![1, n, 1])?));
        }
        Ok(TensorTrain { cores })
    }

    /// Rank-one train whose contraction is the `d`-times repeated Kronecker
    /// power of `u`. All cores share one buffer, so the storage is `n`
    /// numbers regardless of `d`.
    pub fn rank1_from_vector(u: &[f64], d: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::invalid("repetition count must be at least 1"));
        }
        if u.is_empty() {
            return Err(Error::invalid("empty vector"));
        }
        let core = Arc::new(DenseTensor::new(vec![1, u.len(), 1], u.to_vec())?);
        Ok(TensorTrain { cores: vec![core; d] })
    }

    /// TT-SVD of a dense `d`-way tensor (batch size 1): sequential SVD sweep
    /// with the policy's truncation rule.
    pub fn from_dense(x: &DenseTensor, policy: &RoundingPolicy) -> Result<Self> {
        let cores = round::tt_svd(1, x.dims(), x.data(), policy)?;
        Ok(TensorTrain { cores })
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn batch_size(&self) -> usize {
        self.cores[0].dims()[0]
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// Interior ranks `r_1, ..., r_{d-1}`.
    pub fn ranks(&self) -> Vec<usize> {
        interior_ranks(&self.cores)
    }

    pub fn cores(&self) -> impl Iterator<Item = &DenseTensor> {
        self.cores.iter().map(|c| c.as_ref())
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    /// Number of stored floats, shared buffers counted once.
    pub fn storage_floats(&self) -> usize {
        unique_storage(&self.cores)
    }

    /// Dense tensor of dims `(l, n_1, ..., n_d)`.
    pub fn contract_full(&self) -> Result<DenseTensor> {
        contract_cores(&self.cores, DENSE_SIZE_GUARD)
    }

    /// The represented `∏n × l` matrix (oracle bridge).
    pub fn contract_matrix(&self) -> Result<Array2<f64>> {
        let full = self.contract_full()?;
        let l = self.batch_size();
        let n: usize = full.len() / l;
        let flat = full.into_reshaped(vec![l, n])?;
        let transposed = flat.permuted(&[1, 0])?;
        use ndarray::ShapeBuilder;
        Array2::from_shape_vec((n, l).f(), transposed.into_data())
            .map_err(|e| Error::Backend(e.to_string()))
    }

    /// Sum of two trains: contraction adds, interior ranks add. The batch
    /// mode of the first core concatenates along the rank mode only.
    pub fn add(&self, other: &TensorTrain) -> Result<Self> {
        let cores = add_cores(&self.cores, &other.cores)?;
        Ok(TensorTrain { cores })
    }

    /// SVD-based rounding: a right-to-left orthogonalization sweep followed
    /// by a left-to-right truncated-SVD sweep. The contraction changes by at
    /// most `policy.tolerance` in relative Frobenius norm and no rank grows.
    pub fn rounded(&self, policy: &RoundingPolicy) -> Result<Self> {
        let cores = round::round_cores(&self.cores, policy)?;
        Ok(TensorTrain { cores })
    }

    /// Right-to-left orthogonalization only: all but the first core become
    /// right-orthogonal; the contraction is unchanged.
    pub fn right_orthogonalized(&self) -> Result<Self> {
        let cores = round::right_orthogonalize(&self.cores)?;
        Ok(TensorTrain { cores })
    }

    /// Scale batch slice `b` of the represented matrix by `factors[b]`
    /// (touches only the first core).
    pub fn scale_batch_slices(&self, factors: &[f64]) -> Result<Self> {
        let cores = scale_first_core(&self.cores, factors)?;
        Ok(TensorTrain { cores })
    }
}

impl TTMatrix {
    pub fn from_cores(cores: Vec<DenseTensor>) -> Result<Self> {
        let cores: Vec<CoreRef> = cores.into_iter().map(Arc::new).collect();
        validate_chain(&cores, 4)?;
        Ok(TTMatrix { cores })
    }

    pub(crate) fn from_core_refs(cores: Vec<CoreRef>) -> Result<Self> {
        validate_chain(&cores, 4)?;
        Ok(TTMatrix { cores })
    }

    /// Batch of scaled identities: slice `b` contracts to `sigma2[b]·I_{n^d}`.
    /// All ranks are 1 and the storage is exactly `(l + d − 1)·n²` numbers.
    pub fn scaled_identity(sigma2: &[f64], n: usize, d: usize) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(Error::invalid("need at least one variance"));
        }
        if d < 1 || n < 1 {
            return Err(Error::invalid("n and d must be positive"));
        }
        for (i, &s) in sigma2.iter().enumerate() {
            if !(s > 0.0) {
                return Err(Error::NonpositiveVariance { index: i, value: s });
            }
        }
        let l = sigma2.len();
        let mut first = DenseTensor::zeros(vec![l, n, n, 1])?;
        for (b, &s) in sigma2.iter().enumerate() {
            for i in 0..n {
                *first.at_mut(&[b, i, i, 0]) = s;
            }
        }
        let mut eye = DenseTensor::zeros(vec![1, n, n, 1])?;
        for i in 0..n {
            *eye.at_mut(&[0, i, i, 0]) = 1.0;
        }
        // each core owns its buffer so the storage count is (l+d-1)·n² exactly
        let mut cores: Vec<CoreRef> = Vec::with_capacity(d);
        cores.push(Arc::new(first));
        for _ in 1..d {
            cores.push(Arc::new(eye.clone()));
        }
        Ok(TTMatrix { cores })
    }

    /// Unbatched identity operator on an `n^d`-dimensional space.
    pub fn identity(n: usize, d: usize) -> Result<Self> {
        Self::scaled_identity(&[1.0], n, d)
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn batch_size(&self) -> usize {
        self.cores[0].dims()[0]
    }

    pub fn row_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    pub fn col_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[2]).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        interior_ranks(&self.cores)
    }

    pub fn cores(&self) -> impl Iterator<Item = &DenseTensor> {
        self.cores.iter().map(|c| c.as_ref())
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    pub fn storage_floats(&self) -> usize {
        unique_storage(&self.cores)
    }

    /// Dense tensor of dims `(l, ∏n_row, ∏n_col)`.
    pub fn contract_full(&self) -> Result<DenseTensor> {
        self.contract_with_limit(DENSE_SIZE_GUARD)
    }

    pub(crate) fn contract_with_limit(&self, limit: usize) -> Result<DenseTensor> {
        let merged = self.merged_cores();
        let raw = contract_cores(&merged, limit)?;
        // (l, n1r·n1c, ...) -> (l, n1r, n1c, ...) -> (l, rows..., cols...)
        let mut split_dims = vec![self.batch_size()];
        for c in &self.cores {
            split_dims.push(c.dims()[1]);
            split_dims.push(c.dims()[2]);
        }
        let d = self.cores.len();
        let split = raw.into_reshaped(split_dims)?;
        let mut perm = Vec::with_capacity(2 * d + 1);
        perm.push(0);
        perm.extend((0..d).map(|k| 2 * k + 1));
        perm.extend((0..d).map(|k| 2 * k + 2));
        let grouped = split.permuted(&perm)?;
        let rows: usize = self.row_dims().iter().product();
        let cols: usize = self.col_dims().iter().product();
        grouped.into_reshaped(vec![self.batch_size(), rows, cols])
    }

    /// Contract each batch slice to a dense square matrix. This is the
    /// oracle bridge; it allows states up to `limit` entries per slice
    /// instead of the public dense guard.
    pub fn contract_slices(&self, limit: usize) -> Result<Vec<Array2<f64>>> {
        let full = self.contract_with_limit(limit)?;
        let l = self.batch_size();
        let rows: usize = self.row_dims().iter().product();
        let cols: usize = self.col_dims().iter().product();
        let mut out = Vec::with_capacity(l);
        for b in 0..l {
            let mut m = Array2::zeros((rows, cols));
            for j in 0..cols {
                for i in 0..rows {
                    m[[i, j]] = full.at(&[b, i, j]);
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    /// View the 4-way cores as 3-way cores with the row/column modes merged
    /// (free reshape in this layout).
    pub(crate) fn merged_cores(&self) -> Vec<CoreRef> {
        self.cores
            .iter()
            .map(|c| {
                let d = c.dims();
                Arc::new(
                    c.as_ref()
                        .clone()
                        .into_reshaped(vec![d[0], d[1] * d[2], d[3]])
                        .expect("merge is size-preserving"),
                )
            })
            .collect()
    }

    pub(crate) fn from_merged_cores(
        cores: Vec<CoreRef>,
        row_dims: &[usize],
        col_dims: &[usize],
    ) -> Result<Self> {
        let split: Vec<CoreRef> = cores
            .into_iter()
            .zip(row_dims.iter().zip(col_dims))
            .map(|(c, (&nr, &nc))| {
                let d = c.dims();
                Arc::new(
                    c.as_ref()
                        .clone()
                        .into_reshaped(vec![d[0], nr, nc, d[2]])
                        .expect("split is size-preserving"),
                )
            })
            .collect();
        TTMatrix::from_core_refs(split)
    }

    pub fn add(&self, other: &TTMatrix) -> Result<Self> {
        if self.row_dims() != other.row_dims() || self.col_dims() != other.col_dims() {
            return Err(Error::dim_mismatch(format!(
                "mode dims disagree: ({:?}, {:?}) vs ({:?}, {:?})",
                self.row_dims(),
                self.col_dims(),
                other.row_dims(),
                other.col_dims()
            )));
        }
        let merged = add_cores(&self.merged_cores(), &other.merged_cores())?;
        TTMatrix::from_merged_cores(merged, &self.row_dims(), &self.col_dims())
    }

    pub fn rounded(&self, policy: &RoundingPolicy) -> Result<Self> {
        let merged = round::round_cores(&self.merged_cores(), policy)?;
        TTMatrix::from_merged_cores(merged, &self.row_dims(), &self.col_dims())
    }

    pub fn scale_batch_slices(&self, factors: &[f64]) -> Result<Self> {
        let cores = scale_first_core(&self.cores, factors)?;
        Ok(TTMatrix { cores })
    }
}

/// Core-wise sum: interior cores concatenate block-diagonally in the rank
/// modes; the boundary cores concatenate along their single free rank mode so
/// that `r_0 = l` and `r_d = 1` are preserved.
fn add_cores(a: &[CoreRef], b: &[CoreRef]) -> Result<Vec<CoreRef>> {
    if a.len() != b.len() {
        return Err(Error::OrderMismatch { left: a.len(), right: b.len() });
    }
    let d = a.len();
    let l = a[0].dims()[0];
    if b[0].dims()[0] != l {
        return Err(Error::BatchMismatch { left: l, right: b[0].dims()[0] });
    }
    for k in 0..d {
        if a[k].dims()[1] != b[k].dims()[1] {
            return Err(Error::dim_mismatch(format!(
                "mode {k} dimension mismatch: {} vs {}",
                a[k].dims()[1],
                b[k].dims()[1]
            )));
        }
    }
    if d == 1 {
        // both rank modes are pinned; the sum is entrywise
        let m = a[0].dims()[1];
        let data: Vec<f64> =
            a[0].data().iter().zip(b[0].data()).map(|(x, y)| x + y).collect();
        return Ok(vec![Arc::new(DenseTensor::new(vec![l, m, 1], data)?)]);
    }
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let (ga, gb) = (&a[k], &b[k]);
        let (la, ma, ra) = core_dims(ga);
        let (lb, _, rb) = core_dims(gb);
        let core = if k == 0 {
            // (l, m, ra + rb): stack along the right rank
            let mut t = DenseTensor::zeros(vec![l, ma, ra + rb])?;
            copy_block(&mut t, ga, 0, 0);
            copy_block(&mut t, gb, 0, ra);
            t
        } else if k == d - 1 {
            // (la + lb, m, 1): stack along the left rank
            let mut t = DenseTensor::zeros(vec![la + lb, ma, 1])?;
            copy_block(&mut t, ga, 0, 0);
            copy_block(&mut t, gb, la, 0);
            t
        } else {
            let mut t = DenseTensor::zeros(vec![la + lb, ma, ra + rb])?;
            copy_block(&mut t, ga, 0, 0);
            copy_block(&mut t, gb, la, ra);
            t
        };
        out.push(Arc::new(core));
    }
    Ok(out)
}

fn core_dims(c: &DenseTensor) -> (usize, usize, usize) {
    let d = c.dims();
    (d[0], d[1], d[2])
}

/// Copy a 3-way block into `dst` at rank offsets `(row0, col0)`.
fn copy_block(dst: &mut DenseTensor, src: &DenseTensor, row0: usize, col0: usize) {
    let (rl, m, rr) = core_dims(src);
    for c in 0..rr {
        for j in 0..m {
            for r in 0..rl {
                *dst.at_mut(&[row0 + r, j, col0 + c]) = src.at(&[r, j, c]);
            }
        }
    }
}

fn scale_first_core(cores: &[CoreRef], factors: &[f64]) -> Result<Vec<CoreRef>> {
    let l = cores[0].dims()[0];
    if factors.len() != l {
        return Err(Error::BatchMismatch { left: l, right: factors.len() });
    }
    let mut first = cores[0].as_ref().clone();
    for (i, x) in first.data_mut().iter_mut().enumerate() {
        *x *= factors[i % l];
    }
    let mut out = cores.to_vec();
    out[0] = Arc::new(first);
    Ok(out)
}
