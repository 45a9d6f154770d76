//! Dense multi-way arrays and the index/product conventions shared by the
//! whole crate.
//!
//! A [`DenseTensor`] stores its entries with the *first index fastest*: the
//! element at 1-based multi-index `(i_1, ..., i_d)` lives at linear offset
//!
//! ```text
//! i_1 + (i_2 - 1) n_1 + ... + (i_d - 1) n_1 n_2 ... n_{d-1}
//! ```
//!
//! (also 1-based). Every reshape and vectorization in this crate uses that
//! rule; [`multi_to_linear`] / [`linear_to_multi`] are the only public
//! functions speaking 1-based indices, everything else is 0-based.
//!
//! The product operations here are the oracle path: each refuses to build a
//! result with more than [`crate::DENSE_SIZE_GUARD`] entries. (Construction
//! itself is unguarded — train cores legitimately grow into the same size
//! range.)

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::DENSE_SIZE_GUARD;

/// A `d`-way array of `f64` with explicit dimensions, first index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

/// Convert a 1-based multi-index into the 1-based linear index.
pub fn multi_to_linear(indices: &[usize], dims: &[usize]) -> Result<usize> {
    if indices.len() != dims.len() {
        return Err(Error::OrderMismatch { left: indices.len(), right: dims.len() });
    }
    let mut linear = 0usize;
    let mut stride = 1usize;
    for (mode, (&i, &n)) in indices.iter().zip(dims).enumerate() {
        if i < 1 || i > n {
            return Err(Error::IndexOutOfRange { mode: mode + 1, index: i, dim: n });
        }
        linear += (i - 1) * stride;
        stride *= n;
    }
    Ok(linear + 1)
}

/// Inverse of [`multi_to_linear`]: recover the 1-based multi-index.
pub fn linear_to_multi(linear: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if linear < 1 || linear > total {
        return Err(Error::IndexOutOfRange { mode: 0, index: linear, dim: total });
    }
    let mut rem = linear - 1;
    let mut indices = Vec::with_capacity(dims.len());
    for &n in dims {
        indices.push(rem % n + 1);
        rem /= n;
    }
    Ok(indices)
}

fn check_guard(len: usize) -> Result<()> {
    if len > DENSE_SIZE_GUARD {
        return Err(Error::SizeGuard { size: len, guard: DENSE_SIZE_GUARD });
    }
    Ok(())
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::invalid("tensor must have at least one mode"));
    }
    if let Some(mode) = dims.iter().position(|&n| n == 0) {
        return Err(Error::IndexOutOfRange { mode: mode + 1, index: 0, dim: 0 });
    }
    Ok(dims.iter().product())
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return Err(Error::dim_mismatch(format!(
                "data length {} does not match product of dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        Ok(DenseTensor { dims, data: vec![0.0; len] })
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(&dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            for (i, &n) in idx.iter_mut().zip(&dims) {
                *i += 1;
                if *i < n {
                    break;
                }
                *i = 0;
            }
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a 0-based multi-index.
    pub(crate) fn offset(&self, indices: &[usize]) -> usize {
        debug_assert_eq!(indices.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in indices.iter().zip(&self.dims) {
            debug_assert!(i < n);
            off += i * stride;
            stride *= n;
        }
        off
    }

    /// Element at a 0-based multi-index.
    pub fn at(&self, indices: &[usize]) -> f64 {
        self.data[self.offset(indices)]
    }

    pub(crate) fn at_mut(&mut self, indices: &[usize]) -> &mut f64 {
        let off = self.offset(indices);
        &mut self.data[off]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Same data, new dimensions; the entry order is untouched (first index
    /// fastest on both sides).
    pub fn reshaped(&self, dims: Vec<usize>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() || dims.contains(&0) {
            return Err(Error::dim_mismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(DenseTensor { dims, data: self.data.clone() })
    }

    pub(crate) fn into_reshaped(mut self, dims: Vec<usize>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() || dims.contains(&0) {
            return Err(Error::dim_mismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    /// Reorder the modes: `perm[k]` names the input mode that becomes output
    /// mode `k`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let d = self.dims.len();
        if perm.len() != d {
            return Err(Error::OrderMismatch { left: perm.len(), right: d });
        }
        let mut seen = vec![false; d];
        for &p in perm {
            if p >= d || seen[p] {
                return Err(Error::invalid(format!("invalid permutation {perm:?}")));
            }
            seen[p] = true;
        }
        let out_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let mut in_strides = vec![1usize; d];
        for k in 1..d {
            in_strides[k] = in_strides[k - 1] * self.dims[k - 1];
        }
        // stride of output mode k in the input buffer
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut out = vec![0.0; self.data.len()];
        let mut idx = vec![0usize; d];
        let mut src = 0usize;
        for slot in out.iter_mut() {
            *slot = self.data[src];
            for k in 0..d {
                idx[k] += 1;
                src += strides[k];
                if idx[k] < out_dims[k] {
                    break;
                }
                src -= out_dims[k] * strides[k];
                idx[k] = 0;
            }
        }
        Ok(DenseTensor { dims: out_dims, data: out })
    }

    /// Zero-copy matrix view grouping the first `split` modes as rows and the
    /// rest as columns (both groups keep the first-fastest order).
    pub(crate) fn unfold_view(&self, split: usize) -> ArrayView2<'_, f64> {
        let rows: usize = self.dims[..split].iter().product();
        let cols: usize = self.dims[split..].iter().product();
        ArrayView2::from_shape((rows, cols).f(), &self.data).expect("contiguous buffer")
    }

    pub(crate) fn from_matrix(m: &Array2<f64>, dims: Vec<usize>) -> Result<Self> {
        let mut data = Vec::with_capacity(m.len());
        for col in m.columns() {
            data.extend(col.iter());
        }
        DenseTensor::new(dims, data)
    }
}

/// Mode-`k` product (0-based `k`): contract mode `k` of `t` with the columns
/// of `m`, replacing `n_k` by the row count of `m`.
pub fn mode_k_product(t: &DenseTensor, m: &ArrayView2<'_, f64>, k: usize) -> Result<DenseTensor> {
    let d = t.order();
    if k >= d {
        return Err(Error::IndexOutOfRange { mode: k, index: k, dim: d });
    }
    if m.ncols() != t.dims[k] {
        return Err(Error::dim_mismatch(format!(
            "mode {k}: matrix has {} columns, tensor dimension is {}",
            m.ncols(),
            t.dims[k]
        )));
    }
    check_guard(t.len() / t.dims[k] * m.nrows())?;
    // Bring mode k to the front, multiply, move it back.
    let mut perm: Vec<usize> = Vec::with_capacity(d);
    perm.push(k);
    perm.extend((0..d).filter(|&j| j != k));
    let fronted = t.permuted(&perm)?;
    let unfolded = fronted.unfold_view(1);
    let product = m.dot(&unfolded);
    let mut new_dims: Vec<usize> = Vec::with_capacity(d);
    new_dims.push(m.nrows());
    new_dims.extend(fronted.dims[1..].iter().copied());
    let result = DenseTensor::from_matrix(&product, new_dims)?;
    // inverse permutation
    let mut inv = vec![0usize; d];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    result.permuted(&inv)
}

/// Tensor Kronecker product: mode `k` of the result merges `c`'s index (fast)
/// with `b`'s index (slow), so `out[(i_c, i_b)] = b[i_b] * c[i_c]` per mode.
/// For matrices this is the ordinary Kronecker product `b ⊗ c`.
pub fn kronecker(b: &DenseTensor, c: &DenseTensor) -> Result<DenseTensor> {
    if b.order() != c.order() {
        return Err(Error::OrderMismatch { left: b.order(), right: c.order() });
    }
    check_guard(b.len().saturating_mul(c.len()))?;
    kronecker_unguarded(b, c)
}

/// Kronecker product without the dense size guard, for train-core assembly.
pub(crate) fn kronecker_unguarded(b: &DenseTensor, c: &DenseTensor) -> Result<DenseTensor> {
    if b.order() != c.order() {
        return Err(Error::OrderMismatch { left: b.order(), right: c.order() });
    }
    let dims: Vec<usize> = b.dims.iter().zip(&c.dims).map(|(&n, &m)| n * m).collect();
    let d = b.order();
    DenseTensor::from_fn(dims, |idx| {
        let mut ib = vec![0usize; d];
        let mut ic = vec![0usize; d];
        for k in 0..d {
            ic[k] = idx[k] % c.dims[k];
            ib[k] = idx[k] / c.dims[k];
        }
        b.at(&ib) * c.at(&ic)
    })
}

/// Column-wise Kronecker product of two matrices with equal column counts:
/// column `k` of the result is `kron(a_k, b_k)` (`b`'s index fast).
pub fn khatri_rao(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (n, _) = matrix_dims(a)?;
    let (m, lb) = matrix_dims(b)?;
    check_guard(n.saturating_mul(m).saturating_mul(lb))?;
    khatri_rao_unguarded(a, b)
}

pub(crate) fn khatri_rao_unguarded(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (n, la) = matrix_dims(a)?;
    let (m, lb) = matrix_dims(b)?;
    if la != lb {
        return Err(Error::ColumnMismatch { left: la, right: lb });
    }
    DenseTensor::from_fn(vec![n * m, la], |idx| {
        let ib = idx[0] % m;
        let ia = idx[0] / m;
        a.at(&[ia, idx[1]]) * b.at(&[ib, idx[1]])
    })
}

/// Column-wise outer product: slice `(:, :, k)` is the outer product of
/// column `k` of `a` with column `k` of `b`.
pub fn colwise_outer(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (n, la) = matrix_dims(a)?;
    let (m, lb) = matrix_dims(b)?;
    if la != lb {
        return Err(Error::ColumnMismatch { left: la, right: lb });
    }
    check_guard(n.saturating_mul(m).saturating_mul(la))?;
    DenseTensor::from_fn(vec![n, m, la], |idx| a.at(&[idx[0], idx[2]]) * b.at(&[idx[1], idx[2]]))
}

/// `d`-times repeated Kronecker power of a vector; entry at multi-index
/// `(i_1, ..., i_d)` is the product of the `u_{i_k}`.
pub fn repeated_kron(u: &[f64], d: usize) -> Result<DenseTensor> {
    if d < 1 {
        return Err(Error::invalid("repetition count must be at least 1"));
    }
    let n = u.len();
    if n == 0 {
        return Err(Error::invalid("empty vector"));
    }
    check_guard(n.checked_pow(d as u32).ok_or(Error::SizeGuard {
        size: usize::MAX,
        guard: DENSE_SIZE_GUARD,
    })?)?;
    DenseTensor::from_fn(vec![n; d], |idx| idx.iter().map(|&i| u[i]).product())
        .and_then(|t| t.into_reshaped(vec![n.pow(d as u32)]))
}

/// `‖a − b‖_F / ‖a‖_F`, with the convention that two zero tensors are at
/// distance zero.
pub fn relative_frobenius_distance(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.len(), b.len(), "tensors must have equal length");
    let diff: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm = a.frobenius_norm();
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

fn matrix_dims(t: &DenseTensor) -> Result<(usize, usize)> {
    match t.dims() {
        [n, l] => Ok((*n, *l)),
        other => Err(Error::dim_mismatch(format!("expected a matrix, got dims {other:?}"))),
    }
}

/// Contract `axes_a` of `a` against `axes_b` of `b`; the result carries `a`'s
/// free modes followed by `b`'s.
pub(crate) fn tensordot(
    a: &DenseTensor,
    b: &DenseTensor,
    axes_a: &[usize],
    axes_b: &[usize],
) -> Result<DenseTensor> {
    assert_eq!(axes_a.len(), axes_b.len());
    for (&ka, &kb) in axes_a.iter().zip(axes_b) {
        if a.dims[ka] != b.dims[kb] {
            return Err(Error::dim_mismatch(format!(
                "contracted axes disagree: a.dims[{ka}]={} vs b.dims[{kb}]={}",
                a.dims[ka], b.dims[kb]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.order()).filter(|k| !axes_a.contains(k)).collect();
    let free_b: Vec<usize> = (0..b.order()).filter(|k| !axes_b.contains(k)).collect();

    let mut perm_a: Vec<usize> = free_a.clone();
    perm_a.extend_from_slice(axes_a);
    let mut perm_b: Vec<usize> = axes_b.to_vec();
    perm_b.extend_from_slice(&free_b);

    let pa = a.permuted(&perm_a)?;
    let pb = b.permuted(&perm_b)?;
    let ma = pa.unfold_view(free_a.len());
    let mb = pb.unfold_view(axes_b.len());
    let prod = ma.dot(&mb);

    let mut dims: Vec<usize> = free_a.iter().map(|&k| a.dims[k]).collect();
    dims.extend(free_b.iter().map(|&k| b.dims[k]));
    if dims.is_empty() {
        dims.push(1);
    }
    DenseTensor::from_matrix(&prod, dims)
}
