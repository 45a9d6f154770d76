//! Rank reduction of tensor trains: a right-to-left sweep of LQ
//! orthogonalizations followed by a left-to-right sweep of truncated SVDs,
//! and the TT-SVD conversion from dense tensors.
//!
//! After the orthogonalization sweep the whole Frobenius norm sits in the
//! first core, so each of the `d−1` truncated SVDs gets the absolute budget
//! `tolerance·‖x‖_F/√(d−1)`; the triangle inequality over the sweep then
//! bounds the total relative error by `tolerance`. The batch index rides on
//! the first core's leading mode and is treated as part of that core's row
//! dimension, so it is never orthogonalized away.

use std::sync::Arc;

use ndarray::{Array2, ShapeBuilder};

use crate::dense::DenseTensor;
use crate::error::{Error, Result};
use crate::linalg::{thin_qr, thin_svd, truncation_rank, Truncation};

use super::{CoreRef, RoundingPolicy};

fn core_as_matrix(data: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols).f(), data.to_vec()).expect("contiguous core")
}

fn matrix_into_core(m: &Array2<f64>, dims: Vec<usize>) -> DenseTensor {
    let mut flat = Vec::with_capacity(m.len());
    for col in m.columns() {
        flat.extend(col.iter());
    }
    DenseTensor::new(dims, flat).expect("consistent dims")
}

/// Right-to-left sweep: returns cores where all but the first are
/// right-orthogonal (the `r_{k-1} × (m_k r_k)` unfolding has orthonormal
/// rows). The contraction is unchanged.
pub(crate) fn right_orthogonalize(cores: &[CoreRef]) -> Result<Vec<CoreRef>> {
    let d = cores.len();
    let mut out: Vec<DenseTensor> = cores.iter().map(|c| c.as_ref().clone()).collect();
    for k in (1..d).rev() {
        let (rl, m, rr) = dims3(&out[k]);
        // LQ via QR of the transposed unfolding
        let h = core_as_matrix(out[k].data(), rl, m * rr);
        let ht = h.t().to_owned();
        let (q, r) = thin_qr(&ht)?;
        let rho = q.ncols();
        out[k] = matrix_into_core(&q.t().to_owned(), vec![rho, m, rr]);
        // absorb L = Rᵀ into the left neighbour
        let (ll, lm, lr) = dims3(&out[k - 1]);
        debug_assert_eq!(lr, rl);
        let left = core_as_matrix(out[k - 1].data(), ll * lm, lr);
        let absorbed = left.dot(&r.t());
        out[k - 1] = matrix_into_core(&absorbed, vec![ll, lm, rho]);
    }
    Ok(out.into_iter().map(Arc::new).collect())
}

/// Full rounding pass over 3-way cores.
pub(crate) fn round_cores(cores: &[CoreRef], policy: &RoundingPolicy) -> Result<Vec<CoreRef>> {
    let d = cores.len();
    if d == 1 {
        // no interior ranks to reduce
        return Ok(cores.to_vec());
    }
    let ortho = right_orthogonalize(cores)?;
    let mut out: Vec<DenseTensor> = ortho.iter().map(|c| c.as_ref().clone()).collect();

    let norm = out[0].frobenius_norm();
    let tol = policy.tolerance();
    let delta = if tol > 0.0 { tol * norm / ((d - 1) as f64).sqrt() } else { 0.0 };

    for k in 0..d - 1 {
        let (rl, m, rr) = dims3(&out[k]);
        let f = core_as_matrix(out[k].data(), rl * m, rr);
        let svd = thin_svd(&f)?;
        let sv = svd.s.as_slice().expect("contiguous singular values");
        let rule = if tol > 0.0 {
            Truncation::Budget { delta }
        } else {
            Truncation::Exact { rows: rl * m, cols: rr }
        };
        let keep = truncation_rank(sv, &rule, policy.max_rank());
        let u = svd.u.slice(ndarray::s![.., ..keep]).to_owned();
        out[k] = matrix_into_core(&u, vec![rl, m, keep]);
        // carry Σ Vᵀ into the right neighbour
        let mut carry = svd.vt.slice(ndarray::s![..keep, ..]).to_owned();
        for (i, mut row) in carry.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|x| x * sv[i]);
        }
        let (nl, nm, nr) = dims3(&out[k + 1]);
        debug_assert_eq!(nl, rr);
        let right = core_as_matrix(out[k + 1].data(), nl, nm * nr);
        let merged = carry.dot(&right);
        out[k + 1] = matrix_into_core(&merged, vec![keep, nm, nr]);
    }
    Ok(out.into_iter().map(Arc::new).collect())
}

/// Sequential TT-SVD of a dense tensor with mode sizes `mode_dims` and batch
/// size `l` (`data` holds `l·∏m` entries, batch index fastest).
pub(crate) fn tt_svd(
    l: usize,
    mode_dims: &[usize],
    data: &[f64],
    policy: &RoundingPolicy,
) -> Result<Vec<CoreRef>> {
    let d = mode_dims.len();
    if d == 0 {
        return Err(Error::invalid("tensor must have at least one mode"));
    }
    let total: usize = mode_dims.iter().product::<usize>() * l;
    if data.len() != total {
        return Err(Error::dim_mismatch(format!(
            "data length {} does not match batch {l} and dims {mode_dims:?}",
            data.len()
        )));
    }
    if d == 1 {
        let core = DenseTensor::new(vec![l, mode_dims[0], 1], data.to_vec())?;
        return Ok(vec![Arc::new(core)]);
    }
    let norm = data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = policy.tolerance();
    let delta = if tol > 0.0 { tol * norm / ((d - 1) as f64).sqrt() } else { 0.0 };

    let mut cores: Vec<CoreRef> = Vec::with_capacity(d);
    let mut r_prev = l;
    let mut rest: usize = mode_dims.iter().product();
    let mut carry = data.to_vec();
    for &m in mode_dims.iter().take(d - 1) {
        rest /= m;
        let mat = core_as_matrix(&carry, r_prev * m, rest);
        let svd = thin_svd(&mat)?;
        let sv = svd.s.as_slice().expect("contiguous singular values");
        let rule = if tol > 0.0 {
            Truncation::Budget { delta }
        } else {
            Truncation::Exact { rows: r_prev * m, cols: rest }
        };
        let keep = truncation_rank(sv, &rule, policy.max_rank());
        let u = svd.u.slice(ndarray::s![.., ..keep]).to_owned();
        cores.push(Arc::new(matrix_into_core(&u, vec![r_prev, m, keep])));
        let mut next = svd.vt.slice(ndarray::s![..keep, ..]).to_owned();
        for (i, mut row) in next.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|x| x * sv[i]);
        }
        let mut flat = Vec::with_capacity(next.len());
        for col in next.columns() {
            flat.extend(col.iter());
        }
        carry = flat;
        r_prev = keep;
    }
    let last = DenseTensor::new(vec![r_prev, mode_dims[d - 1], 1], carry)?;
    cores.push(Arc::new(last));
    Ok(cores)
}

fn dims3(c: &DenseTensor) -> (usize, usize, usize) {
    let d = c.dims();
    (d[0], d[1], d[2])
}
