//! Deterministic wrappers around the LAPACK factorizations plus the shared
//! singular-value truncation rule.

use std::sync::Once;

use ndarray::{Array1, Array2};
use ndarray_linalg::{JobSvd, QR, SVDDC, SVD};

use crate::error::{Error, Result};

extern "C" {
    fn openblas_set_num_threads(num: std::os::raw::c_int);
}

static BLAS_INIT: Once = Once::new();

/// Pin the BLAS pool to one thread. Keeps factorizations bit-reproducible and
/// leaves thread-level parallelism to the core-wise rayon maps.
pub(crate) fn ensure_single_threaded_blas() {
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

pub(crate) fn thin_qr(a: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    ensure_single_threaded_blas();
    a.qr().map_err(|e| Error::Backend(format!("qr: {e}")))
}

pub(crate) struct ThinSvd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

pub(crate) fn thin_svd(a: &Array2<f64>) -> Result<ThinSvd> {
    ensure_single_threaded_blas();
    // divide-and-conquer first, plain Golub-Kahan as fallback
    let (u, s, vt) = match a.svddc(JobSvd::Some) {
        Ok(parts) => parts,
        Err(_) => a.svd(true, true).map_err(|e| Error::Backend(format!("svd: {e}")))?,
    };
    match (u, vt) {
        (Some(u), Some(vt)) => Ok(ThinSvd { u, s, vt }),
        _ => Err(Error::Backend("svd did not return singular vectors".into())),
    }
}

/// How many leading singular values survive a truncation.
pub(crate) enum Truncation {
    /// Numerical-rank detection: keep σ above `max(rows, cols)·ε·σ_max`.
    Exact { rows: usize, cols: usize },
    /// Frobenius budget: drop the smallest values while the cumulative
    /// discarded energy stays within `delta²`.
    Budget { delta: f64 },
}

pub(crate) fn truncation_rank(sv: &[f64], rule: &Truncation, max_rank: Option<usize>) -> usize {
    let full = sv.len();
    let mut keep = match rule {
        Truncation::Exact { rows, cols } => {
            let sigma_max = sv.first().copied().unwrap_or(0.0);
            let thresh = (*rows).max(*cols) as f64 * f64::EPSILON * sigma_max;
            sv.iter().take_while(|&&x| x > thresh).count()
        }
        Truncation::Budget { delta } => {
            let budget = delta * delta;
            let mut discarded = 0.0;
            let mut keep = full;
            for i in (0..full).rev() {
                let with = discarded + sv[i] * sv[i];
                if with > budget {
                    break;
                }
                discarded = with;
                keep = i;
            }
            keep
        }
    };
    keep = keep.max(1);
    if let Some(cap) = max_rank {
        keep = keep.min(cap);
    }
    keep.min(full.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_rule_drops_tail_energy() {
        let sv = [4.0, 2.0, 1.0, 0.5];
        // 0.5² = 0.25 fits a budget of 1.1², 1² + 0.5² = 1.25 fits too,
        // adding 2² = 4 does not.
        assert_eq!(truncation_rank(&sv, &Truncation::Budget { delta: 1.12 }, None), 2);
        assert_eq!(truncation_rank(&sv, &Truncation::Budget { delta: 0.6 }, None), 3);
        assert_eq!(truncation_rank(&sv, &Truncation::Budget { delta: 0.0 }, None), 4);
        // budget large enough to drop everything still keeps one
        assert_eq!(truncation_rank(&sv, &Truncation::Budget { delta: 100.0 }, None), 1);
    }

    #[test]
    fn exact_rule_uses_relative_threshold() {
        let sv = [1.0, 1e-3, 1e-17];
        assert_eq!(truncation_rank(&sv, &Truncation::Exact { rows: 10, cols: 3 }, None), 2);
        let zeros = [0.0, 0.0];
        assert_eq!(truncation_rank(&zeros, &Truncation::Exact { rows: 2, cols: 2 }, None), 1);
    }

    #[test]
    fn max_rank_caps() {
        let sv = [3.0, 2.0, 1.0];
        assert_eq!(truncation_rank(&sv, &Truncation::Budget { delta: 0.0 }, Some(2)), 2);
    }
}
