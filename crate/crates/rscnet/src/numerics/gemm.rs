//! Dense matrix kernels backing conv2d (via im2col) and the linear layers.
//!
//! All kernels accumulate in a fixed order so results are reproducible
//! run-to-run, and the `nn` kernel matches the scalar reference loop's
//! summation order.

use super::scalar::Scalar;

// Column-block width for the nn/tn kernels; keeps the active slice of the
// right-hand matrix inside L2 for the shapes this crate produces.
const BLOCK_COLS: usize = 2048;

/// c[m,n] = a[m,k] * b[k,n], row-major.
pub fn matmul_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![T::ZERO; m * n];
    let mut col = 0;
    while col < n {
        let width = BLOCK_COLS.min(n - col);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let c_row = &mut c[i * n + col..i * n + col + width];
            for (p, &av) in a_row.iter().enumerate() {
                let b_row = &b[p * n + col..p * n + col + width];
                axpy(c_row, av, b_row);
            }
        }
        col += width;
    }
    c
}

/// c[m,n] = a[m,k] * b[n,k]^T, row-major. Both operands are traversed by
/// contiguous rows.
pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![T::ZERO; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, cv) in c_row.iter_mut().enumerate() {
            *cv = dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
    c
}

/// c[m,n] = a[k,m]^T * b[k,n], row-major.
pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![T::ZERO; m * n];
    let mut col = 0;
    while col < n {
        let width = BLOCK_COLS.min(n - col);
        for p in 0..k {
            let b_row = &b[p * n + col..p * n + col + width];
            for i in 0..m {
                let av = a[p * m + i];
                axpy(&mut c[i * n + col..i * n + col + width], av, b_row);
            }
        }
        col += width;
    }
    c
}

/// y += alpha * x, elementwise.
#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes
/// without reassociating a single serial sum. Deterministic order.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::ZERO; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let ao = &a[i * 8..i * 8 + 8];
        let bo = &b[i * 8..i * 8 + 8];
        for lane in 0..8 {
            acc[lane] += ao[lane] * bo[lane];
        }
    }
    let mut tail = T::ZERO;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}
