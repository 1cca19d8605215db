//! Scalar-loop reference kernels used as independent oracles by the test
//! suites. No vectorization, no shared code with the fast paths: four-deep
//! nested loops written straight from the defining sums.

use super::scalar::Scalar;

/// Direct evaluation of the dilated convolution sum with "same" zero
/// padding and bias:
/// `out[o,i,j] = bias[o] + sum_c sum_m sum_n in[c, i + d*m - ph, j + d*n - pw] * w[o,c,m,n]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_reference<T: Scalar>(
    input: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[T],
    cout: usize,
    kh: usize,
    kw: usize,
    dilation: usize,
    bias: &[T],
) -> Vec<T> {
    let keh = kh + (kh - 1) * (dilation - 1);
    let kew = kw + (kw - 1) * (dilation - 1);
    let (ph, pw) = ((keh - 1) / 2, (kew - 1) / 2);
    let mut out = vec![T::ZERO; cout * h * w];
    for o in 0..cout {
        for i in 0..h {
            for j in 0..w {
                let mut acc = bias[o];
                for c in 0..cin {
                    for m in 0..kh {
                        for n in 0..kw {
                            let ii = (i + dilation * m) as isize - ph as isize;
                            let jj = (j + dilation * n) as isize - pw as isize;
                            if ii < 0 || ii >= h as isize || jj < 0 || jj >= w as isize {
                                continue;
                            }
                            let x = input[(c * h + ii as usize) * w + jj as usize];
                            let k = weights[((o * cin + c) * kh + m) * kw + n];
                            acc += x * k;
                        }
                    }
                }
                out[(o * h + i) * w + j] = acc;
            }
        }
    }
    out
}

/// Scalar per-gate LSTM step. Weight rows stacked (input, forget, cell,
/// output); biases likewise.
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_reference<T: Scalar>(
    x: &[T],
    h: &[T],
    c: &[T],
    w_ih: &[T],
    w_hh: &[T],
    b_ih: &[T],
    b_hh: &[T],
    hidden: usize,
) -> (Vec<T>, Vec<T>) {
    let din = x.len();
    let sig = |v: T| T::ONE / (T::ONE + (-v).exp());
    let gate = |row: usize| {
        let mut acc = b_ih[row] + b_hh[row];
        for (k, &xv) in x.iter().enumerate() {
            acc += w_ih[row * din + k] * xv;
        }
        for (k, &hv) in h.iter().enumerate() {
            acc += w_hh[row * hidden + k] * hv;
        }
        acc
    };
    let mut h_next = vec![T::ZERO; hidden];
    let mut c_next = vec![T::ZERO; hidden];
    for u in 0..hidden {
        let i = sig(gate(u));
        let f = sig(gate(hidden + u));
        let g = gate(2 * hidden + u).tanh();
        let o = sig(gate(3 * hidden + u));
        c_next[u] = f * c[u] + i * g;
        h_next[u] = o * c_next[u].tanh();
    }
    (h_next, c_next)
}

/// Elementwise mean of squared differences, one scalar accumulation loop.
pub fn mse_reference<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x.to_f64() - y.to_f64();
        acc += d * d;
    }
    acc / a.len() as f64
}

/// Central finite-difference gradient of `f` with respect to `x`.
pub fn finite_difference_grad(
    x: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    epsilon: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = epsilon * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative disagreement used by the gradient suites.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = (a.abs() + b.abs()).max(1.0);
    (a - b).abs() / denom
}
