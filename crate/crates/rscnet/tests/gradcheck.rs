//! Finite-difference verification of every differentiable operation at
//! 64-bit precision, against the scalar reference oracles.

mod common;

use common::{check_gradients, random_values, rng, weighted_sum};
use rand::Rng;
use rscnet::numerics::{
    batchnorm2d, concat, conv2d, cross_entropy, lstm_cell, matmul, mean_all, mse, prelu, relu,
    sigmoid, softmax, sum_all, tanh, ConvSpec, LstmCellParams, Tensor,
};

const TOL: f64 = 1e-4;

#[test]
fn elementwise_ops() {
    let mut r = rng(100);
    let a = random_values(&mut r, 12, -2.0, 2.0);
    let b = random_values(&mut r, 12, -2.0, 2.0);
    let w = random_values(&mut r, 12, -1.0, 1.0);

    let inputs = vec![(vec![3, 4], a), (vec![3, 4], b)];
    let wa = w.clone();
    check_gradients("add", &inputs, &move |t| {
        weighted_sum(&t[0].add(&t[1]).unwrap(), &wa)
    }, TOL);
    let wb = w.clone();
    check_gradients("sub", &inputs, &move |t| {
        weighted_sum(&t[0].sub(&t[1]).unwrap(), &wb)
    }, TOL);
    let wc = w.clone();
    check_gradients("mul", &inputs, &move |t| {
        weighted_sum(&t[0].mul(&t[1]).unwrap(), &wc)
    }, TOL);
    let wd = w.clone();
    check_gradients("scale", &inputs[..1], &move |t| {
        weighted_sum(&t[0].scale(-1.7).unwrap(), &wd)
    }, TOL);
}

#[test]
fn shape_ops() {
    let mut r = rng(101);
    let x = random_values(&mut r, 24, -2.0, 2.0);
    let inputs = vec![(vec![2, 3, 4], x)];
    let w = random_values(&mut r, 8, -1.0, 1.0);
    check_gradients("narrow", &inputs, &move |t| {
        weighted_sum(&t[0].narrow(1, 1, 1).unwrap(), &w)
    }, TOL);
    let w2 = random_values(&mut r, 24, -1.0, 1.0);
    check_gradients("reshape", &inputs, &move |t| {
        weighted_sum(&t[0].reshape(vec![6, 4]).unwrap(), &w2)
    }, TOL);

    let a = random_values(&mut r, 6, -2.0, 2.0);
    let b = random_values(&mut r, 9, -2.0, 2.0);
    let w3 = random_values(&mut r, 15, -1.0, 1.0);
    check_gradients(
        "concat",
        &[(vec![3, 2], a), (vec![3, 3], b)],
        &move |t| weighted_sum(&concat(1, &[t[0].clone(), t[1].clone()]).unwrap(), &w3),
        TOL,
    );
}

#[test]
fn activations() {
    let mut r = rng(102);
    // Keep samples away from the relu/prelu kink so finite differences
    // stay two-sided.
    let x: Vec<f64> = random_values(&mut r, 24, 0.1, 2.0)
        .into_iter()
        .zip(random_values(&mut r, 24, 0.0, 1.0))
        .map(|(v, s)| if s > 0.5 { v } else { -v })
        .collect();
    let w = random_values(&mut r, 24, -1.0, 1.0);
    let inputs = vec![(vec![2, 3, 2, 2], x)];
    let wr = w.clone();
    check_gradients("relu", &inputs, &move |t| {
        weighted_sum(&relu(&t[0]).unwrap(), &wr)
    }, TOL);
    let ws = w.clone();
    check_gradients("sigmoid", &inputs, &move |t| {
        weighted_sum(&sigmoid(&t[0]).unwrap(), &ws)
    }, TOL);
    let wt = w.clone();
    check_gradients("tanh", &inputs, &move |t| {
        weighted_sum(&tanh(&t[0]).unwrap(), &wt)
    }, TOL);

    let alpha = random_values(&mut r, 3, 0.1, 0.4);
    let mut both = inputs.clone();
    both.push((vec![3], alpha));
    let wp = w.clone();
    check_gradients("prelu", &both, &move |t| {
        weighted_sum(&prelu(&t[0], &t[1]).unwrap(), &wp)
    }, TOL);
}

#[test]
fn reductions() {
    let mut r = rng(103);
    let x = random_values(&mut r, 10, -2.0, 2.0);
    let inputs = vec![(vec![2, 5], x)];
    check_gradients("sum_all", &inputs, &|t| sum_all(&t[0]).unwrap(), TOL);
    check_gradients("mean_all", &inputs, &|t| mean_all(&t[0]).unwrap(), TOL);
}

#[test]
fn dense_layers() {
    let mut r = rng(104);
    let a = random_values(&mut r, 6, -1.0, 1.0);
    let b = random_values(&mut r, 12, -1.0, 1.0);
    let w = random_values(&mut r, 8, -1.0, 1.0);
    check_gradients(
        "matmul",
        &[(vec![2, 3], a), (vec![3, 4], b)],
        &move |t| weighted_sum(&matmul(&t[0], &t[1]).unwrap(), &w),
        TOL,
    );

    let x = random_values(&mut r, 8, -1.0, 1.0);
    let wt = random_values(&mut r, 12, -1.0, 1.0);
    let bias = random_values(&mut r, 3, -0.5, 0.5);
    let w2 = random_values(&mut r, 6, -1.0, 1.0);
    check_gradients(
        "linear",
        &[(vec![2, 4], x), (vec![3, 4], wt), (vec![3], bias)],
        &move |t| {
            weighted_sum(
                &rscnet::numerics::linear(&t[0], &t[1], &t[2]).unwrap(),
                &w2,
            )
        },
        TOL,
    );
}

#[test]
fn convolutions_across_kernels_and_dilations() {
    let mut r = rng(105);
    for &(kh, kw) in &[(3usize, 1usize), (1, 3), (5, 1), (1, 5), (3, 3), (5, 5)] {
        for d in 1..=3usize {
            let (cin, cout, h, w) = (2usize, 3usize, 6usize, 7usize);
            let spec = ConvSpec {
                kernel_h: kh,
                kernel_w: kw,
                dilation: d,
                in_channels: cin,
                out_channels: cout,
            };
            let x = random_values(&mut r, cin * h * w, -1.0, 1.0);
            let wv = random_values(&mut r, cout * cin * kh * kw, -1.0, 1.0);
            let b = random_values(&mut r, cout, -0.5, 0.5);
            let lw = random_values(&mut r, cout * h * w, -1.0, 1.0);
            let name = format!("conv2d {kh}x{kw} d{d}");
            check_gradients(
                Box::leak(name.into_boxed_str()),
                &[
                    (vec![cin, h, w], x),
                    (vec![cout, cin, kh, kw], wv),
                    (vec![cout], b),
                ],
                &move |t| weighted_sum(&conv2d(&t[0], &spec, &t[1], &t[2]).unwrap(), &lw),
                TOL,
            );
        }
    }
}

#[test]
fn batchnorm_training_and_eval_modes() {
    let mut r = rng(106);
    let (batch, c, h, w) = (3usize, 2usize, 2usize, 3usize);
    let x = random_values(&mut r, batch * c * h * w, -2.0, 2.0);
    let gamma = random_values(&mut r, c, 0.5, 1.5);
    let beta = random_values(&mut r, c, -0.5, 0.5);
    let lw = random_values(&mut r, batch * c * h * w, -1.0, 1.0);

    for training in [true, false] {
        let lw = lw.clone();
        let name: &'static str = if training { "batchnorm/train" } else { "batchnorm/eval" };
        check_gradients(
            name,
            &[
                (vec![batch, c, h, w], x.clone()),
                (vec![c], gamma.clone()),
                (vec![c], beta.clone()),
            ],
            &move |t| {
                let mut rm = vec![0.25f64, -0.5];
                let mut rv = vec![1.5f64, 0.75];
                let out =
                    batchnorm2d(&t[0], &t[1], &t[2], &mut rm, &mut rv, 1e-5, 0.1, training)
                        .unwrap();
                weighted_sum(&out, &lw)
            },
            TOL,
        );
    }
}

#[test]
fn lstm_cell_gradients_and_oracle() {
    let mut r = rng(107);
    let (din, hidden) = (3usize, 4usize);
    let x = random_values(&mut r, din, -1.0, 1.0);
    let h = random_values(&mut r, hidden, -1.0, 1.0);
    let c = random_values(&mut r, hidden, -1.0, 1.0);
    let w_ih = random_values(&mut r, 4 * hidden * din, -0.5, 0.5);
    let w_hh = random_values(&mut r, 4 * hidden * hidden, -0.5, 0.5);
    let b_ih = random_values(&mut r, 4 * hidden, -0.5, 0.5);
    let b_hh = random_values(&mut r, 4 * hidden, -0.5, 0.5);

    // Forward agreement with the scalar per-gate oracle.
    let params = LstmCellParams {
        w_ih: Tensor::new(vec![4 * hidden, din], w_ih.clone()).unwrap(),
        w_hh: Tensor::new(vec![4 * hidden, hidden], w_hh.clone()).unwrap(),
        b_ih: Tensor::new(vec![4 * hidden], b_ih.clone()).unwrap(),
        b_hh: Tensor::new(vec![4 * hidden], b_hh.clone()).unwrap(),
    };
    let xt = Tensor::new(vec![din], x.clone()).unwrap();
    let ht = Tensor::new(vec![hidden], h.clone()).unwrap();
    let ct = Tensor::new(vec![hidden], c.clone()).unwrap();
    let (h_fast, c_fast) = lstm_cell(&xt, &ht, &ct, &params).unwrap();
    let (h_ref, c_ref) = rscnet::numerics::reference::lstm_cell_reference(
        &x, &h, &c, &w_ih, &w_hh, &b_ih, &b_hh, hidden,
    );
    for (a, b) in h_fast.values().iter().zip(&h_ref) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in c_fast.values().iter().zip(&c_ref) {
        assert!((a - b).abs() < 1e-12);
    }

    // Gradients through all seven inputs.
    let lw = random_values(&mut r, 2 * hidden, -1.0, 1.0);
    check_gradients(
        "lstm_cell",
        &[
            (vec![din], x),
            (vec![hidden], h),
            (vec![hidden], c),
            (vec![4 * hidden, din], w_ih),
            (vec![4 * hidden, hidden], w_hh),
            (vec![4 * hidden], b_ih),
            (vec![4 * hidden], b_hh),
        ],
        &move |t| {
            let params = LstmCellParams {
                w_ih: t[3].clone(),
                w_hh: t[4].clone(),
                b_ih: t[5].clone(),
                b_hh: t[6].clone(),
            };
            let (hn, cn) = lstm_cell(&t[0], &t[1], &t[2], &params).unwrap();
            weighted_sum(&concat(0, &[hn, cn]).unwrap(), &lw)
        },
        TOL,
    );
}

#[test]
fn loss_gradients() {
    let mut r = rng(108);
    let logits = random_values(&mut r, 10, -2.0, 2.0);
    check_gradients(
        "cross_entropy",
        &[(vec![2, 5], logits.clone())],
        &|t| cross_entropy(&t[0], &[1, 4]).unwrap(),
        TOL,
    );

    let w = random_values(&mut r, 10, -1.0, 1.0);
    check_gradients(
        "softmax",
        &[(vec![2, 5], logits)],
        &move |t| weighted_sum(&softmax(&t[0]).unwrap(), &w),
        TOL,
    );

    let a = random_values(&mut r, 12, -2.0, 2.0);
    let b = random_values(&mut r, 12, -2.0, 2.0);
    check_gradients(
        "mse",
        &[(vec![3, 4], a), (vec![3, 4], b)],
        &|t| mse(&t[0], &t[1]).unwrap(),
        TOL,
    );

    // Analytic anchor: loss = mse(x, 0) for scalar v has gradient 2v.
    let v = 1.37f64;
    let x = Tensor::leaf(vec![1], vec![v], true).unwrap();
    let zero = Tensor::<f64>::zeros(vec![1]);
    let loss = mse(&x, &zero).unwrap();
    rscnet::numerics::backward(&loss).unwrap();
    assert!((x.grad().unwrap()[0] - 2.0 * v).abs() < 1e-12);
}

#[test]
fn mse_matches_scalar_loop_oracle() {
    let mut r = rng(109);
    let a = random_values(&mut r, 40, -3.0, 3.0);
    let b = random_values(&mut r, 40, -3.0, 3.0);
    let at = Tensor::new(vec![5, 8], a.clone()).unwrap();
    let bt = Tensor::new(vec![5, 8], b.clone()).unwrap();
    let fast = mse(&at, &bt).unwrap().item();
    let oracle = rscnet::numerics::reference::mse_reference(&a, &b);
    assert!((fast - oracle).abs() < 1e-12);
}
