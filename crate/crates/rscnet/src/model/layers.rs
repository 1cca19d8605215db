//! Parameterized layers wrapping the numerics ops, with fan-in-scaled
//! initialization and named parameter traversal for the optimizer and
//! checkpoints.

use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::NumericsError;
use crate::numerics::{
    batchnorm2d, conv2d, linear, prelu, ConvSpec, LstmCellParams, Scalar, Tensor,
};

/// Whether a forward pass updates batch statistics (training) or applies
/// the stored running statistics (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn uniform_tensor<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    bound: f64,
) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let values: Vec<T> = (0..n)
        .map(|_| T::from_f64(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::leaf(shape, values, true).expect("finite init")
}

pub struct Conv2d<T: Scalar> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (spec.in_channels * spec.kernel_h * spec.kernel_w) as f64;
        let bound = (1.0 / fan_in).sqrt();
        let weight = uniform_tensor(
            rng,
            vec![spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w],
            bound,
        );
        let bias = uniform_tensor(rng, vec![spec.out_channels], bound);
        Conv2d { spec, weight, bias }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        conv2d(x, &self.spec, &self.weight, &self.bias)
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }
}

pub struct BatchNorm2d<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: RefCell<Vec<T>>,
    pub running_var: RefCell<Vec<T>>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::leaf(vec![channels], vec![T::ONE; channels], true).unwrap(),
            beta: Tensor::leaf(vec![channels], vec![T::ZERO; channels], true).unwrap(),
            running_mean: RefCell::new(vec![T::ZERO; channels]),
            running_var: RefCell::new(vec![T::ONE; channels]),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NumericsError> {
        batchnorm2d(
            x,
            &self.gamma,
            &self.beta,
            &mut self.running_mean.borrow_mut(),
            &mut self.running_var.borrow_mut(),
            self.eps,
            self.momentum,
            mode == Mode::Train,
        )
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), &mut self.gamma));
        out.push((format!("{prefix}.beta"), &mut self.beta));
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), &self.gamma));
        out.push((format!("{prefix}.beta"), &self.beta));
    }

    fn visit_buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a RefCell<Vec<T>>)>) {
        out.push((format!("{prefix}.running_mean"), &self.running_mean));
        out.push((format!("{prefix}.running_var"), &self.running_var));
    }
}

pub struct PRelu<T: Scalar> {
    pub alpha: Tensor<T>,
}

impl<T: Scalar> PRelu<T> {
    pub fn new(channels: usize) -> Self {
        PRelu {
            alpha: Tensor::leaf(vec![channels], vec![T::from_f64(0.25); channels], true).unwrap(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        prelu(x, &self.alpha)
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.alpha"), &mut self.alpha));
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.alpha"), &self.alpha));
    }
}

/// Convolution followed by per-channel batch normalization and PReLU.
pub struct ConvBnAct<T: Scalar> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    pub act: PRelu<T>,
}

impl<T: Scalar> ConvBnAct<T> {
    pub fn new(spec: ConvSpec, rng: &mut ChaCha8Rng) -> Self {
        let channels = spec.out_channels;
        ConvBnAct {
            conv: Conv2d::new(spec, rng),
            bn: BatchNorm2d::new(channels),
            act: PRelu::new(channels),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NumericsError> {
        self.act.forward(&self.bn.forward(&self.conv.forward(x)?, mode)?)
    }

    pub(crate) fn visit_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<T>)>,
    ) {
        self.conv.visit_mut(&format!("{prefix}.conv"), out);
        self.bn.visit_mut(&format!("{prefix}.bn"), out);
        self.act.visit_mut(&format!("{prefix}.act"), out);
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.conv.visit(&format!("{prefix}.conv"), out);
        self.bn.visit(&format!("{prefix}.bn"), out);
        self.act.visit(&format!("{prefix}.act"), out);
    }

    pub(crate) fn visit_buffers<'a>(
        &'a self,
        prefix: &str,
        out: &mut Vec<(String, &'a RefCell<Vec<T>>)>,
    ) {
        self.bn.visit_buffers(&format!("{prefix}.bn"), out);
    }
}

pub struct Linear<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / d_in as f64).sqrt();
        Linear {
            weight: uniform_tensor(rng, vec![d_out, d_in], bound),
            bias: uniform_tensor(rng, vec![d_out], bound),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        linear(x, &self.weight, &self.bias)
    }

    pub(crate) fn visit_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<T>)>,
    ) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }
}

pub struct Lstm<T: Scalar> {
    pub params: LstmCellParams<T>,
}

impl<T: Scalar> Lstm<T> {
    pub fn new(d_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Lstm {
            params: LstmCellParams {
                w_ih: uniform_tensor(rng, vec![4 * hidden, d_in], bound),
                w_hh: uniform_tensor(rng, vec![4 * hidden, hidden], bound),
                b_ih: uniform_tensor(rng, vec![4 * hidden], bound),
                b_hh: uniform_tensor(rng, vec![4 * hidden], bound),
            },
        }
    }

    pub(crate) fn visit_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Tensor<T>)>,
    ) {
        out.push((format!("{prefix}.w_ih"), &mut self.params.w_ih));
        out.push((format!("{prefix}.w_hh"), &mut self.params.w_hh));
        out.push((format!("{prefix}.b_ih"), &mut self.params.b_ih));
        out.push((format!("{prefix}.b_hh"), &mut self.params.b_hh));
    }

    pub(crate) fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        out.push((format!("{prefix}.w_ih"), &self.params.w_ih));
        out.push((format!("{prefix}.w_hh"), &self.params.w_hh));
        out.push((format!("{prefix}.b_ih"), &self.params.b_ih));
        out.push((format!("{prefix}.b_hh"), &self.params.b_hh));
    }
}
