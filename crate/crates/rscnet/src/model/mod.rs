//! The network: edge encoder (feature extraction + compression head),
//! cloud recurrent block, expandable decoder, and activity classifier,
//! plus analytic parameter and FLOP accounting and a binary checkpoint
//! format.

mod checkpoint;
mod flops;
pub mod layers;

pub use checkpoint::{load_model, save_model, Checkpoint, CHECKPOINT_MAGIC};
pub use flops::{conv_flops, encoder_conv_flops, flops_count, linear_flops, lstm_flops, FlopsBreakdown};
pub use layers::Mode;

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{ModelError, NumericsError};
use crate::numerics::{concat, lstm_cell, relu, ConvSpec, Scalar, Tensor};

use layers::{Conv2d, ConvBnAct, Linear, Lstm};

/// Every architecture hyperparameter in one validated record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub n_timesteps: usize,
    /// CSI frames per window; must divide `n_timesteps`.
    pub window_frames: usize,
    /// Compressed size over raw window size, in [1/(na*ns*nf), 1].
    pub compression_ratio: f64,
    /// Decoder channel-width multiplier (internal width c = 3 * rho).
    pub expansion_rate: usize,
    /// LSTM hidden width; defaults to the compressed dimension.
    pub lstm_hidden: Option<usize>,
    pub n_classes: usize,
    /// Weight of the reconstruction term in the joint loss.
    pub loss_weight: f64,
    /// Encoder feature channels after the head convolution.
    pub encoder_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_antennas: 3,
            n_subcarriers: 30,
            n_timesteps: 250,
            window_frames: 50,
            compression_ratio: 1.0 / 90.0,
            expansion_rate: 1,
            lstm_hidden: None,
            n_classes: 7,
            loss_weight: 50.0,
            encoder_width: 8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |field: &'static str, reason: String| {
            Err(ModelError::InvalidConfig { field, reason })
        };
        if self.n_antennas == 0 {
            return fail("n_antennas", "must be positive".into());
        }
        if self.n_subcarriers == 0 {
            return fail("n_subcarriers", "must be positive".into());
        }
        if self.n_timesteps == 0 {
            return fail("n_timesteps", "must be positive".into());
        }
        if self.window_frames == 0 || self.n_timesteps % self.window_frames != 0 {
            return fail(
                "window_frames",
                format!(
                    "{} must divide n_timesteps {}",
                    self.window_frames, self.n_timesteps
                ),
            );
        }
        let raw = self.raw_window_dim() as f64;
        let lo = 1.0 / raw;
        if !(self.compression_ratio >= lo - 1e-12 && self.compression_ratio <= 1.0 + 1e-12) {
            return fail(
                "compression_ratio",
                format!(
                    "{} outside [{lo:.3e}, 1] for a {raw}-value window",
                    self.compression_ratio
                ),
            );
        }
        if self.expansion_rate == 0 {
            return fail("expansion_rate", "must be >= 1".into());
        }
        if self.n_classes == 0 {
            return fail("n_classes", "must be positive".into());
        }
        if self.loss_weight < 0.0 {
            return fail("loss_weight", "must be nonnegative".into());
        }
        if self.encoder_width == 0 {
            return fail("encoder_width", "must be positive".into());
        }
        if let Some(h) = self.lstm_hidden {
            if h == 0 {
                return fail("lstm_hidden", "must be positive".into());
            }
        }
        Ok(())
    }

    /// Raw values per window: na * ns * nf.
    pub fn raw_window_dim(&self) -> usize {
        self.n_antennas * self.n_subcarriers * self.window_frames
    }

    /// Compressed dimension m = max(1, round(na * ns * nf * eta)).
    pub fn compressed_dim(&self) -> usize {
        let m = (self.raw_window_dim() as f64 * self.compression_ratio).round() as usize;
        m.max(1)
    }

    /// Windows per sample: nt / nf.
    pub fn window_count(&self) -> usize {
        self.n_timesteps / self.window_frames
    }

    pub fn lstm_hidden_dim(&self) -> usize {
        self.lstm_hidden.unwrap_or_else(|| self.compressed_dim())
    }

    /// Internal decoder channel width c = 3 * rho.
    pub fn decoder_channels(&self) -> usize {
        3 * self.expansion_rate
    }

    /// Classifier input width: stacked per-window hidden states.
    pub fn embedding_dim(&self) -> usize {
        self.window_count() * self.lstm_hidden_dim()
    }

    /// Config with all derived defaults pinned to concrete values, so that
    /// later single-field edits (sweeps) do not shift them.
    pub fn resolve(&self) -> ModelConfig {
        let mut c = self.clone();
        c.lstm_hidden = Some(self.lstm_hidden_dim());
        c
    }

    /// Stable hash of the canonical JSON encoding; used by the stream
    /// runtime to tag sessions.
    pub fn hash(&self) -> u32 {
        let json = serde_json::to_string(self).expect("config serializes");
        crc32fast::hash(json.as_bytes())
    }
}

const CLASSIFIER_HIDDEN: [usize; 2] = [512, 128];

/// Residual feature block: three sequential dilated 3x3 convolutions
/// (d = 1, 2, 3) beside one standard 3x3 branch, fused by a linear 1x1
/// convolution and an identity skip.
pub struct DconvBlock<T: Scalar> {
    pub dilated: [ConvBnAct<T>; 3],
    pub standard: ConvBnAct<T>,
    pub fuse: Conv2d<T>,
}

impl<T: Scalar> DconvBlock<T> {
    fn new(width: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv = |d: usize, rng: &mut ChaCha8Rng| {
            ConvBnAct::new(
                ConvSpec {
                    kernel_h: 3,
                    kernel_w: 3,
                    dilation: d,
                    in_channels: width,
                    out_channels: width,
                },
                rng,
            )
        };
        DconvBlock {
            dilated: [conv(1, rng), conv(2, rng), conv(3, rng)],
            standard: conv(1, rng),
            fuse: Conv2d::new(
                ConvSpec {
                    kernel_h: 1,
                    kernel_w: 1,
                    dilation: 1,
                    in_channels: 2 * width,
                    out_channels: width,
                },
                rng,
            ),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NumericsError> {
        let mut a = x.clone();
        for layer in &self.dilated {
            a = layer.forward(&a, mode)?;
        }
        let b = self.standard.forward(x, mode)?;
        let fused = self.fuse.forward(&concat(1, &[a, b])?)?;
        fused.add(x)
    }
}

pub struct Encoder<T: Scalar> {
    pub head: ConvBnAct<T>,
    pub block: DconvBlock<T>,
    pub compress: Linear<T>,
}

impl<T: Scalar> Encoder<T> {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = config.encoder_width;
        Encoder {
            head: ConvBnAct::new(
                ConvSpec {
                    kernel_h: 5,
                    kernel_w: 5,
                    dilation: 1,
                    in_channels: config.n_antennas,
                    out_channels: w,
                },
                rng,
            ),
            block: DconvBlock::new(w, rng),
            compress: Linear::new(
                w * config.n_subcarriers * config.window_frames,
                config.compressed_dim(),
                rng,
            ),
        }
    }

    /// `[b, na, ns, nf]` -> `[b, m]`.
    pub fn forward(&self, window: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NumericsError> {
        let features = self.block.forward(&self.head.forward(window, mode)?, mode)?;
        let batch = features.shape()[0];
        let flat = features.reshape(vec![batch, features.len() / batch])?;
        self.compress.forward(&flat)
    }
}

/// Residual decoder block. Branch A stacks dilated asymmetric kernels,
/// branch B widens and narrows with 1x3/5x1/1x5/3x1 kernels; a linear 1x1
/// convolution fuses them before the identity skip.
pub struct DecoderBlock<T: Scalar> {
    pub branch_a: [ConvBnAct<T>; 4],
    pub branch_b: [ConvBnAct<T>; 4],
    pub fuse: Conv2d<T>,
}

impl<T: Scalar> DecoderBlock<T> {
    fn new(na: usize, c: usize, rng: &mut ChaCha8Rng) -> Self {
        let conv = |kh, kw, d, cin, cout, rng: &mut ChaCha8Rng| {
            ConvBnAct::new(
                ConvSpec {
                    kernel_h: kh,
                    kernel_w: kw,
                    dilation: d,
                    in_channels: cin,
                    out_channels: cout,
                },
                rng,
            )
        };
        DecoderBlock {
            branch_a: [
                conv(3, 3, 2, na, c, rng),
                conv(3, 1, 3, c, c, rng),
                conv(1, 3, 3, c, c, rng),
                conv(3, 3, 1, c, na, rng),
            ],
            branch_b: [
                conv(1, 3, 1, na, c, rng),
                conv(5, 1, 1, c, c, rng),
                conv(1, 5, 1, c, c, rng),
                conv(3, 1, 1, c, na, rng),
            ],
            fuse: Conv2d::new(
                ConvSpec {
                    kernel_h: 1,
                    kernel_w: 1,
                    dilation: 1,
                    in_channels: 2 * na,
                    out_channels: na,
                },
                rng,
            ),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NumericsError> {
        let mut a = x.clone();
        for layer in &self.branch_a {
            a = layer.forward(&a, mode)?;
        }
        let mut b = x.clone();
        for layer in &self.branch_b {
            b = layer.forward(&b, mode)?;
        }
        let fused = self.fuse.forward(&concat(1, &[a, b])?)?;
        fused.add(x)
    }
}

pub struct Decoder<T: Scalar> {
    pub restore: Linear<T>,
    pub head: ConvBnAct<T>,
    pub blocks: [DecoderBlock<T>; 2],
}

impl<T: Scalar> Decoder<T> {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let na = config.n_antennas;
        let c = config.decoder_channels();
        Decoder {
            restore: Linear::new(config.lstm_hidden_dim(), config.raw_window_dim(), rng),
            head: ConvBnAct::new(
                ConvSpec {
                    kernel_h: 5,
                    kernel_w: 5,
                    dilation: 1,
                    in_channels: na,
                    out_channels: na,
                },
                rng,
            ),
            blocks: [DecoderBlock::new(na, c, rng), DecoderBlock::new(na, c, rng)],
        }
    }

    /// `[b, n_h]` -> `[b, na, ns, nf]`.
    pub fn forward(
        &self,
        hidden: &Tensor<T>,
        config: &ModelConfig,
        mode: Mode,
    ) -> Result<Tensor<T>, NumericsError> {
        let batch = hidden.shape()[0];
        let restored = self.restore.forward(hidden)?.reshape(vec![
            batch,
            config.n_antennas,
            config.n_subcarriers,
            config.window_frames,
        ])?;
        // Skip path around the head conv keeps the restored window intact
        // when the convolutional trunk contributes nothing.
        let mut x = restored.add(&self.head.forward(&restored, mode)?)?;
        for block in &self.blocks {
            x = block.forward(&x, mode)?;
        }
        Ok(x)
    }
}

pub struct Classifier<T: Scalar> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub fc3: Linear<T>,
}

impl<T: Scalar> Classifier<T> {
    fn new(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Classifier {
            fc1: Linear::new(config.embedding_dim(), CLASSIFIER_HIDDEN[0], rng),
            fc2: Linear::new(CLASSIFIER_HIDDEN[0], CLASSIFIER_HIDDEN[1], rng),
            fc3: Linear::new(CLASSIFIER_HIDDEN[1], config.n_classes, rng),
        }
    }

    /// Returns (logits, penultimate activations).
    pub fn forward(&self, stacked: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), NumericsError> {
        let h1 = relu(&self.fc1.forward(stacked)?)?;
        let h2 = relu(&self.fc2.forward(&h1)?)?;
        let logits = self.fc3.forward(&h2)?;
        Ok((logits, h2))
    }
}

/// Recurrent state threaded across windows.
pub struct LstmState<T: Scalar> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Scalar> Clone for LstmState<T> {
    fn clone(&self) -> Self {
        LstmState {
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        LstmState {
            h: Tensor::zeros(vec![batch, hidden]),
            c: Tensor::zeros(vec![batch, hidden]),
        }
    }
}

/// Batched forward products, with the intermediate embeddings exposed for
/// export and streaming checks.
pub struct ForwardOutput<T: Scalar> {
    /// `[b, na, ns, nt]`
    pub reconstruction: Tensor<T>,
    /// `[b, n_classes]`
    pub logits: Tensor<T>,
    /// Per window: `[b, m]`
    pub compressed: Vec<Tensor<T>>,
    /// Per window: `[b, n_h]`
    pub hidden: Vec<Tensor<T>>,
    /// `[b, 128]`
    pub penultimate: Tensor<T>,
}

/// Full parameter bundle.
pub struct RscnetModel<T: Scalar> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub recurrent: Lstm<T>,
    pub decoder: Decoder<T>,
    pub classifier: Classifier<T>,
    /// Normalization statistics bundled with the weights so deployed
    /// endpoints see the training-time feature space.
    pub norm: Option<NormStats<T>>,
}

impl<T: Scalar> RscnetModel<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let config = config.resolve();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(RscnetModel {
            encoder: Encoder::new(&config, &mut rng),
            recurrent: Lstm::new(config.compressed_dim(), config.lstm_hidden_dim(), &mut rng),
            decoder: Decoder::new(&config, &mut rng),
            classifier: Classifier::new(&config, &mut rng),
            config,
            norm: None,
        })
    }

    /// Encode one window: `[na, ns, nf]` -> `[m]`.
    pub fn encoder_forward(
        &self,
        window: &Tensor<T>,
        mode: Mode,
    ) -> Result<Tensor<T>, NumericsError> {
        let c = &self.config;
        let x = window.reshape(vec![1, c.n_antennas, c.n_subcarriers, c.window_frames])?;
        let m = self.encoder.forward(&x, mode)?;
        m.reshape(vec![c.compressed_dim()])
    }

    /// Run the LSTM over `[s, m]` window order, optionally continuing from
    /// an earlier state. Returns all hidden states `[s, n_h]` plus the
    /// final state for streaming continuation.
    pub fn recurrent_forward(
        &self,
        compressed_seq: &Tensor<T>,
        initial_state: Option<LstmState<T>>,
    ) -> Result<(Tensor<T>, LstmState<T>), NumericsError> {
        let m = self.config.compressed_dim();
        let hidden_dim = self.config.lstm_hidden_dim();
        let shape = compressed_seq.shape();
        if shape.len() != 2 || shape[1] != m {
            return Err(NumericsError::ShapeMismatch {
                op: "recurrent_forward",
                expected: format!("[s, {m}]"),
                got: format!("{shape:?}"),
            });
        }
        let steps = shape[0];
        let mut state = initial_state.unwrap_or_else(|| LstmState::zeros(1, hidden_dim));
        let mut hidden = Vec::with_capacity(steps);
        for s in 0..steps {
            let x = compressed_seq.narrow(0, s, 1)?;
            let (h, c) = lstm_cell(&x, &state.h, &state.c, &self.recurrent.params)?;
            state = LstmState { h: h.clone(), c };
            hidden.push(h);
        }
        Ok((concat(0, &hidden)?, state))
    }

    /// Decode one hidden state: `[n_h]` -> `[na, ns, nf]`.
    pub fn decoder_forward(
        &self,
        hidden: &Tensor<T>,
        mode: Mode,
    ) -> Result<Tensor<T>, NumericsError> {
        let c = &self.config;
        let h = hidden.reshape(vec![1, c.lstm_hidden_dim()])?;
        let out = self.decoder.forward(&h, c, mode)?;
        out.reshape(vec![c.n_antennas, c.n_subcarriers, c.window_frames])
    }

    /// Classify a stacked embedding `[s * n_h]` -> `[n_classes]` logits.
    pub fn classifier_forward(&self, stacked: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
        let flat = stacked.reshape(vec![1, stacked.len()])?;
        let (logits, _) = self.classifier.forward(&flat)?;
        logits.reshape(vec![self.config.n_classes])
    }

    /// Batched end-to-end pass over `[b, na, ns, nt]`.
    pub fn forward_batch(
        &self,
        samples: &Tensor<T>,
        mode: Mode,
    ) -> Result<ForwardOutput<T>, NumericsError> {
        let c = &self.config;
        let shape = samples.shape();
        if shape.len() != 4
            || shape[1] != c.n_antennas
            || shape[2] != c.n_subcarriers
            || shape[3] != c.n_timesteps
        {
            return Err(NumericsError::ShapeMismatch {
                op: "model_forward",
                expected: format!(
                    "[b, {}, {}, {}]",
                    c.n_antennas, c.n_subcarriers, c.n_timesteps
                ),
                got: format!("{shape:?}"),
            });
        }
        let batch = shape[0];
        let windows = c.window_count();
        let nf = c.window_frames;

        let mut compressed = Vec::with_capacity(windows);
        for s in 0..windows {
            let window = samples.narrow(3, s * nf, nf)?;
            compressed.push(self.encoder.forward(&window, mode)?);
        }

        let mut state = LstmState::zeros(batch, c.lstm_hidden_dim());
        let mut hidden = Vec::with_capacity(windows);
        for m in &compressed {
            let (h, cc) = lstm_cell(m, &state.h, &state.c, &self.recurrent.params)?;
            state = LstmState { h: h.clone(), c: cc };
            hidden.push(h);
        }

        let mut reconstructions = Vec::with_capacity(windows);
        for h in &hidden {
            reconstructions.push(self.decoder.forward(h, c, mode)?);
        }
        let reconstruction = concat(3, &reconstructions)?;

        let stacked = concat(1, &hidden)?;
        let (logits, penultimate) = self.classifier.forward(&stacked)?;

        Ok(ForwardOutput {
            reconstruction,
            logits,
            compressed,
            hidden,
            penultimate,
        })
    }

    /// Single-sample pass: `[na, ns, nt]` in, reconstruction of the same
    /// shape, class logits, and the intermediate embeddings out.
    pub fn model_forward(
        &self,
        sample: &Tensor<T>,
        mode: Mode,
    ) -> Result<ForwardOutput<T>, NumericsError> {
        let c = &self.config;
        let x = sample.reshape(vec![1, c.n_antennas, c.n_subcarriers, c.n_timesteps])?;
        let out = self.forward_batch(&x, mode)?;
        Ok(ForwardOutput {
            reconstruction: out.reconstruction.reshape(vec![
                c.n_antennas,
                c.n_subcarriers,
                c.n_timesteps,
            ])?,
            logits: out.logits.reshape(vec![c.n_classes])?,
            compressed: out.compressed,
            hidden: out.hidden,
            penultimate: out.penultimate,
        })
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.head.visit_mut("encoder.head", &mut out);
        for (i, layer) in self.encoder.block.dilated.iter_mut().enumerate() {
            layer.visit_mut(&format!("encoder.block.dilated{i}"), &mut out);
        }
        self.encoder.block.standard.visit_mut("encoder.block.standard", &mut out);
        out.push((
            "encoder.block.fuse.weight".into(),
            &mut self.encoder.block.fuse.weight,
        ));
        out.push((
            "encoder.block.fuse.bias".into(),
            &mut self.encoder.block.fuse.bias,
        ));
        self.encoder.compress.visit_mut("encoder.compress", &mut out);
        self.recurrent.visit_mut("recurrent", &mut out);
        self.decoder.restore.visit_mut("decoder.restore", &mut out);
        self.decoder.head.visit_mut("decoder.head", &mut out);
        for (bi, block) in self.decoder.blocks.iter_mut().enumerate() {
            for (i, layer) in block.branch_a.iter_mut().enumerate() {
                layer.visit_mut(&format!("decoder.block{bi}.a{i}"), &mut out);
            }
            for (i, layer) in block.branch_b.iter_mut().enumerate() {
                layer.visit_mut(&format!("decoder.block{bi}.b{i}"), &mut out);
            }
            out.push((
                format!("decoder.block{bi}.fuse.weight"),
                &mut block.fuse.weight,
            ));
            out.push((format!("decoder.block{bi}.fuse.bias"), &mut block.fuse.bias));
        }
        self.classifier.fc1.visit_mut("classifier.fc1", &mut out);
        self.classifier.fc2.visit_mut("classifier.fc2", &mut out);
        self.classifier.fc3.visit_mut("classifier.fc3", &mut out);
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.encoder.head.visit("encoder.head", &mut out);
        for (i, layer) in self.encoder.block.dilated.iter().enumerate() {
            layer.visit(&format!("encoder.block.dilated{i}"), &mut out);
        }
        self.encoder.block.standard.visit("encoder.block.standard", &mut out);
        out.push((
            "encoder.block.fuse.weight".into(),
            &self.encoder.block.fuse.weight,
        ));
        out.push(("encoder.block.fuse.bias".into(), &self.encoder.block.fuse.bias));
        self.encoder.compress.visit("encoder.compress", &mut out);
        self.recurrent.visit("recurrent", &mut out);
        self.decoder.restore.visit("decoder.restore", &mut out);
        self.decoder.head.visit("decoder.head", &mut out);
        for (bi, block) in self.decoder.blocks.iter().enumerate() {
            for (i, layer) in block.branch_a.iter().enumerate() {
                layer.visit(&format!("decoder.block{bi}.a{i}"), &mut out);
            }
            for (i, layer) in block.branch_b.iter().enumerate() {
                layer.visit(&format!("decoder.block{bi}.b{i}"), &mut out);
            }
            out.push((format!("decoder.block{bi}.fuse.weight"), &block.fuse.weight));
            out.push((format!("decoder.block{bi}.fuse.bias"), &block.fuse.bias));
        }
        self.classifier.fc1.visit("classifier.fc1", &mut out);
        self.classifier.fc2.visit("classifier.fc2", &mut out);
        self.classifier.fc3.visit("classifier.fc3", &mut out);
        out
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn named_buffers(&self) -> Vec<(String, &RefCell<Vec<T>>)> {
        let mut out = Vec::new();
        self.encoder.head.visit_buffers("encoder.head", &mut out);
        for (i, layer) in self.encoder.block.dilated.iter().enumerate() {
            layer.visit_buffers(&format!("encoder.block.dilated{i}"), &mut out);
        }
        self.encoder
            .block
            .standard
            .visit_buffers("encoder.block.standard", &mut out);
        self.decoder.head.visit_buffers("decoder.head", &mut out);
        for (bi, block) in self.decoder.blocks.iter().enumerate() {
            for (i, layer) in block.branch_a.iter().enumerate() {
                layer.visit_buffers(&format!("decoder.block{bi}.a{i}"), &mut out);
            }
            for (i, layer) in block.branch_b.iter().enumerate() {
                layer.visit_buffers(&format!("decoder.block{bi}.b{i}"), &mut out);
            }
        }
        out
    }
}

/// Exact trainable scalar count.
pub fn param_count<T: Scalar>(model: &RscnetModel<T>) -> usize {
    model.named_params().iter().map(|(_, t)| t.len()).sum()
}
