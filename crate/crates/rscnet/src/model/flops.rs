//! Analytic floating-point operation counts, one multiply-add = 2 FLOPs.
//!
//! Conventions: convolutions and linear layers count their multiply-add
//! terms only (`2*kh*kw*cin*cout*h*w` and `2*d_in*d_out`); the LSTM cell
//! counts its two gate products `8*h*(d_in+h)` plus `21*h` elementwise
//! work (bias/gate sums 12h, gate activations 4h, cell update 3h, output
//! tanh and product 2h). Normalization and activation layers are omitted.

use super::ModelConfig;

pub fn conv_flops(kh: usize, kw: usize, cin: usize, cout: usize, h: usize, w: usize) -> u64 {
    2 * (kh * kw * cin * cout * h * w) as u64
}

pub fn linear_flops(d_in: usize, d_out: usize) -> u64 {
    2 * (d_in * d_out) as u64
}

pub fn lstm_flops(d_in: usize, hidden: usize) -> u64 {
    (8 * hidden * (d_in + hidden) + 21 * hidden) as u64
}

/// Per-component costs. Encoder, recurrent, and decoder run once per CSI
/// window; the classifier runs once per activity sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FlopsBreakdown {
    pub encoder_per_window: u64,
    pub recurrent_per_window: u64,
    pub decoder_per_window: u64,
    pub classifier_per_sample: u64,
    pub windows_per_sample: u64,
}

impl FlopsBreakdown {
    pub fn encoder_per_sample(&self) -> u64 {
        self.encoder_per_window * self.windows_per_sample
    }

    pub fn recurrent_per_sample(&self) -> u64 {
        self.recurrent_per_window * self.windows_per_sample
    }

    pub fn decoder_per_sample(&self) -> u64 {
        self.decoder_per_window * self.windows_per_sample
    }

    pub fn total_per_sample(&self) -> u64 {
        self.encoder_per_sample()
            + self.recurrent_per_sample()
            + self.decoder_per_sample()
            + self.classifier_per_sample
    }
}

/// Closed-form counts for a configuration (derived dims are resolved
/// first, so sweep edits to single fields see frozen defaults).
pub fn flops_count(config: &ModelConfig) -> FlopsBreakdown {
    let c = config.resolve();
    let na = c.n_antennas;
    let ns = c.n_subcarriers;
    let nf = c.window_frames;
    let w = c.encoder_width;
    let m = c.compressed_dim();
    let nh = c.lstm_hidden_dim();
    let dc = c.decoder_channels();
    let s = c.window_count();

    let encoder = conv_flops(5, 5, na, w, ns, nf)
        + 3 * conv_flops(3, 3, w, w, ns, nf)
        + conv_flops(3, 3, w, w, ns, nf)
        + conv_flops(1, 1, 2 * w, w, ns, nf)
        + linear_flops(w * ns * nf, m);

    let recurrent = lstm_flops(m, nh);

    let decoder_block = conv_flops(3, 3, na, dc, ns, nf)
        + conv_flops(3, 1, dc, dc, ns, nf)
        + conv_flops(1, 3, dc, dc, ns, nf)
        + conv_flops(3, 3, dc, na, ns, nf)
        + conv_flops(1, 3, na, dc, ns, nf)
        + conv_flops(5, 1, dc, dc, ns, nf)
        + conv_flops(1, 5, dc, dc, ns, nf)
        + conv_flops(3, 1, dc, na, ns, nf)
        + conv_flops(1, 1, 2 * na, na, ns, nf);
    let decoder = linear_flops(nh, na * ns * nf)
        + conv_flops(5, 5, na, na, ns, nf)
        + 2 * decoder_block;

    let classifier = linear_flops(s * nh, 512) + linear_flops(512, 128) + linear_flops(128, c.n_classes);

    FlopsBreakdown {
        encoder_per_window: encoder,
        recurrent_per_window: recurrent,
        decoder_per_window: decoder,
        classifier_per_sample: classifier,
        windows_per_sample: s as u64,
    }
}

/// Conv-trunk share of the per-window encoder cost (everything except the
/// compression head, which scales with both the window and the compressed
/// dimension).
pub fn encoder_conv_flops(config: &ModelConfig) -> u64 {
    let c = config.resolve();
    let (na, ns, nf, w) = (c.n_antennas, c.n_subcarriers, c.window_frames, c.encoder_width);
    conv_flops(5, 5, na, w, ns, nf)
        + 4 * conv_flops(3, 3, w, w, ns, nf)
        + conv_flops(1, 1, 2 * w, w, ns, nf)
}
