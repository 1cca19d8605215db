//! Edge half of the split: windows a live CSI frame stream, compresses
//! each window with the encoder, and writes framed payloads to a
//! transport.

use std::io::Write;
use std::time::Instant;

use crate::data::CsiSample;
use crate::error::StreamError;
use crate::model::{Mode, RscnetModel};
use crate::numerics::{Scalar, Tensor};

use super::frame::{encode_frame, WireFrame};

/// Ordered source of raw CSI frames. Each item is one time step:
/// `(sample_id, row-major [n_antennas * n_subcarriers] amplitudes)`.
pub trait FrameSource<T: Scalar> {
    fn next_frame(&mut self) -> Result<Option<(u32, Vec<T>)>, StreamError>;
}

/// Replays dataset samples frame by frame in time order.
pub struct SampleSource<'a, T: Scalar> {
    samples: &'a [CsiSample<T>],
    first_sample_id: u32,
    sample_idx: usize,
    t: usize,
}

impl<'a, T: Scalar> SampleSource<'a, T> {
    pub fn new(samples: &'a [CsiSample<T>], first_sample_id: u32) -> Self {
        SampleSource {
            samples,
            first_sample_id,
            sample_idx: 0,
            t: 0,
        }
    }
}

impl<T: Scalar> FrameSource<T> for SampleSource<'_, T> {
    fn next_frame(&mut self) -> Result<Option<(u32, Vec<T>)>, StreamError> {
        loop {
            let Some(sample) = self.samples.get(self.sample_idx) else {
                return Ok(None);
            };
            let shape = sample.amplitude.shape();
            let (features, nt) = (shape[0] * shape[1], shape[2]);
            if self.t >= nt {
                self.sample_idx += 1;
                self.t = 0;
                continue;
            }
            let values = sample.amplitude.values();
            let frame: Vec<T> = (0..features).map(|f| values[f * nt + self.t]).collect();
            self.t += 1;
            return Ok(Some((self.first_sample_id + self.sample_idx as u32, frame)));
        }
    }
}

/// Per-run accounting emitted by `edge_run`.
#[derive(Debug, Clone, Default)]
pub struct EdgeReport {
    pub windows_sent: u64,
    pub samples_completed: u64,
    pub bytes_sent: u64,
    /// Raw-equivalent bytes of the transmitted windows (4 bytes/value).
    pub raw_bytes: u64,
    /// Encode+transmit latency per window, microseconds.
    pub window_latency_us: Vec<u64>,
    /// Frames discarded because the stream ended mid-window.
    pub dropped_partial_frames: u64,
}

impl EdgeReport {
    pub fn compression_ratio(&self) -> f64 {
        if self.raw_bytes == 0 {
            0.0
        } else {
            self.bytes_sent as f64 / self.raw_bytes as f64
        }
    }
}

/// Buffer `window_frames` CSI frames, encode, frame, transmit. Blocks on
/// the transport (back-pressure); frames are written atomically. Raw
/// amplitudes are normalized with the model's bundled statistics before
/// encoding when present.
pub fn edge_run<T: Scalar>(
    source: &mut dyn FrameSource<T>,
    model: &RscnetModel<T>,
    transport: &mut dyn Write,
    session_id: u32,
) -> Result<EdgeReport, StreamError> {
    let c = &model.config;
    let (na, ns, nf) = (c.n_antennas, c.n_subcarriers, c.window_frames);
    let features = na * ns;
    let windows_per_sample = c.window_count() as u16;

    let mut report = EdgeReport::default();
    let mut buffer: Vec<Vec<T>> = Vec::with_capacity(nf);
    let mut current_sample: Option<u32> = None;
    let mut window_index: u16 = 0;

    loop {
        let item = source.next_frame()?;
        let boundary = match (&item, current_sample) {
            (Some((sid, _)), Some(cur)) => *sid != cur,
            _ => false,
        };
        if boundary && !buffer.is_empty() {
            // Sample changed mid-window; the partial window is untransmittable.
            report.dropped_partial_frames += buffer.len() as u64;
            buffer.clear();
            window_index = 0;
        }
        let Some((sample_id, frame)) = item else {
            report.dropped_partial_frames += buffer.len() as u64;
            break;
        };
        if frame.len() != features {
            return Err(StreamError::ConfigMismatch {
                session_id,
                expected: features,
                got: frame.len(),
            });
        }
        if boundary || current_sample.is_none() {
            current_sample = Some(sample_id);
            window_index = 0;
        }
        buffer.push(frame);
        if buffer.len() < nf {
            continue;
        }

        let started = Instant::now();
        // Assemble [na, ns, nf] from nf stacked [na*ns] frames, applying
        // the training-space normalization.
        let mut values = vec![T::ZERO; features * nf];
        for (t, frame) in buffer.iter().enumerate() {
            for f in 0..features {
                let v = match &model.norm {
                    Some(stats) => stats.apply(f, frame[f]),
                    None => frame[f],
                };
                values[f * nf + t] = v;
            }
        }
        buffer.clear();
        let window = Tensor::new(vec![na, ns, nf], values)?;
        let compressed = model.encoder_forward(&window, Mode::Eval)?;
        let wire = WireFrame {
            session_id,
            sample_id,
            window_index,
            payload: compressed.values().iter().map(|v| v.to_f32()).collect(),
        };
        let bytes = encode_frame(&wire)?;
        transport.write_all(&bytes)?;
        report.windows_sent += 1;
        report.bytes_sent += bytes.len() as u64;
        report.raw_bytes += (features * nf * 4) as u64;
        report
            .window_latency_us
            .push(started.elapsed().as_micros() as u64);
        window_index += 1;
        if window_index == windows_per_sample {
            report.samples_completed += 1;
            window_index = 0;
        }
    }
    transport.flush()?;
    Ok(report)
}
