//! Cloud half of the split: demultiplexes sessions, threads LSTM state
//! across windows, reconstructs every window, and classifies each activity
//! sample once its last window arrives.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;

use crate::error::StreamError;
use crate::model::{LstmState, Mode, RscnetModel};
use crate::numerics::{concat, lstm_cell, Scalar, Tensor};

use super::frame::{FrameReader, WireFrame};

/// One classified activity sample.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Prediction {
    pub session_id: u32,
    pub sample_id: u32,
    pub class: usize,
    pub logits: Vec<f64>,
}

/// Consumer of cloud outputs. Reconstructions arrive in normalized
/// (training-space) values, one window at a time, in window order.
pub trait CloudSink<T: Scalar> {
    fn on_prediction(&mut self, prediction: Prediction) -> Result<(), StreamError>;

    fn on_reconstruction(
        &mut self,
        _session_id: u32,
        _sample_id: u32,
        _window_index: u16,
        _window: &Tensor<T>,
    ) -> Result<(), StreamError> {
        Ok(())
    }
}

/// Collects everything in memory; the default sink for tests and offline
/// comparisons.
pub struct MemorySink<T: Scalar> {
    pub predictions: Vec<Prediction>,
    pub reconstructions: Vec<(u32, u32, u16, Tensor<T>)>,
}

impl<T: Scalar> Default for MemorySink<T> {
    fn default() -> Self {
        MemorySink {
            predictions: Vec::new(),
            reconstructions: Vec::new(),
        }
    }
}

impl<T: Scalar> CloudSink<T> for MemorySink<T> {
    fn on_prediction(&mut self, prediction: Prediction) -> Result<(), StreamError> {
        self.predictions.push(prediction);
        Ok(())
    }

    fn on_reconstruction(
        &mut self,
        session_id: u32,
        sample_id: u32,
        window_index: u16,
        window: &Tensor<T>,
    ) -> Result<(), StreamError> {
        self.reconstructions
            .push((session_id, sample_id, window_index, window.clone()));
        Ok(())
    }
}

/// Byte accounting for one session.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OverheadReport {
    pub raw_bytes: u64,
    pub sent_bytes: u64,
    /// sent / raw, including header and CRC overhead (slightly above the
    /// configured compression ratio).
    pub ratio: f64,
    pub frames: u64,
    pub mean_frame_bytes: f64,
}

/// Per-session cloud state: recurrent state carried across windows, an
/// out-of-order window buffer, and monotone byte counters.
pub struct SessionState<T: Scalar> {
    pub session_id: u32,
    pub config_hash: u32,
    state: LstmState<T>,
    current_sample: Option<u32>,
    next_window: usize,
    pending: BTreeMap<u16, Vec<f32>>,
    hidden: Vec<Tensor<T>>,
    pub raw_bytes: u64,
    pub sent_bytes: u64,
    pub frames: u64,
    pub dropped_samples: u64,
}

impl<T: Scalar> SessionState<T> {
    fn new(session_id: u32, config_hash: u32, hidden_dim: usize) -> Self {
        SessionState {
            session_id,
            config_hash,
            state: LstmState::zeros(1, hidden_dim),
            current_sample: None,
            next_window: 0,
            pending: BTreeMap::new(),
            hidden: Vec::new(),
            raw_bytes: 0,
            sent_bytes: 0,
            frames: 0,
            dropped_samples: 0,
        }
    }

    pub fn overhead_report(&self) -> OverheadReport {
        OverheadReport {
            raw_bytes: self.raw_bytes,
            sent_bytes: self.sent_bytes,
            ratio: if self.raw_bytes == 0 {
                0.0
            } else {
                self.sent_bytes as f64 / self.raw_bytes as f64
            },
            frames: self.frames,
            mean_frame_bytes: if self.frames == 0 {
                0.0
            } else {
                self.sent_bytes as f64 / self.frames as f64
            },
        }
    }
}

/// Session demultiplexer plus the cloud model halves (recurrent block,
/// decoder, classifier).
pub struct CloudRuntime<'m, T: Scalar> {
    model: &'m RscnetModel<T>,
    pub sessions: BTreeMap<u32, SessionState<T>>,
    /// Reset the recurrent state at activity-sample boundaries (default).
    /// Continuous mode carries it across samples for experimentation.
    pub reset_state_per_sample: bool,
}

impl<'m, T: Scalar> CloudRuntime<'m, T> {
    pub fn new(model: &'m RscnetModel<T>) -> Self {
        CloudRuntime {
            model,
            sessions: BTreeMap::new(),
            reset_state_per_sample: true,
        }
    }

    /// Feed one validated frame. Out-of-order windows inside a sample are
    /// buffered and replayed in window order.
    pub fn handle_frame(
        &mut self,
        frame: WireFrame,
        sink: &mut dyn CloudSink<T>,
    ) -> Result<(), StreamError> {
        let config = &self.model.config;
        let m = config.compressed_dim();
        let windows = config.window_count();
        if frame.payload.len() != m {
            return Err(StreamError::ConfigMismatch {
                session_id: frame.session_id,
                expected: m,
                got: frame.payload.len(),
            });
        }
        if (frame.window_index as usize) >= windows {
            return Err(StreamError::WindowOutOfRange {
                session_id: frame.session_id,
                index: frame.window_index,
                windows,
            });
        }
        let frame_bytes = WireFrame::encoded_len(m) as u64;
        let raw_bytes = (config.raw_window_dim() * 4) as u64;
        let hidden_dim = config.lstm_hidden_dim();
        let hash = config.hash();
        let session = self
            .sessions
            .entry(frame.session_id)
            .or_insert_with(|| SessionState::new(frame.session_id, hash, hidden_dim));
        session.frames += 1;
        session.sent_bytes += frame_bytes;
        session.raw_bytes += raw_bytes;

        match session.current_sample {
            Some(current) if current == frame.sample_id => {}
            Some(_) => {
                // New sample before the old one finished: drop the stale
                // partial sample.
                if session.next_window != windows && session.next_window != 0 {
                    session.dropped_samples += 1;
                }
                session.current_sample = Some(frame.sample_id);
                session.next_window = 0;
                session.pending.clear();
                session.hidden.clear();
                if self.reset_state_per_sample {
                    session.state = LstmState::zeros(1, hidden_dim);
                }
            }
            None => session.current_sample = Some(frame.sample_id),
        }
        let sample_id = frame.sample_id;
        session.pending.insert(frame.window_index, frame.payload);

        while let Some(payload) = session.pending.remove(&(session.next_window as u16)) {
            let x = Tensor::new(vec![1, m], payload.iter().map(|&v| T::from_f32(v)).collect())?;
            let (h, c) = lstm_cell(&x, &session.state.h, &session.state.c, &self.model.recurrent.params)?;
            session.state = LstmState { h: h.clone(), c };
            let reconstruction = self
                .model
                .decoder
                .forward(&h, config, Mode::Eval)?
                .reshape(vec![
                    config.n_antennas,
                    config.n_subcarriers,
                    config.window_frames,
                ])?
                .detach();
            sink.on_reconstruction(
                session.session_id,
                sample_id,
                session.next_window as u16,
                &reconstruction,
            )?;
            session.hidden.push(h);
            session.next_window += 1;

            if session.next_window == windows {
                let stacked = concat(1, &session.hidden)?;
                let (logits, _) = self.model.classifier.forward(&stacked)?;
                let values: Vec<f64> = logits.values().iter().map(|v| v.to_f64()).collect();
                let class = values
                    .iter()
                    .enumerate()
                    .fold(0usize, |best, (i, &v)| if v > values[best] { i } else { best });
                sink.on_prediction(Prediction {
                    session_id: session.session_id,
                    sample_id,
                    class,
                    logits: values,
                })?;
                session.next_window = 0;
                session.hidden.clear();
                session.current_sample = None;
                if self.reset_state_per_sample {
                    session.state = LstmState::zeros(1, hidden_dim);
                }
            }
        }
        Ok(())
    }

    /// Drain a byte stream of frames until end-of-stream.
    pub fn run(
        &mut self,
        reader: impl Read,
        sink: &mut dyn CloudSink<T>,
    ) -> Result<(), StreamError> {
        let mut frames = FrameReader::new(reader);
        while let Some(frame) = frames.read_frame()? {
            self.handle_frame(frame, sink)?;
        }
        Ok(())
    }
}
