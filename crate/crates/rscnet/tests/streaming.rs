//! Edge-to-cloud runtime contracts: streamed results equal the offline
//! forward pass, sessions stay isolated, window reordering is absorbed,
//! frame writes are atomic, and byte accounting is exact.

mod common;

use rscnet::data::{generate_synthetic, normalize, DatasetSplit, SyntheticChannelConfig};
use rscnet::error::StreamError;
use rscnet::model::{Mode, ModelConfig, RscnetModel};
use rscnet::stream::{
    decode_frame, edge_run, encode_frame, CloudRuntime, FrameReader, MemorySink, SampleSource,
    WireFrame,
};

fn stream_model_config() -> ModelConfig {
    ModelConfig {
        n_antennas: 2,
        n_subcarriers: 8,
        n_timesteps: 20,
        window_frames: 5,
        compression_ratio: 4.0 / 80.0,
        encoder_width: 2,
        lstm_hidden: Some(4),
        n_classes: 3,
        ..ModelConfig::default()
    }
}

fn model_and_data(seed: u64, n_per_class: usize) -> (RscnetModel<f32>, DatasetSplit<f32>, DatasetSplit<f32>) {
    let channel = SyntheticChannelConfig {
        dims: [2, 8, 20],
        subcarrier_freqs: rscnet::data::default_subcarriers(8),
        ..SyntheticChannelConfig::with_seed(seed)
    };
    let raw = generate_synthetic::<f32>(&channel, n_per_class, 3);
    let normalized = normalize(&raw).unwrap();
    let mut model = RscnetModel::<f32>::new(&stream_model_config(), seed).unwrap();
    model.norm = normalized.stats.clone();
    (model, raw, normalized)
}

fn stream_bytes(model: &RscnetModel<f32>, raw: &DatasetSplit<f32>, session: u32) -> Vec<u8> {
    let mut source = SampleSource::new(&raw.test, 0);
    let mut wire = Vec::new();
    edge_run(&mut source, model, &mut wire, session).unwrap();
    wire
}

#[test]
fn streamed_outputs_equal_offline_forward() {
    let (model, raw, normalized) = model_and_data(50, 4);
    let wire = stream_bytes(&model, &raw, 1);

    let mut cloud = CloudRuntime::new(&model);
    let mut sink = MemorySink::default();
    cloud.run(wire.as_slice(), &mut sink).unwrap();

    assert_eq!(sink.predictions.len(), normalized.test.len());
    let windows = model.config.window_count();
    assert_eq!(sink.reconstructions.len(), windows * normalized.test.len());

    for (i, sample) in normalized.test.iter().enumerate() {
        let offline = model.model_forward(&sample.amplitude, Mode::Eval).unwrap();
        let prediction = &sink.predictions[i];
        assert_eq!(prediction.sample_id, i as u32);
        for (a, b) in prediction.logits.iter().zip(offline.logits.values()) {
            assert!((a - *b as f64).abs() < 1e-6, "sample {i}: logits diverged");
        }
        // Reconstruction windows, stitched back in order, match offline.
        let offline_recon = offline.reconstruction.values();
        let nf = model.config.window_frames;
        let nt = model.config.n_timesteps;
        for w in 0..windows {
            let (_, sid, widx, window) = &sink.reconstructions[i * windows + w];
            assert_eq!((*sid, *widx as usize), (i as u32, w));
            let wv = window.values();
            for f in 0..model.config.n_antennas * model.config.n_subcarriers {
                for t in 0..nf {
                    let a = wv[f * nf + t];
                    let b = offline_recon[f * nt + w * nf + t];
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn interleaved_sessions_do_not_cross_contaminate() {
    let (model, raw, _) = model_and_data(51, 4);
    let wire_a = stream_bytes(&model, &raw, 10);
    let wire_b = stream_bytes(&model, &raw, 20);

    // Single-session reference runs.
    let reference = |bytes: &[u8]| {
        let mut cloud = CloudRuntime::new(&model);
        let mut sink = MemorySink::default();
        cloud.run(bytes, &mut sink).unwrap();
        sink.predictions
    };
    let solo_a = reference(&wire_a);
    let solo_b = reference(&wire_b);

    // Interleave frame-by-frame into one stream.
    let frames = |bytes: &[u8]| {
        let mut reader = FrameReader::new(bytes);
        let mut out = Vec::new();
        while let Some(f) = reader.read_frame().unwrap() {
            out.push(f);
        }
        out
    };
    let fa = frames(&wire_a);
    let fb = frames(&wire_b);
    let mut cloud = CloudRuntime::new(&model);
    let mut sink = MemorySink::default();
    for i in 0..fa.len().max(fb.len()) {
        if let Some(f) = fa.get(i) {
            cloud.handle_frame(f.clone(), &mut sink).unwrap();
        }
        if let Some(f) = fb.get(i) {
            cloud.handle_frame(f.clone(), &mut sink).unwrap();
        }
    }
    let got_a: Vec<_> = sink.predictions.iter().filter(|p| p.session_id == 10).cloned().collect();
    let got_b: Vec<_> = sink.predictions.iter().filter(|p| p.session_id == 20).cloned().collect();
    assert_eq!(got_a, solo_a);
    assert_eq!(got_b, solo_b);
}

#[test]
fn out_of_order_windows_are_reordered_within_a_sample() {
    let (model, raw, _) = model_and_data(52, 3);
    let wire = stream_bytes(&model, &raw, 3);
    let mut reader = FrameReader::new(wire.as_slice());
    let mut frames = Vec::new();
    while let Some(f) = reader.read_frame().unwrap() {
        frames.push(f);
    }
    let windows = model.config.window_count();

    let mut in_order = CloudRuntime::new(&model);
    let mut sink_ref = MemorySink::default();
    for f in &frames {
        in_order.handle_frame(f.clone(), &mut sink_ref).unwrap();
    }

    // Scramble window order inside each sample (reverse it).
    let mut scrambled = CloudRuntime::new(&model);
    let mut sink = MemorySink::default();
    for chunk in frames.chunks(windows) {
        for f in chunk.iter().rev() {
            scrambled.handle_frame(f.clone(), &mut sink).unwrap();
        }
    }
    assert_eq!(sink.predictions, sink_ref.predictions);
}

#[test]
fn byte_accounting_is_exact() {
    let (model, raw, _) = model_and_data(53, 3);
    let wire = stream_bytes(&model, &raw, 9);
    let mut cloud = CloudRuntime::new(&model);
    let mut sink = MemorySink::default();
    cloud.run(wire.as_slice(), &mut sink).unwrap();

    let m = model.config.compressed_dim();
    let session = &cloud.sessions[&9];
    let report = session.overhead_report();
    let frame_len = WireFrame::encoded_len(m) as u64;
    assert_eq!(report.sent_bytes, report.frames * frame_len);
    assert_eq!(
        report.raw_bytes,
        report.frames * (model.config.raw_window_dim() * 4) as u64
    );
    assert_eq!(report.sent_bytes, wire.len() as u64);
    assert!((report.mean_frame_bytes - frame_len as f64).abs() < 1e-9);
}

#[test]
fn uncompressed_ratio_exceeds_one_by_exactly_the_header_share() {
    let config = ModelConfig {
        compression_ratio: 1.0,
        ..stream_model_config()
    };
    let channel = SyntheticChannelConfig {
        dims: [2, 8, 20],
        subcarrier_freqs: rscnet::data::default_subcarriers(8),
        ..SyntheticChannelConfig::with_seed(54)
    };
    let raw = generate_synthetic::<f32>(&channel, 2, 3);
    let normalized = normalize(&raw).unwrap();
    let mut model = RscnetModel::<f32>::new(&config, 54).unwrap();
    model.norm = normalized.stats.clone();

    let wire = stream_bytes(&model, &raw, 1);
    let mut cloud = CloudRuntime::new(&model);
    let mut sink = MemorySink::default();
    cloud.run(wire.as_slice(), &mut sink).unwrap();
    let report = cloud.sessions[&1].overhead_report();
    assert!(report.ratio > 1.0);
    let m = config.compressed_dim();
    let header_share = 21.0 / (4.0 * m as f64);
    assert!((report.ratio - 1.0 - header_share).abs() < 1e-12);
}

#[test]
fn smaller_windows_raise_the_header_share_at_fixed_compression() {
    // More frequent transmissions cost proportionally more framing bytes:
    // the sent/raw ratio grows as the window shrinks at fixed eta.
    let mut prev_ratio = 0.0f64;
    for nf in [10usize, 5, 2] {
        let m = (2.0 * 8.0 * nf as f64 * 0.05).round() as usize; // eta = 1/20
        let frame = WireFrame::encoded_len(m) as f64;
        let raw = (2 * 8 * nf * 4) as f64;
        let ratio = frame / raw;
        assert!(ratio > prev_ratio, "nf={nf}: {ratio} !> {prev_ratio}");
        prev_ratio = ratio;
    }
}

struct FailingTransport {
    accepted: Vec<u8>,
    frames_before_failure: usize,
    frames_seen: usize,
}

impl std::io::Write for FailingTransport {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        if self.frames_seen >= self.frames_before_failure {
            return Err(std::io::Error::new(
                std::io::ErrorKind::BrokenPipe,
                "transport killed",
            ));
        }
        self.frames_seen += 1;
        self.accepted.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn transport_failure_leaves_only_whole_frames_behind() {
    let (model, raw, _) = model_and_data(55, 3);
    let mut source = SampleSource::new(&raw.test, 0);
    let mut transport = FailingTransport {
        accepted: Vec::new(),
        frames_before_failure: 2,
        frames_seen: 0,
    };
    let err = edge_run(&mut source, &model, &mut transport, 1).unwrap_err();
    assert!(matches!(err, StreamError::Transport(_)));

    let frame_len = WireFrame::encoded_len(model.config.compressed_dim());
    assert_eq!(transport.accepted.len(), 2 * frame_len);
    // Both frames decode cleanly; no partial bytes follow.
    decode_frame(&transport.accepted[..frame_len]).unwrap();
    decode_frame(&transport.accepted[frame_len..]).unwrap();
}

#[test]
fn mismatched_payload_width_rejects_the_session() {
    let (model, _, _) = model_and_data(56, 2);
    let mut cloud = CloudRuntime::new(&model);
    let mut sink = MemorySink::default();
    let bogus = WireFrame {
        session_id: 5,
        sample_id: 0,
        window_index: 0,
        payload: vec![0.0; model.config.compressed_dim() + 1],
    };
    let err = cloud.handle_frame(bogus, &mut sink).unwrap_err();
    assert!(matches!(err, StreamError::ConfigMismatch { .. }));

    let out_of_range = WireFrame {
        session_id: 5,
        sample_id: 0,
        window_index: model.config.window_count() as u16,
        payload: vec![0.0; model.config.compressed_dim()],
    };
    let err = cloud.handle_frame(out_of_range, &mut sink).unwrap_err();
    assert!(matches!(err, StreamError::WindowOutOfRange { .. }));
}

#[test]
fn edge_window_count_matches_the_spec_arithmetic() {
    let (model, raw, _) = model_and_data(57, 2);
    let mut source = SampleSource::new(&raw.test[..1], 0);
    let mut wire = Vec::new();
    let report = edge_run(&mut source, &model, &mut wire, 1).unwrap();
    // 20-frame sample at nf=5 -> exactly 4 frames transmitted.
    assert_eq!(report.windows_sent, 4);
    assert_eq!(report.samples_completed, 1);
    assert_eq!(report.dropped_partial_frames, 0);
}

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn frame_codec_roundtrips_arbitrary_payloads(
        session in any::<u32>(),
        sample in any::<u32>(),
        window in any::<u16>(),
        payload in prop::collection::vec(-1e6f32..1e6, 0..64),
    ) {
        let frame = WireFrame { session_id: session, sample_id: sample, window_index: window, payload };
        let decoded = decode_frame(&encode_frame(&frame).unwrap()).unwrap();
        prop_assert_eq!(decoded, frame);
    }
}
