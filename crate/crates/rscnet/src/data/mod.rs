//! CSI ingestion: windowing, normalization, dataset splits, a binary
//! loader, and a physics-based synthetic generator so every pipeline runs
//! without the real dataset.

mod manifest;
mod synthetic;

pub use manifest::{
    decode_labels, decode_sample_data, load_dataset, parse_manifest, save_dataset, Manifest,
    SplitEntry,
};
pub use synthetic::{default_subcarriers, generate_synthetic, motion_template, SyntheticChannelConfig};

use crate::error::DataError;
use crate::numerics::{concat, Scalar, Tensor};

/// Activity class names, id order fixed.
pub const UT_HAR_CLASSES: [&str; 7] = [
    "lie down",
    "fall",
    "walk",
    "run",
    "sit down",
    "stand up",
    "empty room",
];

/// One activity recording: linear amplitude tensor `[n_antennas,
/// n_subcarriers, n_timesteps]` plus its class label.
pub struct CsiSample<T: Scalar> {
    pub amplitude: Tensor<T>,
    pub label: usize,
}

impl<T: Scalar> Clone for CsiSample<T> {
    fn clone(&self) -> Self {
        CsiSample {
            amplitude: self.amplitude.clone(),
            label: self.label,
        }
    }
}

/// Per-(antenna, subcarrier) z-score statistics, computed on the training
/// split only.
#[derive(Clone, Debug)]
pub struct NormStats<T: Scalar> {
    pub n_antennas: usize,
    pub n_subcarriers: usize,
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> NormStats<T> {
    /// Normalize a raw value belonging to feature `(antenna, subcarrier)`.
    pub fn apply(&self, feature: usize, v: T) -> T {
        (v - self.mean[feature]) / self.std[feature]
    }

    pub fn invert(&self, feature: usize, v: T) -> T {
        v * self.std[feature] + self.mean[feature]
    }
}

pub struct DatasetSplit<T: Scalar> {
    pub train: Vec<CsiSample<T>>,
    pub val: Vec<CsiSample<T>>,
    pub test: Vec<CsiSample<T>>,
    pub classes: Vec<String>,
    /// `[n_antennas, n_subcarriers, n_timesteps]`
    pub dims: [usize; 3],
    /// Present once `normalize` has run.
    pub stats: Option<NormStats<T>>,
}

impl<T: Scalar> DatasetSplit<T> {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Slice `[na, ns, nt]` into `nt / window_frames` windows along time,
/// order preserved. Rejects window sizes that do not divide the time axis.
pub fn segment_windows<T: Scalar>(
    sample: &Tensor<T>,
    window_frames: usize,
) -> Result<Vec<Tensor<T>>, DataError> {
    let shape = sample.shape();
    assert_eq!(shape.len(), 3, "segment_windows expects [na, ns, nt]");
    let nt = shape[2];
    if window_frames == 0 || nt % window_frames != 0 {
        return Err(DataError::NonDivisibleWindow {
            window: window_frames,
            total: nt,
        });
    }
    let count = nt / window_frames;
    let mut windows = Vec::with_capacity(count);
    for s in 0..count {
        let w = sample
            .narrow(2, s * window_frames, window_frames)
            .expect("divisible window bounds");
        windows.push(w);
    }
    Ok(windows)
}

/// Inverse of `segment_windows`: concatenate equal-shape windows along time.
pub fn merge_windows<T: Scalar>(windows: &[Tensor<T>]) -> Result<Tensor<T>, DataError> {
    let first = windows
        .first()
        .ok_or(DataError::NonDivisibleWindow { window: 0, total: 0 })?;
    for (i, w) in windows.iter().enumerate() {
        if w.shape() != first.shape() {
            return Err(DataError::InconsistentWindow {
                index: i,
                expected: format!("{:?}", first.shape()),
                got: format!("{:?}", w.shape()),
            });
        }
    }
    let detached: Vec<Tensor<T>> = windows.iter().map(|w| w.detach()).collect();
    concat(2, &detached).map_err(|e| DataError::BadManifest(e.to_string()))
}

/// Z-score every split with per-(antenna, subcarrier) statistics from the
/// training split. Zero-variance features get their std clamped to 1e-8,
/// which maps a constant feature to zero everywhere.
pub fn normalize<T: Scalar>(split: &DatasetSplit<T>) -> Result<DatasetSplit<T>, DataError> {
    if split.train.is_empty() {
        return Err(DataError::EmptyTrainSplit);
    }
    let [na, ns, nt] = split.dims;
    let features = na * ns;
    let mut mean = vec![0.0f64; features];
    let mut var = vec![0.0f64; features];
    let count = (split.train.len() * nt) as f64;

    for sample in &split.train {
        let v = sample.amplitude.values();
        for f in 0..features {
            let mut acc = 0.0;
            for &x in &v[f * nt..(f + 1) * nt] {
                acc += x.to_f64();
            }
            mean[f] += acc;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    for sample in &split.train {
        let v = sample.amplitude.values();
        for f in 0..features {
            let mut acc = 0.0;
            for &x in &v[f * nt..(f + 1) * nt] {
                let d = x.to_f64() - mean[f];
                acc += d * d;
            }
            var[f] += acc;
        }
    }

    let stats = NormStats {
        n_antennas: na,
        n_subcarriers: ns,
        mean: mean.iter().map(|&m| T::from_f64(m)).collect(),
        std: var
            .iter()
            .map(|&v| T::from_f64((v / count).sqrt().max(1e-8)))
            .collect(),
    };

    let apply = |samples: &[CsiSample<T>]| -> Vec<CsiSample<T>> {
        samples
            .iter()
            .map(|s| {
                let src = s.amplitude.values();
                let mut out = vec![T::ZERO; src.len()];
                for f in 0..features {
                    for t in 0..nt {
                        out[f * nt + t] = stats.apply(f, src[f * nt + t]);
                    }
                }
                CsiSample {
                    amplitude: Tensor::new(vec![na, ns, nt], out).expect("finite normalized"),
                    label: s.label,
                }
            })
            .collect()
    };

    Ok(DatasetSplit {
        train: apply(&split.train),
        val: apply(&split.val),
        test: apply(&split.test),
        classes: split.classes.clone(),
        dims: split.dims,
        stats: Some(stats),
    })
}

/// Undo normalization on a flat `[na, ns, nt]` value buffer.
pub fn denormalize_values<T: Scalar>(values: &[T], nt: usize, stats: &NormStats<T>) -> Vec<T> {
    let mut out = vec![T::ZERO; values.len()];
    for (f, chunk) in values.chunks_exact(nt).enumerate() {
        for (o, &v) in out[f * nt..(f + 1) * nt].iter_mut().zip(chunk) {
            *o = stats.invert(f, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dims: [usize; 3], f: impl Fn(usize) -> f64, label: usize) -> CsiSample<f64> {
        let n = dims.iter().product();
        CsiSample {
            amplitude: Tensor::new(dims.to_vec(), (0..n).map(f).collect()).unwrap(),
            label,
        }
    }

    fn tiny_split() -> DatasetSplit<f64> {
        DatasetSplit {
            train: vec![
                sample([2, 3, 4], |i| i as f64, 0),
                sample([2, 3, 4], |i| (i as f64) * 0.5 + 1.0, 1),
            ],
            val: vec![sample([2, 3, 4], |i| (i % 5) as f64, 0)],
            test: vec![],
            classes: vec!["a".into(), "b".into()],
            dims: [2, 3, 4],
            stats: None,
        }
    }

    #[test]
    fn segment_windows_counts() {
        let h = Tensor::<f64>::zeros(vec![3, 30, 250]);
        assert_eq!(segment_windows(&h, 50).unwrap().len(), 5);
        let one = segment_windows(&h, 250).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].shape(), h.shape());
        assert!(matches!(
            segment_windows(&h, 7),
            Err(DataError::NonDivisibleWindow { window: 7, total: 250 })
        ));
    }

    #[test]
    fn merge_is_inverse_of_segment() {
        let n = 3 * 30 * 250;
        let h = Tensor::new(
            vec![3, 30, 250],
            (0..n).map(|i| (i as f64 * 0.01).sin()).collect(),
        )
        .unwrap();
        for nf in [5usize, 10, 25, 50, 125, 250] {
            let windows = segment_windows(&h, nf).unwrap();
            let back = merge_windows(&windows).unwrap();
            assert_eq!(back.values(), h.values(), "nf={nf}");
        }
    }

    #[test]
    fn merge_is_order_sensitive() {
        let h = Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut windows = segment_windows(&h, 2).unwrap();
        windows.swap(0, 1);
        let merged = merge_windows(&windows).unwrap();
        assert_ne!(merged.values(), h.values());
    }

    #[test]
    fn merge_rejects_mixed_shapes() {
        let a = Tensor::<f64>::zeros(vec![1, 2, 3]);
        let b = Tensor::<f64>::zeros(vec![1, 2, 4]);
        assert!(matches!(
            merge_windows(&[a, b]),
            Err(DataError::InconsistentWindow { index: 1, .. })
        ));
    }

    #[test]
    fn normalize_zeroes_constant_features_and_centers_train() {
        let mut split = tiny_split();
        // Make feature 0 constant across train.
        let mut v0 = split.train[0].amplitude.values().to_vec();
        let mut v1 = split.train[1].amplitude.values().to_vec();
        for t in 0..4 {
            v0[t] = 2.5;
            v1[t] = 2.5;
        }
        split.train[0].amplitude = Tensor::new(vec![2, 3, 4], v0).unwrap();
        split.train[1].amplitude = Tensor::new(vec![2, 3, 4], v1).unwrap();

        let normed = normalize(&split).unwrap();
        for s in &normed.train {
            for t in 0..4 {
                assert_eq!(s.amplitude.values()[t], 0.0);
            }
        }
        // Per-feature train mean ~ 0.
        let nt = 4;
        for f in 0..6 {
            let mut acc = 0.0;
            for s in &normed.train {
                for t in 0..nt {
                    acc += s.amplitude.values()[f * nt + t];
                }
            }
            assert!((acc / (2.0 * nt as f64)).abs() < 1e-6);
        }
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let split = tiny_split();
        let normed = normalize(&split).unwrap();
        let stats = normed.stats.as_ref().unwrap();
        for (orig, n) in split.train.iter().zip(&normed.train) {
            let back = denormalize_values(n.amplitude.values(), 4, stats);
            for (a, b) in back.iter().zip(orig.amplitude.values()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn normalize_requires_train_samples() {
        let mut split = tiny_split();
        split.train.clear();
        assert!(matches!(normalize(&split), Err(DataError::EmptyTrainSplit)));
    }
}
