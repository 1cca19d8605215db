//! Dataset manifest and binary sample storage.
//!
//! Manifest: JSON naming per-split data/label files, sample dims, and class
//! names. Sample data: row-major 32-bit little-endian floats, one sample =
//! `na * ns * nt` values. Labels: one byte per sample.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::numerics::{Scalar, Tensor};

use super::{CsiSample, DatasetSplit};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub data: String,
    pub labels: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub splits: BTreeMap<String, SplitEntry>,
    pub dims: [usize; 3],
    pub classes: Vec<String>,
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

/// Parse and validate manifest JSON.
pub fn parse_manifest(text: &str) -> Result<Manifest, DataError> {
    let manifest: Manifest =
        serde_json::from_str(text).map_err(|e| DataError::BadManifest(e.to_string()))?;
    if manifest.dims.iter().any(|&d| d == 0) {
        return Err(DataError::BadManifest(format!(
            "dims {:?} must be positive",
            manifest.dims
        )));
    }
    if manifest.classes.is_empty() {
        return Err(DataError::BadManifest("no classes declared".into()));
    }
    for name in manifest.splits.keys() {
        if !SPLIT_NAMES.contains(&name.as_str()) {
            return Err(DataError::BadManifest(format!(
                "unknown split '{name}' (expected train/val/test)"
            )));
        }
    }
    if !manifest.splits.contains_key("train") {
        return Err(DataError::BadManifest("missing 'train' split".into()));
    }
    Ok(manifest)
}

/// Decode one split's sample payload. `data` must hold exactly
/// `count * na * ns * nt` little-endian f32 values.
pub fn decode_sample_data<T: Scalar>(
    data: &[u8],
    count: usize,
    dims: [usize; 3],
    path: &str,
) -> Result<Vec<Vec<T>>, DataError> {
    let per_sample: usize = dims.iter().product();
    let expected = (count * per_sample * 4) as u64;
    if data.len() as u64 != expected {
        return Err(DataError::SizeMismatch {
            path: path.to_string(),
            expected,
            actual: data.len() as u64,
        });
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let bytes = &data[i * per_sample * 4..(i + 1) * per_sample * 4];
        let values: Vec<T> = bytes
            .chunks_exact(4)
            .map(|c| T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        out.push(values);
    }
    Ok(out)
}

/// Decode one split's label file: one byte per sample, ids `< n_classes`.
pub fn decode_labels(
    data: &[u8],
    count: usize,
    n_classes: usize,
    path: &str,
) -> Result<Vec<usize>, DataError> {
    if data.len() as u64 != count as u64 {
        return Err(DataError::SizeMismatch {
            path: path.to_string(),
            expected: count as u64,
            actual: data.len() as u64,
        });
    }
    data.iter()
        .map(|&b| {
            if (b as usize) < n_classes {
                Ok(b as usize)
            } else {
                Err(DataError::UnknownLabel {
                    path: path.to_string(),
                    label: b,
                    classes: n_classes,
                })
            }
        })
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Load a dataset from a manifest path. File paths inside the manifest are
/// resolved relative to the manifest's directory.
pub fn load_dataset<T: Scalar>(manifest_path: &Path) -> Result<DatasetSplit<T>, DataError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| DataError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    let manifest = parse_manifest(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let dims = manifest.dims;
    let n_classes = manifest.classes.len();

    let load_split = |name: &str| -> Result<Vec<CsiSample<T>>, DataError> {
        let Some(entry) = manifest.splits.get(name) else {
            return Ok(Vec::new());
        };
        let data_path = base.join(&entry.data);
        let label_path = base.join(&entry.labels);
        let data = read_file(&data_path)?;
        let labels = read_file(&label_path)?;
        let values =
            decode_sample_data::<T>(&data, entry.count, dims, &data_path.display().to_string())?;
        let labels = decode_labels(
            &labels,
            entry.count,
            n_classes,
            &label_path.display().to_string(),
        )?;
        values
            .into_iter()
            .zip(labels)
            .map(|(v, label)| {
                Ok(CsiSample {
                    amplitude: Tensor::new(dims.to_vec(), v)
                        .map_err(|e| DataError::BadManifest(e.to_string()))?,
                    label,
                })
            })
            .collect()
    };

    Ok(DatasetSplit {
        train: load_split("train")?,
        val: load_split("val")?,
        test: load_split("test")?,
        classes: manifest.classes,
        dims,
        stats: None,
    })
}

/// Write a dataset under `dir` in the manifest format; returns the manifest
/// path. Round-trips bit-exactly through `load_dataset` for f32 values.
pub fn save_dataset<T: Scalar>(
    split: &DatasetSplit<T>,
    dir: &Path,
) -> Result<std::path::PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut splits = BTreeMap::new();
    for (name, samples) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        if samples.is_empty() {
            continue;
        }
        let data_name = format!("{name}.f32");
        let label_name = format!("{name}.labels");
        let data_path = dir.join(&data_name);
        let write = |path: &Path, bytes: &[u8]| -> Result<(), DataError> {
            let mut f = fs::File::create(path).map_err(|e| DataError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            f.write_all(bytes).map_err(|e| DataError::Io {
                path: path.display().to_string(),
                source: e,
            })
        };
        let mut bytes = Vec::new();
        for s in samples {
            for &v in s.amplitude.values() {
                bytes.extend_from_slice(&v.to_f32().to_le_bytes());
            }
        }
        write(&data_path, &bytes)?;
        let labels: Vec<u8> = samples.iter().map(|s| s.label as u8).collect();
        write(&dir.join(&label_name), &labels)?;
        splits.insert(
            name.to_string(),
            SplitEntry {
                data: data_name,
                labels: label_name,
                count: samples.len(),
            },
        );
    }
    let manifest = Manifest {
        splits,
        dims: split.dims,
        classes: split.classes.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| DataError::BadManifest(e.to_string()))?;
    fs::write(&manifest_path, text).map_err(|e| DataError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip_and_validation() {
        let json = r#"{
            "splits": {"train": {"data": "t.f32", "labels": "t.labels", "count": 2}},
            "dims": [3, 30, 250],
            "classes": ["lie down", "fall", "walk", "run", "sit down", "stand up", "empty room"]
        }"#;
        let m = parse_manifest(json).unwrap();
        assert_eq!(m.dims, [3, 30, 250]);
        assert_eq!(m.classes.len(), 7);
        assert_eq!(m.splits["train"].count, 2);

        assert!(parse_manifest("{}").is_err());
        assert!(parse_manifest(
            r#"{"splits": {"bogus": {"data": "x", "labels": "y", "count": 1}},
                "dims": [1,1,1], "classes": ["a"]}"#
        )
        .is_err());
    }

    #[test]
    fn decode_checks_byte_counts() {
        // 2 samples of 3x30x250 = 45,000 floats.
        let good = vec![0u8; 2 * 22_500 * 4];
        assert_eq!(
            decode_sample_data::<f32>(&good, 2, [3, 30, 250], "x").unwrap().len(),
            2
        );
        let truncated = vec![0u8; 2 * 22_500 * 4 - 4];
        let err = decode_sample_data::<f32>(&truncated, 2, [3, 30, 250], "x").unwrap_err();
        match err {
            DataError::SizeMismatch { expected, actual, .. } => {
                assert_eq!(expected, 180_000);
                assert_eq!(actual, 179_996);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn labels_reject_out_of_range_ids() {
        let err = decode_labels(&[0, 7], 2, 7, "labels").unwrap_err();
        assert!(matches!(err, DataError::UnknownLabel { label: 7, .. }));
    }

    #[test]
    fn class_name_order_is_fixed() {
        assert_eq!(
            super::super::UT_HAR_CLASSES,
            ["lie down", "fall", "walk", "run", "sit down", "stand up", "empty room"]
        );
    }
}
