use std::path::Path;

use super::samples::{decode_samples, Dataset, Manifest, Record, DATASET_FORMAT};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.bin";

/// Write `manifest.json` and `samples.bin` into `dir`, creating it if needed.
/// The payload is written first so a visible manifest always describes it.
pub fn save<S: Record>(ds: &Dataset<S>, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(SAMPLES_FILE), &ds.encode_samples())?;
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&ds.manifest())?)
}

pub fn load<S: Record>(dir: &Path) -> Result<Dataset<S>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let samples_path = dir.join(SAMPLES_FILE);
    let corrupt = |reason: String| Error::CorruptHeader { path: manifest_path.clone(), reason };
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?).map_err(|e| corrupt(e.to_string()))?;
    if manifest.format != DATASET_FORMAT || manifest.version != 1 {
        return Err(corrupt(format!("unsupported format {} v{}", manifest.format, manifest.version)));
    }
    if manifest.kind != S::KIND || manifest.record_bytes != S::RECORD_BYTES {
        return Err(corrupt(format!("expected {} records of {} bytes", S::KIND, S::RECORD_BYTES)));
    }
    let bytes = std::fs::read(&samples_path)?;
    let expected = manifest.count * S::RECORD_BYTES;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload { path: samples_path, expected, found: bytes.len() });
    }
    let mismatch = |reason: String| Error::ManifestMismatch { path: samples_path.clone(), reason };
    if bytes.len() != expected {
        return Err(mismatch(format!("manifest lists {} records but payload holds {} bytes", manifest.count, bytes.len())));
    }
    let ds = Dataset::new(decode_samples(&bytes, &samples_path)?, manifest.source_seeds.clone());
    let actual = ds.manifest();
    if actual.positives != manifest.positives || actual.relabeled != manifest.relabeled {
        return Err(mismatch(format!(
            "manifest counts {}/{} positives/relabeled, payload has {}/{}",
            manifest.positives, manifest.relabeled, actual.positives, actual.relabeled
        )));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::Patch;
    use crate::datasets::{PointSample, RegionSample};
    use crate::nn::INPUT_PLANE;

    fn patch(seed: f32) -> Patch {
        Patch {
            rgb: (0..3 * INPUT_PLANE).map(|i| (i as f32 * 0.37 + seed).fract()).collect(),
            depth: (0..INPUT_PLANE).map(|i| 0.4 + (i as f32 * 0.011 + seed).fract() * 0.1).collect(),
        }
    }

    fn points(n: usize) -> Dataset<PointSample> {
        let samples = (0..n)
            .map(|i| PointSample {
                patch: patch(i as f32 * 0.1),
                label: (i % 2) as u8,
                relabeled: i % 3 == 0,
                pick_index: i as u64 * 7,
                pixel: (i as u16, 299 - i as u16),
            })
            .collect();
        Dataset::new(samples, vec![3, 9])
    }

    #[test]
    fn point_and_region_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = points(5);
        save(&ds, dir.path()).unwrap();
        assert_eq!(load::<PointSample>(dir.path()).unwrap(), ds);

        let regions = Dataset::new(
            vec![RegionSample { image: patch(0.5), score: 100.0 / 289.0, pick_index: 4, region: (50, 133) }],
            vec![1],
        );
        let rdir = dir.path().join("regions");
        save(&regions, &rdir).unwrap();
        assert_eq!(load::<RegionSample>(&rdir).unwrap(), regions);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::<PointSample>::default();
        save(&ds, dir.path()).unwrap();
        assert_eq!(load::<PointSample>(dir.path()).unwrap(), ds);
    }

    #[test]
    fn distinct_error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        save(&points(3), dir.path()).unwrap();
        let samples = dir.path().join(SAMPLES_FILE);
        let bytes = std::fs::read(&samples).unwrap();

        std::fs::write(&samples, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load::<PointSample>(dir.path()), Err(Error::TruncatedPayload { .. })));

        let mut longer = bytes.clone();
        longer.extend_from_slice(&bytes[..PointSample::RECORD_BYTES]);
        std::fs::write(&samples, &longer).unwrap();
        assert!(matches!(load::<PointSample>(dir.path()), Err(Error::ManifestMismatch { .. })));

        std::fs::write(&samples, &bytes).unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), b"{ not json").unwrap();
        assert!(matches!(load::<PointSample>(dir.path()), Err(Error::CorruptHeader { .. })));

        save(&points(3), dir.path()).unwrap();
        assert!(matches!(load::<RegionSample>(dir.path()), Err(Error::CorruptHeader { .. })));
    }
}
