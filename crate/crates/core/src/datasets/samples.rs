use serde::{Deserialize, Serialize};

use crate::candidates::Patch;
use crate::error::{Error, Result};
use crate::nn::INPUT_PLANE;

pub const FLAG_RELABELED: u8 = 1;

const IMAGE_BYTES: usize = 4 * 4 * INPUT_PLANE;

/// One executed pick: the crop around the attempted pixel and the sensor outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSample {
    pub patch: Patch,
    pub label: u8,
    pub relabeled: bool,
    pub pick_index: u64,
    pub pixel: (u16, u16),
}

/// One region of a logged observation with its fraction of pickable points.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSample {
    pub image: Patch,
    pub score: f32,
    pub pick_index: u64,
    pub region: (u16, u16),
}

/// Fixed-size little-endian binary record.
pub trait Record: Sized + Clone {
    const KIND: &'static str;
    const RECORD_BYTES: usize;
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(bytes: &[u8]) -> std::result::Result<Self, String>;
    /// Counts toward the manifest's `positives`.
    fn is_positive(&self) -> bool;
    fn is_relabeled(&self) -> bool {
        false
    }
}

fn put_image(p: &Patch, out: &mut Vec<u8>) {
    for v in p.rgb.iter().chain(&p.depth) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_image(bytes: &[u8]) -> Patch {
    let mut vals = bytes[..IMAGE_BYTES].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    let rgb = vals.by_ref().take(3 * INPUT_PLANE).collect();
    let depth = vals.collect();
    Patch { rgb, depth }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

impl Record for PointSample {
    const KIND: &'static str = "point";
    /// rgb, depth, label, flags, pick index, pixel row, pixel column.
    const RECORD_BYTES: usize = IMAGE_BYTES + 1 + 1 + 8 + 2 + 2;

    fn encode(&self, out: &mut Vec<u8>) {
        put_image(&self.patch, out);
        out.push(self.label);
        out.push(if self.relabeled { FLAG_RELABELED } else { 0 });
        out.extend_from_slice(&self.pick_index.to_le_bytes());
        out.extend_from_slice(&self.pixel.0.to_le_bytes());
        out.extend_from_slice(&self.pixel.1.to_le_bytes());
    }

    fn decode(b: &[u8]) -> std::result::Result<Self, String> {
        let label = b[IMAGE_BYTES];
        if label > 1 {
            return Err(format!("label {label} outside {{0, 1}}"));
        }
        let at = IMAGE_BYTES + 2;
        Ok(PointSample {
            patch: get_image(b),
            label,
            relabeled: b[IMAGE_BYTES + 1] & FLAG_RELABELED != 0,
            pick_index: u64_at(b, at),
            pixel: (u16_at(b, at + 8), u16_at(b, at + 10)),
        })
    }

    fn is_positive(&self) -> bool {
        self.label == 1
    }

    fn is_relabeled(&self) -> bool {
        self.relabeled
    }
}

impl Record for RegionSample {
    const KIND: &'static str = "region";
    /// rgb, depth, score, pick index, region row, region column.
    const RECORD_BYTES: usize = IMAGE_BYTES + 4 + 8 + 2 + 2;

    fn encode(&self, out: &mut Vec<u8>) {
        put_image(&self.image, out);
        out.extend_from_slice(&self.score.to_le_bytes());
        out.extend_from_slice(&self.pick_index.to_le_bytes());
        out.extend_from_slice(&self.region.0.to_le_bytes());
        out.extend_from_slice(&self.region.1.to_le_bytes());
    }

    fn decode(b: &[u8]) -> std::result::Result<Self, String> {
        let score = f32::from_le_bytes(b[IMAGE_BYTES..IMAGE_BYTES + 4].try_into().unwrap());
        if !(0.0..=1.0).contains(&score) {
            return Err(format!("score {score} outside [0, 1]"));
        }
        let at = IMAGE_BYTES + 4;
        Ok(RegionSample {
            image: get_image(b),
            score,
            pick_index: u64_at(b, at),
            region: (u16_at(b, at + 8), u16_at(b, at + 10)),
        })
    }

    fn is_positive(&self) -> bool {
        self.score > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub count: usize,
    pub positives: usize,
    pub relabeled: usize,
    pub record_bytes: usize,
    pub source_seeds: Vec<u64>,
}

pub const DATASET_FORMAT: &str = "suction-dataset";

/// Ordered samples plus the seeds of the runs that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    pub samples: Vec<S>,
    pub source_seeds: Vec<u64>,
}

impl<S> Default for Dataset<S> {
    fn default() -> Self {
        Self { samples: Vec::new(), source_seeds: Vec::new() }
    }
}

impl<S: Record> Dataset<S> {
    pub fn new(samples: Vec<S>, source_seeds: Vec<u64>) -> Self {
        Self { samples, source_seeds }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: DATASET_FORMAT.into(),
            version: 1,
            kind: S::KIND.into(),
            count: self.samples.len(),
            positives: self.samples.iter().filter(|s| s.is_positive()).count(),
            relabeled: self.samples.iter().filter(|s| s.is_relabeled()).count(),
            record_bytes: S::RECORD_BYTES,
            source_seeds: self.source_seeds.clone(),
        }
    }

    pub fn encode_samples(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * S::RECORD_BYTES);
        for s in &self.samples {
            s.encode(&mut out);
        }
        out
    }
}

pub(crate) fn decode_samples<S: Record>(bytes: &[u8], path: &std::path::Path) -> Result<Vec<S>> {
    bytes
        .chunks_exact(S::RECORD_BYTES)
        .enumerate()
        .map(|(i, b)| {
            S::decode(b).map_err(|reason| Error::ManifestMismatch { path: path.to_path_buf(), reason: format!("record {i}: {reason}") })
        })
        .collect()
}
