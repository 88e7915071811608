use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{ObjectInstance, SceneConfig, NO_OBJECT};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const OBSERVATION_FORMAT: &str = "suction-observation";

const FLOOR_ALBEDO: [f32; 3] = [0.25, 0.25, 0.28];

fn light() -> [f64; 3] {
    let l = [0.25, -0.35, 1.0f64];
    let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
    [l[0] / n, l[1] / n, l[2] / n]
}

/// Rendered view of the bin: orthographic depth in meters from the camera and a
/// Lambertian-shaded color image stored as three row-major planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub raster_h: usize,
    pub raster_w: usize,
    pub pitch_y: f64,
    pub pitch_x: f64,
    pub floor_depth: f64,
    pub box_depth: f64,
    pub depth: Vec<f32>,
    /// `3 * raster_h * raster_w` values in `[0, 1]`, channel-major.
    pub rgb: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationHeader {
    pub format: String,
    pub version: u32,
    pub raster_h: usize,
    pub raster_w: usize,
    pub pitch_y: f64,
    pub pitch_x: f64,
    pub floor_depth: f64,
    pub box_depth: f64,
    pub dtype: String,
    pub planes: Vec<String>,
}

impl Observation {
    pub(crate) fn render(config: &SceneConfig, heights: &super::scene::Layers, objects: &[ObjectInstance]) -> Self {
        let (h, w) = (config.raster_h, config.raster_w);
        let depth: Vec<f32> = heights.height.iter().map(|&z| (config.floor_depth - z) as f32).collect();
        let mut obs = Observation {
            raster_h: h,
            raster_w: w,
            pitch_y: config.pitch_y,
            pitch_x: config.pitch_x,
            floor_depth: config.floor_depth,
            box_depth: config.box_depth,
            depth,
            rgb: vec![0.0; 3 * h * w],
        };
        let light = light();
        let plane = h * w;
        let mut albedos = vec![FLOOR_ALBEDO; objects.iter().map(|o| o.id as usize + 1).max().unwrap_or(0)];
        for o in objects {
            albedos[o.id as usize] = o.albedo;
        }
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let owner = heights.owner[i];
                let albedo = if owner == NO_OBJECT { FLOOR_ALBEDO } else { albedos[owner as usize] };
                let n = surface_normal(&obs, r, c);
                let shade = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0) as f32;
                for ch in 0..3 {
                    obs.rgb[ch * plane + i] = (albedo[ch] * shade).clamp(0.0, 1.0);
                }
            }
        }
        obs
    }

    #[inline]
    pub fn depth_at(&self, row: usize, col: usize) -> f32 {
        self.depth[row * self.raster_w + col]
    }

    #[inline]
    pub fn rgb_at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.rgb[(channel * self.raster_h + row) * self.raster_w + col]
    }

    /// Surface height above the floor at the pixel.
    #[inline]
    pub fn height_at(&self, row: usize, col: usize) -> f64 {
        self.floor_depth - self.depth_at(row, col) as f64
    }

    pub fn header(&self) -> ObservationHeader {
        ObservationHeader {
            format: OBSERVATION_FORMAT.into(),
            version: 1,
            raster_h: self.raster_h,
            raster_w: self.raster_w,
            pitch_y: self.pitch_y,
            pitch_x: self.pitch_x,
            floor_depth: self.floor_depth,
            box_depth: self.box_depth,
            dtype: "f32le".into(),
            planes: ["depth", "red", "green", "blue"].map(String::from).to_vec(),
        }
    }

    /// `u32` little-endian header length, JSON header, then the depth plane and
    /// the three color planes as little-endian `f32`, each row-major.
    pub fn encode(&self) -> Vec<u8> {
        let json = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(4 + json.len() + 16 * self.depth.len());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.depth.iter().chain(&self.rgb) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptHeader { path: path.to_path_buf(), reason };
        if bytes.len() < 4 {
            return Err(corrupt("missing header length".into()));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let json = bytes.get(4..4 + len).ok_or_else(|| corrupt("header length exceeds file".into()))?;
        let header: ObservationHeader = serde_json::from_slice(json).map_err(|e| corrupt(e.to_string()))?;
        if header.format != OBSERVATION_FORMAT || header.dtype != "f32le" || header.planes.len() != 4 {
            return Err(corrupt("unsupported observation format".into()));
        }
        let plane = header.raster_h * header.raster_w;
        let payload = &bytes[4 + len..];
        let expected = 16 * plane;
        if payload.len() != expected {
            return Err(Error::TruncatedPayload { path: path.to_path_buf(), expected, found: payload.len() });
        }
        let mut values = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        let depth: Vec<f32> = values.by_ref().take(plane).collect();
        let rgb: Vec<f32> = values.collect();
        Ok(Observation {
            raster_h: header.raster_h,
            raster_w: header.raster_w,
            pitch_y: header.pitch_y,
            pitch_x: header.pitch_x,
            floor_depth: header.floor_depth,
            box_depth: header.box_depth,
            depth,
            rgb,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?, path)
    }
}

/// Unit surface normal from the depth map: central differences scaled by each
/// axis' pixel pitch, one-sided at the raster border. `x` follows columns, `y` rows.
pub fn surface_normal(obs: &Observation, row: usize, col: usize) -> [f64; 3] {
    let slope = |lo: f64, hi: f64, span: usize, pitch: f64| if span == 0 { 0.0 } else { (hi - lo) / (span as f64 * pitch) };
    let (h, w) = (obs.raster_h, obs.raster_w);
    let (c0, c1) = (col.saturating_sub(1), (col + 1).min(w - 1));
    let (r0, r1) = (row.saturating_sub(1), (row + 1).min(h - 1));
    let dx = slope(obs.height_at(row, c0), obs.height_at(row, c1), c1 - c0, obs.pitch_x);
    let dy = slope(obs.height_at(r0, col), obs.height_at(r1, col), r1 - r0, obs.pitch_y);
    let norm = (dx * dx + dy * dy + 1.0).sqrt();
    [-dx / norm, -dy / norm, 1.0 / norm]
}
