//! Detection geometry: the twelve sliding-window regions, the 17x17 point grid
//! inside each, 32x32 input crops, and the kernel-weighted point selector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelInput, INPUT_PLANE, INPUT_SIDE};
use crate::scenesim::Observation;

pub const REGION_SIZE: usize = 100;
pub const REGION_ROWS: usize = 3;
pub const REGION_COLS: usize = 4;
pub const NUM_REGIONS: usize = REGION_ROWS * REGION_COLS;
pub const GRID_SIDE: usize = 17;
pub const GRID_POINTS: usize = GRID_SIDE * GRID_SIDE;
pub const GRID_OFFSET: usize = 2;
pub const GRID_STRIDE: usize = 6;
pub const PATCH_SIDE: usize = INPUT_SIDE;
/// Row/column of the target pixel inside a patch.
pub const PATCH_CENTER: usize = PATCH_SIDE / 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionCandidate {
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointCandidate {
    pub grid: (usize, usize),
    pub pixel: (usize, usize),
}

/// The 12 windows, row-major: three row offsets by four column offsets, evenly
/// spread so the outer windows touch the raster border.
pub fn region_candidates(raster_h: usize, raster_w: usize) -> Result<Vec<RegionCandidate>> {
    if raster_h < REGION_SIZE || raster_w < REGION_SIZE {
        return Err(Error::RasterTooSmall { h: raster_h, w: raster_w, window: REGION_SIZE });
    }
    let offset = |k: usize, span: usize, parts: usize| ((k * (span - REGION_SIZE)) as f64 / parts as f64).round() as usize;
    Ok((0..REGION_ROWS)
        .flat_map(|i| {
            (0..REGION_COLS).map(move |j| RegionCandidate {
                row: offset(i, raster_h, REGION_ROWS - 1),
                col: offset(j, raster_w, REGION_COLS - 1),
            })
        })
        .collect())
}

impl RegionCandidate {
    pub fn point(&self, i: usize, j: usize) -> PointCandidate {
        PointCandidate {
            grid: (i, j),
            pixel: (self.row + GRID_OFFSET + GRID_STRIDE * i, self.col + GRID_OFFSET + GRID_STRIDE * j),
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + REGION_SIZE).contains(&row) && (self.col..self.col + REGION_SIZE).contains(&col)
    }
}

/// The 289 grid points of a region, row-major.
pub fn point_grid(region: &RegionCandidate) -> Vec<PointCandidate> {
    (0..GRID_SIDE).flat_map(|i| (0..GRID_SIDE).map(move |j| region.point(i, j))).collect()
}

/// A 32x32 model-resolution view: color planes in `[0, 1]` and depth in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    /// Three channel-major 32x32 planes.
    pub rgb: Vec<f32>,
    pub depth: Vec<f32>,
}

/// A 100x100 region pooled down to patch resolution.
pub type RegionImage = Patch;

impl Patch {
    pub fn depth_at(&self, row: usize, col: usize) -> f32 {
        self.depth[row * PATCH_SIDE + col]
    }

    /// Network input: color unchanged, depth converted to height above the floor
    /// in units of the box depth.
    pub fn to_model_input(&self, floor_depth: f64, box_depth: f64) -> ModelInput {
        let (floor, scale) = (floor_depth as f32, (1.0 / box_depth) as f32);
        ModelInput { rgb: self.rgb.clone(), depth: self.depth.iter().map(|&d| (floor - d) * scale).collect() }
    }
}

/// Crop centered on the pixel (which lands at index (16, 16)); rows and columns
/// beyond the raster repeat the nearest edge pixel.
pub fn extract_patch(obs: &Observation, row: usize, col: usize) -> Result<Patch> {
    let (h, w) = (obs.raster_h, obs.raster_w);
    if row >= h || col >= w {
        return Err(Error::PixelOutOfBounds { row, col, h, w });
    }
    let clamp = |v: usize, off: usize, n: usize| (v + off).saturating_sub(PATCH_CENTER).min(n - 1);
    let rows: Vec<usize> = (0..PATCH_SIDE).map(|k| clamp(row, k, h)).collect();
    let cols: Vec<usize> = (0..PATCH_SIDE).map(|k| clamp(col, k, w)).collect();
    let mut rgb = vec![0.0; 3 * INPUT_PLANE];
    let mut depth = vec![0.0; INPUT_PLANE];
    for (pr, &r) in rows.iter().enumerate() {
        for (pc, &c) in cols.iter().enumerate() {
            let i = pr * PATCH_SIDE + pc;
            depth[i] = obs.depth_at(r, c);
            for ch in 0..3 {
                rgb[ch * INPUT_PLANE + i] = obs.rgb_at(ch, r, c);
            }
        }
    }
    Ok(Patch { rgb, depth })
}

/// Weights of the `out`x`src` area-averaging matrix: output bin `k` covers
/// `[k * src / out, (k + 1) * src / out)` and averages the pixels it overlaps.
fn pooling_weights(src: usize, out: usize) -> Vec<(usize, Vec<(usize, f64)>)> {
    let scale = src as f64 / out as f64;
    (0..out)
        .map(|k| {
            let (lo, hi) = (k as f64 * scale, (k + 1) as f64 * scale);
            let taps = (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .map(|p| (p, ((p + 1) as f64).min(hi) - (p as f64).max(lo)))
                .filter(|&(_, wgt)| wgt > 0.0)
                .map(|(p, wgt)| (p, wgt / scale))
                .collect();
            (k, taps)
        })
        .collect()
}

fn pool_plane(src: impl Fn(usize, usize) -> f64, weights: &[(usize, Vec<(usize, f64)>)], out: &mut [f32]) {
    let mut rows = vec![0.0f64; PATCH_SIDE * REGION_SIZE];
    for (k, taps) in weights {
        for c in 0..REGION_SIZE {
            rows[k * REGION_SIZE + c] = taps.iter().map(|&(r, wgt)| wgt * src(r, c)).sum();
        }
    }
    for r in 0..PATCH_SIDE {
        for (k, taps) in weights {
            out[r * PATCH_SIDE + k] = taps.iter().map(|&(c, wgt)| wgt * rows[r * REGION_SIZE + c]).sum::<f64>() as f32;
        }
    }
}

/// Area-weighted average pooling of the 100x100 window down to 32x32.
pub fn downsample_region(obs: &Observation, region: &RegionCandidate) -> Result<RegionImage> {
    if region.row + REGION_SIZE > obs.raster_h || region.col + REGION_SIZE > obs.raster_w {
        return Err(Error::Shape(format!("region at ({}, {}) leaves the raster", region.row, region.col)));
    }
    let weights = pooling_weights(REGION_SIZE, PATCH_SIDE);
    let (r0, c0) = (region.row, region.col);
    let mut rgb = vec![0.0; 3 * INPUT_PLANE];
    let mut depth = vec![0.0; INPUT_PLANE];
    pool_plane(|r, c| obs.depth_at(r0 + r, c0 + c) as f64, &weights, &mut depth);
    for ch in 0..3 {
        pool_plane(|r, c| obs.rgb_at(ch, r0 + r, c0 + c) as f64, &weights, &mut rgb[ch * INPUT_PLANE..(ch + 1) * INPUT_PLANE]);
    }
    Ok(Patch { rgb, depth })
}

/// Per-point pickability predictions of one region, row-major 17x17.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMap(pub Vec<u8>);

impl BinaryMap {
    pub fn zeros() -> Self {
        Self(vec![0; GRID_POINTS])
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self((0..GRID_POINTS).map(|k| f(k / GRID_SIDE, k % GRID_SIDE) as u8).collect())
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.0[i * GRID_SIDE + j] != 0
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.0[i * GRID_SIDE + j] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelE {
    /// Mirror-symmetric weighting peaked at the center.
    #[default]
    Symmetric,
    /// The printed matrix, whose bottom row breaks the symmetry.
    Literal,
}

impl KernelE {
    /// Weights in tenths; responses are accumulated exactly so equal sums tie exactly.
    pub fn tenths(self) -> [[u32; 5]; 5] {
        let bottom = match self {
            KernelE::Symmetric => [1, 3, 5, 3, 1],
            KernelE::Literal => [1, 5, 8, 3, 1],
        };
        [[1, 3, 5, 3, 1], [3, 5, 8, 5, 3], [5, 8, 10, 8, 5], [3, 5, 8, 5, 3], bottom]
    }

    pub fn weights(self) -> [[f64; 5]; 5] {
        self.tenths().map(|row| row.map(|t| f64::from(t) / 10.0))
    }
}

/// Zero-padded 5x5 correlation of a row-major `rows`x`cols` 0/1 grid with the kernel.
pub fn kernel_response_grid(cells: &[u8], rows: usize, cols: usize, kernel: KernelE) -> Vec<f64> {
    assert_eq!(cells.len(), rows * cols, "grid size");
    let k = kernel.tenths();
    let (nr, nc) = (rows as isize, cols as isize);
    let mut out = vec![0.0; rows * cols];
    for i in 0..nr {
        for j in 0..nc {
            let mut acc = 0u32;
            for (di, krow) in k.iter().enumerate() {
                for (dj, &wgt) in krow.iter().enumerate() {
                    let (y, x) = (i + di as isize - 2, j + dj as isize - 2);
                    if (0..nr).contains(&y) && (0..nc).contains(&x) && cells[(y * nc + x) as usize] != 0 {
                        acc += wgt;
                    }
                }
            }
            out[(i * nc + j) as usize] = f64::from(acc) / 10.0;
        }
    }
    out
}

/// Positive cell with the largest kernel response, first in row-major order on
/// ties, together with that response.
pub fn select_in_grid(cells: &[u8], rows: usize, cols: usize, kernel: KernelE) -> Option<((usize, usize), f64)> {
    let response = kernel_response_grid(cells, rows, cols, kernel);
    let mut best: Option<(usize, f64)> = None;
    for (idx, &v) in response.iter().enumerate() {
        if cells[idx] != 0 && best.map_or(true, |(_, b)| v > b) {
            best = Some((idx, v));
        }
    }
    best.map(|(idx, v)| ((idx / cols, idx % cols), v))
}

pub fn kernel_response(map: &BinaryMap, kernel: KernelE) -> Vec<f64> {
    kernel_response_grid(&map.0, GRID_SIDE, GRID_SIDE, kernel)
}

/// Most centered pickable cell of a region map and its kernel response.
pub fn select_point_scored(map: &BinaryMap, kernel: KernelE) -> Option<((usize, usize), f64)> {
    select_in_grid(&map.0, GRID_SIDE, GRID_SIDE, kernel)
}

pub fn select_point(map: &BinaryMap, kernel: KernelE) -> Option<(usize, usize)> {
    select_point_scored(map, kernel).map(|(cell, _)| cell)
}
