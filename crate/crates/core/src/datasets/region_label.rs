use crate::candidates::{extract_patch, point_grid, BinaryMap, RegionCandidate, GRID_POINTS};
use crate::error::Result;
use crate::nn::{ForwardCache, InputBatch, ModelInput, ModelParams};
use crate::scenesim::Observation;

const CHUNK: usize = 64;

/// Classify all 289 grid points of a region; a point is pickable when its
/// positive logit exceeds the negative one.
pub fn predict_binary_map(params: &ModelParams<f32>, obs: &Observation, region: &RegionCandidate) -> Result<BinaryMap> {
    let inputs: Vec<ModelInput> = point_grid(region)
        .iter()
        .map(|p| extract_patch(obs, p.pixel.0, p.pixel.1).map(|patch| patch.to_model_input(obs.floor_depth, obs.box_depth)))
        .collect::<Result<_>>()?;
    let mut batch = InputBatch::<f32>::default();
    let mut cache = ForwardCache::default();
    let mut map = Vec::with_capacity(GRID_POINTS);
    for part in inputs.chunks(CHUNK) {
        batch.fill(part.iter())?;
        params.forward_into(&batch, &mut cache);
        map.extend(cache.output.chunks_exact(2).map(|l| u8::from(l[1] > l[0])));
    }
    Ok(BinaryMap(map))
}

/// Region score: fraction of the 289 grid points the classifier deems pickable.
pub fn make_region_label(params: &ModelParams<f32>, obs: &Observation, region: &RegionCandidate) -> Result<f32> {
    Ok(predict_binary_map(params, obs, region)?.count() as f32 / GRID_POINTS as f32)
}
