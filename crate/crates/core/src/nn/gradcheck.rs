//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{self, LossKind, Target};
use super::model::{architecture, HeadKind, InputBatch, ModelInput, ModelParams, INPUT_PLANE};
use super::train::Example;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

pub const FD_STEP: f64 = 1e-4;
pub const MIN_PER_TENSOR: usize = 10;
/// Denominator floor so gradients that are zero up to roundoff do not read as
/// large relative errors.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates replaced because the probe crossed an activation kink.
    pub skipped_kinks: usize,
}

pub fn loss_kind_for(head: HeadKind) -> LossKind {
    match head {
        HeadKind::Classification => LossKind::CrossEntropy,
        HeadKind::Regression => LossKind::Mse,
    }
}

pub fn batch_loss(params: &ModelParams<f64>, batch: &InputBatch<f64>, targets: &[Target]) -> f64 {
    let out = params.forward_batch(batch);
    loss::evaluate(loss_kind_for(params.head), &out, targets).0
}

/// Analytic gradient of the mean batch loss.
pub fn analytic_gradient(params: &ModelParams<f64>, examples: &[Example]) -> Result<Vec<Vec<f64>>> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let batch = InputBatch::<f64>::new(examples.iter().map(|e| &e.input))?;
    let targets: Vec<Target> = examples.iter().map(|e| e.target).collect();
    let mut cache = params.forward_cached(&batch);
    let (_, g) = loss::evaluate(loss_kind_for(params.head), &cache.output, &targets);
    Ok(params.backward(&mut cache, &g))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst relative error between analytic and central-difference gradients over a
/// random subsample of at least ten coordinates per tensor (all of them for
/// smaller tensors). Coordinates whose probe flips a ReLU mask or a max-pool
/// winner are replaced by fresh draws, since the loss has a kink inside the step.
pub fn grad_check(params: &ModelParams<f64>, examples: &[Example], seed: u64) -> Result<GradCheckReport> {
    let analytic = analytic_gradient(params, examples)?;
    grad_check_against(params, examples, &analytic, seed)
}

/// Same as [`grad_check`] but compares against a caller-supplied gradient.
pub fn grad_check_against(
    params: &ModelParams<f64>,
    examples: &[Example],
    analytic: &[Vec<f64>],
    seed: u64,
) -> Result<GradCheckReport> {
    let batch = InputBatch::<f64>::new(examples.iter().map(|e| &e.input))?;
    let targets: Vec<Target> = examples.iter().map(|e| e.target).collect();
    let names = architecture(params.head);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_tensor: String::new(), worst_index: 0, checked: 0, skipped_kinks: 0 };

    let pattern = |p: &ModelParams<f64>| p.forward_cached(&batch).activation_pattern();
    let base_pattern = pattern(params);

    for (t, (name, _)) in names.iter().enumerate() {
        let len = params.tensors[t].len();
        let want = MIN_PER_TENSOR.min(len);
        let order = sample(&mut rng, len, len);
        let mut accepted = 0;
        for i in order.iter() {
            if accepted == want {
                break;
            }
            let w = params.tensors[t][i];
            probe.tensors[t][i] = w + FD_STEP;
            let up = batch_loss(&probe, &batch, &targets);
            let up_kink = pattern(&probe) != base_pattern;
            probe.tensors[t][i] = w - FD_STEP;
            let down = batch_loss(&probe, &batch, &targets);
            let down_kink = pattern(&probe) != base_pattern;
            probe.tensors[t][i] = w;
            if up_kink || down_kink {
                // a ReLU or max-pool switch inside [w-h, w+h]: not differentiable there
                report.skipped_kinks += 1;
                continue;
            }
            accepted += 1;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(analytic[t][i], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_tensor.is_empty() {
                report.max_rel_error = err;
                report.worst_tensor = (*name).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

/// Random inputs (rgb in [0,1), heights in [0,2)) with random targets for `head`.
pub fn random_examples(head: HeadKind, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|g| Example {
            input: ModelInput {
                rgb: (0..3 * INPUT_PLANE).map(|_| rng.gen::<f32>()).collect(),
                depth: (0..INPUT_PLANE).map(|_| rng.gen_range(0.0..2.0)).collect(),
            },
            target: match head {
                HeadKind::Classification => Target::Class(rng.gen_range(0..2)),
                HeadKind::Regression => Target::Score(rng.gen()),
            },
            group: g as u64,
        })
        .collect()
}

/// Check both heads on freshly initialized parameters and a random batch of
/// four, all drawn from `seed`. `corrupt` scales the analytic gradient before
/// comparison (1.0 for an honest check).
pub fn check_heads(seed: u64, corrupt: f64) -> Result<Vec<(HeadKind, GradCheckReport)>> {
    [HeadKind::Classification, HeadKind::Regression]
        .into_iter()
        .map(|head| {
            let params = ModelParams::<f64>::init(head, derive_seed(seed, "gradcheck-params", head as u64));
            let examples = random_examples(head, 4, derive_seed(seed, "gradcheck-batch", head as u64));
            let mut analytic = analytic_gradient(&params, &examples)?;
            analytic.iter_mut().flatten().for_each(|g| *g *= corrupt);
            let report = grad_check_against(&params, &examples, &analytic, derive_seed(seed, "gradcheck-probe", head as u64))?;
            Ok((head, report))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_heads_pass() {
        for head in [HeadKind::Classification, HeadKind::Regression] {
            let p = ModelParams::<f64>::init(head, 21);
            let ex = random_examples(head, 3, 4);
            let r = grad_check(&p, &ex, 8).unwrap();
            assert!(r.max_rel_error < 1e-4, "{head:?}: {r:?}");
            assert!(r.checked >= 10 * 12);
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let p = ModelParams::<f64>::init(HeadKind::Regression, 2);
        let ex = random_examples(HeadKind::Regression, 2, 9);
        let batch = InputBatch::<f64>::new(ex.iter().map(|e| &e.input)).unwrap();
        let mut cache = p.forward_cached(&batch);
        let targets = cache.output.clone();
        let (l, g_out) = loss::mse(&cache.output, &targets);
        assert_eq!(l, 0.0);
        let g = p.backward(&mut cache, &g_out);
        assert!(g.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let p = ModelParams::<f64>::init(HeadKind::Classification, 3);
        let ex = random_examples(HeadKind::Classification, 1, 5);
        let twice = vec![ex[0].clone(), ex[0].clone()];
        let g1 = analytic_gradient(&p, &ex).unwrap();
        let g2 = analytic_gradient(&p, &twice).unwrap();
        for (a, b) in g1.iter().flatten().zip(g2.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn head_check_is_deterministic_and_detects_corruption() {
        let a = check_heads(5, 1.0).unwrap();
        let b = check_heads(5, 1.0).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            assert_eq!(x.max_rel_error.to_bits(), y.max_rel_error.to_bits());
            assert!(x.max_rel_error < 1e-4);
        }
        assert!(check_heads(5, 1.05).unwrap().iter().all(|(_, r)| r.max_rel_error >= 1e-4));
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let p = ModelParams::<f64>::init(HeadKind::Classification, 1);
        let ex = random_examples(HeadKind::Classification, 2, 1);
        let mut g = analytic_gradient(&p, &ex).unwrap();
        g.iter_mut().flatten().for_each(|v| *v *= 1.01);
        let r = grad_check_against(&p, &ex, &g, 3).unwrap();
        assert!(r.max_rel_error >= 1e-4);
    }
}
