use serde::{Deserialize, Serialize};

use super::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Training target for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Class(u8),
    Score(f32),
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean of `-log softmax(logits)[label]` over rows of `[N, classes]`, with its
/// gradient w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &[T], classes: usize, labels: &[u8]) -> (T, Vec<T>) {
    cross_entropy_weighted(logits, classes, labels, &[])
}

/// Cross-entropy where row `i` contributes `class_weights[label_i]` times its
/// loss; an empty weight slice means unit weights. Still divided by `N`.
pub fn cross_entropy_weighted<T: Real>(logits: &[T], classes: usize, labels: &[u8], class_weights: &[f64]) -> (T, Vec<T>) {
    let n = labels.len();
    assert_eq!(logits.len(), n * classes);
    let inv_n = T::one() / T::lit(n as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        let w = class_weights.get(label as usize).map_or(T::one(), |&w| T::lit(w));
        loss += w * (lse - row[label as usize]);
        for k in 0..classes {
            let p = (row[k] - lse).exp();
            let y = if k == label as usize { T::one() } else { T::zero() };
            grad[i * classes + k] = w * (p - y) * inv_n;
        }
    }
    (loss * inv_n, grad)
}

/// Mean squared error and its gradient w.r.t. the scores.
pub fn mse<T: Real>(scores: &[T], targets: &[T]) -> (T, Vec<T>) {
    assert_eq!(scores.len(), targets.len());
    let inv_n = T::one() / T::lit(scores.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let d = s - t;
            loss += d * d;
            two * d * inv_n
        })
        .collect();
    (loss * inv_n, grad)
}

/// Loss and output-gradient for a batch of model outputs.
pub fn evaluate<T: Real>(kind: LossKind, outputs: &[T], targets: &[Target]) -> (T, Vec<T>) {
    evaluate_weighted(kind, outputs, targets, &[])
}

/// [`evaluate`] with per-class weights for cross-entropy (ignored for mse).
pub fn evaluate_weighted<T: Real>(kind: LossKind, outputs: &[T], targets: &[Target], class_weights: &[f64]) -> (T, Vec<T>) {
    match kind {
        LossKind::CrossEntropy => {
            let labels: Vec<u8> = targets
                .iter()
                .map(|t| match t {
                    Target::Class(c) => *c,
                    Target::Score(s) => u8::from(*s >= 0.5),
                })
                .collect();
            cross_entropy_weighted(outputs, 2, &labels, class_weights)
        }
        LossKind::Mse => {
            let ts: Vec<T> = targets
                .iter()
                .map(|t| match t {
                    Target::Score(s) => T::lit(*s as f64),
                    Target::Class(c) => T::lit(*c as f64),
                })
                .collect();
            mse(outputs, &ts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln2() {
        let (l, _) = cross_entropy(&[0.0f64, 0.0], 2, &[1]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_logits() {
        let (l, _) = cross_entropy(&[2.0f64, 0.0], 2, &[0]);
        let want = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert!((l - want).abs() < 1e-15);
        assert!((l - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn mse_zero_at_target() {
        let (l, g) = mse(&[0.3f64], &[0.3]);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        for logits in [[3.0f64, -7.5], [1e3, 1e3 - 1.0], [-40.0, 0.25]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_is_p_minus_onehot() {
        let (_, g) = cross_entropy(&[1.0f64, -1.0, 0.5, 0.5], 2, &[0, 1]);
        let p = softmax(&[1.0f64, -1.0]);
        assert!((g[0] - (p[0] - 1.0) / 2.0).abs() < 1e-15);
        assert!((g[1] - p[1] / 2.0).abs() < 1e-15);
        assert!((g[2] - 0.25).abs() < 1e-15);
        assert!((g[3] + 0.25).abs() < 1e-15);
    }
}
