use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic grouped split. Distinct groups are shuffled with `seed`; the first
/// `ceil(ratio * groups)` go to the training side. Returned indices keep input order.
pub fn split_indices(groups: &[u64], ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut distinct: Vec<u64> = Vec::new();
    let mut seen = HashMap::new();
    for &g in groups {
        seen.entry(g).or_insert_with(|| {
            distinct.push(g);
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);
    let n_train = ((ratio * distinct.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let train_groups: HashMap<u64, ()> = distinct[..n_train.min(distinct.len())].iter().map(|&g| (g, ())).collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, g) in groups.iter().enumerate() {
        if train_groups.contains_key(g) {
            train.push(i);
        } else {
            val.push(i);
        }
    }
    (train, val)
}

/// Partition samples into training and validation sides with [`split_indices`].
pub fn split<S: Clone>(samples: &[S], groups: &[u64], ratio: f64, seed: u64) -> (Vec<S>, Vec<S>) {
    assert_eq!(samples.len(), groups.len(), "one group per sample");
    let (t, v) = split_indices(groups, ratio, seed);
    (t.iter().map(|&i| samples[i].clone()).collect(), v.iter().map(|&i| samples[i].clone()).collect())
}
