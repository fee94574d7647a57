use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;

/// Splits rows into `k` test folds so that every group lands in exactly one
/// fold. Distinct groups are sorted, shuffled with `seed` and dealt
/// round-robin, so fold sizes differ by at most one group. Each fold lists
/// its rows in ascending order.
pub fn group_kfold<G: Ord>(groups: &[G], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidConfig(format!("k_folds {k} < 2")));
    }
    let mut distinct: BTreeMap<&G, usize> = groups.iter().map(|g| (g, 0)).collect();
    if distinct.len() < k {
        return Err(EvalError::TooFewGroups { groups: distinct.len(), k });
    }
    let mut order: Vec<&G> = distinct.keys().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (i, g) in order.into_iter().enumerate() {
        distinct.insert(g, i % k);
    }
    let mut folds = vec![Vec::new(); k];
    for (row, g) in groups.iter().enumerate() {
        folds[distinct[g]].push(row);
    }
    Ok(folds)
}

/// Rows not in `test`, ascending.
pub fn complement(n_rows: usize, test: &[usize]) -> Vec<usize> {
    let mut in_test = vec![false; n_rows];
    for &i in test {
        in_test[i] = true;
    }
    (0..n_rows).filter(|&i| !in_test[i]).collect()
}
