//! Seeded holdout splits and fold splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::Labeled;
use crate::error::{Error, Result};

/// Split `records` into (train, test) keeping `train_fraction` of each class
/// for training (rounded half away from zero). With `stratified == false`
/// the rounding applies to the whole set instead.
///
/// Both halves keep the input order of their records.
pub fn split_holdout<R: Labeled + Clone>(
    records: &[R],
    train_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<R>, Vec<R>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; records.len()];
    let groups: Vec<Vec<usize>> = if stratified {
        let classes = records.iter().map(|r| r.label() + 1).max().unwrap_or(0);
        let mut groups = vec![Vec::new(); classes];
        for (i, r) in records.iter().enumerate() {
            groups[r.label()].push(i);
        }
        groups
    } else {
        vec![(0..records.len()).collect()]
    };
    for mut group in groups {
        let n_train = (group.len() as f64 * train_fraction).round() as usize;
        group.shuffle(&mut rng);
        for &i in &group[n_train..] {
            in_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (r, t) in records.iter().zip(in_test) {
        if t {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((train, test))
}

/// Records whose fold equals `test_fold` form the test set; everything else trains.
pub fn split_folds<R: Labeled + Clone>(records: &[R], test_fold: u32) -> Result<(Vec<R>, Vec<R>)> {
    if let Some(i) = records.iter().position(|r| r.fold().is_none()) {
        return Err(Error::invalid(format!("record {i} has no fold metadata")));
    }
    if !records.iter().any(|r| r.fold() == Some(test_fold)) {
        let mut folds: Vec<u32> = records.iter().filter_map(Labeled::fold).collect();
        folds.sort_unstable();
        folds.dedup();
        return Err(Error::invalid(format!(
            "unknown fold {test_fold}; available folds {folds:?}"
        )));
    }
    Ok(records
        .iter()
        .cloned()
        .partition(|r| r.fold() != Some(test_fold)))
}
