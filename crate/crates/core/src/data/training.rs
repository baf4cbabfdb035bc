use rand::seq::index;

use crate::data::dataset::{TrainingSet, TrialDataset};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

fn check_size(ds: &TrialDataset, n: usize) -> Result<()> {
    if n == 0 || n > ds.m0() {
        return Err(Error::InvalidArgument(format!(
            "training size {n} outside 1..={}",
            ds.m0()
        )));
    }
    Ok(())
}

/// The `n` earliest-enrolled control patients, in enrolment order.
pub fn select_n_first(ds: &TrialDataset, n: usize) -> Result<TrainingSet> {
    check_size(ds, n)?;
    let ranks: Vec<usize> = ds.control_records().map(|r| r.enrolment_rank).collect();
    let mut local: Vec<usize> = (0..ds.m0()).collect();
    local.sort_by_key(|&j| ranks[j]);
    local.truncate(n);
    TrainingSet::new(local, ds.m0())
}

/// Uniform draw of `n` distinct control patients.
pub fn draw_training_set(ds: &TrialDataset, n: usize, seed: u64) -> Result<TrainingSet> {
    check_size(ds, n)?;
    let mut rng = rng_from_seed(seed);
    let picked = index::sample(&mut rng, ds.m0(), n).into_vec();
    TrainingSet::new(picked, ds.m0())
}
