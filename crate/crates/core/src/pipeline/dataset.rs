use super::PipelineError;
use crate::iso::augment;
use crate::predictor::{encode_f64, Dataset, Sample, Split};
use crate::record::ArchRecord;
use crate::rng::{derive_seed, stream};
use rand::seq::SliceRandom;
use std::collections::{BTreeMap, HashSet};

/// Share of isomorphism classes held out for testing.
pub const TEST_FRACTION: f64 = 0.15;

/// Records partitioned so that no isomorphism class appears on both sides.
#[derive(Clone, Debug)]
pub struct ClassSplit {
    pub train: Vec<ArchRecord>,
    pub test: Vec<ArchRecord>,
}

const TAG_SPLIT: u64 = 0x7370_6c74;
const TAG_AUGMENT: u64 = 0x6175_676d;

/// Shuffles the classes with `seed` and holds out `round(fraction * classes)`
/// of them. Records keep their input order within each side.
pub fn split_by_class(records: &[ArchRecord], fraction: f64, seed: u64) -> ClassSplit {
    let mut classes: BTreeMap<&str, ()> = BTreeMap::new();
    for r in records {
        classes.insert(&r.canon, ());
    }
    let mut keys: Vec<&str> = classes.into_keys().collect();
    keys.shuffle(&mut stream(&[seed, TAG_SPLIT]));
    let n_test = (fraction * keys.len() as f64).round() as usize;
    let test: HashSet<&str> = keys[..n_test.min(keys.len())].iter().copied().collect();
    let (test, train) = records
        .iter()
        .cloned()
        .partition(|r| test.contains(r.canon.as_str()));
    ClassSplit { train, test }
}

#[derive(Clone, Debug)]
pub struct BuiltDataset {
    pub split: ClassSplit,
    /// Training records plus their isomorphic copies.
    pub train_records: Vec<ArchRecord>,
    pub train: Dataset,
    pub test: Dataset,
}

fn to_dataset(split: Split, records: &[ArchRecord]) -> Result<Dataset, PipelineError> {
    let samples = records
        .iter()
        .map(|r| Sample {
            x: encode_f64(&r.meta),
            y: r.perf,
        })
        .collect();
    Ok(Dataset::new(split, samples)?)
}

/// Splits by class, then augments only the training side with up to
/// `factor` isomorphic copies per record (`factor = 0` disables it).
pub fn build_dataset(
    records: &[ArchRecord],
    factor: usize,
    seed: u64,
) -> Result<BuiltDataset, PipelineError> {
    let split = split_by_class(records, TEST_FRACTION, seed);
    let mut train_records = split.train.clone();
    if factor > 0 {
        for (i, r) in split.train.iter().enumerate() {
            train_records.extend(augment(
                r,
                factor,
                derive_seed(&[seed, TAG_AUGMENT, i as u64]),
            ));
        }
    }
    let test_classes: HashSet<&str> = split.test.iter().map(|r| r.canon.as_str()).collect();
    if let Some(r) = train_records
        .iter()
        .find(|r| test_classes.contains(r.canon.as_str()))
    {
        return Err(PipelineError::Leak(r.canon.clone()));
    }
    Ok(BuiltDataset {
        train: to_dataset(Split::Train, &train_records)?,
        test: to_dataset(Split::Test, &split.test)?,
        split,
        train_records,
    })
}
