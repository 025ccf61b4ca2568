//! Dataset ingestion, conversion, filtering and serialization.

mod as2_jsonl;
pub mod jsonl;
mod qadoc;
mod wikiqa;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use as2_jsonl::{read_jsonl, write_jsonl};
pub use qadoc::{
    convert_qa_dataset, convert_qa_to_as2, read_qadoc_jsonl, split_sentences, splitter_by_name, write_qadoc_jsonl,
    LineSplitter, QaDocInstance, RuleSplitter, SentenceSpan, SentenceSplitter, SpanAnnotation, SPLITTER_NAMES,
};
pub use wikiqa::{parse_wikiqa_tsv, write_wikiqa_tsv};

use crate::as2::{As2Dataset, Split};
use crate::error::{Error, Result};

/// Drops questions without a positive candidate from a train split.
/// Dev and test splits are returned unchanged.
pub fn filter_train_all_negative(dataset: &As2Dataset) -> Result<As2Dataset> {
    for ex in &dataset.examples {
        ex.gold_labels()?;
    }
    let mut out = dataset.clone();
    if dataset.split == Split::Train {
        out.examples.retain(|ex| ex.num_positives() > 0);
    }
    Ok(out)
}

/// Deterministic question-level train/dev partition by seeded shuffle.
///
/// `round((1 − dev_frac) · n)` questions go to train. Both parts keep the
/// original question order.
pub fn split_train_dev(dataset: &As2Dataset, dev_frac: f64, seed: u64) -> Result<(As2Dataset, As2Dataset)> {
    if !(0.0..=1.0).contains(&dev_frac) {
        return Err(Error::Config(format!("dev fraction {dev_frac} outside [0, 1]")));
    }
    let n = dataset.examples.len();
    let n_train = ((1.0 - dev_frac) * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let pick = |train: bool, split: Split| As2Dataset {
        examples: dataset
            .examples
            .iter()
            .zip(&is_train)
            .filter(|(_, &t)| t == train)
            .map(|(e, _)| e.clone())
            .collect(),
        split,
        language: dataset.language.clone(),
    };
    Ok((pick(true, Split::Train), pick(false, Split::Dev)))
}
