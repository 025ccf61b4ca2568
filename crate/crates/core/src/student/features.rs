use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;

/// Bumped whenever the hashing scheme changes; recorded in checkpoints.
pub const HASH_VERSION: u32 = 1;
/// FNV-1a key for n-gram hashing. Never change without bumping [`HASH_VERSION`].
pub const HASH_SEED: u64 = 0x5eed_c11d_0000_0001;
pub const NGRAM_SIZES: [usize; 3] = [2, 3, 4];
/// Reserved index present in every vector.
pub const BIAS_FEATURE: u32 = 0;

/// Sparse bag of hashed features, sorted by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    entries: Vec<(u32, u32)>,
    total: u32,
}

impl FeatureVector {
    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn total_count(&self) -> u32 {
        self.total
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn contains(&self, index: u32) -> bool {
        self.entries.binary_search_by_key(&index, |&(i, _)| i).is_ok()
    }
}

fn ngram_index(gram: &str, hash_bits: u32) -> u32 {
    let mut h = FnvHasher::with_key(HASH_SEED);
    h.write(gram.as_bytes());
    let buckets = (1u64 << hash_bits) - 1;
    1 + (h.finish() % buckets) as u32
}

/// Hashed character 2/3/4-grams of the lowercased text plus the bias feature.
pub fn featurize_text(text: &str, hash_bits: u32) -> FeatureVector {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    counts.insert(BIAS_FEATURE, 1);
    let mut gram = String::new();
    for n in NGRAM_SIZES {
        for window in chars.windows(n) {
            gram.clear();
            gram.extend(window);
            *counts.entry(ngram_index(&gram, hash_bits)).or_default() += 1;
        }
    }
    let total = counts.values().sum();
    FeatureVector {
        entries: counts.into_iter().collect(),
        total,
    }
}

/// Featurizes question and sentence independently.
pub fn featurize(question: &str, sentence: &str, hash_bits: u32) -> (FeatureVector, FeatureVector) {
    (featurize_text(question, hash_bits), featurize_text(sentence, hash_bits))
}
