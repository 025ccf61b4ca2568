//! Frozen teacher logits keyed by pair id, from a JSONL file or a remote
//! scoring service.

mod remote;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::jsonl::{read_records, write_records};
use crate::distill::{prob_pos, Logits};
use crate::error::{Error, Result};

pub use remote::{RemoteConfig, RemoteTeacher};

/// Allowed gap between a stored `p_pos` and the softmax of its logits when reading files.
pub const LOAD_TOLERANCE: f64 = 1e-4;
/// Allowed gap when constructing a score in memory.
pub const SCORE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherScore {
    pub pair_id: String,
    #[serde(rename = "z")]
    pub logits: Logits,
    #[serde(rename = "p_pos")]
    pub prob_pos: f64,
}

impl TeacherScore {
    pub fn from_logits(pair_id: impl Into<String>, logits: Logits) -> Result<Self> {
        let logits = Logits::new(logits.0[0], logits.0[1])?;
        Ok(TeacherScore {
            pair_id: pair_id.into(),
            prob_pos: prob_pos(logits),
            logits,
        })
    }

    fn check(&self, tolerance: f64) -> Result<()> {
        Logits::new(self.logits.0[0], self.logits.0[1])?;
        let expected = prob_pos(self.logits);
        if !(0.0..=1.0).contains(&self.prob_pos) || (expected - self.prob_pos).abs() > tolerance {
            return Err(Error::Data(format!(
                "pair `{}`: p_pos {} inconsistent with logits {:?} (softmax gives {expected})",
                self.pair_id, self.prob_pos, self.logits.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub teacher: String,
    pub dataset: String,
    pub created: String,
}

/// Read-only map from pair id to teacher score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TeacherStore {
    scores: BTreeMap<String, TeacherScore>,
    pub provenance: Provenance,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

impl TeacherStore {
    pub fn new(provenance: Provenance) -> Self {
        TeacherStore {
            scores: BTreeMap::new(),
            provenance,
        }
    }

    /// Builds a store from scores, rejecting duplicate ids.
    pub fn from_scores(scores: impl IntoIterator<Item = TeacherScore>) -> Result<Self> {
        let mut store = TeacherStore::default();
        for s in scores {
            store.insert(s)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, score: TeacherScore) -> Result<()> {
        score.check(SCORE_TOLERANCE)?;
        if self.scores.contains_key(&score.pair_id) {
            return Err(Error::Data(format!("duplicate pair id `{}`", score.pair_id)));
        }
        self.scores.insert(score.pair_id.clone(), score);
        Ok(())
    }

    /// Inserts or replaces. Used when merging freshly fetched remote scores.
    pub fn upsert(&mut self, score: TeacherScore) -> Result<()> {
        score.check(SCORE_TOLERANCE)?;
        self.scores.insert(score.pair_id.clone(), score);
        Ok(())
    }

    pub fn get(&self, pair_id: &str) -> Option<&TeacherScore> {
        self.scores.get(pair_id)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TeacherScore> {
        self.scores.values()
    }

    /// Writes the scores as JSONL, plus a `.meta.json` sidecar when
    /// provenance is set.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_records(path, self.scores.values())?;
        let meta = meta_path(path);
        if self.provenance != Provenance::default() {
            let text = serde_json::to_string_pretty(&self.provenance)?;
            std::fs::write(&meta, text).map_err(|e| Error::io(format!("writing {}", meta.display()), e))?;
        }
        Ok(())
    }
}

pub fn save_scores(store: &TeacherStore, path: &Path) -> Result<()> {
    store.save(path)
}

/// Loads a teacher-scores JSONL file, validating every record.
pub fn load_scores(path: &Path) -> Result<TeacherStore> {
    let records: Vec<(usize, TeacherScore)> = read_records(path)?;
    let mut store = TeacherStore::default();
    for (line, score) in records {
        score
            .check(LOAD_TOLERANCE)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        if store.scores.contains_key(&score.pair_id) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate pair id `{}`", score.pair_id),
            ));
        }
        store.scores.insert(score.pair_id.clone(), score);
    }
    let meta = meta_path(path);
    if meta.exists() {
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(format!("reading {}", meta.display()), e))?;
        store.provenance = serde_json::from_str(&text)?;
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

/// Counting accessor over a store: strict lookups fail on missing ids,
/// lenient ones return `None` and count the skip.
#[derive(Debug)]
pub struct TeacherLookup<'a> {
    store: &'a TeacherStore,
    mode: Strictness,
    pub served: usize,
    pub skipped: usize,
}

impl<'a> TeacherLookup<'a> {
    pub fn new(store: &'a TeacherStore, mode: Strictness) -> Self {
        TeacherLookup {
            store,
            mode,
            served: 0,
            skipped: 0,
        }
    }

    pub fn logits(&mut self, pair_id: &str) -> Result<Option<Logits>> {
        teacher_logits(self.store, pair_id, self.mode).inspect(|found| match found {
            Some(_) => self.served += 1,
            None => self.skipped += 1,
        })
    }
}

pub fn teacher_logits(store: &TeacherStore, pair_id: &str, mode: Strictness) -> Result<Option<Logits>> {
    match (store.get(pair_id), mode) {
        (Some(s), _) => Ok(Some(s.logits)),
        (None, Strictness::Strict) => Err(Error::MissingTeacher(pair_id.to_string())),
        (None, Strictness::Lenient) => Ok(None),
    }
}

/// Texts of one pair as sent to a teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairText {
    pub id: String,
    #[serde(rename = "q")]
    pub question: String,
    #[serde(rename = "s")]
    pub sentence: String,
}

/// Anything that yields teacher scores for pairs, in input order.
pub trait TeacherScorer {
    fn score_pairs(&self, pairs: &[PairText]) -> Result<Vec<TeacherScore>>;
}

impl TeacherScorer for TeacherStore {
    /// Looks pairs up by id; the texts are ignored.
    fn score_pairs(&self, pairs: &[PairText]) -> Result<Vec<TeacherScore>> {
        pairs
            .iter()
            .map(|p| {
                self.get(&p.id)
                    .cloned()
                    .ok_or_else(|| Error::MissingTeacher(p.id.clone()))
            })
            .collect()
    }
}
