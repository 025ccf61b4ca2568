//! Answer sentence selection data model.
//!
//! An [`As2Example`] is one question with an ordered list of candidate
//! sentences. Candidate order matters: it breaks score ties.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase ASCII language tag such as `en` or `sw`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Language(String);

impl Language {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        if code.is_empty() || !code.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::InvalidInput(format!(
                "language code `{code}` must be non-empty lowercase ASCII"
            )));
        }
        Ok(Language(code))
    }

    pub fn english() -> Self {
        Language("en".to_string())
    }

    pub fn code(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Language::new(s)
    }
}

impl TryFrom<String> for Language {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Language::new(value)
    }
}

impl From<Language> for String {
    fn from(value: Language) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub language: Language,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub text: String,
    /// Binary gold label; `None` for unlabeled data.
    pub gold: Option<bool>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: Option<bool>) -> Self {
        Candidate {
            id: id.into(),
            text: text.into(),
            gold,
        }
    }
}

/// Join key shared by a (question, candidate) pair across languages.
pub fn pair_id(question_id: &str, candidate_id: &str) -> String {
    format!("{question_id}::{candidate_id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct As2Example {
    pub question: Question,
    pub candidates: Vec<Candidate>,
}

impl As2Example {
    pub fn new(question: Question, candidates: Vec<Candidate>) -> Result<Self> {
        let example = As2Example { question, candidates };
        example.validate()?;
        Ok(example)
    }

    pub fn validate(&self) -> Result<()> {
        let qid = &self.question.id;
        if self.question.text.trim().is_empty() {
            return Err(Error::InvalidInput(format!("question `{qid}` has empty text")));
        }
        if self.candidates.is_empty() {
            return Err(Error::InvalidInput(format!("question `{qid}` has no candidates")));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate candidate id `{}` in question `{qid}`",
                    c.id
                )));
            }
            if c.text.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "candidate `{}` of question `{qid}` has empty text",
                    c.id
                )));
            }
        }
        Ok(())
    }

    pub fn pair_id(&self, candidate: usize) -> String {
        pair_id(&self.question.id, &self.candidates[candidate].id)
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.candidates.iter().all(|c| c.gold.is_some())
    }

    pub fn num_positives(&self) -> usize {
        self.candidates.iter().filter(|c| c.gold == Some(true)).count()
    }

    /// Gold labels for every candidate, or an error naming the first unlabeled one.
    pub fn gold_labels(&self) -> Result<Vec<bool>> {
        self.candidates
            .iter()
            .map(|c| {
                c.gold.ok_or_else(|| {
                    Error::Data(format!(
                        "pair `{}` has no gold label",
                        pair_id(&self.question.id, &c.id)
                    ))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct As2Dataset {
    pub examples: Vec<As2Example>,
    pub split: Split,
    pub language: Language,
}

impl As2Dataset {
    pub fn new(examples: Vec<As2Example>, split: Split, language: Language) -> Result<Self> {
        let dataset = As2Dataset {
            examples,
            split,
            language,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        let mut qids = HashSet::new();
        for ex in &self.examples {
            ex.validate()?;
            if ex.question.language != self.language {
                return Err(Error::InvalidInput(format!(
                    "question `{}` is tagged `{}` but the dataset language is `{}`",
                    ex.question.id, ex.question.language, self.language
                )));
            }
            if !qids.insert(ex.question.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate question id `{}`",
                    ex.question.id
                )));
            }
        }
        Ok(())
    }

    /// Number of flat (question, candidate) pairs.
    pub fn num_pairs(&self) -> usize {
        self.examples.iter().map(|e| e.candidates.len()).sum()
    }

    pub fn num_positives(&self) -> usize {
        self.examples.iter().map(As2Example::num_positives).sum()
    }

    /// Iterates `(pair_id, question, candidate)` in dataset order.
    pub fn pairs(&self) -> impl Iterator<Item = (String, &Question, &Candidate)> {
        self.examples.iter().flat_map(|ex| {
            ex.candidates
                .iter()
                .map(move |c| (pair_id(&ex.question.id, &c.id), &ex.question, c))
        })
    }

    /// Copy with all gold labels removed.
    pub fn without_labels(&self) -> As2Dataset {
        let mut out = self.clone();
        for ex in &mut out.examples {
            for c in &mut ex.candidates {
                c.gold = None;
            }
        }
        out
    }
}
