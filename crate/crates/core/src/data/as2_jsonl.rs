use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::jsonl::{read_records, write_records};
use crate::as2::{As2Dataset, As2Example, Candidate, Language, Question, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    cid: String,
    text: String,
    /// Required key; `null` marks an unlabeled pair.
    #[serde(deserialize_with = "label_value")]
    label: Option<u8>,
}

fn label_value<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u8>, D::Error> {
    let v = Option::<u8>::deserialize(d)?;
    match v {
        None | Some(0) | Some(1) => Ok(v),
        Some(other) => Err(serde::de::Error::custom(format!(
            "label must be 0, 1 or null, got {other}"
        ))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ExampleRecord {
    qid: String,
    question: String,
    language: Language,
    split: Split,
    candidates: Vec<CandidateRecord>,
}

/// Writes one JSON object per question.
pub fn write_jsonl(dataset: &As2Dataset, path: &Path) -> Result<()> {
    let records: Vec<ExampleRecord> = dataset
        .examples
        .iter()
        .map(|ex| ExampleRecord {
            qid: ex.question.id.clone(),
            question: ex.question.text.clone(),
            language: dataset.language.clone(),
            split: dataset.split,
            candidates: ex
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    cid: c.id.clone(),
                    text: c.text.clone(),
                    label: c.gold.map(u8::from),
                })
                .collect(),
        })
        .collect();
    write_records(path, &records)
}

/// Reads a dataset written by [`write_jsonl`]. All records must agree on
/// language and split.
pub fn read_jsonl(path: &Path) -> Result<As2Dataset> {
    let records: Vec<(usize, ExampleRecord)> = read_records(path)?;
    let Some((_, first)) = records.first() else {
        return Err(Error::Data(format!("{}: no records", path.display())));
    };
    let language = first.language.clone();
    let split = first.split;
    let mut examples = Vec::with_capacity(records.len());
    for (line, r) in records {
        if r.language != language || r.split != split {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "record is {}/{} but the file started with {language}/{split}",
                    r.language, r.split
                ),
            ));
        }
        let question = Question {
            id: r.qid,
            text: r.question,
            language: r.language,
        };
        let candidates = r
            .candidates
            .into_iter()
            .map(|c| Candidate::new(c.cid, c.text, c.label.map(|l| l == 1)))
            .collect();
        let ex = As2Example::new(question, candidates).map_err(|e| Error::parse(path, line, e.to_string()))?;
        examples.push(ex);
    }
    As2Dataset::new(examples, split, language)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn missing_label_key_is_a_schema_error() {
        let f = write(
            r#"{"qid":"q1","question":"who?","language":"en","split":"train","candidates":[{"cid":"c0","text":"me"}]}"#,
        );
        let err = read_jsonl(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn null_label_reads_as_unlabeled() {
        let f = write(
            r#"{"qid":"q1","question":"who?","language":"en","split":"train","candidates":[{"cid":"c0","text":"me","label":null}]}"#,
        );
        let ds = read_jsonl(f.path()).unwrap();
        assert_eq!(ds.examples[0].candidates[0].gold, None);
    }

    #[test]
    fn rejects_bad_label_and_mixed_split() {
        let f = write(
            r#"{"qid":"q1","question":"who?","language":"en","split":"dev","candidates":[{"cid":"c0","text":"me","label":2}]}"#,
        );
        assert!(read_jsonl(f.path()).is_err());
        let f = write(concat!(
            r#"{"qid":"q1","question":"who?","language":"en","split":"dev","candidates":[{"cid":"c0","text":"me","label":1}]}"#,
            "\n",
            r#"{"qid":"q2","question":"who?","language":"en","split":"test","candidates":[{"cid":"c0","text":"me","label":1}]}"#,
        ));
        assert!(matches!(
            read_jsonl(f.path()).unwrap_err(),
            Error::Parse { line: 2, .. }
        ));
    }

    fn arb_dataset() -> impl Strategy<Value = As2Dataset> {
        let cand = ("[a-zA-Z0-9 ]{0,12}[a-z]", proptest::option::of(any::<bool>()));
        let example = ("[^\n]{0,10}[a-z]", proptest::collection::vec(cand, 1..5));
        (
            proptest::collection::vec(example, 1..6),
            prop_oneof![Just(Split::Train), Just(Split::Dev), Just(Split::Test)],
        )
            .prop_map(|(examples, split)| {
                let lang = Language::new("sw").unwrap();
                let examples = examples
                    .into_iter()
                    .enumerate()
                    .map(|(i, (q, cands))| As2Example {
                        question: Question {
                            id: format!("q{i}"),
                            text: q,
                            language: lang.clone(),
                        },
                        candidates: cands
                            .into_iter()
                            .enumerate()
                            .map(|(j, (t, g))| Candidate::new(format!("c{j}"), t, g))
                            .collect(),
                    })
                    .collect();
                As2Dataset {
                    examples,
                    split,
                    language: lang,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn jsonl_round_trip(ds in arb_dataset()) {
            let f = tempfile::NamedTempFile::new().unwrap();
            write_jsonl(&ds, f.path()).unwrap();
            prop_assert_eq!(read_jsonl(f.path()).unwrap(), ds);
        }
    }
}
