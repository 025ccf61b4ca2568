//! WikiQA-style tab-separated files.
//!
//! Two layouts are accepted: the compact five-column form
//! `question_id, question, sentence_id, sentence, label` and the seven-column
//! layout of the original WikiQA release
//! (`QuestionID, Question, DocumentID, DocumentTitle, SentenceID, Sentence, Label`).
//! A header row is optional and detected from its label column.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::as2::{As2Dataset, As2Example, Candidate, Language, Question, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Columns {
    qid: usize,
    question: usize,
    sid: usize,
    sentence: usize,
    label: usize,
    width: usize,
}

const FIVE: Columns = Columns {
    qid: 0,
    question: 1,
    sid: 2,
    sentence: 3,
    label: 4,
    width: 5,
};

const SEVEN: Columns = Columns {
    qid: 0,
    question: 1,
    sid: 4,
    sentence: 5,
    label: 6,
    width: 7,
};

fn layout_for(width: usize) -> Option<Columns> {
    match width {
        5 => Some(FIVE),
        7 => Some(SEVEN),
        _ => None,
    }
}

pub fn parse_wikiqa_tsv(path: &Path, language: Language, split: Split) -> Result<As2Dataset> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut layout: Option<Columns> = None;
    let mut examples: Vec<As2Example> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = Default::default();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let cols = match layout {
            Some(c) => c,
            None => {
                let c = layout_for(fields.len()).ok_or_else(|| {
                    Error::parse(
                        path,
                        line_no,
                        format!("expected 5 or 7 columns, found {}", fields.len()),
                    )
                })?;
                layout = Some(c);
                let label = fields[c.label].trim();
                if label != "0" && label != "1" {
                    // header row
                    continue;
                }
                c
            }
        };
        if fields.len() != cols.width {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} columns, found {}", cols.width, fields.len()),
            ));
        }
        let gold = match fields[cols.label].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("label must be 0 or 1, got `{other}`"),
                ))
            }
        };
        let qid = fields[cols.qid];
        let slot = match index.get(qid) {
            Some(&slot) => slot,
            None => {
                index.insert(qid.to_string(), examples.len());
                examples.push(As2Example {
                    question: Question {
                        id: qid.to_string(),
                        text: fields[cols.question].to_string(),
                        language: language.clone(),
                    },
                    candidates: Vec::new(),
                });
                examples.len() - 1
            }
        };
        examples[slot]
            .candidates
            .push(Candidate::new(fields[cols.sid], fields[cols.sentence], Some(gold)));
    }
    for ex in &examples {
        ex.validate()?;
    }
    As2Dataset::new(examples, split, language)
}

/// Writes the five-column layout with a header row.
pub fn write_wikiqa_tsv(dataset: &As2Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "question_id\tquestion\tsentence_id\tsentence\tlabel").map_err(io)?;
    for ex in &dataset.examples {
        for c in &ex.candidates {
            let label = c
                .gold
                .ok_or_else(|| Error::Data(format!("pair `{}::{}` has no gold label", ex.question.id, c.id)))?;
            for field in [&ex.question.id, &ex.question.text, &c.id, &c.text] {
                if field.contains(['\t', '\n']) {
                    return Err(Error::Data(format!("field {field:?} cannot be written as TSV")));
                }
            }
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                ex.question.id, ex.question.text, c.id, c.text, label as u8
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tsv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const FIXTURE: &str = "q1\tWho?\ts1\tA.\t0\n\
                           q1\tWho?\ts2\tB.\t1\n\
                           q1\tWho?\ts3\tC.\t0\n\
                           q2\tWhat?\ts1\tD.\t0\n\
                           q2\tWhat?\ts2\tE.\t0\n\
                           q2\tWhat?\ts3\tF.\t1\n";

    #[test]
    fn groups_rows_by_question() {
        let f = tsv(FIXTURE);
        let ds = parse_wikiqa_tsv(f.path(), Language::english(), Split::Train).unwrap();
        assert_eq!(ds.examples.len(), 2);
        assert_eq!(ds.num_pairs(), 6);
        assert_eq!(ds.examples[1].candidates[2].id, "s3");
        assert_eq!(ds.examples[1].candidates[2].gold, Some(true));
    }

    #[test]
    fn accepts_header_and_seven_columns() {
        let f = tsv(
            "QuestionID\tQuestion\tDocumentID\tDocumentTitle\tSentenceID\tSentence\tLabel\n\
             Q1\thow are glacier caves formed?\tD1\tGlacier cave\tD1-0\tA partly submerged glacier cave.\t0\n\
             Q1\thow are glacier caves formed?\tD1\tGlacier cave\tD1-1\tThe ice facade is approximately 60 m high\t1\n",
        );
        let ds = parse_wikiqa_tsv(f.path(), Language::english(), Split::Dev).unwrap();
        assert_eq!(ds.examples.len(), 1);
        assert_eq!(ds.examples[0].candidates[1].id, "D1-1");
        assert_eq!(ds.num_positives(), 1);
    }

    #[test]
    fn bad_label_reports_line() {
        let f = tsv("q1\tWho?\ts1\tA.\t0\nq1\tWho?\ts2\tB.\t2\n");
        let err = parse_wikiqa_tsv(f.path(), Language::english(), Split::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_column_count_reports_line() {
        let f = tsv("q1\tWho?\ts1\tA.\t0\nq1\tWho?\ts2\t1\n");
        let err = parse_wikiqa_tsv(f.path(), Language::english(), Split::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn tsv_round_trip() {
        let f = tsv(FIXTURE);
        let ds = parse_wikiqa_tsv(f.path(), Language::english(), Split::Train).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_wikiqa_tsv(&ds, out.path()).unwrap();
        let again = parse_wikiqa_tsv(out.path(), Language::english(), Split::Train).unwrap();
        assert_eq!(ds, again);
    }
}
