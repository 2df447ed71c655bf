//! Line-delimited JSON corpus files.
//!
//! Each line holds exactly four fields:
//!
//! ```text
//! {"sentence": ["Paul", "loves", "his", "dog"], "ground_truth": [1.0, 0.0, 1.0, 0.0], "target": 1, "sentence_idx": 0}
//! ```
//!
//! `target` is 0 (female), 1 (male) or 2 (non-binary).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{CorpusError, GenderVariant, LabeledSentence};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    sentence: Vec<String>,
    ground_truth: Vec<f64>,
    target: usize,
    sentence_idx: usize,
}

impl Record {
    fn into_sentence(self) -> Result<LabeledSentence, CorpusError> {
        let fail = |reason: String| CorpusError::Validation {
            sentence_idx: self.sentence_idx,
            reason,
        };
        let variant = GenderVariant::from_class_id(self.target)
            .ok_or_else(|| fail(format!("target {} is not a class id", self.target)))?;
        let ground_truth = self
            .ground_truth
            .iter()
            .map(|&v| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                other => Err(fail(format!("ground-truth value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let s = LabeledSentence {
            sentence: self.sentence,
            ground_truth,
            sentence_idx: self.sentence_idx,
            variant,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Parses corpus text; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<LabeledSentence>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let record: Record = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            record.into_sentence()
        })
        .collect()
}

pub fn load_jsonl(path: &Path) -> Result<Vec<LabeledSentence>, CorpusError> {
    parse_jsonl(&fs::read_to_string(path)?)
}

/// One record, without the trailing newline.
pub fn to_jsonl_line(s: &LabeledSentence) -> String {
    let mut line = String::from("{\"sentence\": [");
    for (i, w) in s.sentence.iter().enumerate() {
        if i > 0 {
            line.push_str(", ");
        }
        line.push_str(&serde_json::to_string(w).expect("strings always serialize"));
    }
    line.push_str("], \"ground_truth\": [");
    for (i, &f) in s.ground_truth.iter().enumerate() {
        if i > 0 {
            line.push_str(", ");
        }
        line.push_str(if f { "1.0" } else { "0.0" });
    }
    let _ = write!(line, "], \"target\": {}, \"sentence_idx\": {}}}", s.target(), s.sentence_idx);
    line
}

pub fn write_jsonl(sentences: &[LabeledSentence], out: &mut impl std::io::Write) -> std::io::Result<()> {
    for s in sentences {
        writeln!(out, "{}", to_jsonl_line(s))?;
    }
    Ok(())
}

pub fn save_jsonl(sentences: &[LabeledSentence], path: &Path) -> Result<(), CorpusError> {
    for s in sentences {
        s.validate()?;
    }
    let mut buf = Vec::new();
    write_jsonl(sentences, &mut buf)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str =
        r#"{"sentence":["Paul","loves","his","dog"],"ground_truth":[1.0,0.0,1.0,0.0],"target":1,"sentence_idx":0}"#;

    #[test]
    fn parses_published_record() {
        let s = &parse_jsonl(LISTING).unwrap()[0];
        assert_eq!(s.len(), 4);
        assert_eq!(s.ground_truth, [true, false, true, false]);
        assert_eq!(s.variant, GenderVariant::Male);
        assert_eq!(s.sentence_idx, 0);
    }

    #[test]
    fn serialized_line_matches_listing_layout() {
        let s = parse_jsonl(LISTING).unwrap().remove(0);
        let line = to_jsonl_line(&s);
        assert_eq!(
            line,
            r#"{"sentence": ["Paul", "loves", "his", "dog"], "ground_truth": [1.0, 0.0, 1.0, 0.0], "target": 1, "sentence_idx": 0}"#
        );
        assert!(line.contains("\"target\": 1"));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(parse_jsonl("").unwrap().is_empty());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        save_jsonl(&[], &p).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 0);
        assert!(load_jsonl(&p).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{LISTING}\n{{not json\n");
        assert!(matches!(parse_jsonl(&text), Err(CorpusError::Parse { line: 2, .. })));
    }

    #[test]
    fn length_mismatch_names_sentence() {
        let bad = r#"{"sentence":["a","b"],"ground_truth":[1.0],"target":0,"sentence_idx":42}"#;
        assert!(matches!(
            parse_jsonl(bad),
            Err(CorpusError::Validation { sentence_idx: 42, .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_target_and_flags() {
        let bad_target = r#"{"sentence":["a"],"ground_truth":[1.0],"target":3,"sentence_idx":1}"#;
        assert!(parse_jsonl(bad_target).is_err());
        let bad_flag = r#"{"sentence":["a"],"ground_truth":[0.5],"target":0,"sentence_idx":1}"#;
        assert!(parse_jsonl(bad_flag).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let s = parse_jsonl(LISTING).unwrap();
        let r = save_jsonl(&s, Path::new("/nonexistent-dir/x/y.jsonl"));
        assert!(matches!(r, Err(CorpusError::Io(_))));
    }

    #[test]
    fn escapes_quotes() {
        let mut s = parse_jsonl(LISTING).unwrap().remove(0);
        s.sentence[1] = "\"loves\"".into();
        let back = parse_jsonl(&to_jsonl_line(&s)).unwrap().remove(0);
        assert_eq!(back, s);
    }
}
