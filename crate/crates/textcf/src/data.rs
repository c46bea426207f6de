//! Dataset loading and preprocessing: SST-2 and QNLI in GLUE TSV layout,
//! lowercase/whitespace normalization, deterministic seeded sampling, and the
//! pair encoding that turns a QNLI (question, sentence) into one classifier
//! input.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator token joining a QNLI question and sentence.
pub const SEP_TOKEN: &str = "[SEP]";
/// The exact separator substring an encoded pair contains once.
pub const PAIR_SEPARATOR: &str = " [SEP] ";

/// QNLI label encoding used throughout the toolkit, chosen to match the
/// fine-tuned classifier's label order: entailment = 0, not_entailment = 1.
pub const QNLI_ENTAILMENT: u8 = 0;
pub const QNLI_NOT_ENTAILMENT: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Sst2,
    Qnli,
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetName::Sst2 => write!(f, "sst2"),
            DatasetName::Qnli => write!(f, "qnli"),
        }
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "sst2" | "sst-2" => Ok(DatasetName::Sst2),
            "qnli" => Ok(DatasetName::Qnli),
            other => Err(Error::InvalidInput(format!("unknown dataset '{other}'"))),
        }
    }
}

/// One dataset instance with its gold label. SST-2 rows carry a single text;
/// QNLI rows carry a question/sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub dataset: DatasetName,
    #[serde(flatten)]
    pub content: ExampleContent,
    pub gold_label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExampleContent {
    Pair { question: String, sentence: String },
    Text { text: String },
}

impl ExampleRecord {
    /// The single string handed to the classifier: the text itself for SST-2,
    /// the encoded pair for QNLI.
    pub fn classifier_input(&self) -> Result<String> {
        match &self.content {
            ExampleContent::Text { text } => Ok(text.clone()),
            ExampleContent::Pair { question, sentence } => encode_pair(question, sentence),
        }
    }

    /// The sentence component of a QNLI pair, if this is one.
    pub fn pair_sentence(&self) -> Option<&str> {
        match &self.content {
            ExampleContent::Pair { sentence, .. } => Some(sentence),
            ExampleContent::Text { .. } => None,
        }
    }
}

/// Lowercase, collapse internal whitespace runs to single spaces, strip both
/// ends. Idempotent; empty in, empty out.
pub fn preprocess(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// [`preprocess`], but an embedded pair separator survives in canonical
/// uppercase form so preprocessing QNLI-shaped text does not destroy it.
pub fn preprocess_keep_sep(text: &str) -> String {
    let lower = text.to_lowercase();
    match lower.find("[sep]") {
        None => preprocess(text),
        Some(at) => {
            let before = preprocess(&text[..at]);
            let after = preprocess(&text[at + "[sep]".len()..]);
            if before.is_empty() {
                after
            } else if after.is_empty() {
                before
            } else {
                format!("{before}{PAIR_SEPARATOR}{after}")
            }
        }
    }
}

/// Join a preprocessed question and sentence into one classifier input.
pub fn encode_pair(question: &str, sentence: &str) -> Result<String> {
    if question.trim().is_empty() || sentence.trim().is_empty() {
        return Err(Error::InvalidInput(
            "both pair components must be non-empty".into(),
        ));
    }
    Ok(format!("{question}{PAIR_SEPARATOR}{sentence}"))
}

/// Split an encoded pair at the first separator.
pub fn split_pair(encoded: &str) -> Option<(&str, &str)> {
    encoded.split_once(PAIR_SEPARATOR)
}

/// Load a dataset file, preprocess every row, and sample `n` records without
/// replacement, fully determined by `seed`. Records come back in source order.
pub fn load_dataset(
    name: DatasetName,
    path: &Path,
    n: usize,
    seed: u64,
) -> Result<Vec<ExampleRecord>> {
    let all = read_tsv(name, path)?;
    if n > all.len() {
        return Err(Error::InvalidInput(format!(
            "requested {n} samples but {} has only {} rows",
            name,
            all.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, all.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| all[i].clone()).collect())
}

/// Parse a GLUE-format TSV: `sentence<tab>label` for SST-2 and
/// `index<tab>question<tab>sentence<tab>label` for QNLI, header row included.
fn read_tsv(name: DatasetName, path: &Path) -> Result<Vec<ExampleRecord>> {
    let file = File::open(path).map_err(|e| {
        Error::Ingestion(format!(
            "cannot open {name} dataset at {}: {e}",
            path.display()
        ))
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Ingestion(format!("{}: empty dataset file", path.display())))??;
    let columns: Vec<&str> = header.split('\t').collect();
    let find = |col: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| c.trim() == col)
            .ok_or_else(|| {
                Error::Ingestion(format!(
                    "{}: missing required column '{col}' (header: {header})",
                    path.display()
                ))
            })
    };
    let mut records = Vec::new();
    match name {
        DatasetName::Sst2 => {
            let text_col = find("sentence")?;
            let label_col = find("label")?;
            for (row, line) in lines.enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                let text = preprocess(field(&fields, text_col, path, row)?);
                let label = parse_binary_label(field(&fields, label_col, path, row)?, path, row)?;
                records.push(ExampleRecord {
                    id: format!("sst2-{row}"),
                    dataset: name,
                    content: ExampleContent::Text { text },
                    gold_label: label,
                });
            }
        }
        DatasetName::Qnli => {
            let question_col = find("question")?;
            let sentence_col = find("sentence")?;
            let label_col = find("label")?;
            for (row, line) in lines.enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                let question = preprocess(field(&fields, question_col, path, row)?);
                let sentence = preprocess(field(&fields, sentence_col, path, row)?);
                let raw_label = field(&fields, label_col, path, row)?.trim();
                let label = match raw_label {
                    "entailment" => QNLI_ENTAILMENT,
                    "not_entailment" => QNLI_NOT_ENTAILMENT,
                    other => {
                        return Err(Error::Ingestion(format!(
                            "{} row {row}: unknown QNLI label '{other}'",
                            path.display()
                        )))
                    }
                };
                records.push(ExampleRecord {
                    id: format!("qnli-{row}"),
                    dataset: name,
                    content: ExampleContent::Pair { question, sentence },
                    gold_label: label,
                });
            }
        }
    }
    Ok(records)
}

fn field<'a>(fields: &[&'a str], idx: usize, path: &Path, row: usize) -> Result<&'a str> {
    fields.get(idx).copied().ok_or_else(|| {
        Error::Ingestion(format!(
            "{} row {row}: expected at least {} tab-separated fields",
            path.display(),
            idx + 1
        ))
    })
}

fn parse_binary_label(raw: &str, path: &Path, row: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Ingestion(format!(
            "{} row {row}: label '{other}' is not 0 or 1",
            path.display()
        ))),
    }
}

/// Persist records as line-delimited JSON.
pub fn write_records(path: &Path, records: &[ExampleRecord]) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    let mut file = File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Read records persisted by [`write_records`].
pub fn read_records(path: &Path) -> Result<Vec<ExampleRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn preprocess_applies_all_rules() {
        assert_eq!(preprocess("I  Liked The Movie "), "i liked the movie");
        assert_eq!(preprocess("A\t\tB"), "a b");
        assert_eq!(preprocess("already clean"), "already clean");
        assert_eq!(preprocess(""), "");
    }

    #[test]
    fn preprocess_is_idempotent() {
        for s in ["I  Liked The Movie ", "A\t\tB", "", "x", "Ünïcode   Text"] {
            let once = preprocess(s);
            assert_eq!(preprocess(&once), once);
        }
    }

    #[test]
    fn preprocess_keep_sep_preserves_separator() {
        assert_eq!(
            preprocess_keep_sep("What is X? [SEP] X is Y."),
            "what is x? [SEP] x is y."
        );
        assert_eq!(
            preprocess_keep_sep("Plain  Sentence"),
            "plain sentence"
        );
        // the separator match is case-insensitive on input
        assert_eq!(preprocess_keep_sep("a [sep] b"), "a [SEP] b");
    }

    #[test]
    fn encode_pair_formats_and_round_trips() {
        let encoded = encode_pair("what is x?", "x is y.").unwrap();
        assert_eq!(encoded, "what is x? [SEP] x is y.");
        let (q, s) = split_pair(&encoded).unwrap();
        assert_eq!(q, "what is x?");
        assert_eq!(s, "x is y.");
    }

    #[test]
    fn encode_pair_rejects_empty_parts() {
        assert!(encode_pair("", "x").is_err());
        assert!(encode_pair("x", "  ").is_err());
    }

    fn write_sst2_fixture(rows: usize) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "sentence\tlabel").unwrap();
        for i in 0..rows {
            writeln!(f, "The Movie Number {i} was Great\t{}", i % 2).unwrap();
        }
        f
    }

    #[test]
    fn load_dataset_samples_deterministically() {
        let f = write_sst2_fixture(100);
        let a = load_dataset(DatasetName::Sst2, f.path(), 10, 7).unwrap();
        let b = load_dataset(DatasetName::Sst2, f.path(), 10, 7).unwrap();
        let c = load_dataset(DatasetName::Sst2, f.path(), 10, 8).unwrap();
        assert_eq!(a.len(), 10);
        let ids: Vec<_> = a.iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids, b.iter().map(|r| r.id.clone()).collect::<Vec<_>>());
        assert_ne!(ids, c.iter().map(|r| r.id.clone()).collect::<Vec<_>>());
        // no duplicates
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10);
        // preprocessing applied
        assert!(a.iter().all(|r| match &r.content {
            ExampleContent::Text { text } => text.chars().all(|c| !c.is_uppercase()),
            _ => false,
        }));
    }

    #[test]
    fn load_dataset_rejects_oversized_n() {
        let f = write_sst2_fixture(5);
        let err = load_dataset(DatasetName::Sst2, f.path(), 1_000_000_000, 7);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn load_dataset_names_missing_path() {
        let err = load_dataset(DatasetName::Sst2, Path::new("/nonexistent/sst2.tsv"), 1, 7);
        match err {
            Err(Error::Ingestion(msg)) => assert!(msg.contains("/nonexistent/sst2.tsv")),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn load_qnli_maps_labels() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "index\tquestion\tsentence\tlabel").unwrap();
        writeln!(f, "0\tWhat is X?\tX is Y.\tentailment").unwrap();
        writeln!(f, "1\tWhat is Z?\tUnrelated.\tnot_entailment").unwrap();
        let records = load_dataset(DatasetName::Qnli, f.path(), 2, 1).unwrap();
        assert_eq!(records[0].gold_label, QNLI_ENTAILMENT);
        assert_eq!(records[1].gold_label, QNLI_NOT_ENTAILMENT);
        let input = records[0].classifier_input().unwrap();
        assert_eq!(input, "what is x? [SEP] x is y.");
        assert_eq!(input.matches(PAIR_SEPARATOR).count(), 1);
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let f = write_sst2_fixture(10);
        let records = load_dataset(DatasetName::Sst2, f.path(), 5, 3).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_records(out.path(), &records).unwrap();
        let back = read_records(out.path()).unwrap();
        assert_eq!(records, back);
    }
}
