//! Column names and raw label vocabulary of the input CSV.
//!
//! The shipped default covers the public Memotion release (`labels.csv` of the 7k set and the
//! evaluation CSV) plus the canonical names used in this crate. Both parts can be overridden
//! with a TOML mapping file:
//!
//! ```toml
//! [columns]
//! image = ["image_name", "Image_name"]
//!
//! [labels.funny]
//! hilarious = "very"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labels::{Intensity, Sentiment};
use crate::error::{Error, Result};

/// Accepted header names for every logical column. Matching ignores ASCII case and
/// surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub id: Vec<String>,
    pub image: Vec<String>,
    pub ocr_text: Vec<String>,
    pub corrected_text: Vec<String>,
    pub sentiment: Vec<String>,
    pub funny: Vec<String>,
    pub sarcasm: Vec<String>,
    pub offensive: Vec<String>,
    pub motivational: Vec<String>,
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            id: names(&["id", ""]),
            image: names(&["image_name", "image", "image_path"]),
            ocr_text: names(&["text_ocr", "ocr_extracted_text", "ocr_text"]),
            corrected_text: names(&["text_corrected", "corrected_text"]),
            sentiment: names(&["overall_sentiment", "sentiment"]),
            funny: names(&["humour", "humor", "funny"]),
            sarcasm: names(&["sarcasm", "sarcastic"]),
            offensive: names(&["offensive"]),
            motivational: names(&["motivational"]),
        }
    }
}

/// Raw label string → canonical value. Keys are matched after trimming and lowercasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelVocabulary {
    pub sentiment: BTreeMap<String, Sentiment>,
    pub funny: BTreeMap<String, Intensity>,
    pub sarcasm: BTreeMap<String, Intensity>,
    pub offensive: BTreeMap<String, Intensity>,
    pub motivational: BTreeMap<String, bool>,
}

fn map<V: Copy>(entries: &[(&str, V)]) -> BTreeMap<String, V> {
    entries.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn with_canonical_intensity(mut m: BTreeMap<String, Intensity>) -> BTreeMap<String, Intensity> {
    for (name, value) in [
        ("not", Intensity::Not),
        ("slightly", Intensity::Slightly),
        ("mildly", Intensity::Mildly),
        ("very", Intensity::Very),
    ] {
        m.entry(name.to_string()).or_insert(value);
    }
    m
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        use Intensity::*;
        LabelVocabulary {
            sentiment: map(&[
                ("very_negative", Sentiment::Negative),
                ("negative", Sentiment::Negative),
                ("neutral", Sentiment::Neutral),
                ("positive", Sentiment::Positive),
                ("very_positive", Sentiment::Positive),
            ]),
            funny: with_canonical_intensity(map(&[
                ("not_funny", Not),
                ("funny", Slightly),
                ("very_funny", Mildly),
                ("hilarious", Very),
            ])),
            sarcasm: with_canonical_intensity(map(&[
                ("not_sarcastic", Not),
                ("general", Slightly),
                ("twisted_meaning", Mildly),
                ("very_twisted", Very),
            ])),
            offensive: with_canonical_intensity(map(&[
                ("not_offensive", Not),
                ("slight", Slightly),
                ("very_offensive", Mildly),
                ("hateful_offensive", Very),
            ])),
            motivational: map(&[
                ("not_motivational", false),
                ("motivational", true),
                ("no", false),
                ("yes", true),
                ("0", false),
                ("1", true),
            ]),
        }
    }
}

fn lookup<V: Copy>(m: &BTreeMap<String, V>, raw: &str) -> Option<V> {
    let key = raw.trim().to_ascii_lowercase();
    m.get(&key).copied()
}

impl LabelVocabulary {
    pub fn sentiment(&self, raw: &str) -> Option<Sentiment> {
        lookup(&self.sentiment, raw)
    }

    pub fn funny(&self, raw: &str) -> Option<Intensity> {
        lookup(&self.funny, raw)
    }

    pub fn sarcasm(&self, raw: &str) -> Option<Intensity> {
        lookup(&self.sarcasm, raw)
    }

    pub fn offensive(&self, raw: &str) -> Option<Intensity> {
        lookup(&self.offensive, raw)
    }

    pub fn motivational(&self, raw: &str) -> Option<bool> {
        lookup(&self.motivational, raw)
    }

    fn normalize_keys(&mut self) {
        fn norm<V>(m: &mut BTreeMap<String, V>) {
            let old = std::mem::take(m);
            *m = old
                .into_iter()
                .map(|(k, v)| (k.trim().to_ascii_lowercase(), v))
                .collect();
        }
        norm(&mut self.sentiment);
        norm(&mut self.funny);
        norm(&mut self.sarcasm);
        norm(&mut self.offensive);
        norm(&mut self.motivational);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSchema {
    pub columns: ColumnMapping,
    pub labels: LabelVocabulary,
}

/// On-disk layout of a mapping file. Label tables extend (and may override) the defaults;
/// column lists replace the defaults for the columns they name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    #[serde(default)]
    columns: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    labels: PartialVocabulary,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialVocabulary {
    #[serde(default)]
    sentiment: BTreeMap<String, Sentiment>,
    #[serde(default)]
    funny: BTreeMap<String, Intensity>,
    #[serde(default)]
    sarcasm: BTreeMap<String, Intensity>,
    #[serde(default)]
    offensive: BTreeMap<String, Intensity>,
    #[serde(default)]
    motivational: BTreeMap<String, bool>,
}

impl DatasetSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("mapping file: {e}")))?;
        let mut schema = DatasetSchema::default();
        for (column, accepted) in file.columns {
            let slot = match column.as_str() {
                "id" => &mut schema.columns.id,
                "image" => &mut schema.columns.image,
                "ocr_text" => &mut schema.columns.ocr_text,
                "corrected_text" => &mut schema.columns.corrected_text,
                "sentiment" => &mut schema.columns.sentiment,
                "funny" => &mut schema.columns.funny,
                "sarcasm" => &mut schema.columns.sarcasm,
                "offensive" => &mut schema.columns.offensive,
                "motivational" => &mut schema.columns.motivational,
                other => return Err(Error::Config(format!("mapping file: unknown column {other:?}"))),
            };
            *slot = accepted;
        }
        let v = &mut schema.labels;
        v.sentiment.extend(file.labels.sentiment);
        v.funny.extend(file.labels.funny);
        v.sarcasm.extend(file.labels.sarcasm);
        v.offensive.extend(file.labels.offensive);
        v.motivational.extend(file.labels.motivational);
        v.normalize_keys();
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_vocabulary_covers_official_strings() {
        let v = LabelVocabulary::default();
        assert_eq!(v.funny("not_funny"), Some(Intensity::Not));
        assert_eq!(v.funny("hilarious"), Some(Intensity::Very));
        assert_eq!(v.sarcasm("general"), Some(Intensity::Slightly));
        assert_eq!(v.offensive("hateful_offensive"), Some(Intensity::Very));
        assert_eq!(v.sentiment(" Very_Positive "), Some(Sentiment::Positive));
        assert_eq!(v.motivational("not_motivational"), Some(false));
        assert_eq!(v.funny("slightly"), Some(Intensity::Slightly));
        assert_eq!(v.funny("rofl"), None);
    }

    #[test]
    fn mapping_file_extends_vocabulary_and_replaces_columns() {
        let schema = DatasetSchema::from_toml_str(
            r#"
            [columns]
            image = ["meme_file"]

            [labels.funny]
            ROFL = "very"
            "#,
        )
        .unwrap();
        assert_eq!(schema.columns.image, vec!["meme_file".to_string()]);
        assert_eq!(schema.labels.funny("rofl"), Some(Intensity::Very));
        assert_eq!(schema.labels.funny("not_funny"), Some(Intensity::Not));
    }

    #[test]
    fn mapping_file_rejects_unknown_column() {
        let err = DatasetSchema::from_toml_str("[columns]\nfoo = [\"x\"]").unwrap_err();
        assert!(err.to_string().contains("foo"));
    }
}
