use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::labels::CanonicalLabels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (valid: train, dev, test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemeRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub ocr_text: Option<String>,
    pub corrected_text: Option<String>,
    pub labels: Option<CanonicalLabels>,
    /// Set by [`repair_text`] when neither text field carries a caption.
    #[serde(default)]
    pub needs_manual_text: bool,
}

/// Straight and typographic double quotation marks. Apostrophes and single quotes are kept.
const DOUBLE_QUOTES: [char; 6] = ['"', '\u{201C}', '\u{201D}', '\u{201E}', '\u{201F}', '\u{FF02}'];

fn strip_double_quotes(text: Option<String>) -> Option<String> {
    let text = text?;
    let stripped: String = text.chars().filter(|c| !DOUBLE_QUOTES.contains(c)).collect();
    if stripped.trim().is_empty() {
        None
    } else {
        Some(stripped)
    }
}

/// Applies the caption repair rules: remove double quotes from both text fields, fall back
/// to the OCR text when no corrected caption exists, and flag records that have neither.
pub fn repair_text(mut record: MemeRecord) -> MemeRecord {
    record.ocr_text = strip_double_quotes(record.ocr_text.take());
    record.corrected_text = strip_double_quotes(record.corrected_text.take());
    if record.corrected_text.is_none() {
        record.corrected_text = record.ocr_text.clone();
    }
    record.needs_manual_text = record.corrected_text.is_none();
    record
}

impl MemeRecord {
    /// Caption used as model input.
    pub fn caption(&self) -> Option<&str> {
        self.corrected_text.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(ocr: Option<&str>, corrected: Option<&str>) -> MemeRecord {
        MemeRecord {
            id: "r1".into(),
            image_path: "img/r1.jpg".into(),
            ocr_text: ocr.map(String::from),
            corrected_text: corrected.map(String::from),
            labels: None,
            needs_manual_text: false,
        }
    }

    #[test]
    fn removes_double_quotes() {
        let r = repair_text(record(None, Some(r#"He said "hello""#)));
        assert_eq!(r.corrected_text.as_deref(), Some("He said hello"));
        let r = repair_text(record(None, Some("\u{201C}curly\u{201D} isn't gone")));
        assert_eq!(r.corrected_text.as_deref(), Some("curly isn't gone"));
    }

    #[test]
    fn copies_ocr_when_corrected_missing() {
        let r = repair_text(record(Some("one does not simply"), None));
        assert_eq!(r.corrected_text.as_deref(), Some("one does not simply"));
        assert!(!r.needs_manual_text);
    }

    #[test]
    fn flags_when_both_missing() {
        let r = repair_text(record(None, None));
        assert!(r.needs_manual_text);
        assert!(r.corrected_text.is_none());
        // a caption made only of quotes is as good as absent
        let r = repair_text(record(Some("\"\""), None));
        assert!(r.needs_manual_text);
    }

    proptest! {
        #[test]
        fn repair_is_idempotent(
            ocr in proptest::option::of("[a-z \"\u{201C}\u{201D}']{0,12}"),
            corrected in proptest::option::of("[a-z \"\u{201C}\u{201D}']{0,12}"),
        ) {
            let once = repair_text(record(ocr.as_deref(), corrected.as_deref()));
            let twice = repair_text(once.clone());
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.corrected_text.is_some() || once.needs_manual_text);
            if let Some(text) = &once.corrected_text {
                prop_assert!(!text.chars().any(|c| DOUBLE_QUOTES.contains(&c)));
            }
        }
    }
}
