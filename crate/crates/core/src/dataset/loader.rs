use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::CanonicalLabels;
use super::record::{repair_text, MemeRecord, Split};
use crate::encoders::load_rgb;
use super::schema::{ColumnMapping, DatasetSchema};
use crate::error::{Error, Result};

/// A data row that could not be turned into a [`MemeRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the source file, when known.
    pub line: Option<u64>,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectsReport {
    pub source: PathBuf,
    pub split: Split,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub split: Split,
    pub records: Vec<MemeRecord>,
    pub rejects: RejectsReport,
}

struct ColumnIndex {
    id: Option<usize>,
    image: usize,
    ocr_text: Option<usize>,
    corrected_text: Option<usize>,
    labels: Option<[usize; 5]>,
}

fn find(headers: &csv::StringRecord, accepted: &[String]) -> Option<usize> {
    accepted.iter().find_map(|name| {
        let want = name.trim().to_ascii_lowercase();
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}').to_ascii_lowercase() == want)
    })
}

fn resolve_columns(
    path: &Path,
    headers: &csv::StringRecord,
    columns: &ColumnMapping,
) -> Result<ColumnIndex> {
    let missing = |column: &'static str, accepted: &[String]| Error::MissingColumn {
        path: path.to_path_buf(),
        column,
        accepted: accepted.join(", "),
    };
    let image = find(headers, &columns.image).ok_or_else(|| missing("image", &columns.image))?;
    let ocr_text = find(headers, &columns.ocr_text);
    let corrected_text = find(headers, &columns.corrected_text);
    if ocr_text.is_none() && corrected_text.is_none() {
        return Err(missing("corrected_text", &columns.corrected_text));
    }

    let label_columns: [(&'static str, &Vec<String>); 5] = [
        ("sentiment", &columns.sentiment),
        ("funny", &columns.funny),
        ("sarcasm", &columns.sarcasm),
        ("offensive", &columns.offensive),
        ("motivational", &columns.motivational),
    ];
    let found: Vec<Option<usize>> = label_columns
        .iter()
        .map(|(_, accepted)| find(headers, accepted))
        .collect();
    let labels = if found.iter().all(Option::is_none) {
        None
    } else {
        let mut idx = [0usize; 5];
        for (slot, ((name, accepted), hit)) in idx.iter_mut().zip(label_columns.iter().zip(&found)) {
            *slot = hit.ok_or_else(|| missing(name, accepted))?;
        }
        Some(idx)
    };

    Ok(ColumnIndex {
        id: find(headers, &columns.id),
        image,
        ocr_text,
        corrected_text,
        labels,
    })
}

fn field(row: &csv::StringRecord, idx: usize) -> Option<String> {
    row.get(idx)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
}

fn parse_labels(
    row: &csv::StringRecord,
    idx: &[usize; 5],
    schema: &DatasetSchema,
) -> std::result::Result<Option<CanonicalLabels>, String> {
    let raw: Vec<Option<String>> = idx.iter().map(|&i| field(row, i)).collect();
    if raw.iter().all(Option::is_none) {
        return Ok(None);
    }
    let get = |i: usize, name: &str| {
        raw[i]
            .clone()
            .ok_or_else(|| format!("missing {name} label"))
    };
    let v = &schema.labels;
    let unknown = |name: &str, value: &str| format!("unknown {name} label {value:?}");

    let s = get(0, "sentiment")?;
    let f = get(1, "funny")?;
    let sa = get(2, "sarcasm")?;
    let o = get(3, "offensive")?;
    let m = get(4, "motivational")?;
    Ok(Some(CanonicalLabels {
        sentiment: v.sentiment(&s).ok_or_else(|| unknown("sentiment", &s))?,
        funny_scale: v.funny(&f).ok_or_else(|| unknown("funny", &f))?,
        sarcasm_scale: v.sarcasm(&sa).ok_or_else(|| unknown("sarcasm", &sa))?,
        offensive_scale: v.offensive(&o).ok_or_else(|| unknown("offensive", &o))?,
        motivational: v.motivational(&m).ok_or_else(|| unknown("motivational", &m))?,
    }))
}

/// Reads one split from a comma-separated file with quoted fields.
///
/// Rows that fail to parse, or carry label strings outside the vocabulary, are collected in
/// the rejects report rather than dropped. A missing file or missing required column is fatal.
pub fn load_split(
    csv_path: &Path,
    image_dir: &Path,
    split: Split,
    schema: &DatasetSchema,
) -> Result<LoadedSplit> {
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: csv_path.to_path_buf(),
            source,
        })?
        .clone();
    let columns = resolve_columns(csv_path, &headers, &schema.columns)?;

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                rejects.push(Reject {
                    line: e.position().map(|p| p.line()),
                    id: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line());
        let image_name = field(&row, columns.image);
        let id = columns
            .id
            .and_then(|i| field(&row, i))
            .or_else(|| {
                image_name.as_deref().map(|name| {
                    Path::new(name)
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| name.to_string())
                })
            });
        let Some(image_name) = image_name else {
            rejects.push(Reject {
                line,
                id,
                reason: "missing image filename".into(),
            });
            continue;
        };
        let id = id.unwrap_or_else(|| image_name.clone());
        let labels = match &columns.labels {
            None => None,
            Some(idx) => match parse_labels(&row, idx, schema) {
                Ok(labels) => labels,
                Err(reason) => {
                    rejects.push(Reject {
                        line,
                        id: Some(id),
                        reason,
                    });
                    continue;
                }
            },
        };
        records.push(MemeRecord {
            id,
            image_path: image_dir.join(&image_name),
            ocr_text: columns.ocr_text.and_then(|i| field(&row, i)),
            corrected_text: columns.corrected_text.and_then(|i| field(&row, i)),
            labels,
            needs_manual_text: false,
        });
    }

    Ok(LoadedSplit {
        split,
        records,
        rejects: RejectsReport {
            source: csv_path.to_path_buf(),
            split,
            rejects,
        },
    })
}

/// Loads a split, repairs caption text and, when `check_images` is set, moves records whose
/// image is missing or undecodable to the rejects report. Truncated images are accepted.
pub fn preprocess_split(
    csv_path: &Path,
    image_dir: &Path,
    split: Split,
    schema: &DatasetSchema,
    check_images: bool,
) -> Result<LoadedSplit> {
    if !image_dir.is_dir() {
        return Err(Error::io(
            image_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "image directory not found"),
        ));
    }
    let mut loaded = load_split(csv_path, image_dir, split, schema)?;
    let mut kept = Vec::with_capacity(loaded.records.len());
    for record in loaded.records.drain(..) {
        let record = repair_text(record);
        if check_images {
            let problem = if !record.image_path.is_file() {
                Some("image file not found".to_string())
            } else {
                load_rgb(&record.image_path).err().map(|e| e.to_string())
            };
            if let Some(reason) = problem {
                loaded.rejects.rejects.push(Reject {
                    line: None,
                    id: Some(record.id.clone()),
                    reason,
                });
                continue;
            }
        }
        kept.push(record);
    }
    loaded.records = kept;
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::labels::{Intensity, Sentiment};
    use std::io::Write;

    const HEADER: &str =
        ",image_name,text_ocr,text_corrected,humour,sarcasm,offensive,motivational,overall_sentiment\n";

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(HEADER.as_bytes()).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn load(f: &tempfile::NamedTempFile) -> LoadedSplit {
        load_split(f.path(), Path::new("imgs"), Split::Train, &DatasetSchema::default()).unwrap()
    }

    #[test]
    fn header_only_gives_empty_split() {
        let f = write_csv("");
        let loaded = load(&f);
        assert!(loaded.records.is_empty());
        assert!(loaded.rejects.rejects.is_empty());
    }

    #[test]
    fn maps_official_label_strings() {
        let f = write_csv(
            "0,image_1.jpg,LOOK THERE,\"Look there, \"\"friend\"\"\",not_funny,general,not_offensive,not_motivational,positive\n",
        );
        let loaded = load(&f);
        assert_eq!(loaded.records.len(), 1);
        let r = &loaded.records[0];
        assert_eq!(r.id, "0");
        assert_eq!(r.image_path, Path::new("imgs/image_1.jpg"));
        assert_eq!(r.corrected_text.as_deref(), Some("Look there, \"friend\""));
        let l = r.labels.unwrap();
        assert_eq!(l.sentiment, Sentiment::Positive);
        assert_eq!(l.funny_scale, Intensity::Not);
        assert_eq!(l.sarcasm_scale, Intensity::Slightly);
        assert!(!l.motivational);
    }

    #[test]
    fn unknown_label_and_ragged_rows_are_rejected() {
        let f = write_csv(concat!(
            "0,a.jpg,x,x,funny,general,slight,motivational,neutral\n",
            "1,b.jpg,x,x,rofl,general,slight,motivational,neutral\n",
            "2,c.jpg,x,x\n",
            "3,d.png,,,very_funny,very_twisted,hateful_offensive,not_motivational,very_negative\n",
        ));
        let loaded = load(&f);
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.rejects.rejects.len(), 2);
        assert!(loaded.rejects.rejects[0].reason.contains("\"rofl\""));
        assert_eq!(loaded.rejects.rejects[0].id.as_deref(), Some("1"));
        assert_eq!(loaded.records[1].ocr_text, None);
    }

    #[test]
    fn label_columns_are_optional() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "Image_name,OCR_extracted_text,corrected_text").unwrap();
        writeln!(f, "image_9.png,hello,").unwrap();
        let loaded = load(&f);
        assert_eq!(loaded.records[0].id, "image_9");
        assert_eq!(loaded.records[0].labels, None);
        assert_eq!(loaded.records[0].ocr_text.as_deref(), Some("hello"));
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = load_split(
            Path::new("/nonexistent/labels.csv"),
            Path::new("imgs"),
            Split::Test,
            &DatasetSchema::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn partial_label_columns_are_a_schema_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "image_name,text_corrected,humour").unwrap();
        let err = load_split(f.path(), Path::new("."), Split::Train, &DatasetSchema::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn { column: "sentiment", .. }));
    }
}
