//! Canonical record store: a directory holding `<split>.jsonl` (one [`MemeRecord`] per line)
//! and `<split>.rejects.json` for each preprocessed split.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::loader::RejectsReport;
use super::record::{MemeRecord, Split};
use crate::error::{Error, Result};

pub fn split_path(store: &Path, split: Split) -> PathBuf {
    store.join(format!("{}.jsonl", split.name()))
}

pub fn rejects_path(store: &Path, split: Split) -> PathBuf {
    store.join(format!("{}.rejects.json", split.name()))
}

pub fn write_records(path: &Path, records: &[MemeRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<MemeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            Error::Config(format!("{}:{}: malformed record: {e}", path.display(), i + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_rejects(path: &Path, report: &RejectsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Loads every split present in the store directory.
pub fn load_store(store: &Path) -> Result<BTreeMap<Split, Vec<MemeRecord>>> {
    if !store.is_dir() {
        return Err(Error::io(
            store,
            std::io::Error::new(std::io::ErrorKind::NotFound, "record store directory not found"),
        ));
    }
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let path = split_path(store, split);
        if path.exists() {
            splits.insert(split, read_records(&path)?);
        }
    }
    if splits.is_empty() {
        return Err(Error::Config(format!(
            "record store {} contains no split files (expected train.jsonl, dev.jsonl or test.jsonl)",
            store.display()
        )));
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::labels::tests::arb_labels;
    use proptest::prelude::*;

    fn arb_record() -> impl Strategy<Value = MemeRecord> {
        (
            "[a-z0-9_]{1,8}",
            "[a-z_/]{1,12}\\.(jpg|png)",
            proptest::option::of("\\PC{0,30}"),
            proptest::option::of("\\PC{0,30}"),
            proptest::option::of(arb_labels()),
            any::<bool>(),
        )
            .prop_map(|(id, image, ocr, corrected, labels, flag)| MemeRecord {
                id,
                image_path: image.into(),
                ocr_text: ocr,
                corrected_text: corrected,
                labels,
                needs_manual_text: flag,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn store_round_trip_is_lossless(records in proptest::collection::vec(arb_record(), 0..8)) {
            let dir = tempfile::tempdir().unwrap();
            let path = split_path(dir.path(), Split::Dev);
            write_records(&path, &records).unwrap();
            prop_assert_eq!(read_records(&path).unwrap(), records);
        }
    }

    #[test]
    fn empty_store_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_store(dir.path()).is_err());
        assert!(load_store(&dir.path().join("missing")).is_err());
    }
}
