//! Synthetic labeled memes with controlled class marginals.
//!
//! Used to exercise the full pipeline without the public dataset: captions carry a few
//! label-correlated words and the optional PNG images are tinted by sentiment, so both
//! modalities hold some signal for the toy encoders to pick up.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::labels::{CanonicalLabels, Intensity, Sentiment, Subtask};
use super::record::{MemeRecord, Split};
use super::verify::expected_counts;
use crate::error::{Error, Result};

/// Class counts per label dimension, in class-index order. All five must sum to the same total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalCounts {
    pub sentiment: [usize; 3],
    pub funny: [usize; 4],
    pub sarcasm: [usize; 4],
    pub offensive: [usize; 4],
    /// (no, yes)
    pub motivational: [usize; 2],
}

fn arr<const N: usize>(xs: &[u64]) -> [usize; N] {
    let mut out = [0usize; N];
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = x as usize;
    }
    out
}

fn spread<const N: usize>(n: usize, offset: usize) -> [usize; N] {
    let mut out = [n / N; N];
    for i in 0..n % N {
        out[(i + offset) % N] += 1;
    }
    out
}

impl MarginalCounts {
    /// The published per-split counts.
    pub fn published(split: Split) -> Self {
        MarginalCounts {
            sentiment: arr(expected_counts(split, Subtask::A)),
            funny: arr(expected_counts(split, Subtask::CFunny)),
            sarcasm: arr(expected_counts(split, Subtask::CSarcastic)),
            offensive: arr(expected_counts(split, Subtask::COffensive)),
            motivational: arr(expected_counts(split, Subtask::BMotivational)),
        }
    }

    /// As close to uniform as `n` allows in every dimension.
    pub fn balanced(n: usize) -> Self {
        MarginalCounts {
            sentiment: spread(n, 0),
            funny: spread(n, 1),
            sarcasm: spread(n, 2),
            offensive: spread(n, 3),
            motivational: spread(n, 0),
        }
    }

    pub fn total(&self) -> usize {
        self.sentiment.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.total();
        let sums = [
            self.funny.iter().sum::<usize>(),
            self.sarcasm.iter().sum(),
            self.offensive.iter().sum(),
            self.motivational.iter().sum(),
        ];
        if sums.iter().any(|&s| s != n) {
            return Err(Error::Config(format!(
                "marginal counts disagree on the total: {n} vs {sums:?}"
            )));
        }
        Ok(())
    }
}

fn expand<T: Copy>(values: &[T], counts: &[usize], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut out: Vec<T> = values
        .iter()
        .zip(counts)
        .flat_map(|(&v, &c)| std::iter::repeat_n(v, c))
        .collect();
    out.shuffle(rng);
    out
}

const FILLER: [&str; 24] = [
    "when", "you", "the", "finally", "that", "moment", "me", "my", "friends", "monday", "coffee",
    "code", "cat", "boss", "weekend", "exam", "pizza", "one", "does", "not", "simply", "walk",
    "into", "meeting",
];

fn sentiment_word(s: Sentiment) -> &'static str {
    match s {
        Sentiment::Negative => "awful",
        Sentiment::Neutral => "okay",
        Sentiment::Positive => "awesome",
    }
}

fn intensity_word(prefix: &str, i: Intensity) -> String {
    let level = ["zero", "bit", "quite", "extremely"][i.index()];
    format!("{level}{prefix}")
}

fn caption(labels: &CanonicalLabels, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = (0..rng.random_range(3..7))
        .map(|_| FILLER[rng.random_range(0..FILLER.len())].to_string())
        .collect();
    words.push(sentiment_word(labels.sentiment).to_string());
    words.push(intensity_word("lol", labels.funny_scale));
    words.push(intensity_word("irony", labels.sarcasm_scale));
    words.push(intensity_word("rude", labels.offensive_scale));
    if labels.motivational {
        words.push("inspire".into());
    }
    words.shuffle(rng);
    words.join(" ")
}

fn write_image(path: &Path, labels: &CanonicalLabels, size: u32, rng: &mut ChaCha8Rng) -> Result<()> {
    let base: [f32; 3] = match labels.sentiment {
        Sentiment::Negative => [40.0, 50.0, 160.0],
        Sentiment::Neutral => [120.0, 120.0, 120.0],
        Sentiment::Positive => [230.0, 200.0, 40.0],
    };
    let boost = 20.0 * labels.funny_scale.index() as f32;
    let img = image::RgbImage::from_fn(size, size, |_, _| {
        let mut px = |c: usize| (base[c] + boost + rng.random_range(-25.0..25.0)).clamp(0.0, 255.0) as u8;
        image::Rgb([px(0), px(1), px(2)])
    });
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Generates `counts.total()` labeled records named `<prefix>_<i>`. When `image_dir` is given,
/// a `size`×`size` PNG is written for every record; otherwise image paths point at files that
/// do not exist.
pub fn generate(
    counts: &MarginalCounts,
    seed: u64,
    prefix: &str,
    image_dir: Option<&Path>,
    size: u32,
) -> Result<Vec<MemeRecord>> {
    counts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = counts.total();
    let sentiment = expand(&Sentiment::ALL, &counts.sentiment, &mut rng);
    let funny = expand(&Intensity::ALL, &counts.funny, &mut rng);
    let sarcasm = expand(&Intensity::ALL, &counts.sarcasm, &mut rng);
    let offensive = expand(&Intensity::ALL, &counts.offensive, &mut rng);
    let motivational = expand(&[false, true], &counts.motivational, &mut rng);

    if let Some(dir) = image_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let labels = CanonicalLabels {
            sentiment: sentiment[i],
            funny_scale: funny[i],
            sarcasm_scale: sarcasm[i],
            offensive_scale: offensive[i],
            motivational: motivational[i],
        };
        let id = format!("{prefix}_{i}");
        let file = format!("{id}.png");
        let image_path = match image_dir {
            Some(dir) => {
                let path = dir.join(&file);
                write_image(&path, &labels, size, &mut rng)?;
                path
            }
            None => Path::new("images").join(&file),
        };
        let text = caption(&labels, &mut rng);
        records.push(MemeRecord {
            id,
            image_path,
            ocr_text: Some(text.to_uppercase()),
            corrected_text: Some(text),
            labels: Some(labels),
            needs_manual_text: false,
        });
    }
    Ok(records)
}

/// Writes records as a CSV in the public release's column layout and label vocabulary.
/// Image paths are written as bare file names.
pub fn write_official_csv(path: &Path, records: &[MemeRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "",
        "image_name",
        "text_ocr",
        "text_corrected",
        "humour",
        "sarcasm",
        "offensive",
        "motivational",
        "overall_sentiment",
    ])
    .map_err(csv_err)?;
    for r in records {
        let file = r
            .image_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut row = vec![
            r.id.clone(),
            file,
            r.ocr_text.clone().unwrap_or_default(),
            r.corrected_text.clone().unwrap_or_default(),
        ];
        match &r.labels {
            Some(l) => {
                row.push(["not_funny", "funny", "very_funny", "hilarious"][l.funny_scale.index()].into());
                row.push(
                    ["not_sarcastic", "general", "twisted_meaning", "very_twisted"][l.sarcasm_scale.index()]
                        .into(),
                );
                row.push(
                    ["not_offensive", "slight", "very_offensive", "hateful_offensive"]
                        [l.offensive_scale.index()]
                    .into(),
                );
                row.push(if l.motivational { "motivational" } else { "not_motivational" }.into());
                row.push(["negative", "neutral", "positive"][l.sentiment.index()].into());
            }
            None => row.extend(std::iter::repeat_n(String::new(), 5)),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::verify::verify_split_counts;
    use crate::dataset::{load_split, DatasetSchema};
    use std::collections::BTreeMap;

    #[test]
    fn published_marginals_verify_exactly() {
        let mut splits = BTreeMap::new();
        for split in Split::ALL {
            let records = generate(&MarginalCounts::published(split), 7, split.name(), None, 0).unwrap();
            splits.insert(split, records);
        }
        let report = verify_split_counts(&splits).unwrap();
        assert!(report.passed, "{}", report.render());
        assert_eq!(report.deviations().count(), 0);
    }

    #[test]
    fn single_relabel_gives_two_deviating_cells() {
        let mut records = generate(&MarginalCounts::published(Split::Train), 3, "t", None, 0).unwrap();
        let victim = records
            .iter_mut()
            .find(|r| r.labels.unwrap().sentiment == Sentiment::Positive)
            .unwrap();
        victim.labels.as_mut().unwrap().sentiment = Sentiment::Neutral;
        let report = verify_split_counts(&BTreeMap::from([(Split::Train, records)])).unwrap();
        assert!(!report.passed);
        let dev: Vec<_> = report.deviations().collect();
        assert_eq!(dev.len(), 2);
        assert!(dev.iter().all(|c| c.task == Subtask::A));
    }

    #[test]
    fn csv_round_trip_through_loader() {
        let dir = tempfile::tempdir().unwrap();
        let records = generate(&MarginalCounts::balanced(12), 1, "m", Some(dir.path()), 8).unwrap();
        let csv = dir.path().join("labels.csv");
        write_official_csv(&csv, &records).unwrap();
        let loaded = load_split(&csv, dir.path(), Split::Dev, &DatasetSchema::default()).unwrap();
        assert!(loaded.rejects.rejects.is_empty());
        assert_eq!(loaded.records, records);
    }
}
