//! Canonical label model and the eight subtask views derived from it.
//!
//! Class index orderings are fixed crate-wide:
//!
//! | family | order |
//! |--------|-------|
//! | A (sentiment) | negative, neutral, positive |
//! | B (binary)    | no, yes |
//! | C (intensity) | not, slightly, mildly, very |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

/// Four-level ordinal scale shared by the funny, sarcastic and offensive dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Not,
    Slightly,
    Mildly,
    Very,
}

impl Intensity {
    pub const ALL: [Intensity; 4] = [
        Intensity::Not,
        Intensity::Slightly,
        Intensity::Mildly,
        Intensity::Very,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_present(self) -> bool {
        self != Intensity::Not
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonicalLabels {
    pub sentiment: Sentiment,
    pub funny_scale: Intensity,
    pub sarcasm_scale: Intensity,
    pub offensive_scale: Intensity,
    pub motivational: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskFamily {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subtask {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B_funny")]
    BFunny,
    #[serde(rename = "B_sarcastic")]
    BSarcastic,
    #[serde(rename = "B_offensive")]
    BOffensive,
    #[serde(rename = "B_motivational")]
    BMotivational,
    #[serde(rename = "C_funny")]
    CFunny,
    #[serde(rename = "C_sarcastic")]
    CSarcastic,
    #[serde(rename = "C_offensive")]
    COffensive,
}

const SENTIMENT_NAMES: [&str; 3] = ["negative", "neutral", "positive"];
const INTENSITY_NAMES: [&str; 4] = ["not", "slightly", "mildly", "very"];

impl Subtask {
    pub const ALL: [Subtask; 8] = [
        Subtask::A,
        Subtask::BFunny,
        Subtask::BSarcastic,
        Subtask::BOffensive,
        Subtask::BMotivational,
        Subtask::CFunny,
        Subtask::CSarcastic,
        Subtask::COffensive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subtask::A => "A",
            Subtask::BFunny => "B_funny",
            Subtask::BSarcastic => "B_sarcastic",
            Subtask::BOffensive => "B_offensive",
            Subtask::BMotivational => "B_motivational",
            Subtask::CFunny => "C_funny",
            Subtask::CSarcastic => "C_sarcastic",
            Subtask::COffensive => "C_offensive",
        }
    }

    pub fn family(self) -> TaskFamily {
        match self {
            Subtask::A => TaskFamily::A,
            Subtask::BFunny | Subtask::BSarcastic | Subtask::BOffensive | Subtask::BMotivational => {
                TaskFamily::B
            }
            Subtask::CFunny | Subtask::CSarcastic | Subtask::COffensive => TaskFamily::C,
        }
    }

    pub fn num_classes(self) -> usize {
        match self.family() {
            TaskFamily::A => 3,
            TaskFamily::B => 2,
            TaskFamily::C => 4,
        }
    }

    pub fn activation(self) -> OutputActivation {
        match self.family() {
            TaskFamily::B => OutputActivation::Sigmoid,
            _ => OutputActivation::Softmax,
        }
    }

    /// Width of the output layer: one unit for sigmoid tasks, one per class otherwise.
    pub fn output_dim(self) -> usize {
        match self.activation() {
            OutputActivation::Sigmoid => 1,
            OutputActivation::Softmax => self.num_classes(),
        }
    }

    /// Short class names in index order, as used in count tables.
    pub fn class_names(self) -> &'static [&'static str] {
        match self.family() {
            TaskFamily::A => &SENTIMENT_NAMES,
            TaskFamily::B => &["no", "yes"],
            TaskFamily::C => &INTENSITY_NAMES,
        }
    }

    /// Human-facing label for a predicted class, e.g. `funny` / `not_funny` for B_funny.
    pub fn class_label(self, class_index: usize) -> &'static str {
        let binary: [&'static str; 2] = match self {
            Subtask::BFunny => ["not_funny", "funny"],
            Subtask::BSarcastic => ["not_sarcastic", "sarcastic"],
            Subtask::BOffensive => ["not_offensive", "offensive"],
            Subtask::BMotivational => ["not_motivational", "motivational"],
            _ => return self.class_names().get(class_index).copied().unwrap_or("?"),
        };
        binary.get(class_index).copied().unwrap_or("?")
    }

    /// The B subtask paired with a C subtask through the binarization identity.
    pub fn binary_counterpart(self) -> Option<Subtask> {
        match self {
            Subtask::CFunny => Some(Subtask::BFunny),
            Subtask::CSarcastic => Some(Subtask::BSarcastic),
            Subtask::COffensive => Some(Subtask::BOffensive),
            _ => None,
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subtask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subtask::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let valid: Vec<_> = Subtask::ALL.iter().map(|t| t.name()).collect();
                format!("unknown task {s:?} (valid: {})", valid.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubtaskTarget {
    pub task: Subtask,
    pub class_index: usize,
}

impl SubtaskTarget {
    pub fn num_classes(&self) -> usize {
        self.task.num_classes()
    }
}

pub fn derive_target(labels: &CanonicalLabels, task: Subtask) -> SubtaskTarget {
    let class_index = match task {
        Subtask::A => labels.sentiment.index(),
        Subtask::BFunny => labels.funny_scale.is_present() as usize,
        Subtask::BSarcastic => labels.sarcasm_scale.is_present() as usize,
        Subtask::BOffensive => labels.offensive_scale.is_present() as usize,
        Subtask::BMotivational => labels.motivational as usize,
        Subtask::CFunny => labels.funny_scale.index(),
        Subtask::CSarcastic => labels.sarcasm_scale.index(),
        Subtask::COffensive => labels.offensive_scale.index(),
    };
    SubtaskTarget { task, class_index }
}

impl CanonicalLabels {
    pub fn target(&self, task: Subtask) -> SubtaskTarget {
        derive_target(self, task)
    }

    /// Rebuilds labels from the lossless subset of targets (A, B_motivational and the three C
    /// scales). Returns `None` if any of those is missing or out of range.
    pub fn from_targets(targets: &[SubtaskTarget]) -> Option<Self> {
        let find = |task: Subtask| {
            targets
                .iter()
                .find(|t| t.task == task)
                .map(|t| t.class_index)
        };
        let motivational = match find(Subtask::BMotivational)? {
            0 => false,
            1 => true,
            _ => return None,
        };
        Some(CanonicalLabels {
            sentiment: Sentiment::from_index(find(Subtask::A)?)?,
            funny_scale: Intensity::from_index(find(Subtask::CFunny)?)?,
            sarcasm_scale: Intensity::from_index(find(Subtask::CSarcastic)?)?,
            offensive_scale: Intensity::from_index(find(Subtask::COffensive)?)?,
            motivational,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(funny: Intensity) -> CanonicalLabels {
        CanonicalLabels {
            sentiment: Sentiment::Neutral,
            funny_scale: funny,
            sarcasm_scale: Intensity::Not,
            offensive_scale: Intensity::Very,
            motivational: false,
        }
    }

    #[test]
    fn binarization_of_funny_scale() {
        assert_eq!(derive_target(&labels(Intensity::Slightly), Subtask::BFunny).class_index, 1);
        assert_eq!(derive_target(&labels(Intensity::Not), Subtask::BFunny).class_index, 0);
    }

    #[test]
    fn neutral_sentiment_is_index_one() {
        assert_eq!(derive_target(&labels(Intensity::Not), Subtask::A).class_index, 1);
    }

    #[test]
    fn output_layout_per_family() {
        assert_eq!((Subtask::A.output_dim(), Subtask::A.activation()), (3, OutputActivation::Softmax));
        assert_eq!(
            (Subtask::BFunny.output_dim(), Subtask::BFunny.activation()),
            (1, OutputActivation::Sigmoid)
        );
        assert_eq!(
            (Subtask::COffensive.output_dim(), Subtask::COffensive.activation()),
            (4, OutputActivation::Softmax)
        );
    }

    #[test]
    fn task_names_parse_back() {
        for task in Subtask::ALL {
            assert_eq!(task.name().parse::<Subtask>().unwrap(), task);
        }
        assert!("D".parse::<Subtask>().is_err());
        assert_eq!(Subtask::BFunny.class_label(1), "funny");
        assert_eq!(Subtask::BFunny.class_label(0), "not_funny");
    }

    pub(crate) fn arb_labels() -> impl Strategy<Value = CanonicalLabels> {
        (0..3usize, 0..4usize, 0..4usize, 0..4usize, any::<bool>()).prop_map(|(s, f, sa, o, m)| {
            CanonicalLabels {
                sentiment: Sentiment::from_index(s).unwrap(),
                funny_scale: Intensity::from_index(f).unwrap(),
                sarcasm_scale: Intensity::from_index(sa).unwrap(),
                offensive_scale: Intensity::from_index(o).unwrap(),
                motivational: m,
            }
        })
    }

    proptest! {
        #[test]
        fn binary_view_agrees_with_scale(l in arb_labels()) {
            for c in [Subtask::CFunny, Subtask::CSarcastic, Subtask::COffensive] {
                let b = c.binary_counterpart().unwrap();
                prop_assert_eq!(derive_target(&l, b).class_index == 1, derive_target(&l, c).class_index != 0);
            }
        }

        #[test]
        fn targets_round_trip(l in arb_labels()) {
            let targets: Vec<_> = Subtask::ALL.iter().map(|&t| derive_target(&l, t)).collect();
            for t in &targets {
                prop_assert!(t.class_index < t.num_classes());
            }
            prop_assert_eq!(CanonicalLabels::from_targets(&targets), Some(l));
        }
    }
}
