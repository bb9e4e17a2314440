//! Per-split class counts checked against the published split tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::labels::Subtask;
use super::record::{MemeRecord, Split};
use super::weights::class_counts;
use crate::error::Result;

/// Published class counts in class-index order.
pub fn expected_counts(split: Split, task: Subtask) -> &'static [u64] {
    use Split::*;
    use Subtask::*;
    match (task, split) {
        (A, Train) => &[469, 1634, 3089],
        (A, Dev) => &[162, 567, 1071],
        (A, Test) => &[173, 594, 1111],

        (BFunny, Train) => &[1219, 3973],
        (BFunny, Dev) => &[432, 1368],
        (BFunny, Test) => &[445, 1433],
        (BSarcastic, Train) => &[1148, 4044],
        (BSarcastic, Dev) => &[396, 1404],
        (BSarcastic, Test) => &[421, 1457],
        (BOffensive, Train) => &[2011, 3181],
        (BOffensive, Dev) => &[702, 1098],
        (BOffensive, Test) => &[707, 1171],
        (BMotivational, Train) => &[3355, 1837],
        (BMotivational, Dev) => &[1170, 630],
        (BMotivational, Test) => &[690, 1188],

        (CFunny, Train) => &[1219, 1822, 1662, 489],
        (CFunny, Dev) => &[432, 630, 576, 162],
        (CFunny, Test) => &[445, 654, 605, 174],
        (CSarcastic, Train) => &[1148, 2607, 1151, 286],
        (CSarcastic, Dev) => &[396, 900, 396, 108],
        (CSarcastic, Test) => &[421, 937, 424, 96],
        (COffensive, Train) => &[2011, 1926, 1088, 167],
        (COffensive, Dev) => &[702, 666, 378, 54],
        (COffensive, Test) => &[707, 709, 387, 75],
    }
}

pub fn expected_split_size(split: Split) -> u64 {
    expected_counts(split, Subtask::A).iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountCell {
    pub split: Split,
    pub task: Subtask,
    pub class: String,
    pub observed: u64,
    pub expected: u64,
}

impl CountCell {
    pub fn matches(&self) -> bool {
        self.observed == self.expected
    }
}

/// `B_x = yes` count against the sum of the non-`not` levels of `C_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationCheck {
    pub split: Split,
    pub binary_task: Subtask,
    pub scale_task: Subtask,
    pub binary_yes: u64,
    pub scale_present: u64,
    /// The same identity evaluated on the published tables.
    pub expected_binary_yes: u64,
    pub expected_scale_present: u64,
}

impl BinarizationCheck {
    pub fn holds(&self) -> bool {
        self.binary_yes == self.scale_present
            && self.expected_binary_yes == self.expected_scale_present
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCountReport {
    pub cells: Vec<CountCell>,
    pub binarization: Vec<BinarizationCheck>,
    pub passed: bool,
}

impl SplitCountReport {
    pub fn deviations(&self) -> impl Iterator<Item = &CountCell> {
        self.cells.iter().filter(|c| !c.matches())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:<15} {:<9} {:>9} {:>9}  status",
            "split", "task", "class", "observed", "expected"
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<6} {:<15} {:<9} {:>9} {:>9}  {}",
                c.split.name(),
                c.task.name(),
                c.class,
                c.observed,
                c.expected,
                if c.matches() { "ok" } else { "MISMATCH" }
            );
        }
        out.push('\n');
        for b in &self.binarization {
            let _ = writeln!(
                out,
                "{:<6} {} yes = {} ; {} slightly+mildly+very = {} ; published {} = {}  {}",
                b.split.name(),
                b.binary_task.name(),
                b.binary_yes,
                b.scale_task.name(),
                b.scale_present,
                b.expected_binary_yes,
                b.expected_scale_present,
                if b.holds() { "ok" } else { "MISMATCH" }
            );
        }
        let deviating = self.deviations().count();
        let _ = writeln!(
            out,
            "\n{} ({} deviating cell{})",
            if self.passed { "PASS" } else { "FAIL" },
            deviating,
            if deviating == 1 { "" } else { "s" }
        );
        out
    }
}

/// Counts every subtask's classes per split and compares them with the published tables.
///
/// Fails with [`crate::Error::LabelsRequired`] on an unlabeled record; count mismatches
/// are reported, not raised.
pub fn verify_split_counts(splits: &BTreeMap<Split, Vec<MemeRecord>>) -> Result<SplitCountReport> {
    let mut cells = Vec::new();
    let mut binarization = Vec::new();
    for (&split, records) in splits {
        let mut observed: BTreeMap<Subtask, Vec<usize>> = BTreeMap::new();
        for task in Subtask::ALL {
            let counts = class_counts(records, task)?;
            for (c, (&obs, &exp)) in counts.iter().zip(expected_counts(split, task)).enumerate() {
                cells.push(CountCell {
                    split,
                    task,
                    class: task.class_names()[c].to_string(),
                    observed: obs as u64,
                    expected: exp,
                });
            }
            observed.insert(task, counts);
        }
        for scale_task in [Subtask::CFunny, Subtask::CSarcastic, Subtask::COffensive] {
            let binary_task = scale_task.binary_counterpart().expect("C task has a B view");
            binarization.push(BinarizationCheck {
                split,
                binary_task,
                scale_task,
                binary_yes: observed[&binary_task][1] as u64,
                scale_present: observed[&scale_task][1..].iter().sum::<usize>() as u64,
                expected_binary_yes: expected_counts(split, binary_task)[1],
                expected_scale_present: expected_counts(split, scale_task)[1..].iter().sum(),
            });
        }
    }
    let passed = cells.iter().all(CountCell::matches) && binarization.iter().all(BinarizationCheck::holds);
    Ok(SplitCountReport {
        cells,
        binarization,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_tables_are_internally_consistent() {
        for split in Split::ALL {
            let n = expected_split_size(split);
            for task in Subtask::ALL {
                assert_eq!(expected_counts(split, task).iter().sum::<u64>(), n, "{split} {task}");
                assert_eq!(expected_counts(split, task).len(), task.num_classes());
            }
        }
        assert_eq!(
            [Split::Train, Split::Dev, Split::Test].map(expected_split_size),
            [5192, 1800, 1878]
        );
        // 1,822 + 1,662 + 489 = 3,973
        assert_eq!(expected_counts(Split::Train, Subtask::CFunny)[1..].iter().sum::<u64>(), 3973);
        assert_eq!(expected_counts(Split::Train, Subtask::BFunny)[1], 3973);
        assert_eq!(expected_counts(Split::Test, Subtask::COffensive), &[707, 709, 387, 75]);
    }
}
