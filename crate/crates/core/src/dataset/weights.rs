use serde::{Deserialize, Serialize};

use super::labels::Subtask;
use super::record::MemeRecord;
use crate::error::{Error, Result};

/// Per-class loss multipliers for one subtask, indexed by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub task: Subtask,
    pub weights: Vec<f64>,
}

impl ClassWeights {
    /// Balanced inverse frequency: `w[c] = N / (K * n[c])`.
    pub fn balanced_from_counts(task: Subtask, counts: &[usize]) -> Result<Self> {
        let k = task.num_classes();
        if counts.len() != k {
            return Err(Error::Training(format!(
                "task {task}: expected {k} class counts, got {}",
                counts.len()
            )));
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass {
                task,
                class: task.class_names()[c],
            });
        }
        let total: usize = counts.iter().sum();
        let weights = counts
            .iter()
            .map(|&n| total as f64 / (k as f64 * n as f64))
            .collect();
        Ok(ClassWeights { task, weights })
    }

    pub fn uniform(task: Subtask) -> Self {
        ClassWeights {
            task,
            weights: vec![1.0; task.num_classes()],
        }
    }

    pub fn weight(&self, class_index: usize) -> f64 {
        self.weights[class_index]
    }
}

/// Class counts of `task` over labeled records.
pub fn class_counts(records: &[MemeRecord], task: Subtask) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; task.num_classes()];
    for r in records {
        let labels = r
            .labels
            .as_ref()
            .ok_or_else(|| Error::LabelsRequired(r.id.clone()))?;
        counts[labels.target(task).class_index] += 1;
    }
    Ok(counts)
}

pub fn compute_class_weights(records: &[MemeRecord], task: Subtask) -> Result<ClassWeights> {
    ClassWeights::balanced_from_counts(task, &class_counts(records, task)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent arithmetic oracle, written out per class.
    fn oracle(counts: &[usize]) -> Vec<f64> {
        let n: f64 = counts.iter().map(|&c| c as f64).sum();
        let k = counts.len() as f64;
        counts.iter().map(|&c| n / k / c as f64).collect()
    }

    #[test]
    fn task_a_train_counts() {
        // index order negative, neutral, positive
        let w = ClassWeights::balanced_from_counts(Subtask::A, &[469, 1634, 3089]).unwrap();
        let expected = oracle(&[469, 1634, 3089]);
        for (a, b) in w.weights.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((w.weights[2] - 0.5603).abs() < 1e-4);
        assert!((w.weights[1] - 1.0592).abs() < 1e-4);
        assert!((w.weights[0] - 3.6902).abs() < 1e-4);
    }

    #[test]
    fn motivational_train_counts() {
        let w = ClassWeights::balanced_from_counts(Subtask::BMotivational, &[3355, 1837]).unwrap();
        assert!((w.weights[1] - 1.4132).abs() < 1e-4);
        assert!((w.weights[0] - 0.7738).abs() < 1e-4);
    }

    #[test]
    fn equal_counts_give_unit_weights() {
        let w = ClassWeights::balanced_from_counts(Subtask::BFunny, &[50, 50]).unwrap();
        assert_eq!(w.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn empty_class_is_named() {
        let err = ClassWeights::balanced_from_counts(Subtask::CFunny, &[3, 0, 2, 1]).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: "slightly", .. }));
    }

    proptest! {
        #[test]
        fn weighted_counts_sum_to_total(counts in proptest::collection::vec(1usize..5000, 4)) {
            let w = ClassWeights::balanced_from_counts(Subtask::COffensive, &counts).unwrap();
            let total: usize = counts.iter().sum();
            let s: f64 = counts.iter().zip(&w.weights).map(|(&n, w)| n as f64 * w).sum();
            prop_assert!((s - total as f64).abs() < 1e-9 * total as f64);
            let (maj, _) = counts.iter().enumerate().max_by_key(|(_, &n)| n).unwrap();
            for (c, &wc) in w.weights.iter().enumerate() {
                prop_assert!(wc > 0.0);
                if counts[c] < counts[maj] {
                    prop_assert!(w.weights[maj] <= wc);
                }
            }
        }
    }
}
