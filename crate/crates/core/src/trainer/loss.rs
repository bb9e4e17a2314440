//! Class-weighted cross-entropy. Probabilities are clipped to `[1e-7, 1 - 1e-7]` before the
//! logarithm, so a certain wrong prediction costs `-ln 1e-7` rather than infinity.

use candle_core::{Tensor, D};

use crate::dataset::{ClassWeights, OutputActivation, Subtask, SubtaskTarget};
use crate::error::{Error, Result};

pub const PROBABILITY_EPSILON: f64 = 1e-7;

fn clip(p: f64) -> f64 {
    p.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)
}

/// Loss of one example. `probabilities` is the class distribution for softmax tasks and the
/// single positive-class probability for sigmoid tasks.
pub fn example_loss(probabilities: &[f64], target: SubtaskTarget, weights: &ClassWeights) -> Result<f64> {
    if weights.task != target.task {
        return Err(Error::Training(format!(
            "class weights are for {}, target is {}",
            weights.task, target.task
        )));
    }
    let w = weights.weight(target.class_index);
    Ok(match target.task.activation() {
        OutputActivation::Softmax => -w * clip(probabilities[target.class_index]).ln(),
        OutputActivation::Sigmoid => {
            let p = clip(probabilities[0]);
            if target.class_index == 1 {
                -w * p.ln()
            } else {
                -w * (1.0 - p).ln()
            }
        }
    })
}

/// Mean weighted loss over a batch of activated outputs `probs` (`[batch, output_dim]`).
pub fn weighted_loss(probs: &Tensor, targets: &[usize], weights: &ClassWeights) -> Result<Tensor> {
    let task: Subtask = weights.task;
    let (batch, width) = probs.dims2()?;
    if batch != targets.len() || width != task.output_dim() {
        return Err(Error::Training(format!(
            "loss shape mismatch: outputs {batch}x{width}, {} targets for {task}",
            targets.len()
        )));
    }
    let dev = probs.device();
    let dtype = probs.dtype();
    let p = probs.clamp(PROBABILITY_EPSILON, 1.0 - PROBABILITY_EPSILON)?;
    let per_example = match task.activation() {
        OutputActivation::Softmax => {
            // weight of the target class placed at the target column, zero elsewhere
            let mut sel = vec![0f64; batch * width];
            for (i, &t) in targets.iter().enumerate() {
                sel[i * width + t] = weights.weight(t);
            }
            let sel = Tensor::from_vec(sel, (batch, width), dev)?.to_dtype(dtype)?;
            (p.log()? * sel)?.sum(D::Minus1)?.neg()?
        }
        OutputActivation::Sigmoid => {
            let y: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
            let w: Vec<f64> = targets.iter().map(|&t| weights.weight(t)).collect();
            let y = Tensor::from_vec(y, (batch, 1), dev)?.to_dtype(dtype)?;
            let w = Tensor::from_vec(w, (batch, 1), dev)?.to_dtype(dtype)?;
            let pos = (&y * p.log()?)?;
            let neg = ((1.0 - &y)? * (1.0 - &p)?.log()?)?;
            ((pos + neg)? * w)?.neg()?.squeeze(1)?
        }
    };
    Ok(per_example.mean_all()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use proptest::prelude::*;

    fn target(task: Subtask, class_index: usize) -> SubtaskTarget {
        SubtaskTarget { task, class_index }
    }

    #[test]
    fn certain_correct_prediction_costs_nothing() {
        let w = ClassWeights::uniform(Subtask::A);
        assert!(example_loss(&[0.0, 1.0, 0.0], target(Subtask::A, 1), &w).unwrap() <= 1e-6);
        let wb = ClassWeights::uniform(Subtask::BFunny);
        assert!(example_loss(&[1.0], target(Subtask::BFunny, 1), &wb).unwrap() <= 1e-6);
    }

    #[test]
    fn uniform_three_class_prediction_costs_ln3() {
        let w = ClassWeights::uniform(Subtask::A);
        let l = example_loss(&[1.0 / 3.0; 3], target(Subtask::A, 2), &w).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((l - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn zero_probability_is_clipped() {
        let w = ClassWeights::uniform(Subtask::A);
        let l = example_loss(&[1.0, 0.0, 0.0], target(Subtask::A, 1), &w).unwrap();
        assert!((l + PROBABILITY_EPSILON.ln()).abs() < 1e-9);
    }

    #[test]
    fn mismatched_task_is_rejected() {
        let w = ClassWeights::uniform(Subtask::CFunny);
        assert!(example_loss(&[0.5; 3], target(Subtask::A, 0), &w).is_err());
    }

    #[test]
    fn tensor_loss_matches_scalar_loss() {
        let probs = [[0.2, 0.5, 0.3], [0.7, 0.1, 0.2]];
        let targets = [1usize, 2];
        let w = ClassWeights { task: Subtask::A, weights: vec![0.5, 1.5, 2.5] };
        let t = Tensor::new(&probs, &Device::Cpu).unwrap();
        let got = weighted_loss(&t, &targets, &w).unwrap().to_scalar::<f64>().unwrap();
        let want = (example_loss(&probs[0], target(Subtask::A, 1), &w).unwrap()
            + example_loss(&probs[1], target(Subtask::A, 2), &w).unwrap())
            / 2.0;
        assert!((got - want).abs() < 1e-12);

        let wb = ClassWeights { task: Subtask::BOffensive, weights: vec![0.8, 1.3] };
        let t = Tensor::new(&[[0.9f64], [0.25]], &Device::Cpu).unwrap();
        let got = weighted_loss(&t, &[0, 1], &wb).unwrap().to_scalar::<f64>().unwrap();
        let want = (example_loss(&[0.9], target(Subtask::BOffensive, 0), &wb).unwrap()
            + example_loss(&[0.25], target(Subtask::BOffensive, 1), &wb).unwrap())
            / 2.0;
        assert!((got - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn loss_is_linear_in_class_weight(
            raw in proptest::collection::vec(0.01f64..1.0, 4),
            t in 0usize..4,
            w in 0.1f64..5.0,
        ) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let w1 = ClassWeights { task: Subtask::CSarcastic, weights: vec![w; 4] };
            let w2 = ClassWeights { task: Subtask::CSarcastic, weights: vec![2.0 * w; 4] };
            let l1 = example_loss(&p, target(Subtask::CSarcastic, t), &w1).unwrap();
            let l2 = example_loss(&p, target(Subtask::CSarcastic, t), &w2).unwrap();
            prop_assert!(l1 >= 0.0);
            prop_assert!((l2 - 2.0 * l1).abs() <= 1e-12 * l2.abs().max(1.0));
        }
    }
}
