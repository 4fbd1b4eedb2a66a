use super::activation::softmax_rows;
use super::{NnError, Tensor};

/// `-ln(pred[label])` and the fused gradient `pred - onehot(label)` with
/// respect to the logits that produced `pred`.
pub fn cross_entropy(pred: &[f64], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    if label >= pred.len() {
        return Err(NnError::Argument(format!(
            "label {label} outside [0, {})",
            pred.len()
        )));
    }
    let loss = -pred[label].ln();
    let mut grad = pred.to_vec();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean softmax cross-entropy over a `[N, C]` batch of logits, with the
/// gradient of that mean with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    if logits.shape().len() != 2 || logits.batch() != labels.len() {
        return Err(NnError::Shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let c = logits.shape()[1];
    let n = labels.len() as f64;
    let probs = softmax_rows(logits.data(), c);
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for ((row, z), &label) in probs.chunks_exact(c).zip(logits.data().chunks_exact(c)).zip(labels) {
        let (_, g) = cross_entropy(row, label)?;
        // log-sum-exp form stays finite when the label's probability underflows
        let mx = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let lse = mx + z.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        total += lse - z[label];
        grad.extend(g.into_iter().map(|v| v / n));
    }
    Ok((total / n, Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_costs_ln_15() {
        let pred = vec![1.0 / 15.0; 15];
        for label in [0, 7, 14] {
            let (loss, grad) = cross_entropy(&pred, label).unwrap();
            assert!((loss - 15f64.ln()).abs() < 1e-12);
            assert!((loss - 2.708).abs() < 1e-3);
            assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let mut pred = vec![0.0; 15];
        pred[3] = 1.0;
        assert_eq!(cross_entropy(&pred, 3).unwrap().0, 0.0);
    }

    #[test]
    fn out_of_range_label() {
        assert!(matches!(cross_entropy(&[0.5, 0.5], 2), Err(NnError::Argument(_))));
    }

    #[test]
    fn nan_logits_give_nan_loss() {
        let logits = Tensor::new(vec![1, 2], vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&logits, &[1]).unwrap().0.is_nan());
        let big = Tensor::new(vec![1, 2], vec![1000.0, 0.0]).unwrap();
        assert!((softmax_cross_entropy(&big, &[1]).unwrap().0 - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn batched_gradient_is_mean_of_fused_gradients() {
        let logits = Tensor::new(vec![2, 3], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        let p0 = softmax_rows(&logits.data()[..3], 3);
        let p1 = softmax_rows(&logits.data()[3..], 3);
        assert!((loss - (-(p0[0].ln()) - p1[2].ln()) / 2.0).abs() < 1e-12);
        assert!((grad.data()[0] - (p0[0] - 1.0) / 2.0).abs() < 1e-15);
        assert!((grad.data()[5] - (p1[2] - 1.0) / 2.0).abs() < 1e-15);
    }
}
