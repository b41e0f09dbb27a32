use std::ops::Range;

use ndarray::Array2;

/// Label-smoothed cross-entropy restricted to each sample's role-valid
/// candidates.
///
/// For sample `b` with candidates `R_b` the smoothed label is
/// `y_i = (1-ε)·[i = target] + ε/|R_b|`, and the loss is the batch mean of
/// `-Σ_i y_i log softmax(p)_i` over `R_b`. Returns the loss and its
/// gradient w.r.t. the logits (zero outside `R_b`).
pub fn intra_view_loss_grad(
    logits: &Array2<f64>,
    targets: &[usize],
    candidates: &[Range<usize>],
    epsilon: f64,
) -> (f64, Array2<f64>) {
    let batch = logits.nrows();
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for b in 0..batch {
        let range = candidates[b].clone();
        let row = logits.row(b);
        let n = range.len() as f64;
        let max = range.clone().map(|i| row[i]).fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + range.clone().map(|i| (row[i] - max).exp()).sum::<f64>().ln();
        for i in range {
            let y = epsilon / n + if i == targets[b] { 1.0 - epsilon } else { 0.0 };
            let log_p = row[i] - log_z;
            total -= y * log_p;
            grad[[b, i]] = (log_p.exp() - y) / batch as f64;
        }
    }
    (total / batch as f64, grad)
}

pub fn intra_view_loss(logits: &Array2<f64>, targets: &[usize], candidates: &[Range<usize>], epsilon: f64) -> f64 {
    intra_view_loss_grad(logits, targets, candidates, epsilon).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_of_candidate_count() {
        let logits = Array2::from_elem((1, 6), 0.3);
        for eps in [0.0, 0.1, 0.5] {
            let loss = intra_view_loss(&logits, &[2], &[1..5], eps);
            assert!((loss - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let logits = Array2::from_shape_vec((1, 3), vec![60.0, 0.0, 0.0]).unwrap();
        assert!(intra_view_loss(&logits, &[0], &[0..3], 0.0) < 1e-20);
    }

    #[test]
    fn two_candidate_hand_value() {
        // -0.95 log σ(2,0)_0 - 0.05 log σ(2,0)_1
        let logits = Array2::from_shape_vec((1, 2), vec![2.0, 0.0]).unwrap();
        let loss = intra_view_loss(&logits, &[0], &[0..2], 0.1);
        let p0 = 1.0 / (1.0 + (-2f64).exp());
        let expected = -0.95 * p0.ln() - 0.05 * (1.0 - p0).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.2269).abs() < 1e-4);
    }

    #[test]
    fn out_of_role_logits_are_ignored() {
        let logits = Array2::from_shape_vec((1, 4), vec![f64::NEG_INFINITY, 1.0, 2.0, f64::NEG_INFINITY]).unwrap();
        let (loss, grad) = intra_view_loss_grad(&logits, &[1], &[1..3], 0.1);
        assert!(loss.is_finite());
        assert_eq!(grad[[0, 0]], 0.0);
        assert_eq!(grad[[0, 3]], 0.0);
        assert!((grad.sum()).abs() < 1e-12);
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let logits = Array2::from_shape_vec((2, 3), vec![0.1, -0.4, 2.0, 1.0, 0.0, -1.0]).unwrap();
        let both = intra_view_loss(&logits, &[2, 0], &[0..3, 0..3], 0.2);
        let a = intra_view_loss(&logits.slice(ndarray::s![0..1, ..]).to_owned(), &[2], &[0..3], 0.2);
        let b = intra_view_loss(&logits.slice(ndarray::s![1..2, ..]).to_owned(), &[0], &[0..3], 0.2);
        assert!((both - (a + b) / 2.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn loss_is_non_negative_and_uniform_gives_log_n(
            logits in proptest::collection::vec(-10.0f64..10.0, 2..20),
            pick in 0usize..100,
            eps in 0.0f64..0.99,
        ) {
            let n = logits.len();
            let target = pick % n;
            let row = Array2::from_shape_vec((1, n), logits).unwrap();
            let (loss, grad) = intra_view_loss_grad(&row, &[target], &[0..n], eps);
            proptest::prop_assert!(loss >= -1e-12);
            proptest::prop_assert!(grad.sum().abs() < 1e-9);
            let flat = Array2::from_elem((1, n), 0.7);
            let uniform = intra_view_loss(&flat, &[target], &[0..n], eps);
            proptest::prop_assert!((uniform - (n as f64).ln()).abs() < 1e-9);
        }
    }
}
