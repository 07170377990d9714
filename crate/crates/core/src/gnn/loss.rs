use ndarray::Array1;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    PairwiseRanking,
}

/// Softmax cross-entropy summed over positives, with its gradient
/// `P * softmax(s) - y` where `P` is the number of positives. A question
/// without positives gives zero loss and gradient.
pub fn ce_loss(scores: &Array1<f64>, labels: &[bool]) -> (f64, Array1<f64>) {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let positives = labels.iter().filter(|&&y| y).count() as f64;
    if positives == 0.0 || scores.is_empty() {
        return (0.0, Array1::zeros(scores.len()));
    }
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = scores.mapv(|s| (s - max).exp());
    let total = exp.sum();
    let lse = max + total.ln();
    let pos_sum: f64 = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(s, _)| s)
        .sum();
    let loss = positives * lse - pos_sum;
    let mut grad = exp.mapv(|e| positives * e / total);
    for (g, &y) in grad.iter_mut().zip(labels) {
        if y {
            *g -= 1.0;
        }
    }
    (loss, grad)
}

/// Hinge `max(0, 1 - (s_pos - s_neg))` and its gradients wrt `s_pos` and
/// `s_neg`. At the hinge point the subgradient is 0.
pub fn pairwise_ranking_loss(s_pos: f64, s_neg: f64) -> (f64, f64, f64) {
    let margin = 1.0 - (s_pos - s_neg);
    if margin > 0.0 {
        (margin, -1.0, 1.0)
    } else {
        (0.0, 0.0, 0.0)
    }
}

/// All (positive, negative) index pairs, uniformly subsampled to `cap`
/// without replacement when there are more. Pairs keep their cross-product
/// order.
pub fn ranking_pairs<R: Rng>(labels: &[bool], cap: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let total = pos.len() * neg.len();
    let pair = |k: usize| (pos[k / neg.len()], neg[k % neg.len()]);
    if total <= cap {
        return (0..total).map(pair).collect();
    }
    let mut picked = sample(rng, total, cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(pair).collect()
}

/// Mean hinge loss over `pairs` and its gradient wrt the scores.
pub fn ranking_loss(scores: &Array1<f64>, pairs: &[(usize, usize)]) -> (f64, Array1<f64>) {
    let mut grad = Array1::zeros(scores.len());
    if pairs.is_empty() {
        return (0.0, grad);
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    for &(i, j) in pairs {
        let (l, gi, gj) = pairwise_ranking_loss(scores[i], scores[j]);
        loss += l;
        grad[i] += gi * inv;
        grad[j] += gj * inv;
    }
    (loss * inv, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ce_symmetric_pair() {
        let (loss, grad) = ce_loss(&array![0.0, 0.0], &[true, false]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad[0] + 0.5).abs() < 1e-12 && (grad[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ce_confident_positive() {
        let (loss, _) = ce_loss(&array![10.0, 0.0, 0.0], &[true, false, false]);
        let expected = (1.0 + 2.0 * (-10f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 9.08e-5).abs() < 1e-7);
    }

    #[test]
    fn ce_all_negative_is_zero() {
        let (loss, grad) = ce_loss(&array![1.0, 2.0], &[false, false]);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ce_stable_for_large_scores() {
        let (loss, grad) = ce_loss(&array![1000.0, 999.0], &[false, true]);
        assert!(loss.is_finite() && grad.iter().all(|g| g.is_finite()));
        assert!((loss - (1.0 + 1f64.exp()).ln()).abs() < 1e-9);
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..10);
            let s = Array1::from_shape_fn(n, |_| rng.gen_range(-3.0..3.0));
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            labels[0] = true;
            let (_, grad) = ce_loss(&s, &labels);
            for i in 0..n {
                let h = 1e-5;
                let mut up = s.clone();
                up[i] += h;
                let mut down = s.clone();
                down[i] -= h;
                let num = (ce_loss(&up, &labels).0 - ce_loss(&down, &labels).0) / (2.0 * h);
                let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-6);
                assert!(rel < 1e-6, "rel err {rel}");
            }
        }
    }

    #[test]
    fn hinge_values() {
        assert_eq!(pairwise_ranking_loss(1.0, 0.0), (0.0, 0.0, 0.0));
        let (l, gp, gn) = pairwise_ranking_loss(0.2, 0.5);
        assert!((l - 1.3).abs() < 1e-12);
        assert_eq!((gp, gn), (-1.0, 1.0));
        assert_eq!(pairwise_ranking_loss(5.0, 0.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pairs_are_capped_and_valid() {
        let labels: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = ranking_pairs(&labels, 500, &mut rng);
        assert_eq!(pairs.len(), 500);
        assert!(pairs.iter().all(|&(p, q)| labels[p] && !labels[q]));
        let mut dedup = pairs.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 500);
        let small = ranking_pairs(&[true, false, false], 500, &mut rng);
        assert_eq!(small, vec![(0, 1), (0, 2)]);
        assert!(ranking_pairs(&[false, false], 500, &mut rng).is_empty());
    }

    proptest::proptest! {
        #[test]
        fn hinge_zero_iff_margin_met(sp in -5.0f64..5.0, sn in -5.0f64..5.0) {
            let (l, _, _) = pairwise_ranking_loss(sp, sn);
            proptest::prop_assert!(l >= 0.0);
            proptest::prop_assert_eq!(l == 0.0, sp - sn >= 1.0);
        }
    }
}
