//! Binary cross-entropy summed over every item.

/// Probabilities are clamped to `[CLAMP, 1 − CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-12;

/// `−Σ_i [y_i ln ŷ_i + (1 − y_i) ln(1 − ŷ_i)]` for a one-hot `y` at `target`.
pub fn loss(y_hat: &[f64], target: usize) -> f64 {
    y_hat
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            if i == target {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// `∂L/∂ŷ`; zero where the clamp is active.
pub fn loss_grad(y_hat: &[f64], target: usize) -> Vec<f64> {
    y_hat
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if !(CLAMP..=1.0 - CLAMP).contains(&p) {
                0.0
            } else if i == target {
                -1.0 / p
            } else {
                1.0 / (1.0 - p)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert!((loss(&[0.5, 0.5], 0) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((loss(&[0.5, 0.5], 0) - 1.3863).abs() < 1e-4);
        let perfect = loss(&[1.0, 0.0, 0.0], 0);
        assert!((0.0..1e-10).contains(&perfect));
        assert!(loss(&[0.0, 1.0], 0).is_finite());
    }

    #[test]
    fn gradient_matches_differences() {
        let y = [0.2, 0.5, 0.3];
        let g = loss_grad(&y, 1);
        for i in 0..3 {
            let (mut a, mut b) = (y, y);
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (loss(&a, 1) - loss(&b, 1)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn non_negative_and_finite(raw in prop::collection::vec(0.0f64..1.0, 2..10), t in 0usize..10) {
            let t = t % raw.len();
            let l = loss(&raw, t);
            prop_assert!(l.is_finite() && l >= 0.0);
        }
    }
}
