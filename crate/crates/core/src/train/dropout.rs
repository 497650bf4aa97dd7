//! Inverted dropout.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Zeroes each entry with probability `p` and scales survivors by
/// `1 / (1 − p)` in training mode; identity otherwise. Returns the output and
/// the multiplicative mask that produced it.
pub fn apply_dropout<R: Rng + ?Sized>(h: &[f64], p: f64, mode: Mode, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&p), "dropout ratio must be in [0, 1)");
    if mode == Mode::Eval || p == 0.0 {
        return (h.to_vec(), vec![1.0; h.len()]);
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = h
        .iter()
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    (h.iter().zip(&mask).map(|(v, m)| v * m).collect(), mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = [0.3, -1.2, 4.0];
        assert_eq!(apply_dropout(&h, 0.0, Mode::Train, &mut rng).0, h.to_vec());
        assert_eq!(apply_dropout(&h, 0.0, Mode::Eval, &mut rng).0, h.to_vec());
        assert_eq!(apply_dropout(&h, 0.35, Mode::Eval, &mut rng).0, h.to_vec());
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = [1.0, -2.0, 0.5];
        let mut mean = [0.0; 3];
        let n = 100_000;
        for _ in 0..n {
            let (out, _) = apply_dropout(&h, 0.35, Mode::Train, &mut rng);
            for (m, v) in mean.iter_mut().zip(out) {
                *m += v / n as f64;
            }
        }
        for (m, v) in mean.iter().zip(h) {
            assert!((m - v).abs() <= 0.01 * v.abs(), "{m} vs {v}");
        }
    }
}
