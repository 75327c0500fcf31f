//! Shared initialisation and dropout helpers.

use rand::Rng;

use crate::linalg::Mat;

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fills `m` from U(−b, b) with `b = √(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(m: &mut Mat, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
    let bound = glorot_bound(fan_in, fan_out);
    for v in m.as_mut_slice() {
        *v = rng.gen_range(-bound..=bound);
    }
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else `1/(1−rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dropout_mask_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropout_mask(10_000, 0.5, &mut rng);
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.iter().filter(|&&v| v > 0.0).count();
        assert!((4_500..5_500).contains(&kept));
    }
}
