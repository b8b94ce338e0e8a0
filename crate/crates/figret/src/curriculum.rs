//! Dual curriculum sampling distributions.
//!
//! P1 weights samples by origin label (guidance vs. preference), P2 by
//! difficulty (NDCG). The combined sampler is a product of the two with
//! linearly annealed inverse temperatures, so guidance examples dominate
//! early draws and the mixture flattens to uniform as training progresses.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnealKind {
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub t1: f64,
    pub t2: f64,
    pub total_steps: usize,
    pub anneal: AnnealKind,
    pub seed: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            t1: 2.0,
            t2: 0.2,
            total_steps: 1,
            anneal: AnnealKind::Linear,
            seed: 0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t1.is_nan() || self.t1 <= 0.0 {
            return Err(Error::Config(format!("T1 must be > 0, got {}", self.t1)));
        }
        if self.t2.is_nan() || self.t2 <= 0.0 {
            return Err(Error::Config(format!("T2 must be > 0, got {}", self.t2)));
        }
        if self.total_steps < 1 {
            return Err(Error::Config("total_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Softmax in the log domain: subtract the max exponent before
/// exponentiating so small temperatures cannot overflow.
fn softmax(exponents: &[f64]) -> Result<Vec<f64>> {
    if exponents.is_empty() {
        return Err(Error::Precondition("softmax of an empty list".into()));
    }
    if exponents.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric("non-finite curriculum exponent".into()));
    }
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = exponents.iter().map(|e| (e - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

/// Origin distribution: `p_i` proportional to `exp((2*y_i - 1) / T1)`.
pub fn p1_weights(labels: &[u8], t1: f64) -> Result<Vec<f64>> {
    if t1.is_nan() || t1 <= 0.0 {
        return Err(Error::Config(format!("T1 must be > 0, got {t1}")));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Domain("labels must be binary".into()));
    }
    let exponents: Vec<f64> = labels
        .iter()
        .map(|&y| (2.0 * f64::from(y) - 1.0) / t1)
        .collect();
    softmax(&exponents)
}

/// Difficulty distribution: `p_i` proportional to `exp(s_i / T2)`.
pub fn p2_weights(scores: &[f64], t2: f64) -> Result<Vec<f64>> {
    if t2.is_nan() || t2 <= 0.0 {
        return Err(Error::Config(format!("T2 must be > 0, got {t2}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Domain("scores must be finite".into()));
    }
    let exponents: Vec<f64> = scores.iter().map(|&s| s / t2).collect();
    softmax(&exponents)
}

/// Combined annealed distribution at step `t`:
/// `p_i(t)` proportional to `exp(b1(t)*(2*y_i - 1) + b2(t)*s_i)` with
/// `b1 = (1/T1)(1 - t/steps)` and `b2 = (1/T2)(1 - t/steps)`. At `t = 0` this
/// is the renormalized product of P1 and P2; at `t = steps` it is uniform.
pub fn combined_weights(
    labels: &[u8],
    scores: &[f64],
    step: usize,
    config: &CurriculumConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Domain("labels must be binary".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Domain("scores must be finite".into()));
    }
    if step > config.total_steps {
        return Err(Error::Domain(format!(
            "step {step} exceeds total_steps {}",
            config.total_steps
        )));
    }
    let AnnealKind::Linear = config.anneal;
    let remaining = 1.0 - step as f64 / config.total_steps as f64;
    let b1 = remaining / config.t1;
    let b2 = remaining / config.t2;
    let exponents: Vec<f64> = labels
        .iter()
        .zip(scores)
        .map(|(&y, &s)| b1 * (2.0 * f64::from(y) - 1.0) + b2 * s)
        .collect();
    softmax(&exponents)
}

/// Draw `batch_size` indices i.i.d. from `weights` (with replacement),
/// deterministically for a fixed seed.
pub fn sample_batch(weights: &[f64], batch_size: usize, seed: u64) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(weights)
        .map_err(|e| Error::Domain(format!("invalid sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..batch_size).map(|_| dist.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn p1_two_labels_matches_logistic() {
        let w = p1_weights(&[1, 0], 2.0).unwrap();
        assert!((w[0] - sigma(1.0)).abs() < 1e-12);
        assert!((w[1] - (1.0 - sigma(1.0))).abs() < 1e-12);
    }

    #[test]
    fn equal_labels_are_uniform() {
        for labels in [[1u8, 1, 1].as_slice(), [0u8, 0].as_slice()] {
            let w = p1_weights(labels, 2.0).unwrap();
            for &x in &w {
                assert!((x - 1.0 / labels.len() as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn huge_temperature_flattens_p1() {
        let w = p1_weights(&[1, 0, 1, 0], 1e6).unwrap();
        for &x in &w {
            assert!((x - 0.25).abs() < 1e-5);
        }
    }

    #[test]
    fn p1_weights_depend_only_on_the_label() {
        let w = p1_weights(&[1, 0, 1, 0, 1], 2.0).unwrap();
        assert_eq!(w[0], w[2]);
        assert_eq!(w[0], w[4]);
        assert_eq!(w[1], w[3]);
    }

    #[test]
    fn p2_ratio_is_exponential_in_score_gap() {
        let w = p2_weights(&[1.0, 0.8], 0.2).unwrap();
        let ratio = w[0] / w[1];
        assert!((ratio - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_are_uniform() {
        let w = p2_weights(&[0.4, 0.4, 0.4], 0.2).unwrap();
        for &x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_is_shift_invariant() {
        let a = p2_weights(&[0.1, 0.5, 0.9], 0.2).unwrap();
        let b = p2_weights(&[0.2, 0.6, 1.0], 0.2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_temperatures_are_config_errors() {
        assert!(matches!(p1_weights(&[1, 0], 0.0), Err(Error::Config(_))));
        assert!(matches!(p2_weights(&[0.5], -0.1), Err(Error::Config(_))));
    }

    fn cfg(steps: usize) -> CurriculumConfig {
        CurriculumConfig {
            total_steps: steps,
            ..CurriculumConfig::default()
        }
    }

    #[test]
    fn combined_at_step_zero_is_the_renormalized_product() {
        let labels = [1u8, 0, 1, 0];
        let scores = [0.9, 0.9, 0.3, 0.6];
        let w = combined_weights(&labels, &scores, 0, &cfg(10)).unwrap();
        let p1 = p1_weights(&labels, 2.0).unwrap();
        let p2 = p2_weights(&scores, 0.2).unwrap();
        let prod: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a * b).collect();
        let sum: f64 = prod.iter().sum();
        for (x, y) in w.iter().zip(prod.iter().map(|p| p / sum)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_at_final_step_is_uniform() {
        let labels = [1u8, 0, 1];
        let scores = [0.2, 0.9, 0.5];
        let w = combined_weights(&labels, &scores, 7, &cfg(7)).unwrap();
        for &x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_difficulty_slice_reproduces_p1() {
        let labels = [1u8, 0, 0, 1];
        let zeros = [0.0; 4];
        let w = combined_weights(&labels, &zeros, 0, &cfg(5)).unwrap();
        let p1 = p1_weights(&labels, 2.0).unwrap();
        for (x, y) in w.iter().zip(&p1) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn guidance_advantage_never_increases_over_time() {
        let labels = [1u8, 0];
        let scores = [0.5, 0.5];
        let steps = 20;
        let mut prev_ratio = f64::INFINITY;
        for t in 0..=steps {
            let w = combined_weights(&labels, &scores, t, &cfg(steps)).unwrap();
            let ratio = w[0] / w[1];
            assert!(ratio <= prev_ratio + 1e-12);
            prev_ratio = ratio;
        }
        assert!((prev_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_past_the_horizon_is_a_domain_error() {
        assert!(matches!(
            combined_weights(&[1], &[0.5], 11, &cfg(10)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weights_are_normalized_and_finite() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
        let scores: Vec<f64> = (0..50).map(|i| (i as f64) / 49.0).collect();
        for t in [0, 13, 50] {
            let w = combined_weights(&labels, &scores, t, &cfg(50)).unwrap();
            assert!(w.iter().all(|&x| x.is_finite() && x >= 0.0));
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // tiny temperature stays finite thanks to the log-domain max shift
        let w = p2_weights(&[0.0, 1.0], 1e-6).unwrap();
        assert!(w.iter().all(|&x| x.is_finite()));
    }

    #[test]
    fn degenerate_weight_always_draws_index_zero() {
        let draws = sample_batch(&[1.0], 64, 5).unwrap();
        assert!(draws.iter().all(|&i| i == 0));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let w = [0.3, 0.2, 0.5];
        assert_eq!(
            sample_batch(&w, 100, 42).unwrap(),
            sample_batch(&w, 100, 42).unwrap()
        );
        assert_ne!(
            sample_batch(&w, 100, 42).unwrap(),
            sample_batch(&w, 100, 43).unwrap()
        );
    }

    #[test]
    fn empirical_frequencies_approach_the_weights() {
        let w = p1_weights(&[1, 0], 2.0).unwrap();
        let draws = sample_batch(&w, 100_000, 7).unwrap();
        let count0 = draws.iter().filter(|&&i| i == 0).count() as f64;
        let p0 = count0 / 100_000.0;
        let l1 = 2.0 * (p0 - w[0]).abs();
        assert!(l1 < 0.01, "L1 gap {l1}");
    }
}
