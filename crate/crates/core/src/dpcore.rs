//! Pure epsilon-DP primitives: the Laplace mechanism, the exponential
//! mechanism and a sequential-composition budget accountant.
//!
//! Noise is sampled in double precision. Floating-point side channels of
//! textbook Laplace sampling are known and not defended against here.

use std::io::Write;
#[cfg(not(target_arch = "wasm32"))]
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("epsilon must be positive and finite, got {0}")]
    NonpositiveEpsilon(f64),
    #[error("sensitivity must be positive and finite, got {0}")]
    NonpositiveSensitivity(f64),
    #[error("exponential mechanism needs at least one candidate")]
    EmptyScores,
    #[error("privacy budget exceeded: spent {spent}, requested {requested}, total {total}")]
    BudgetExceeded {
        spent: f64,
        requested: f64,
        total: f64,
    },
}

/// Sensitivity of a counting query: one individual moves one count by one.
pub const COUNT_SENSITIVITY: f64 = 1.0;

fn check_epsilon(eps: f64) -> Result<(), DpError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(DpError::NonpositiveEpsilon(eps))
    }
}

fn check_sensitivity(sensitivity: f64) -> Result<(), DpError> {
    if sensitivity > 0.0 && sensitivity.is_finite() {
        Ok(())
    } else {
        Err(DpError::NonpositiveSensitivity(sensitivity))
    }
}

/// Laplace(0, scale) by inverse CDF with `u` uniform on the open interval
/// (-1/2, 1/2).
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u: f64 = rng.gen::<f64>() - 0.5;
        if u != -0.5 {
            break u;
        }
    };
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// A noisy answer. Downstream generators only ever see these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyMeasurement {
    pub query: usize,
    pub value: f64,
    pub epsilon_used: f64,
    pub scale: f64,
}

pub fn laplace_mechanism<R: Rng + ?Sized>(
    query: usize,
    true_value: f64,
    sensitivity: f64,
    eps: f64,
    rng: &mut R,
) -> Result<NoisyMeasurement, DpError> {
    check_epsilon(eps)?;
    check_sensitivity(sensitivity)?;
    let scale = sensitivity / eps;
    Ok(NoisyMeasurement {
        query,
        value: true_value + sample_laplace(scale, rng),
        epsilon_used: eps,
        scale,
    })
}

/// Selection probabilities `∝ exp(eps * score / (2 * sensitivity))`,
/// normalized after subtracting the maximum score.
pub fn exponential_weights(
    scores: &[f64],
    eps: f64,
    sensitivity: f64,
) -> Result<Vec<f64>, DpError> {
    check_epsilon(eps)?;
    check_sensitivity(sensitivity)?;
    if scores.is_empty() {
        return Err(DpError::EmptyScores);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores
        .iter()
        .map(|s| (eps * (s - max) / (2.0 * sensitivity)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn exponential_mechanism<R: Rng + ?Sized>(
    scores: &[f64],
    eps: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<usize, DpError> {
    let probs = exponential_weights(scores, eps, sensitivity)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    Ok(probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1))
}

#[cfg(not(target_arch = "wasm32"))]
fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

// no system clock on wasm32-unknown-unknown
#[cfg(target_arch = "wasm32")]
fn now_ms() -> u64 {
    0
}

/// Relative slack admitted when comparing floating-point spend totals, so
/// that e.g. thirty spends of 2/60 exhaust a budget of 2.
pub const BUDGET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendEntry {
    pub step: usize,
    pub mechanism: String,
    pub epsilon: f64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Append-only epsilon ledger under sequential composition.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyBudget {
    epsilon_total: f64,
    epsilon_spent: f64,
    log: Vec<SpendEntry>,
}

impl PrivacyBudget {
    pub fn new(epsilon_total: f64) -> Result<Self, DpError> {
        check_epsilon(epsilon_total)?;
        Ok(Self {
            epsilon_total,
            epsilon_spent: 0.0,
            log: Vec::new(),
        })
    }

    pub fn epsilon_total(&self) -> f64 {
        self.epsilon_total
    }

    pub fn epsilon_spent(&self) -> f64 {
        self.epsilon_spent
    }

    pub fn remaining(&self) -> f64 {
        (self.epsilon_total - self.epsilon_spent).max(0.0)
    }

    pub fn log(&self) -> &[SpendEntry] {
        &self.log
    }

    /// Whether `eps` more could be spent.
    pub fn admits(&self, eps: f64) -> bool {
        self.epsilon_spent + eps <= self.epsilon_total * (1.0 + BUDGET_SLACK)
    }

    pub fn spend(&mut self, eps: f64, mechanism: &str) -> Result<(), DpError> {
        check_epsilon(eps)?;
        if !self.admits(eps) {
            return Err(DpError::BudgetExceeded {
                spent: self.epsilon_spent,
                requested: eps,
                total: self.epsilon_total,
            });
        }
        self.epsilon_spent += eps;
        let timestamp = now_ms();
        self.log.push(SpendEntry {
            step: self.log.len(),
            mechanism: mechanism.to_string(),
            epsilon: eps,
            timestamp,
        });
        Ok(())
    }

    /// One JSON object per spend, newline-terminated.
    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        for entry in &self.log {
            serde_json::to_writer(&mut sink, entry)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laplace_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = laplace_mechanism(0, 10.0, 1.0, 2.0, &mut rng).unwrap();
        assert_eq!(m.scale, 0.5);
        assert_eq!(m.epsilon_used, 2.0);
        assert_eq!(
            laplace_mechanism(0, 1.0, 1.0, 0.0, &mut rng),
            Err(DpError::NonpositiveEpsilon(0.0))
        );
        assert_eq!(
            laplace_mechanism(0, 1.0, -1.0, 1.0, &mut rng),
            Err(DpError::NonpositiveSensitivity(-1.0))
        );
    }

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_laplace(0.5, &mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((var - 0.5).abs() / 0.5 < 0.02, "variance {var}");
    }

    #[test]
    fn exponential_symmetric_and_singleton() {
        let p = exponential_weights(&[0.0, 0.0, 0.0], 1.0, 1.0).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert_eq!(
                exponential_mechanism(&[3.5], 1.0, 1.0, &mut rng).unwrap(),
                0
            );
        }
        assert_eq!(
            exponential_mechanism(&[], 1.0, 1.0, &mut rng),
            Err(DpError::EmptyScores)
        );
        assert!(exponential_mechanism(&[1.0], -1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn exponential_two_way_frequency() {
        let e = std::f64::consts::E;
        let p0 = e / (e + 1.0);
        let probs = exponential_weights(&[1.0, 0.0], 2.0, 1.0).unwrap();
        assert!((probs[0] - p0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| exponential_mechanism(&[1.0, 0.0], 2.0, 1.0, &mut rng).unwrap() == 0)
            .count();
        let sigma = (p0 * (1.0 - p0) / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - p0).abs() < 3.0 * sigma);
    }

    #[test]
    fn exponential_shift_invariant() {
        let scores = [4.0, 1.0, 0.0, 7.0, 2.0];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 1024.0).collect();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert_eq!(
                exponential_mechanism(&scores, 0.7, 1.0, &mut a).unwrap(),
                exponential_mechanism(&shifted, 0.7, 1.0, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn budget_exhaustion() {
        let mut budget = PrivacyBudget::new(2.0).unwrap();
        for _ in 0..30 {
            budget.spend(2.0 / 60.0, "laplace").unwrap();
        }
        for _ in 0..30 {
            budget.spend(2.0 / 60.0, "exponential").unwrap();
        }
        assert!((budget.epsilon_spent() - 2.0).abs() < 1e-12);
        assert!(matches!(
            budget.spend(1e-3, "laplace"),
            Err(DpError::BudgetExceeded { .. })
        ));
        assert_eq!(budget.log().len(), 60);
        let logged: f64 = budget.log().iter().map(|e| e.epsilon).sum();
        assert_eq!(logged, budget.epsilon_spent());
    }

    #[test]
    fn budget_additivity() {
        let mut halves = PrivacyBudget::new(3.0).unwrap();
        halves.spend(0.5, "a").unwrap();
        halves.spend(0.5, "a").unwrap();
        let mut whole = PrivacyBudget::new(3.0).unwrap();
        whole.spend(1.0, "a").unwrap();
        assert_eq!(halves.epsilon_spent(), whole.epsilon_spent());
    }

    #[test]
    fn audit_log_jsonl() {
        let mut budget = PrivacyBudget::new(1.0).unwrap();
        budget.spend(0.25, "laplace").unwrap();
        budget.spend(0.25, "exponential").unwrap();
        let mut out = Vec::new();
        budget.write_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["step"], 1);
        assert_eq!(v["mechanism"], "exponential");
        assert_eq!(v["epsilon"], 0.25);
        assert!(v["timestamp"].is_u64());
    }
}
