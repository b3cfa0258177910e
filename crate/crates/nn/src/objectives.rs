//! Adversarial, cycle-consistency and feature-alignment losses with their gradients.
//!
//! Discriminators emit logits. Every adversarial loss is the mean over batch and score-map
//! positions, evaluated through a stable softplus so saturated logits never produce `log(0)`.
//! The `*_grad` variants return the loss together with its gradient with respect to each input.

use pdanet_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_d: f64,
    pub lambda_b: f64,
    pub lambda_cyc: f64,
    pub lambda_da: f64,
    pub lambda_fa: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_d: 1.0, lambda_b: 1.0, lambda_cyc: 1.0, lambda_da: 1.0, lambda_fa: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_d", self.lambda_d),
            ("lambda_b", self.lambda_b),
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_da", self.lambda_da),
            ("lambda_fa", self.lambda_fa),
        ];
        for (key, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(NnError::Config(format!("train.weights.{key} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, f: f64) -> Self {
        LossWeights {
            lambda_d: self.lambda_d * f,
            lambda_b: self.lambda_b * f,
            lambda_cyc: self.lambda_cyc * f,
            lambda_da: self.lambda_da * f,
            lambda_fa: self.lambda_fa * f,
        }
    }
}

/// Generator adversarial objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    /// `E[log(1 - sigma(fake))]`, descended.
    Saturating,
    /// `-E[log sigma(fake)]`.
    #[default]
    NonSaturating,
}

/// Per-step scalar losses. Discriminator terms are measured before the discriminator update,
/// generator terms after it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(rename = "d_D")]
    pub d_d: f64,
    #[serde(rename = "d_B")]
    pub d_b: f64,
    #[serde(rename = "d_DA")]
    pub d_da: f64,
    #[serde(rename = "d_FA")]
    pub d_fa: f64,
    #[serde(rename = "g_D")]
    pub g_d: f64,
    #[serde(rename = "g_B")]
    pub g_b: f64,
    #[serde(rename = "g_DA")]
    pub g_da: f64,
    /// Generator-side feature-alignment term.
    #[serde(rename = "g_FA")]
    pub g_fa: f64,
    pub cyc_f: f64,
    pub cyc_b: f64,
    #[serde(rename = "total_D")]
    pub total_d: f64,
    #[serde(rename = "total_G")]
    pub total_g: f64,
    pub mode: GenMode,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.d_d, self.d_b, self.d_da, self.d_fa, self.g_d, self.g_b, self.g_da, self.g_fa, self.cyc_f, self.cyc_b,
            self.total_d, self.total_g,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `(total_D, total_G)`: the discriminators ascend the first, the generators descend the second.
pub fn total_losses(parts: &LossReport, w: &LossWeights) -> (f64, f64) {
    let d = w.lambda_d * parts.d_d + w.lambda_b * parts.d_b + w.lambda_da * parts.d_da + w.lambda_fa * parts.d_fa;
    let g = w.lambda_d * parts.g_d
        + w.lambda_b * parts.g_b
        + w.lambda_da * parts.g_da
        + w.lambda_cyc * (parts.cyc_f + parts.cyc_b)
        + w.lambda_fa * parts.g_fa;
    (d, g)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check<T: Scalar>(what: &str, v: &[T]) -> Result<T> {
    if v.is_empty() {
        return Err(NnError::Validation(format!("{what}: empty score map")));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(NnError::Numeric(format!("{what}: non-finite value at {i}")));
    }
    Ok(T::lit(v.len() as f64))
}

/// `mean log sigma(x)` and its gradient.
fn mean_log_sigmoid<T: Scalar>(what: &str, x: &[T]) -> Result<(T, Vec<T>)> {
    let n = check(what, x)?;
    let loss = -x.iter().map(|&v| softplus(-v)).sum::<T>() / n;
    Ok((loss, x.iter().map(|&v| sigmoid(-v) / n).collect()))
}

/// `mean log(1 - sigma(x))` and its gradient.
fn mean_log_one_minus_sigmoid<T: Scalar>(what: &str, x: &[T]) -> Result<(T, Vec<T>)> {
    let n = check(what, x)?;
    let loss = -x.iter().map(|&v| softplus(v)).sum::<T>() / n;
    Ok((loss, x.iter().map(|&v| -sigmoid(v) / n).collect()))
}

/// `E[log sigma(real)] + E[log(1 - sigma(fake))]` with gradients for both score maps.
pub fn adv_discriminator_grad<T: Scalar>(real: &[T], fake: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
    let (a, ga) = mean_log_sigmoid("real scores", real)?;
    let (b, gb) = mean_log_one_minus_sigmoid("fake scores", fake)?;
    Ok((a + b, ga, gb))
}

pub fn adv_discriminator_loss<T: Scalar>(real: &[T], fake: &[T]) -> Result<T> {
    Ok(adv_discriminator_grad(real, fake)?.0)
}

pub fn adv_generator_grad<T: Scalar>(fake: &[T], mode: GenMode) -> Result<(T, Vec<T>)> {
    match mode {
        GenMode::Saturating => mean_log_one_minus_sigmoid("fake scores", fake),
        GenMode::NonSaturating => {
            let (l, g) = mean_log_sigmoid("fake scores", fake)?;
            Ok((-l, g.into_iter().map(|v| -v).collect()))
        }
    }
}

pub fn adv_generator_loss<T: Scalar>(fake: &[T], mode: GenMode) -> Result<T> {
    Ok(adv_generator_grad(fake, mode)?.0)
}

/// Mean absolute error and its (sub)gradient with respect to `reconstructed`.
pub fn cycle_grad<T: Scalar>(x: &[T], reconstructed: &[T]) -> Result<(T, Vec<T>)> {
    if x.len() != reconstructed.len() {
        return Err(NnError::Shape(format!("cycle loss on {} vs {} elements", x.len(), reconstructed.len())));
    }
    let n = check("cycle target", x)?;
    check("reconstruction", reconstructed)?;
    let loss = x.iter().zip(reconstructed).map(|(&a, &b)| (a - b).abs()).sum::<T>() / n;
    let grad = x
        .iter()
        .zip(reconstructed)
        .map(|(&a, &b)| {
            let d = b - a;
            if d > T::zero() {
                T::one() / n
            } else if d < T::zero() {
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((loss, grad))
}

pub fn cycle_loss<T: Scalar>(x: &[T], reconstructed: &[T]) -> Result<T> {
    Ok(cycle_grad(x, reconstructed)?.0)
}

/// Feature-classifier objective: experimental-encoder features are labelled real and
/// simulated-encoder features fake. Gradients are `(d/d exp, d/d sim)`.
pub fn feature_alignment_grad<T: Scalar>(score_exp: &[T], score_sim: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
    adv_discriminator_grad(score_exp, score_sim)
}

pub fn feature_alignment_loss<T: Scalar>(score_exp: &[T], score_sim: &[T]) -> Result<T> {
    Ok(feature_alignment_grad(score_exp, score_sim)?.0)
}

/// Encoder-side feature-alignment term, descended by both encoders.
///
/// Saturating mode descends the classifier objective itself. Non-saturating mode swaps the
/// labels, `-E[log sigma(sim)] - E[log(1 - sigma(exp))]`, which has the same fixed point and
/// does not vanish when the classifier separates the domains.
pub fn fa_generator_grad<T: Scalar>(score_exp: &[T], score_sim: &[T], mode: GenMode) -> Result<(T, Vec<T>, Vec<T>)> {
    match mode {
        GenMode::Saturating => feature_alignment_grad(score_exp, score_sim),
        GenMode::NonSaturating => {
            let (l, gs, ge) = adv_discriminator_grad(score_sim, score_exp)?;
            Ok((-l, ge.into_iter().map(|v| -v).collect(), gs.into_iter().map(|v| -v).collect()))
        }
    }
}

pub fn fa_generator_loss<T: Scalar>(score_exp: &[T], score_sim: &[T], mode: GenMode) -> Result<T> {
    Ok(fa_generator_grad(score_exp, score_sim, mode)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f32), 1.0);
    }

    #[test]
    fn weights_reject_negative_entries() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { lambda_fa: -0.1, ..LossWeights::default() }.validate().is_err());
        assert!(LossWeights { lambda_cyc: f64::NAN, ..LossWeights::default() }.validate().is_err());
    }

    #[test]
    fn non_finite_scores_are_numeric_errors() {
        assert!(matches!(adv_discriminator_loss(&[f64::NAN], &[0.0]), Err(NnError::Numeric(_))));
        assert!(matches!(adv_generator_loss(&[f64::INFINITY], GenMode::Saturating), Err(NnError::Numeric(_))));
        assert!(matches!(cycle_loss(&[0.0, 1.0], &[0.0]), Err(NnError::Shape(_))));
    }
}
