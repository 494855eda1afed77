//! Radial retraction onto the box `[-n, n]^m` and the localized nonlinearities.
//!
//! `truncate(a) = a` if `max_i |a_i| <= n`, otherwise `n a / max_i |a_i|`.
//! The map fixes the box, preserves zero coordinates and signs, and is
//! Lipschitz (not smooth) across the box boundary.

use crate::error::{Error, Result};
use crate::expr::EvalError;
use crate::model::{NoiseCoefficients, ReactionSystem};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TruncationLevel(f64);

impl TruncationLevel {
    pub fn new(n: f64) -> Result<Self> {
        if n > 0.0 {
            Ok(TruncationLevel(n))
        } else {
            Err(Error::Contract(format!("truncation level must be positive, got {n}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Retract `a` in place; returns whether it was moved.
#[inline]
pub fn truncate_in_place(a: &mut [f64], n: TruncationLevel) -> bool {
    let sup = a.iter().fold(0f64, |m, x| m.max(x.abs()));
    if sup <= n.0 {
        return false;
    }
    let scale = n.0 / sup;
    for x in a.iter_mut() {
        *x *= scale;
    }
    true
}

pub fn truncate_point(a: &[f64], n: TruncationLevel) -> Vec<f64> {
    let mut out = a.to_vec();
    truncate_in_place(&mut out, n);
    out
}

/// `f(truncate(a))`.
pub fn f_n(sys: &ReactionSystem, n: TruncationLevel, a: &[f64]) -> Result<Vec<f64>, EvalError> {
    sys.eval(&truncate_point(a, n))
}

/// `sigma(truncate(a))`, row-major `m x r`.
pub fn sigma_n(noise: &NoiseCoefficients, n: TruncationLevel, a: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut out = vec![0.0; noise.species() * noise.channels()];
    noise.eval_into(&truncate_point(a, n), &mut out)?;
    Ok(out)
}
