use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Falloff outside the target interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigmoid {
    Gaussian,
    Quadratic,
}

/// Bounded shaping kernel: 1 inside `[lo, hi]`, decaying with the distance
/// `δ` past the nearest bound so that it equals `value_at_margin` at
/// `δ = margin`.
///
/// * gaussian: `exp(-½ (δ·s/margin)²)` with `s = sqrt(-2 ln value_at_margin)`
/// * quadratic: `max(0, 1 - (1 - value_at_margin)(δ/margin)²)`
pub fn tolerance(
    v: f64,
    bounds: (f64, f64),
    margin: f64,
    value_at_margin: f64,
    sigmoid: Sigmoid,
) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(lo <= hi) {
        return Err(Error::invalid("tolerance bounds must satisfy lo <= hi"));
    }
    if !(margin > 0.0) {
        return Err(Error::invalid("tolerance margin must be positive"));
    }
    let ok = match sigmoid {
        Sigmoid::Gaussian => value_at_margin > 0.0 && value_at_margin < 1.0,
        Sigmoid::Quadratic => (0.0..1.0).contains(&value_at_margin),
    };
    if !ok {
        return Err(Error::invalid("value_at_margin out of range"));
    }
    Ok(tolerance_unchecked(v, bounds, margin, value_at_margin, sigmoid))
}

#[inline]
pub(crate) fn tolerance_unchecked(
    v: f64,
    (lo, hi): (f64, f64),
    margin: f64,
    value_at_margin: f64,
    sigmoid: Sigmoid,
) -> f64 {
    let delta = if v < lo {
        lo - v
    } else if v > hi {
        v - hi
    } else {
        return 1.0;
    };
    let x = delta / margin;
    match sigmoid {
        Sigmoid::Gaussian => {
            let scale = (-2.0 * value_at_margin.ln()).sqrt();
            (-0.5 * (x * scale).powi(2)).exp()
        }
        Sigmoid::Quadratic => {
            let s = x * (1.0 - value_at_margin).sqrt();
            if s.abs() < 1.0 {
                1.0 - s * s
            } else {
                0.0
            }
        }
    }
}
