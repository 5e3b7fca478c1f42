use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::QualityError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    /// Two-sided p-value of the t-test for zero correlation.
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with a two-sided Student-t p-value on `n - 2` degrees
/// of freedom. With a 0/1 `y` this is the point-biserial correlation.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationResult, QualityError> {
    if x.len() != y.len() {
        return Err(QualityError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(QualityError::TooFewSamples(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(QualityError::DegenerateVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        r,
        p: pearson_p_value(r, n),
        n,
    })
}

/// Two-sided p for `t = r * sqrt((n-2) / (1-r^2))`, via
/// `P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn pearson_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let one_minus = 1.0 - r * r;
    if one_minus <= 0.0 {
        return 0.0;
    }
    let t2 = r * r * df / one_minus;
    beta_reg(df / 2.0, 0.5, df / (df + t2)).clamp(0.0, 1.0)
}
