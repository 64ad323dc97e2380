use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Environment steps consumed so far.
    pub steps: u64,
    pub mean_return: f64,
}

/// Trapezoidal area under the return-versus-steps curve.
pub fn auc(curve: &[CurvePoint]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::Empty("learning curve"));
    }
    let mut area = 0.0;
    for w in curve.windows(2) {
        if w[1].steps < w[0].steps {
            return Err(invalid("curve steps must be non-decreasing"));
        }
        area += (w[1].steps - w[0].steps) as f64 * 0.5 * (w[0].mean_return + w[1].mean_return);
    }
    Ok(area)
}
