use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Targets with a smaller norm are left out of the relative error.
pub const MRE_MIN_TARGET_NORM: f64 = 1e-6;

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn check(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::domain("metric over an empty set"));
    }
    if pred.len() != target.len() {
        return Err(Error::domain(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// `sqrt((1/n) Σ ||ŷ - y||²)`.
pub fn rmse(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    check(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = norm3(sub3(*p, *t));
            e * e
        })
        .sum();
    Ok((sum / pred.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mre {
    pub percent: f64,
    /// Records skipped because their target norm is below [`MRE_MIN_TARGET_NORM`].
    pub excluded: usize,
}

/// Mean of `||ŷ - y|| / ||y||` in percent.
pub fn mre(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<Mre> {
    check(pred, target)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, t) in pred.iter().zip(target) {
        let tn = norm3(*t);
        if tn < MRE_MIN_TARGET_NORM {
            continue;
        }
        sum += norm3(sub3(*p, *t)) / tn;
        used += 1;
    }
    if used == 0 {
        return Err(Error::domain("every target is black; relative error undefined"));
    }
    Ok(Mre {
        percent: 100.0 * sum / used as f64,
        excluded: pred.len() - used,
    })
}

/// Metrics JSON payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mre_percent: f64,
    pub excluded: usize,
}

pub fn evaluate(pred: &[[f64; 3]], target: &[[f64; 3]]) -> Result<MetricsReport> {
    let m = mre(pred, target)?;
    Ok(MetricsReport {
        rmse: rmse(pred, target)?,
        mre_percent: m.percent,
        excluded: m.excluded,
    })
}
