//! Closed-form least-squares baseline on `[base; thick; one_hot; 1]`.

use nalgebra::DMatrix;

use crate::dataset::{DatasetBundle, PaintSampleRecord, Split};
use crate::{Error, Result};

/// Affine map from model inputs to the three color channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    classes: usize,
    /// (3, 5 + classes): columns are r, g, b, thick, one-hot..., intercept.
    weights: DMatrix<f64>,
}

fn features(r: &PaintSampleRecord, classes: usize) -> Vec<f64> {
    let mut f = vec![0.0; 5 + classes];
    f[..3].copy_from_slice(&r.base);
    f[3] = r.thick_norm;
    f[4 + r.class_id as usize] = 1.0;
    f[4 + classes] = 1.0;
    f
}

impl LinearModel {
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn intercept(&self) -> [f64; 3] {
        let j = self.weights.ncols() - 1;
        [self.weights[(0, j)], self.weights[(1, j)], self.weights[(2, j)]]
    }

    pub fn predict_raw(&self, r: &PaintSampleRecord) -> [f64; 3] {
        let f = features(r, self.classes);
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = f.iter().enumerate().map(|(j, v)| self.weights[(c, j)] * v).sum();
        }
        out
    }

    pub fn predict(&self, records: &[PaintSampleRecord]) -> Vec<[f64; 3]> {
        records
            .iter()
            .map(|r| self.predict_raw(r).map(|v| v.clamp(0.0, 1.0)))
            .collect()
    }
}

/// Fit on the training split of `bundle`.
pub fn linear_regression_fit(bundle: &DatasetBundle) -> Result<LinearModel> {
    fit_records(&bundle.part(Split::Train), bundle.meta.classes)
}

/// Least squares via QR. Input columns that are constant over the data carry
/// no information beyond the intercept and get weight 0; with several classes
/// present the first one is the reference level. Anything still collinear is
/// reported as rank deficient.
pub fn fit_records(records: &[PaintSampleRecord], classes: usize) -> Result<LinearModel> {
    let p = 5 + classes;
    if records.len() < p {
        return Err(Error::Fit(format!("need at least {p} records, got {}", records.len())));
    }
    if let Some(r) = records.iter().find(|r| r.class_id as usize >= classes) {
        return Err(Error::Fit(format!("class {} >= class count {classes}", r.class_id)));
    }
    let rows: Vec<Vec<f64>> = records.iter().map(|r| features(r, classes)).collect();
    let intercept = p - 1;
    let mut active: Vec<usize> = (0..intercept)
        .filter(|&j| rows.iter().any(|f| f[j] != rows[0][j]))
        .collect();
    let onehot: Vec<usize> = active.iter().copied().filter(|&j| (4..4 + classes).contains(&j)).collect();
    if onehot.len() >= 2 {
        active.retain(|&j| j != onehot[0]);
    }
    active.push(intercept);

    let n = records.len();
    let k = active.len();
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][active[j]]);
    let y = DMatrix::from_fn(n, 3, |i, c| records[i].painted[c]);

    let qr = x.qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| !(r[(i, i)].abs() > 1e-10 * scale)) {
        return Err(Error::Fit("design matrix is rank deficient".into()));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Fit("triangular solve failed".into()))?;

    let mut weights = DMatrix::zeros(3, p);
    for (jj, &j) in active.iter().enumerate() {
        for c in 0..3 {
            weights[(c, j)] = beta[(jj, c)];
        }
    }
    Ok(LinearModel { classes, weights })
}
