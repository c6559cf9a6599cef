// SPDX-License-Identifier: Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SplitSpec;
use crate::linalg::{center_columns, is_finite};
use crate::{Error, Result};

/// Ridge penalty. `Auto` is `1e-3 · trace(XᵀX) / d` on the centred training rows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Lambda {
    Auto,
    Fixed(f64),
}

impl Lambda {
    fn resolve(self, xc: &DMatrix<f64>) -> f64 {
        match self {
            Lambda::Fixed(l) => l,
            Lambda::Auto => 1e-3 * xc.norm_squared() / xc.ncols().max(1) as f64,
        }
    }
}

/// Linear map `y = xᵀW + b` fitted in closed form on centred data.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `d × k`.
    pub weights: DMatrix<f64>,
    pub intercept: DVector<f64>,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: Lambda) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!("{} rows of X, {} rows of Y", x.nrows(), y.nrows())));
        }
        if x.nrows() < 2 {
            return Err(Error::input("ridge needs at least 2 training rows"));
        }
        if !is_finite(x) || !is_finite(y) {
            return Err(Error::Numerical("non-finite training data".into()));
        }
        let (xc, x_mean) = center_columns(x);
        let (yc, y_mean) = center_columns(y);
        let lambda = lambda.resolve(&xc);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::input(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let d = x.ncols();
        let gram = xc.transpose() * &xc + DMatrix::identity(d, d) * lambda;
        let rhs = xc.transpose() * &yc;
        let weights = solve_spd(gram, &rhs, lambda)?;
        let intercept = y_mean - weights.transpose() * x_mean;
        Ok(Self {
            weights,
            intercept,
            lambda,
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * &self.weights;
        for mut row in out.row_iter_mut() {
            row += self.intercept.transpose();
        }
        out
    }
}

fn solve_spd(a: DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let singular = || {
        Error::Numerical("singular normal equations at lambda = 0; use lambda > 0".into())
    };
    match a.clone().cholesky() {
        Some(ch) => {
            let diag = ch.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if lambda == 0.0 && (lo / hi).powi(2) < 1e-13 {
                return Err(singular());
            }
            Ok(ch.solve(b))
        }
        None if lambda == 0.0 => Err(singular()),
        None => a.lu().solve(b).ok_or_else(|| Error::Numerical("ridge system could not be solved".into())),
    }
}

/// Coefficient of determination per target column, against the mean of the
/// evaluated rows. Columns with no variance are `None`; `mean` averages the
/// rest. Values may be negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2 {
    pub per_target: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

pub fn r2_scores(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> R2 {
    let per_target: Vec<Option<f64>> = (0..y_true.ncols())
        .map(|j| {
            let t = y_true.column(j);
            let mean = t.mean();
            let ss_tot: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = t.iter().zip(y_pred.column(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
            (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
        })
        .collect();
    let defined: Vec<f64> = per_target.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    R2 { per_target, mean }
}

/// Rows to probe, each tagged with the unit (utterance) it came from.
#[derive(Clone, Debug)]
pub struct ProbeData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub groups: Vec<usize>,
}

impl ProbeData {
    /// Every row is its own unit.
    pub fn ungrouped(x: DMatrix<f64>, y: DMatrix<f64>) -> Self {
        let groups = (0..x.nrows()).collect();
        Self { x, y, groups }
    }

    pub fn n_units(&self) -> usize {
        self.groups.iter().max().map_or(0, |m| m + 1)
    }

    /// Row indices belonging to the given units.
    pub fn rows_of(&self, units: &[usize]) -> Vec<usize> {
        let mut mask = vec![false; self.n_units()];
        for &u in units {
            mask[u] = true;
        }
        (0..self.groups.len()).filter(|&r| mask[self.groups[r]]).collect()
    }
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

#[derive(Clone, Debug)]
pub struct RidgeProbe {
    pub model: RidgeModel,
    pub r2_train: R2,
    pub r2_test: R2,
    pub train_units: Vec<usize>,
    pub test_units: Vec<usize>,
}

/// Fits on the training units only and scores on the held-out ones.
pub fn fit_ridge_probe(data: &ProbeData, lambda: Lambda, split: &SplitSpec) -> Result<RidgeProbe> {
    if data.groups.len() != data.x.nrows() || data.x.nrows() != data.y.nrows() {
        return Err(Error::Dimension("probe rows, targets and groups disagree".into()));
    }
    let (train_units, test_units) = split.split(data.n_units())?;
    let (train, test) = (data.rows_of(&train_units), data.rows_of(&test_units));
    if test.is_empty() {
        return Err(Error::input("held-out split has no rows"));
    }
    let (xtr, ytr) = (select_rows(&data.x, &train), select_rows(&data.y, &train));
    let (xte, yte) = (select_rows(&data.x, &test), select_rows(&data.y, &test));
    let model = RidgeModel::fit(&xtr, &ytr, lambda)?;
    Ok(RidgeProbe {
        r2_train: r2_scores(&ytr, &model.predict(&xtr)),
        r2_test: r2_scores(&yte, &model.predict(&xte)),
        model,
        train_units,
        test_units,
    })
}
