// SPDX-License-Identifier: Apache-2.0

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::concept::{ConceptKind, ConceptMatrix};
use crate::linalg::{center_columns, column_space_basis, is_finite, sorted_eigh};
use crate::{Error, Result};

/// Ridge added to the hidden-state covariance before whitening. `Auto` is
/// `1e-4 · trace(Σ) / d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shrinkage {
    Auto,
    Fixed(f64),
}

impl Default for Shrinkage {
    fn default() -> Self {
        Shrinkage::Auto
    }
}

/// Singular directions of `W·Σ_XZ` below this fraction of the largest are
/// treated as absent.
const RANK_TOL: f64 = 1e-10;

/// A linear eraser `x ↦ P x`, applied without any bias term.
#[derive(Clone, Debug, PartialEq)]
pub struct Eraser {
    /// `d × d`.
    pub projection: DMatrix<f64>,
    pub concept_kind: ConceptKind,
    pub concept_dim: usize,
    pub layer: Option<u32>,
    /// Rows used for fitting; zero for random erasers.
    pub n: usize,
    pub shrinkage: f64,
    /// Dimension of the erased subspace.
    pub rank: usize,
}

impl Eraser {
    pub fn width(&self) -> usize {
        self.projection.nrows()
    }

    /// Applies the projection to each row of `x`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.width() {
            return Err(Error::Dimension(format!(
                "rows have width {}, eraser expects {}",
                x.ncols(),
                self.width()
            )));
        }
        Ok(x * self.projection.transpose())
    }

    pub fn apply_f32(&self, x: &DMatrix<f32>) -> Result<DMatrix<f32>> {
        Ok(self.apply(&x.map(|v| v as f64))?.map(|v| v as f32))
    }

    /// `‖P·P − P‖_F / ‖P‖_F`.
    pub fn idempotence_error(&self) -> f64 {
        let p = &self.projection;
        (p * p - p).norm() / p.norm().max(f64::MIN_POSITIVE)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            projection: DMatrix::identity(d, d),
            concept_kind: ConceptKind::Custom,
            concept_dim: 0,
            layer: None,
            n: 0,
            shrinkage: 0.0,
            rank: 0,
        }
    }
}

/// LEACE with centred second moments and a bias-free map:
/// `P = I − W⁺ Π W`, where `W = (Σ_XX + sI)^{-1/2}` and `Π` projects onto the
/// column space of `W Σ_XZ`.
pub fn fit_leace(x: &DMatrix<f64>, z: &ConceptMatrix, shrinkage: Shrinkage) -> Result<Eraser> {
    let (n, d) = x.shape();
    let k = z.width();
    if n < 2 {
        return Err(Error::input("LEACE needs at least 2 rows"));
    }
    if z.rows() != n {
        return Err(Error::Dimension(format!("{n} hidden rows but {} concept rows", z.rows())));
    }
    if k >= d {
        return Err(Error::input(format!("concept width {k} must be below hidden width {d}")));
    }
    if !is_finite(x) {
        return Err(Error::Numerical("non-finite hidden states".into()));
    }
    let (xc, _) = center_columns(x);
    let (zc, _) = center_columns(z.matrix());
    let nf = n as f64;
    let sigma = xc.tr_mul(&xc) / nf;
    let sigma_xz = xc.tr_mul(&zc) / nf;
    let s = match shrinkage {
        Shrinkage::Auto => 1e-4 * sigma.trace() / d as f64,
        Shrinkage::Fixed(s) => s,
    };
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::input(format!("shrinkage must be finite and >= 0, got {s}")));
    }
    let (vals, vecs) = sorted_eigh(&(&sigma + DMatrix::identity(d, d) * s));
    let top = vals[0].max(0.0);
    if top == 0.0 {
        return Err(Error::Numerical("hidden states have zero covariance".into()));
    }
    let floor = if s > 0.0 { s } else { 1e-12 * top };
    if s == 0.0 && vals[d - 1] <= floor {
        return Err(Error::Numerical(
            "degenerate covariance with zero shrinkage; use a positive shrinkage".into(),
        ));
    }
    let clipped = vals.map(|v| v.max(floor));
    let scale = |f: fn(f64) -> f64| {
        let mut m = vecs.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= f(clipped[j]);
        }
        &m * vecs.transpose()
    };
    let whiten = scale(|v| 1.0 / v.sqrt());
    let unwhiten = scale(f64::sqrt);
    let u = column_space_basis(&(&whiten * &sigma_xz), RANK_TOL);
    let rank = u.ncols();
    let a = &unwhiten * &u;
    let b = &whiten * &u;
    let projection = DMatrix::identity(d, d) - a * b.transpose();
    if !is_finite(&projection) {
        return Err(Error::Numerical("eraser is not finite".into()));
    }
    Ok(Eraser {
        projection,
        concept_kind: z.kind(),
        concept_dim: k,
        layer: None,
        n,
        shrinkage: s,
        rank,
    })
}

/// Removes the span of the orthonormalised columns of `basis`: `P = I − QQᵀ`.
pub fn eraser_from_basis(basis: &DMatrix<f64>) -> Result<Eraser> {
    let (d, k) = basis.shape();
    if k >= d || k == 0 {
        return Err(Error::input(format!("erased dimension {k} must lie in 1..{d}")));
    }
    let q = basis.clone().qr().q();
    Ok(Eraser {
        projection: DMatrix::identity(d, d) - &q * q.transpose(),
        concept_kind: ConceptKind::Random,
        concept_dim: k,
        layer: None,
        n: 0,
        shrinkage: 0.0,
        rank: k,
    })
}

/// Orthogonal removal of a seeded random `k`-dimensional subspace.
pub fn random_eraser(d: usize, k: usize, seed: u64) -> Result<Eraser> {
    if k >= d {
        return Err(Error::input(format!("erased dimension {k} must be below {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    eraser_from_basis(&g)
}
