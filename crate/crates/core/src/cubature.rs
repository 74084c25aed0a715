//! Discrete measures approximating Gaussians.
//!
//! Standard rules approximate `N(0, I_k)`; [`transform`] pushes them onto
//! `N(m, SSᵀ)`. Two deterministic rules are provided: the symmetric degree-3
//! rule on `2k` points and a degree-5 rule on `2k² + 1` points (origin, the
//! `±√(k+2)·eᵢ` axis points and the `±√((k+2)/2)·(eᵢ ± eⱼ)` diagonal points).
//! The degree-5 rule has negative axis weights for `k > 4`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::symmetrize;

/// Which discrete measure to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleKind {
    Cubature3,
    Cubature5,
    /// `n` i.i.d. standard-normal draws, equally weighted.
    Empirical(usize),
}

impl RuleKind {
    pub fn is_random(self) -> bool {
        matches!(self, RuleKind::Empirical(_))
    }

    /// Number of support points for a `k`-dimensional rule.
    pub fn support_size(self, k: usize) -> usize {
        match self {
            RuleKind::Cubature3 => 2 * k,
            RuleKind::Cubature5 => 2 * k * k + 1,
            RuleKind::Empirical(n) => n,
        }
    }
}

/// Weighted point set `Σⱼ wⱼ δ(xʲ)`; points are the columns of `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    points: DMatrix<f64>,
}

impl DiscreteMeasure {
    /// Validates that there is one weight per point and that weights sum to one.
    pub fn new(weights: Vec<f64>, points: DMatrix<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        check_dim(weights.len(), points.ncols())?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Unsupported(format!(
                "measure weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights, points })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, j: usize) -> DVector<f64> {
        self.points.column(j).into_owned()
    }
}

/// Standard-Gaussian rule of the requested kind in `k` dimensions.
///
/// `rng` must be given for [`RuleKind::Empirical`] and is ignored otherwise.
pub fn standard_rule(
    kind: RuleKind,
    k: usize,
    rng: Option<&mut dyn RngCore>,
) -> Result<DiscreteMeasure> {
    if k < 1 {
        return Err(Error::InvalidDimension(k));
    }
    match kind {
        RuleKind::Cubature3 => Ok(degree3(k)),
        RuleKind::Cubature5 => Ok(degree5(k)),
        RuleKind::Empirical(n) => {
            if n < 2 {
                return Err(Error::Unsupported(format!(
                    "empirical measures need at least 2 samples, got {n}"
                )));
            }
            let rng = rng.ok_or_else(|| {
                Error::Unsupported("empirical measure requested without a generator".into())
            })?;
            let points = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut *rng));
            Ok(DiscreteMeasure {
                weights: vec![1.0 / n as f64; n],
                points,
            })
        }
    }
}

fn degree3(k: usize) -> DiscreteMeasure {
    let r = (k as f64).sqrt();
    let mut points = DMatrix::zeros(k, 2 * k);
    for i in 0..k {
        points[(i, 2 * i)] = r;
        points[(i, 2 * i + 1)] = -r;
    }
    DiscreteMeasure {
        weights: vec![1.0 / (2 * k) as f64; 2 * k],
        points,
    }
}

fn degree5(k: usize) -> DiscreteMeasure {
    let kf = k as f64;
    let n = 2 * k * k + 1;
    let mut points = DMatrix::zeros(k, n);
    let mut weights = Vec::with_capacity(n);

    weights.push(2.0 / (kf + 2.0));

    let axis = (kf + 2.0).sqrt();
    let axis_w = (4.0 - kf) / (2.0 * (kf + 2.0) * (kf + 2.0));
    let mut col = 1;
    for i in 0..k {
        for sign in [1.0, -1.0] {
            points[(i, col)] = sign * axis;
            weights.push(axis_w);
            col += 1;
        }
    }

    let diag = ((kf + 2.0) / 2.0).sqrt();
    let diag_w = 1.0 / ((kf + 2.0) * (kf + 2.0));
    for i in 0..k {
        for j in (i + 1)..k {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                points[(i, col)] = si * diag;
                points[(j, col)] = sj * diag;
                weights.push(diag_w);
                col += 1;
            }
        }
    }
    debug_assert_eq!(col, n);
    DiscreteMeasure { weights, points }
}

/// Maps every point `x ↦ m + S x`; weights are unchanged.
pub fn transform(
    mu: &DiscreteMeasure,
    m: &DVector<f64>,
    s: &DMatrix<f64>,
) -> Result<DiscreteMeasure> {
    let k = mu.dim();
    check_dim(k, s.ncols())?;
    check_dim(m.len(), s.nrows())?;
    let mut points = s * &mu.points;
    for mut col in points.column_iter_mut() {
        col += m;
    }
    Ok(DiscreteMeasure {
        weights: mu.weights.clone(),
        points,
    })
}

/// Weighted mean and (symmetrized) covariance of the measure.
pub fn moments(mu: &DiscreteMeasure) -> (DVector<f64>, DMatrix<f64>) {
    weighted_moments(&mu.weights, &mu.points)
}

/// Mean and covariance of the columns of `points` under `weights`.
pub(crate) fn weighted_moments(
    weights: &[f64],
    points: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let w = DVector::from_column_slice(weights);
    let mean = points * &w;
    let mut centered = points.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = cross_moment(weights, &centered, &centered);
    (mean, symmetrize(&cov))
}

/// `Σⱼ wⱼ aʲ (bʲ)ᵀ` for already-centered column sets.
pub(crate) fn cross_moment(weights: &[f64], a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    scaled * b.transpose()
}

const MAX_DEFECT_DEGREE: usize = 6;
const MAX_DEFECT_DIM: usize = 6;

/// Largest absolute gap between the measure's monomial moments and those of
/// `N(0, I_k)`, over all monomials of total degree `≤ degree`.
pub fn moment_defect(mu: &DiscreteMeasure, degree: usize) -> Result<f64> {
    let k = mu.dim();
    if degree > MAX_DEFECT_DEGREE || k > MAX_DEFECT_DIM {
        return Err(Error::Unsupported(format!(
            "moment defect limited to degree <= {MAX_DEFECT_DEGREE} and dimension <= {MAX_DEFECT_DIM} (got degree {degree}, dimension {k})"
        )));
    }
    let mut worst = 0.0_f64;
    for exps in multi_indices(k, degree) {
        let empirical: f64 = mu
            .points
            .column_iter()
            .zip(&mu.weights)
            .map(|(x, w)| {
                w * exps
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| x[i].powi(e as i32))
                    .product::<f64>()
            })
            .sum();
        worst = worst.max((empirical - gaussian_moment(&exps)).abs());
    }
    Ok(worst)
}

/// `E[∏ xᵢ^aᵢ]` for independent standard normals: `∏ (aᵢ − 1)!!` when every
/// exponent is even, zero otherwise.
fn gaussian_moment(exps: &[usize]) -> f64 {
    exps.iter()
        .map(|&a| {
            if a % 2 == 1 {
                0.0
            } else {
                (1..a).step_by(2).map(|v| v as f64).product()
            }
        })
        .product()
}

/// All exponent vectors of length `k` with total degree `≤ degree`.
fn multi_indices(k: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    rec(0, degree, &mut vec![0; k], &mut out);
    out
}
