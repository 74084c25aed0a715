//! Dense Gaussian algebra: Cholesky factorization with a jitter ladder,
//! conditioning of jointly Gaussian vectors, and quadratic forms.
//!
//! Every covariance returned from this module is explicitly symmetrized.
//! Linear systems are always solved through a Cholesky factor and triangular
//! substitution; no explicit inverses are formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Relative jitter magnitudes tried, in order, when a plain factorization fails.
pub const JITTER_LADDER: [f64; 4] = [1e-12, 1e-10, 1e-8, 1e-6];

/// A multivariate Gaussian given by its mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian, symmetrizing the covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::DimensionMismatch {
                expected: cov.nrows(),
                found: cov.ncols(),
            });
        }
        check_dim(mean.len(), cov.nrows())?;
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
        })
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        check_dim(d * d, cov_row_major.len())?;
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(d, d, cov_row_major),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal over the leading `k` coordinates.
    pub fn leading_marginal(&self, k: usize) -> Gaussian {
        Gaussian {
            mean: self.mean.rows(0, k).into_owned(),
            cov: self.cov.view((0, 0), (k, k)).into_owned(),
        }
    }
}

/// Jointly Gaussian pair `[X; Y]` with the partition boundary at `split`.
///
/// Only the full covariance is stored, so `Σyx = Σxyᵀ` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    split: usize,
}

impl JointGaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, split: usize) -> Result<Self> {
        let total = mean.len();
        if split == 0 || split >= total {
            return Err(Error::InvalidDimension(split));
        }
        let joint = Gaussian::new(mean, cov)?;
        Ok(Self {
            mean: joint.mean,
            cov: joint.cov,
            split,
        })
    }

    /// Assembles the joint from its blocks.
    pub fn from_blocks(
        x_mean: &DVector<f64>,
        y_mean: &DVector<f64>,
        sxx: &DMatrix<f64>,
        sxy: &DMatrix<f64>,
        syy: &DMatrix<f64>,
    ) -> Result<Self> {
        let (dx, dy) = (x_mean.len(), y_mean.len());
        check_dim(dx, sxx.nrows())?;
        check_dim(dy, syy.nrows())?;
        check_dim(dx, sxy.nrows())?;
        check_dim(dy, sxy.ncols())?;
        let mut mean = DVector::zeros(dx + dy);
        mean.rows_mut(0, dx).copy_from(x_mean);
        mean.rows_mut(dx, dy).copy_from(y_mean);
        let mut cov = DMatrix::zeros(dx + dy, dx + dy);
        cov.view_mut((0, 0), (dx, dx)).copy_from(sxx);
        cov.view_mut((0, dx), (dx, dy)).copy_from(sxy);
        cov.view_mut((dx, 0), (dy, dx)).copy_from(&sxy.transpose());
        cov.view_mut((dx, dx), (dy, dy)).copy_from(syy);
        Self::new(mean, cov, dx)
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn y_dim(&self) -> usize {
        self.mean.len() - self.split
    }

    pub fn x_mean(&self) -> DVector<f64> {
        self.mean.rows(0, self.split).into_owned()
    }

    pub fn y_mean(&self) -> DVector<f64> {
        self.mean.rows(self.split, self.y_dim()).into_owned()
    }

    pub fn sxx(&self) -> DMatrix<f64> {
        self.cov.view((0, 0), (self.split, self.split)).into_owned()
    }

    pub fn sxy(&self) -> DMatrix<f64> {
        self.cov
            .view((0, self.split), (self.split, self.y_dim()))
            .into_owned()
    }

    pub fn syy(&self) -> DMatrix<f64> {
        let dy = self.y_dim();
        self.cov
            .view((self.split, self.split), (dy, dy))
            .into_owned()
    }
}

/// Lower Cholesky factor together with the jitter that was needed to obtain it.
#[derive(Debug, Clone)]
pub struct Factor {
    pub lower: DMatrix<f64>,
    /// Absolute diagonal shift added before factorization (0 when none was needed).
    pub jitter: f64,
}

impl Factor {
    /// Solves `(L Lᵀ) X = B`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self
            .lower
            .solve_lower_triangular(rhs)
            .expect("factor has a nonzero diagonal");
        self.lower
            .tr_solve_lower_triangular(&z)
            .expect("factor has a nonzero diagonal")
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let z = self
            .lower
            .solve_lower_triangular(rhs)
            .expect("factor has a nonzero diagonal");
        self.lower
            .tr_solve_lower_triangular(&z)
            .expect("factor has a nonzero diagonal")
    }

    /// `‖L⁻¹v‖²`, i.e. `vᵀ(LLᵀ)⁻¹v`.
    pub fn whitened_norm_sq(&self, v: &DVector<f64>) -> f64 {
        let z = self
            .lower
            .solve_lower_triangular(v)
            .expect("factor has a nonzero diagonal");
        z.norm_squared()
    }

    pub fn jittered(&self) -> bool {
        self.jitter > 0.0
    }
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn try_plain(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(c.clone())?;
    let l = chol.unpack();
    // nalgebra accepts tiny positive pivots; reject factors that cannot be solved against.
    if l.diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(l)
    } else {
        None
    }
}

/// Lower-triangular `S` with `SSᵀ = C`, escalating through [`JITTER_LADDER`]
/// (scaled by `trace(C)/d`) when the plain factorization fails.
pub fn cholesky_factor(c: &DMatrix<f64>) -> Result<Factor> {
    let d = c.nrows();
    if d == 0 || !c.is_square() {
        return Err(Error::InvalidDimension(d));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let asymmetry = max_abs(&(c - c.transpose()));
    if asymmetry > 1e-8 * (1.0 + max_abs(c)) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let c = symmetrize(c);
    if let Some(lower) = try_plain(&c) {
        return Ok(Factor { lower, jitter: 0.0 });
    }
    let scale = {
        let t = c.trace() / d as f64;
        if t.is_finite() && t > 0.0 {
            t
        } else {
            1.0
        }
    };
    let mut last = 0.0;
    for eps in JITTER_LADDER {
        let jitter = eps * scale;
        last = jitter;
        let mut shifted = c.clone();
        for i in 0..d {
            shifted[(i, i)] += jitter;
        }
        if let Some(lower) = try_plain(&shifted) {
            return Ok(Factor { lower, jitter });
        }
    }
    Err(Error::NotPositiveDefinite { max_jitter: last })
}

/// Conditions `X` on `Y = y`.
pub fn condition(joint: &JointGaussian, y: &DVector<f64>) -> Result<Gaussian> {
    check_dim(joint.y_dim(), y.len())?;
    let innovation = y - joint.y_mean();
    condition_on_innovation(
        &joint.x_mean(),
        &joint.sxx(),
        &joint.sxy(),
        &joint.syy(),
        &innovation,
    )
    .map(|(g, _)| g)
}

/// Core of [`condition`] given the innovation `y − ȳ` directly, so callers can
/// supply a wrapped innovation for angular observations. Also returns the
/// factor of `Σyy` so callers can report jitter.
pub(crate) fn condition_on_innovation(
    x_mean: &DVector<f64>,
    sxx: &DMatrix<f64>,
    sxy: &DMatrix<f64>,
    syy: &DMatrix<f64>,
    innovation: &DVector<f64>,
) -> Result<(Gaussian, Factor)> {
    let factor = cholesky_factor(syy).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } | Error::InvalidDimension(_) => {
            Error::SingularInnovationCov
        }
        other => other,
    })?;
    // gainᵀ = Σyy⁻¹ Σyx
    let gain_t = factor.solve(&sxy.transpose());
    let mean = x_mean + gain_t.tr_mul(innovation);
    let cov = sxx - gain_t.tr_mul(&sxy.transpose());
    Ok((
        Gaussian {
            mean,
            cov: symmetrize(&cov),
        },
        factor,
    ))
}

/// `vᵀΣ⁻¹v` through triangular solves on the Cholesky factor of `Σ`.
pub fn quadratic_form(v: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    check_dim(sigma.nrows(), v.len())?;
    let l = try_plain(&symmetrize(sigma)).ok_or(Error::SingularMatrix)?;
    let z = l.solve_lower_triangular(v).ok_or(Error::SingularMatrix)?;
    Ok(z.norm_squared())
}

/// Symmetric square root `S` with `SSᵀ = C` for a PSD (possibly singular) `C`.
/// Negative eigenvalues from round-off are clipped to zero.
pub fn psd_sqrt(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(c));
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Adds `jitter` to the diagonal.
pub fn add_diagonal(c: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let mut out = c.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += jitter;
    }
    out
}

/// Block diagonal `[[a, 0], [0, b]]`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}
