//! BFGS with central-difference gradients and Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

/// Tolerances and step sizes for the variational update.
///
/// `grad_tol` is relative: iteration stops once `‖∇f‖ ≤ grad_tol·(1 + |f(x₀)|)`.
/// Both finite-difference steps are scaled by `1 + |xᵢ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationalSettings {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    pub hessian_fd_step: f64,
}

impl Default for VariationalSettings {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 200,
            fd_step: f64::EPSILON.sqrt(),
            hessian_fd_step: f64::EPSILON.powf(0.25),
        }
    }
}

impl VariationalSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.max_iter < 1 {
            return Err(Error::Config(
                "variational settings need grad_tol > 0 and max_iter >= 1".into(),
            ));
        }
        if !(self.fd_step > 0.0) || !(self.hessian_fd_step > 0.0) {
            return Err(Error::Config(
                "finite-difference steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Central-difference gradient.
pub fn numerical_gradient<F>(f: &F, x: &DVector<f64>, step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let h = step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        (plus - minus) / (2.0 * h)
    })
}

/// Central-difference Hessian, symmetrized.
pub fn numerical_hessian<F>(f: &F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let k = x.len();
    let h: Vec<f64> = x.iter().map(|v| step * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut probe = x.clone();
    let mut eval = |shifts: &[(usize, f64)]| {
        for &(i, s) in shifts {
            probe[i] += s;
        }
        let v = f(&probe);
        for &(i, _) in shifts {
            probe[i] = x[i];
        }
        v
    };
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        let plus = eval(&[(i, h[i])]);
        let minus = eval(&[(i, -h[i])]);
        hess[(i, i)] = (plus - 2.0 * f0 + minus) / (h[i] * h[i]);
        for j in 0..i {
            let pp = eval(&[(i, h[i]), (j, h[j])]);
            let pm = eval(&[(i, h[i]), (j, -h[j])]);
            let mp = eval(&[(i, -h[i]), (j, h[j])]);
            let mm = eval(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Minimizes `f` from `x0` with BFGS.
///
/// The inverse-Hessian approximation starts at the identity and is rescaled by
/// `sᵀy / yᵀy` after the first accepted step. Step lengths are the first of
/// `1, ½, ¼, …` meeting the Armijo condition with `c = 1e-4`.
pub fn bfgs_minimize<F>(f: F, x0: &DVector<f64>, settings: &VariationalSettings) -> Result<Minimum>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let k = x0.len();
    let mut x = x0.clone();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::Unsupported(
            "objective is not finite at the start point".into(),
        ));
    }
    let tol = settings.grad_tol * (1.0 + fx.abs());
    let mut g = numerical_gradient(&f, &x, settings.fd_step);
    let mut inv_hess = DMatrix::<f64>::identity(k, k);
    let mut scaled = false;

    for iter in 0..settings.max_iter {
        let grad_norm = g.norm();
        if grad_norm <= tol {
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm,
                iterations: iter,
            });
        }
        let mut dir = -(&inv_hess * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            inv_hess.fill_with_identity();
            dir = -g.clone();
            slope = -grad_norm * grad_norm;
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &dir * alpha;
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + ARMIJO_C * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Err(Error::LineSearchFailed {
                halvings: MAX_HALVINGS,
            });
        };

        let g_new = numerical_gradient(&f, &x_new, settings.fd_step);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if !scaled {
                inv_hess *= sy / y.norm_squared();
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &inv_hess * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            inv_hess -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            inv_hess += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    let grad_norm = g.norm();
    if grad_norm <= tol {
        Ok(Minimum {
            x,
            value: fx,
            grad_norm,
            iterations: settings.max_iter,
        })
    } else {
        Err(Error::OptimizerDidNotConverge {
            iterations: settings.max_iter,
            grad_norm,
        })
    }
}
