//! Time and measurement update rules.
//!
//! Time updates map an augmented belief over `[xₙ; ξₙ]` to a belief over
//! `xₙ₊₁`, either by linearizing `Φⁿ` or by pushing a discrete measure through
//! it. Measurement updates condition a Gaussian on an observation through a
//! [`MeasurementMap`]; the same functions serve the conventional update (state
//! prior, map `φ`) and the smoothing update (augmented prior, map `Ψ`).

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::cubature::{cross_moment, standard_rule, transform, weighted_moments, RuleKind};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{cholesky_factor, condition_on_innovation, symmetrize, Factor, Gaussian};
use crate::model::{AugmentedGaussian, MeasurementMap, ProcessModel};
use crate::optim::{bfgs_minimize, numerical_gradient, numerical_hessian, VariationalSettings};

/// Numerical events observed while running updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Factorizations that needed a diagonal shift.
    pub jitters: usize,
    /// Variational updates replaced by the linear update.
    pub fallbacks: usize,
    /// BFGS iterations spent.
    pub optimizer_iterations: usize,
}

impl Diagnostics {
    pub fn absorb(&mut self, other: Diagnostics) {
        self.jitters += other.jitters;
        self.fallbacks += other.fallbacks;
        self.optimizer_iterations += other.optimizer_iterations;
    }

    fn note(&mut self, factor: &Factor) {
        if factor.jittered() {
            self.jitters += 1;
        }
    }
}

/// Linearized time update: mean `Φ(𝒳̄)`, covariance `∇Φ 𝒞 ∇Φᵀ`.
///
/// Works for any augmented covariance, including the full (non block diagonal)
/// one produced by a smoothing measurement update.
pub fn time_update_linear(
    aug: &AugmentedGaussian,
    process: &dyn ProcessModel,
    n: usize,
) -> Result<Gaussian> {
    check_dim(process.state_dim(), aug.state_dim())?;
    check_dim(process.noise_dim(), aug.noise_dim())?;
    let x = aug.state_mean();
    let noise = aug.noise_mean();
    let mean = process.propagate(n, &x, &noise);
    let jac = process.jacobian(n, &x, &noise);
    let cov = &jac * &aug.belief.cov * jac.transpose();
    Ok(Gaussian {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Point-based time update: moments of the push-forward of a discrete measure
/// approximating the augmented belief.
pub fn time_update_points(
    aug: &AugmentedGaussian,
    process: &dyn ProcessModel,
    n: usize,
    kind: RuleKind,
    rng: Option<&mut dyn RngCore>,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    check_dim(process.state_dim(), aug.state_dim())?;
    check_dim(process.noise_dim(), aug.noise_dim())?;
    let factor = cholesky_factor(&aug.belief.cov)?;
    diag.note(&factor);
    let mu = transform(
        &standard_rule(kind, aug.dim(), rng)?,
        &aug.belief.mean,
        &factor.lower,
    )?;
    let images: Vec<DVector<f64>> = mu
        .points()
        .column_iter()
        .map(|z| process.propagate_augmented(n, &z.into_owned()))
        .collect();
    let images = DMatrix::from_columns(&images);
    let (mean, cov) = weighted_moments(mu.weights(), &images);
    Ok(Gaussian { mean, cov })
}

fn check_measurement(
    prior: &Gaussian,
    map: &dyn MeasurementMap,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<()> {
    check_dim(map.input_dim(), prior.dim())?;
    check_dim(map.output_dim(), y.len())?;
    check_dim(map.output_dim(), r.nrows())?;
    check_dim(r.nrows(), r.ncols())
}

/// Linearized measurement update (extended-Kalman form).
pub fn measurement_update_linear(
    prior: &Gaussian,
    map: &dyn MeasurementMap,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    check_measurement(prior, map, y, r)?;
    let h = map.jacobian(&prior.mean);
    let predicted = map.eval(&prior.mean);
    let innovation = map.residual(y, &predicted);
    let sxy = &prior.cov * h.transpose();
    let syy = &h * &sxy + r;
    let (post, factor) = condition_on_innovation(&prior.mean, &prior.cov, &sxy, &syy, &innovation)?;
    diag.note(&factor);
    Ok(post)
}

/// Point-based measurement update: cross and output covariances estimated
/// from a discrete measure approximating the prior.
pub fn measurement_update_points(
    prior: &Gaussian,
    map: &dyn MeasurementMap,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    kind: RuleKind,
    rng: Option<&mut dyn RngCore>,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    check_measurement(prior, map, y, r)?;
    let factor = cholesky_factor(&prior.cov)?;
    diag.note(&factor);
    let mu = transform(
        &standard_rule(kind, prior.dim(), rng)?,
        &prior.mean,
        &factor.lower,
    )?;
    let weights = mu.weights();
    // Images are unwrapped relative to y so that averaging is well defined for
    // angular components.
    let images: Vec<DVector<f64>> = mu
        .points()
        .column_iter()
        .map(|x| {
            let z = map.eval(&x.into_owned());
            y - map.residual(y, &z)
        })
        .collect();
    let images = DMatrix::from_columns(&images);
    let (z_mean, p_zz) = weighted_moments(weights, &images);

    let w = DVector::from_column_slice(weights);
    let x_mean = mu.points() * &w;
    let mut x_centered = mu.points().clone();
    for mut col in x_centered.column_iter_mut() {
        col -= &x_mean;
    }
    let mut z_centered = images;
    for mut col in z_centered.column_iter_mut() {
        col -= &z_mean;
    }
    let p_xz = cross_moment(weights, &x_centered, &z_centered);
    let innovation = map.residual(y, &z_mean);
    // Random draws: every moment comes from the same sample, so the posterior
    // covariance is a Schur complement of a sample covariance and stays
    // positive semidefinite. Mixing the exact prior covariance with a sampled
    // cross covariance does not have that property.
    let (x_prior, c_prior) = if kind.is_random() {
        (
            x_mean,
            symmetrize(&cross_moment(weights, &x_centered, &x_centered)),
        )
    } else {
        (prior.mean.clone(), prior.cov.clone())
    };
    let (post, factor) =
        condition_on_innovation(&x_prior, &c_prior, &p_xz, &(p_zz + r), &innovation)?;
    diag.note(&factor);
    Ok(post)
}

/// Variational measurement update: the posterior mean minimizes
/// `J(x) = ½(‖x − x̄‖²_C + ‖y − φ(x)‖²_R)` and the covariance is the inverse
/// Hessian of `J` at the minimizer.
///
/// The minimization runs in whitened coordinates `x = x̄ + S u` with `SSᵀ = C`,
/// which leaves the minimizer and the inverse Hessian unchanged.
pub fn measurement_update_variational(
    prior: &Gaussian,
    map: &dyn MeasurementMap,
    y: &DVector<f64>,
    r: &DMatrix<f64>,
    settings: &VariationalSettings,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    check_measurement(prior, map, y, r)?;
    let s = cholesky_factor(&prior.cov)?;
    diag.note(&s);
    let r_factor = cholesky_factor(r)?;
    diag.note(&r_factor);
    let lower = &s.lower;
    let misfit = |u: &DVector<f64>| {
        let x = &prior.mean + lower * u;
        let res = map.residual(y, &map.eval(&x));
        0.5 * (u.norm_squared() + r_factor.whitened_norm_sq(&res))
    };
    let start = DVector::zeros(prior.dim());
    let min = bfgs_minimize(misfit, &start, settings)?;
    diag.optimizer_iterations += min.iterations;

    let hessian_factor = |u: &DVector<f64>| {
        let hess = symmetrize(&numerical_hessian(&misfit, u, settings.hessian_fd_step));
        cholesky_factor(&hess).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::SingularHessian,
            other => other,
        })
    };
    let mut u = min.x;
    let mut h_factor = hessian_factor(&u)?;
    // BFGS stops at a gradient tolerance relative to J(x̄); one Newton step
    // with the Hessian we need anyway polishes the minimizer, and is kept only
    // if it does not increase the misfit.
    let grad = numerical_gradient(&misfit, &u, settings.fd_step);
    let polished = &u - h_factor.solve_vec(&grad);
    if misfit(&polished) <= min.value {
        u = polished;
        h_factor = hessian_factor(&u)?;
    }
    diag.note(&h_factor);
    // C' = S H⁻¹ Sᵀ = (L_H⁻¹ Sᵀ)ᵀ (L_H⁻¹ Sᵀ)
    let half = h_factor
        .lower
        .solve_lower_triangular(&lower.transpose())
        .ok_or(Error::SingularHessian)?;
    let cov = half.tr_mul(&half);
    Ok(Gaussian {
        mean: &prior.mean + lower * &u,
        cov: symmetrize(&cov),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        augment, composed_observation, FnObservation, FnProcess, LinearObservation, LinearProcess,
        ObservationAt,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn identity_obs(r: f64) -> LinearObservation {
        LinearObservation {
            matrix: DMatrix::identity(1, 1),
            obs_cov: m1(r),
        }
    }

    #[test]
    fn linear_time_update_scalar() {
        let p = LinearProcess::additive(m1(2.0), m1(0.5));
        let prior = Gaussian::from_slices(&[1.0], &[1.0]).unwrap();
        let out = time_update_linear(&augment(&prior, &p, 0).unwrap(), &p, 0).unwrap();
        assert!((out.mean[0] - 2.0).abs() < 1e-15);
        assert!((out.cov[(0, 0)] - 4.5).abs() < 1e-15);
    }

    #[test]
    fn linear_time_update_carries_noise_bias() {
        let p = LinearProcess::additive(m1(1.0), m1(1.0));
        let aug = AugmentedGaussian::new(
            Gaussian::new(v(&[1.0, 0.3]), DMatrix::identity(2, 2)).unwrap(),
            1,
        )
        .unwrap();
        let out = time_update_linear(&aug, &p, 0).unwrap();
        assert!((out.mean[0] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn cubature_time_update_matches_linear_on_linear_model() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]);
        let gamma = DMatrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
        let p = LinearProcess::additive(a, gamma);
        let prior = Gaussian::from_slices(&[1.0, -1.0], &[1.0, 0.2, 0.2, 0.5]).unwrap();
        let aug = augment(&prior, &p, 0).unwrap();
        let lin = time_update_linear(&aug, &p, 0).unwrap();
        for kind in [RuleKind::Cubature3, RuleKind::Cubature5] {
            let pts =
                time_update_points(&aug, &p, 0, kind, None, &mut Diagnostics::default()).unwrap();
            assert!((&pts.mean - &lin.mean).amax() < 1e-10);
            assert!((&pts.cov - &lin.cov).amax() < 1e-10);
        }
    }

    #[test]
    fn degree5_time_update_of_square() {
        let p = FnProcess::new(1, DMatrix::zeros(0, 0), |_, x: &DVector<f64>, _| {
            x.map(|v| v * v)
        });
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let aug = augment(&prior, &p, 0).unwrap();
        let out = time_update_points(
            &aug,
            &p,
            0,
            RuleKind::Cubature5,
            None,
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((out.mean[0] - 1.0).abs() < 1e-12);
        // Var(x²) = E[x⁴] − 1 = 2
        assert!((out.cov[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn linear_measurement_scalar_kalman() {
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let obs = identity_obs(1.0);
        let map = ObservationAt { model: &obs, n: 1 };
        let post = measurement_update_linear(
            &prior,
            &map,
            &v(&[2.0]),
            &m1(1.0),
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uninformative_observation_leaves_prior() {
        let prior = Gaussian::from_slices(&[0.3], &[2.0]).unwrap();
        let obs = identity_obs(1e12);
        let map = ObservationAt { model: &obs, n: 1 };
        let post = measurement_update_linear(
            &prior,
            &map,
            &v(&[5.0]),
            &m1(1e12),
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((post.mean[0] - 0.3).abs() < 1e-6);
        assert!((post.cov[(0, 0)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_innovation_shrinks_cov_only() {
        let prior = Gaussian::from_slices(&[0.3], &[2.0]).unwrap();
        let obs = identity_obs(1.0);
        let map = ObservationAt { model: &obs, n: 1 };
        let post = measurement_update_linear(
            &prior,
            &map,
            &v(&[0.3]),
            &m1(1.0),
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert_eq!(post.mean[0], 0.3);
        assert!(post.cov[(0, 0)] < 2.0);
    }

    #[test]
    fn points_measurement_matches_linear() {
        let prior = Gaussian::from_slices(&[1.0, -0.5], &[1.0, 0.3, 0.3, 0.7]).unwrap();
        let obs = LinearObservation {
            matrix: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            obs_cov: m1(0.4),
        };
        let map = ObservationAt { model: &obs, n: 1 };
        let y = v(&[0.7]);
        let lin =
            measurement_update_linear(&prior, &map, &y, &m1(0.4), &mut Diagnostics::default())
                .unwrap();
        for kind in [RuleKind::Cubature3, RuleKind::Cubature5] {
            let pts = measurement_update_points(
                &prior,
                &map,
                &y,
                &m1(0.4),
                kind,
                None,
                &mut Diagnostics::default(),
            )
            .unwrap();
            assert!((&pts.mean - &lin.mean).amax() < 1e-10);
            assert!((&pts.cov - &lin.cov).amax() < 1e-10);
        }
    }

    #[test]
    fn constant_map_carries_no_information() {
        let prior = Gaussian::from_slices(&[1.0, -0.5], &[1.0, 0.3, 0.3, 0.7]).unwrap();
        let obs = FnObservation::new(2, m1(1.0), |_, _| DVector::from_element(1, 4.0));
        let map = ObservationAt { model: &obs, n: 1 };
        let post = measurement_update_points(
            &prior,
            &map,
            &v(&[0.0]),
            &m1(1.0),
            RuleKind::Cubature3,
            None,
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((&post.mean - &prior.mean).amax() < 1e-15);
        assert!((&post.cov - &prior.cov).amax() < 1e-15);
    }

    #[test]
    fn squared_observation_is_symmetric_and_uninformative() {
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let obs = FnObservation::new(1, m1(1.0), |_, x: &DVector<f64>| x.map(|v| v * v));
        let map = ObservationAt { model: &obs, n: 1 };
        let post = measurement_update_points(
            &prior,
            &map,
            &v(&[1.0]),
            &m1(1.0),
            RuleKind::Cubature5,
            None,
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!(post.mean[0].abs() < 1e-15);
        assert!((post.cov[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_measurement_close_to_linear() {
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let obs = identity_obs(1.0);
        let map = ObservationAt { model: &obs, n: 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let post = measurement_update_points(
            &prior,
            &map,
            &v(&[2.0]),
            &m1(1.0),
            RuleKind::Empirical(100_000),
            Some(&mut rng),
            &mut Diagnostics::default(),
        )
        .unwrap();
        // gain and covariance are sample estimates with relative error ~ 1/√n
        assert!((post.mean[0] - 1.0).abs() < 4.0 * 2.0 / 100_000f64.sqrt());
        assert!((post.cov[(0, 0)] - 0.5).abs() < 4.0 * 2.0 / 100_000f64.sqrt());
    }

    #[test]
    fn variational_matches_linear_on_linear_map() {
        let prior = Gaussian::from_slices(&[1.0, -0.5], &[1.0, 0.3, 0.3, 0.7]).unwrap();
        let obs = LinearObservation {
            matrix: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            obs_cov: m1(0.4),
        };
        let map = ObservationAt { model: &obs, n: 1 };
        let y = v(&[0.7]);
        let lin =
            measurement_update_linear(&prior, &map, &y, &m1(0.4), &mut Diagnostics::default())
                .unwrap();
        let var = measurement_update_variational(
            &prior,
            &map,
            &y,
            &m1(0.4),
            &Default::default(),
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((&var.mean - &lin.mean).amax() < 1e-6);
        assert!((&var.cov - &lin.cov).amax() < 1e-6);
    }

    #[test]
    fn variational_scalar_example() {
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let obs = identity_obs(1.0);
        let map = ObservationAt { model: &obs, n: 1 };
        let post = measurement_update_variational(
            &prior,
            &map,
            &v(&[2.0]),
            &m1(1.0),
            &Default::default(),
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-6);
        assert!((post.cov[(0, 0)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn variational_stays_at_prior_when_consistent() {
        let prior = Gaussian::from_slices(&[0.7], &[0.3]).unwrap();
        let obs = FnObservation::new(1, m1(0.5), |_, x: &DVector<f64>| x.map(|v| v.powi(3)));
        let map = ObservationAt { model: &obs, n: 1 };
        let y = v(&[0.7f64.powi(3)]);
        let mut diag = Diagnostics::default();
        let post = measurement_update_variational(
            &prior,
            &map,
            &y,
            &m1(0.5),
            &Default::default(),
            &mut diag,
        )
        .unwrap();
        assert!((post.mean[0] - 0.7).abs() < 1e-9);
        assert_eq!(diag.optimizer_iterations, 0);
    }

    #[test]
    fn smoothing_update_biases_noise() {
        // x₁ = x₀ + ξ₀, y₁ = x₁ + η: E[ξ₀ | y₁] = Γ (C + Γ + R)⁻¹ (y − x̄)
        let p = LinearProcess::additive(m1(1.0), m1(1.0));
        let obs = identity_obs(1.0);
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let aug = augment(&prior, &p, 0).unwrap();
        let psi = composed_observation(&p, &obs, 0);
        let post = measurement_update_linear(
            &aug.belief,
            &psi,
            &v(&[3.0]),
            &m1(1.0),
            &mut Diagnostics::default(),
        )
        .unwrap();
        assert!((post.mean[1] - 1.0).abs() < 1e-12);
        assert!(aug.noise_mean()[0] == 0.0);
    }

    #[test]
    fn dimension_checks() {
        let prior = Gaussian::from_slices(&[0.0], &[1.0]).unwrap();
        let obs = identity_obs(1.0);
        let map = ObservationAt { model: &obs, n: 1 };
        assert!(measurement_update_linear(
            &prior,
            &map,
            &v(&[1.0, 2.0]),
            &m1(1.0),
            &mut Diagnostics::default()
        )
        .is_err());
    }
}
