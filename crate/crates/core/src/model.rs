//! Forward and observation models, the augmented state `[x; ξ]`, and the
//! Euler-Maruyama construction of a per-observation forward map from an SDE.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::gaussian::{block_diag, Gaussian};

/// Central-difference Jacobian of `f` at `x`, with step `∛ε·(1+|xᵢ|)`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h0 = f64::EPSILON.cbrt();
    let mut probe = x.clone();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = h0 * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        columns.push((plus - minus) / (2.0 * h));
    }
    if columns.is_empty() {
        let rows = f(x).len();
        return DMatrix::zeros(rows, 0);
    }
    DMatrix::from_columns(&columns)
}

/// Discrete-time forward model `x_{n+1} = Φⁿ(xₙ, ξₙ)`, `ξₙ ~ N(0, Γₙ)`.
pub trait ProcessModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn propagate(&self, n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64>;

    /// `Γₙ`.
    fn noise_cov(&self, n: usize) -> DMatrix<f64>;

    /// `∇Φⁿ` with respect to `[x; ξ]`, shape `d × (d + D)`.
    fn jacobian(&self, n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(|z| self.propagate_augmented(n, z), &stack(x, noise))
    }

    /// `Φⁿ` evaluated on a stacked augmented vector.
    fn propagate_augmented(&self, n: usize, z: &DVector<f64>) -> DVector<f64> {
        let d = self.state_dim();
        let x = z.rows(0, d).into_owned();
        let noise = z.rows(d, z.len() - d).into_owned();
        self.propagate(n, &x, &noise)
    }
}

/// Observation model `yₙ = φⁿ(xₙ) + ηₙ`, `ηₙ ~ N(0, Rₙ)`.
pub trait ObservationModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn obs_dim(&self) -> usize;

    fn observe(&self, n: usize, x: &DVector<f64>) -> DVector<f64>;

    /// `Rₙ`.
    fn obs_cov(&self, n: usize) -> DMatrix<f64>;

    /// `∇φⁿ`, shape `d′ × d`.
    fn jacobian(&self, n: usize, x: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(|z| self.observe(n, z), x)
    }

    /// Innovation `y − z`. Models with angular components override this to
    /// wrap angles into `(−π, π]`.
    fn residual(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        y - z
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = a.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    w
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// A differentiable map used by the measurement updates: `φⁿ` on the state,
/// or `Ψⁿ = φⁿ⁺¹ ∘ Φⁿ` on the augmented state.
pub trait MeasurementMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn residual(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        y - z
    }
}

/// An [`ObservationModel`] frozen at a step index.
pub struct ObservationAt<'a> {
    pub model: &'a dyn ObservationModel,
    pub n: usize,
}

impl MeasurementMap for ObservationAt<'_> {
    fn input_dim(&self) -> usize {
        self.model.state_dim()
    }
    fn output_dim(&self) -> usize {
        self.model.obs_dim()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.model.observe(self.n, x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.model.jacobian(self.n, x)
    }
    fn residual(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.model.residual(y, z)
    }
}

/// `Ψⁿ(x, ξ) = φⁿ⁺¹(Φⁿ(x, ξ))`, the map relating the augmented state at step
/// `n` to the observation `yₙ₊₁`.
pub struct ComposedObservation<'a> {
    pub process: &'a dyn ProcessModel,
    pub obs: &'a dyn ObservationModel,
    pub n: usize,
}

/// Builds `Ψⁿ` for the smoothing measurement update at step `n`.
pub fn composed_observation<'a>(
    process: &'a dyn ProcessModel,
    obs: &'a dyn ObservationModel,
    n: usize,
) -> ComposedObservation<'a> {
    ComposedObservation { process, obs, n }
}

impl MeasurementMap for ComposedObservation<'_> {
    fn input_dim(&self) -> usize {
        self.process.state_dim() + self.process.noise_dim()
    }
    fn output_dim(&self) -> usize {
        self.obs.obs_dim()
    }
    fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        self.obs
            .observe(self.n + 1, &self.process.propagate_augmented(self.n, z))
    }
    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let d = self.process.state_dim();
        let x = z.rows(0, d).into_owned();
        let noise = z.rows(d, z.len() - d).into_owned();
        let next = self.process.propagate(self.n, &x, &noise);
        self.obs.jacobian(self.n + 1, &next) * self.process.jacobian(self.n, &x, &noise)
    }
    fn residual(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.obs.residual(y, z)
    }
}

/// Joint belief over `[xₙ; ξₙ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGaussian {
    pub belief: Gaussian,
    state_dim: usize,
}

impl AugmentedGaussian {
    pub fn new(belief: Gaussian, state_dim: usize) -> Result<Self> {
        if state_dim > belief.dim() {
            return Err(crate::error::Error::DimensionMismatch {
                expected: belief.dim(),
                found: state_dim,
            });
        }
        Ok(Self { belief, state_dim })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.belief.dim() - self.state_dim
    }

    pub fn dim(&self) -> usize {
        self.belief.dim()
    }

    pub fn state_mean(&self) -> DVector<f64> {
        self.belief.mean.rows(0, self.state_dim).into_owned()
    }

    pub fn noise_mean(&self) -> DVector<f64> {
        self.belief
            .mean
            .rows(self.state_dim, self.noise_dim())
            .into_owned()
    }

    pub fn state_marginal(&self) -> Gaussian {
        self.belief.leading_marginal(self.state_dim)
    }
}

/// `[x̄; 0]` with covariance `blockdiag(C, Γₙ)`.
pub fn augment(prior: &Gaussian, model: &dyn ProcessModel, n: usize) -> Result<AugmentedGaussian> {
    check_dim(model.state_dim(), prior.dim())?;
    let gamma = model.noise_cov(n);
    check_dim(model.noise_dim(), gamma.nrows())?;
    let mean = stack(&prior.mean, &DVector::zeros(model.noise_dim()));
    let cov = block_diag(&prior.cov, &gamma);
    AugmentedGaussian::new(Gaussian { mean, cov }, prior.dim())
}

type Map3 = Arc<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type Jac3 = Arc<dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type Map2 = Arc<dyn Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type Jac2 = Arc<dyn Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Closure-backed [`ProcessModel`] with a constant `Γ`.
#[derive(Clone)]
pub struct FnProcess {
    state_dim: usize,
    noise_cov: DMatrix<f64>,
    propagate: Map3,
    jacobian: Option<Jac3>,
}

impl FnProcess {
    pub fn new<F>(state_dim: usize, noise_cov: DMatrix<f64>, propagate: F) -> Self
    where
        F: Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            state_dim,
            noise_cov,
            propagate: Arc::new(propagate),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(usize, &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }
}

impl fmt::Debug for FnProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnProcess")
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_cov.nrows())
            .finish_non_exhaustive()
    }
}

impl ProcessModel for FnProcess {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_cov.nrows()
    }
    fn propagate(&self, n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        (self.propagate)(n, x, noise)
    }
    fn noise_cov(&self, _n: usize) -> DMatrix<f64> {
        self.noise_cov.clone()
    }
    fn jacobian(&self, n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(n, x, noise),
            None => fd_jacobian(|z| self.propagate_augmented(n, z), &stack(x, noise)),
        }
    }
}

/// `x_{n+1} = A xₙ + B ξₙ`.
#[derive(Debug, Clone)]
pub struct LinearProcess {
    pub transition: DMatrix<f64>,
    pub noise_gain: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl LinearProcess {
    /// Additive noise: `B = I`.
    pub fn additive(transition: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Self {
        let d = transition.nrows();
        Self {
            transition,
            noise_gain: DMatrix::identity(d, d),
            noise_cov,
        }
    }
}

impl ProcessModel for LinearProcess {
    fn state_dim(&self) -> usize {
        self.transition.nrows()
    }
    fn noise_dim(&self) -> usize {
        self.noise_gain.ncols()
    }
    fn propagate(&self, _n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        &self.transition * x + &self.noise_gain * noise
    }
    fn noise_cov(&self, _n: usize) -> DMatrix<f64> {
        self.noise_cov.clone()
    }
    fn jacobian(&self, _n: usize, _x: &DVector<f64>, _noise: &DVector<f64>) -> DMatrix<f64> {
        let d = self.state_dim();
        let mut j = DMatrix::zeros(d, d + self.noise_dim());
        j.view_mut((0, 0), (d, d)).copy_from(&self.transition);
        j.view_mut((0, d), (d, self.noise_dim()))
            .copy_from(&self.noise_gain);
        j
    }
}

/// `y = H x + η`.
#[derive(Debug, Clone)]
pub struct LinearObservation {
    pub matrix: DMatrix<f64>,
    pub obs_cov: DMatrix<f64>,
}

impl ObservationModel for LinearObservation {
    fn state_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn obs_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn observe(&self, _n: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
    fn obs_cov(&self, _n: usize) -> DMatrix<f64> {
        self.obs_cov.clone()
    }
    fn jacobian(&self, _n: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// Closure-backed [`ObservationModel`] with a constant `R`.
#[derive(Clone)]
pub struct FnObservation {
    state_dim: usize,
    obs_cov: DMatrix<f64>,
    observe: Map2,
    jacobian: Option<Jac2>,
}

impl FnObservation {
    pub fn new<F>(state_dim: usize, obs_cov: DMatrix<f64>, observe: F) -> Self
    where
        F: Fn(usize, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            state_dim,
            obs_cov,
            observe: Arc::new(observe),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }
}

impl fmt::Debug for FnObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnObservation")
            .field("state_dim", &self.state_dim)
            .field("obs_dim", &self.obs_cov.nrows())
            .finish_non_exhaustive()
    }
}

impl ObservationModel for FnObservation {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn obs_dim(&self) -> usize {
        self.obs_cov.nrows()
    }
    fn observe(&self, n: usize, x: &DVector<f64>) -> DVector<f64> {
        (self.observe)(n, x)
    }
    fn obs_cov(&self, _n: usize) -> DMatrix<f64> {
        self.obs_cov.clone()
    }
    fn jacobian(&self, n: usize, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(n, x),
            None => fd_jacobian(|z| self.observe(n, z), x),
        }
    }
}

pub type Drift = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type DriftJacobian = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type VolatilityFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Diffusion coefficient `s(t, x)` of `dx = b dt + s dB`.
#[derive(Clone)]
pub enum Volatility {
    /// Constant `s` (`d × N`). The per-substep increment is carried in state
    /// coordinates, `w ~ N(0, δt·s sᵀ)`, and added to the state after
    /// projection onto the range of `s sᵀ`, so directions without diffusion
    /// never move the state.
    Constant(DMatrix<f64>),
    /// State-dependent `s(t, x)` with `N` Brownian motions. Increments are
    /// standardized, `w ~ N(0, δt·I_N)`, and enter as `s(t, x)·w`.
    StateDependent {
        brownian_dim: usize,
        func: VolatilityFn,
    },
}

/// `dx = b(t, x) dt + s(t, x) dB`, sampled every `substeps` Euler steps of size `dt`.
#[derive(Clone)]
pub struct SdeSpec {
    pub state_dim: usize,
    pub drift: Drift,
    pub drift_jacobian: Option<DriftJacobian>,
    pub volatility: Volatility,
    pub dt: f64,
    pub substeps: usize,
}

impl SdeSpec {
    /// Time between observations, `Δt = M·δt`.
    pub fn observation_interval(&self) -> f64 {
        self.dt * self.substeps as f64
    }
}

/// Forward map obtained by chaining `M` Euler-Maruyama substeps.
#[derive(Clone)]
pub struct SdeProcess {
    spec: SdeSpec,
    step_cov: DMatrix<f64>,
    gamma: DMatrix<f64>,
    // projector onto range(s sᵀ) for constant volatility
    range: Option<DMatrix<f64>>,
}

impl fmt::Debug for SdeProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProcess")
            .field("state_dim", &self.spec.state_dim)
            .field("dt", &self.spec.dt)
            .field("substeps", &self.spec.substeps)
            .finish_non_exhaustive()
    }
}

/// Euler-Maruyama discretization of an SDE into a [`ProcessModel`] whose noise
/// is the stack of all substep increments and whose `Γ` is block diagonal.
pub fn discretize_sde(spec: SdeSpec) -> Result<SdeProcess> {
    if !(spec.dt > 0.0) {
        return Err(crate::error::Error::Config(format!(
            "SDE time step must be positive, got {}",
            spec.dt
        )));
    }
    if spec.substeps < 1 {
        return Err(crate::error::Error::Config(
            "SDE needs at least one substep".into(),
        ));
    }
    let (step_cov, range) = match &spec.volatility {
        Volatility::Constant(s) => {
            check_dim(spec.state_dim, s.nrows())?;
            let sst = s * s.transpose();
            (&sst * spec.dt, Some(range_projector(&sst)))
        }
        Volatility::StateDependent { brownian_dim, .. } => (
            DMatrix::identity(*brownian_dim, *brownian_dim) * spec.dt,
            None,
        ),
    };
    let w = step_cov.nrows();
    let m = spec.substeps;
    let mut gamma = DMatrix::zeros(w * m, w * m);
    for k in 0..m {
        gamma.view_mut((k * w, k * w), (w, w)).copy_from(&step_cov);
    }
    Ok(SdeProcess {
        spec,
        step_cov,
        gamma,
        range,
    })
}

fn range_projector(sst: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(sst.clone());
    let tol = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let d = sst.nrows();
    let mut p = DMatrix::zeros(d, d);
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda > tol {
            let u = eig.eigenvectors.column(k);
            p += u * u.transpose();
        }
    }
    p
}

impl SdeProcess {
    pub fn spec(&self) -> &SdeSpec {
        &self.spec
    }

    /// Covariance `Q` of a single substep increment.
    pub fn step_cov(&self) -> &DMatrix<f64> {
        &self.step_cov
    }

    fn increment_dim(&self) -> usize {
        self.step_cov.nrows()
    }

    fn substep_time(&self, n: usize, m: usize) -> f64 {
        n as f64 * self.spec.observation_interval() + m as f64 * self.spec.dt
    }

    fn substep(&self, t: f64, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let drift = (self.spec.drift)(t, x) * self.spec.dt;
        match &self.spec.volatility {
            Volatility::Constant(_) => {
                let p = self
                    .range
                    .as_ref()
                    .expect("constant volatility has a projector");
                x + drift + p * w
            }
            Volatility::StateDependent { func, .. } => x + drift + func(t, x) * w,
        }
    }
}

impl ProcessModel for SdeProcess {
    fn state_dim(&self) -> usize {
        self.spec.state_dim
    }

    fn noise_dim(&self) -> usize {
        self.gamma.nrows()
    }

    fn propagate(&self, n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        let w = self.increment_dim();
        let mut state = x.clone();
        for m in 0..self.spec.substeps {
            let inc = noise.rows(m * w, w).into_owned();
            state = self.substep(self.substep_time(n, m), &state, &inc);
        }
        state
    }

    fn noise_cov(&self, _n: usize) -> DMatrix<f64> {
        self.gamma.clone()
    }

    fn jacobian(&self, n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DMatrix<f64> {
        let (Some(db), Volatility::Constant(_)) =
            (&self.spec.drift_jacobian, &self.spec.volatility)
        else {
            return fd_jacobian(|z| self.propagate_augmented(n, z), &stack(x, noise));
        };
        // Forward-mode chain rule through the substeps.
        let d = self.spec.state_dim;
        let w = self.increment_dim();
        let total = d + self.noise_dim();
        let mut jac = DMatrix::zeros(d, total);
        jac.view_mut((0, 0), (d, d)).fill_with_identity();
        let mut state = x.clone();
        for m in 0..self.spec.substeps {
            let t = self.substep_time(n, m);
            let step = DMatrix::identity(d, d) + db(t, &state) * self.spec.dt;
            jac = step * jac;
            let p = self
                .range
                .as_ref()
                .expect("constant volatility has a projector");
            jac.view_mut((0, d + m * w), (d, w)).copy_from(p);
            let inc = noise.rows(m * w, w).into_owned();
            state = self.substep(t, &state, &inc);
        }
        jac
    }
}
