//! Experiment systems: a stochastic bistable well, stochastic Lorenz-63, and
//! coordinated-turn tracking with range/bearing radar, plus truth simulation.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::psd_sqrt;
use crate::model::{
    discretize_sde, wrap_angle, ObservationModel, ProcessModel, SdeProcess, SdeSpec, Volatility,
};

fn normal_vec(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

// ---------------------------------------------------------------------------
// Bistable well
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BistableObs {
    Identity,
    /// `(x − shift)²`.
    ShiftedQuadratic {
        shift: f64,
    },
}

/// `dx = βx(1 − x²) dt + σ dB`, observed every `substeps` Euler steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BistableSpec {
    pub beta: f64,
    pub sigma: f64,
    pub dt: f64,
    pub substeps: usize,
    pub obs_kind: BistableObs,
    pub obs_var: f64,
}

impl BistableSpec {
    /// Identity observations of the `β = 10` well every 20 steps.
    pub fn identity_jump() -> Self {
        Self {
            beta: 10.0,
            sigma: 0.5,
            dt: 0.01,
            substeps: 20,
            obs_kind: BistableObs::Identity,
            obs_var: 0.03,
        }
    }

    /// Shifted-quadratic observations of the `β = 5` well.
    pub fn shifted_quadratic(substeps: usize) -> Self {
        Self {
            beta: 5.0,
            sigma: 0.5,
            dt: 0.01,
            substeps,
            obs_kind: BistableObs::ShiftedQuadratic { shift: 0.05 },
            obs_var: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.obs_var > 0.0) {
            return Err(Error::Config(format!(
                "observation variance must be positive, got {}",
                self.obs_var
            )));
        }
        if !(self.dt > 0.0) || self.substeps < 1 {
            return Err(Error::Config(
                "bistable needs dt > 0 and substeps >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.beta * x * (1.0 - x * x)
    }
}

#[derive(Debug, Clone)]
pub struct BistableObservation {
    pub kind: BistableObs,
    pub obs_var: f64,
}

impl ObservationModel for BistableObservation {
    fn state_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn observe(&self, _n: usize, x: &DVector<f64>) -> DVector<f64> {
        match self.kind {
            BistableObs::Identity => x.clone(),
            BistableObs::ShiftedQuadratic { shift } => x.map(|v| (v - shift).powi(2)),
        }
    }
    fn obs_cov(&self, _n: usize) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.obs_var)
    }
    fn jacobian(&self, _n: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let slope = match self.kind {
            BistableObs::Identity => 1.0,
            BistableObs::ShiftedQuadratic { shift } => 2.0 * (x[0] - shift),
        };
        DMatrix::from_element(1, 1, slope)
    }
}

pub fn bistable_models(spec: &BistableSpec) -> Result<(SdeProcess, BistableObservation)> {
    spec.validate()?;
    let beta = spec.beta;
    let process = discretize_sde(SdeSpec {
        state_dim: 1,
        drift: Arc::new(move |_t, x: &DVector<f64>| x.map(|v| beta * v * (1.0 - v * v))),
        drift_jacobian: Some(Arc::new(move |_t, x: &DVector<f64>| {
            DMatrix::from_element(1, 1, beta * (1.0 - 3.0 * x[0] * x[0]))
        })),
        volatility: Volatility::Constant(DMatrix::from_element(1, 1, spec.sigma)),
        dt: spec.dt,
        substeps: spec.substeps,
    })?;
    Ok((
        process,
        BistableObservation {
            kind: spec.obs_kind,
            obs_var: spec.obs_var,
        },
    ))
}

// ---------------------------------------------------------------------------
// Lorenz-63
// ---------------------------------------------------------------------------

fn default_lorenz_substeps() -> usize {
    1
}

/// Stochastic Lorenz-63 with noise amplitudes `g` and a range observation
/// from `(obs_shift, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorenz63Spec {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub g: [f64; 3],
    pub dt: f64,
    #[serde(default = "default_lorenz_substeps")]
    pub substeps: usize,
    pub obs_shift: f64,
    pub obs_var: f64,
}

impl Default for Lorenz63Spec {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            g: [0.0, 0.0, 0.5],
            dt: 0.01,
            substeps: 1,
            obs_shift: 0.5,
            obs_var: 0.5,
        }
    }
}

impl Lorenz63Spec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.substeps < 1 {
            return Err(Error::Config(
                "Lorenz-63 needs dt > 0 and substeps >= 1".into(),
            ));
        }
        if !(self.obs_var > 0.0) {
            return Err(Error::Config(
                "observation variance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            self.sigma * (x[1] - x[0]),
            self.rho * x[0] - x[1] - x[0] * x[2],
            x[0] * x[1] - self.beta * x[2],
        ])
    }

    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                -self.sigma,
                self.sigma,
                0.0,
                self.rho - x[2],
                -1.0,
                -x[0],
                x[1],
                x[0],
                -self.beta,
            ],
        )
    }
}

/// `√((x − shift)² + y² + z²)`.
#[derive(Debug, Clone)]
pub struct ShiftedRange {
    pub shift: f64,
    pub obs_var: f64,
}

impl ObservationModel for ShiftedRange {
    fn state_dim(&self) -> usize {
        3
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn observe(&self, _n: usize, x: &DVector<f64>) -> DVector<f64> {
        let r = ((x[0] - self.shift).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
        DVector::from_element(1, r)
    }
    fn obs_cov(&self, _n: usize) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.obs_var)
    }
    fn jacobian(&self, n: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let r = self.observe(n, x)[0];
        if r == 0.0 {
            return DMatrix::zeros(1, 3);
        }
        DMatrix::from_row_slice(1, 3, &[(x[0] - self.shift) / r, x[1] / r, x[2] / r])
    }
}

pub fn lorenz63_models(spec: &Lorenz63Spec) -> Result<(SdeProcess, ShiftedRange)> {
    spec.validate()?;
    let drift_spec = *spec;
    let jac_spec = *spec;
    let process = discretize_sde(SdeSpec {
        state_dim: 3,
        drift: Arc::new(move |_t, x: &DVector<f64>| drift_spec.drift(x)),
        drift_jacobian: Some(Arc::new(move |_t, x: &DVector<f64>| {
            jac_spec.drift_jacobian(x)
        })),
        volatility: Volatility::Constant(DMatrix::from_diagonal(&DVector::from_row_slice(&spec.g))),
        dt: spec.dt,
        substeps: spec.substeps,
    })?;
    Ok((
        process,
        ShiftedRange {
            shift: spec.obs_shift,
            obs_var: spec.obs_var,
        },
    ))
}

// ---------------------------------------------------------------------------
// Coordinated turn
// ---------------------------------------------------------------------------

fn default_turn_substeps() -> usize {
    1
}

/// Coordinated turn with unknown turn rate; state `[x, ẋ, y, ẏ, Ω]`.
/// The turn matrix is applied `substeps` times with step `dt` between
/// consecutive radar measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnModelSpec {
    pub dt: f64,
    pub q: f64,
    pub range_var: f64,
    pub bearing_var: f64,
    #[serde(default = "default_turn_substeps")]
    pub substeps: usize,
}

impl Default for TurnModelSpec {
    fn default() -> Self {
        Self {
            dt: 1.0,
            q: 1.75e-3,
            range_var: 1e2,
            bearing_var: 1e-5,
            substeps: 1,
        }
    }
}

impl TurnModelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0) {
            return Err(Error::Config(format!(
                "q must be nonnegative, got {}",
                self.q
            )));
        }
        if !(self.range_var > 0.0) || !(self.bearing_var > 0.0) {
            return Err(Error::Config("radar variances must be positive".into()));
        }
        if !(self.dt > 0.0) || self.substeps < 1 {
            return Err(Error::Config(
                "turn model needs dt > 0 and substeps >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Below this turn rate the matrix uses its `Ω → 0` limit.
pub const TURN_RATE_EPS: f64 = 1e-8;

/// `(sin(ΩT)/Ω, (cos(ΩT) − 1)/Ω)` with their `Ω → 0` limits.
fn turn_coefficients(omega: f64, dt: f64) -> (f64, f64) {
    if omega.abs() < TURN_RATE_EPS {
        (dt, 0.0)
    } else {
        let half = (0.5 * omega * dt).sin();
        ((omega * dt).sin() / omega, -2.0 * half * half / omega)
    }
}

/// Derivatives of [`turn_coefficients`] with respect to `Ω`.
fn turn_coefficient_slopes(omega: f64, dt: f64) -> (f64, f64) {
    let w = omega * dt;
    if w.abs() < 1e-3 {
        (
            -omega * dt.powi(3) / 3.0 + omega.powi(3) * dt.powi(5) / 30.0,
            -dt * dt / 2.0 + omega * omega * dt.powi(4) / 24.0,
        )
    } else {
        (
            (w * w.cos() - w.sin()) / (omega * omega),
            (-w * w.sin() - (w.cos() - 1.0)) / (omega * omega),
        )
    }
}

/// The 5×5 transition matrix for turn rate `omega` over `dt`.
pub fn turn_transition(omega: f64, dt: f64) -> DMatrix<f64> {
    let (a, b) = turn_coefficients(omega, dt);
    let (c, s) = ((omega * dt).cos(), (omega * dt).sin());
    DMatrix::from_row_slice(
        5,
        5,
        &[
            1.0, a, 0.0, b, 0.0, //
            0.0, c, 0.0, -s, 0.0, //
            0.0, -b, 1.0, a, 0.0, //
            0.0, s, 0.0, c, 0.0, //
            0.0, 0.0, 0.0, 0.0, 1.0,
        ],
    )
}

/// Per-step process noise covariance of the turn model.
pub fn turn_noise_cov(dt: f64, q: f64) -> DMatrix<f64> {
    let (t3, t2) = (dt.powi(3) / 3.0, dt * dt / 2.0);
    DMatrix::from_row_slice(
        5,
        5,
        &[
            t3,
            t2,
            0.0,
            0.0,
            0.0, //
            t2,
            dt,
            0.0,
            0.0,
            0.0, //
            0.0,
            0.0,
            t3,
            t2,
            0.0, //
            0.0,
            0.0,
            t2,
            dt,
            0.0, //
            0.0,
            0.0,
            0.0,
            0.0,
            q * dt,
        ],
    )
}

#[derive(Debug, Clone)]
pub struct TurnProcess {
    spec: TurnModelSpec,
    gamma: DMatrix<f64>,
}

impl TurnProcess {
    fn substep(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        turn_transition(x[4], self.spec.dt) * x + w
    }

    /// `∂(F(Ω) x)/∂x`, including the dependence of `F` on `Ω = x[4]`.
    fn substep_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let dt = self.spec.dt;
        let omega = x[4];
        let mut jac = turn_transition(omega, dt);
        let (da, db) = turn_coefficient_slopes(omega, dt);
        let (c, s) = ((omega * dt).cos(), (omega * dt).sin());
        let (vx, vy) = (x[1], x[3]);
        jac[(0, 4)] = da * vx + db * vy;
        jac[(1, 4)] = -dt * s * vx - dt * c * vy;
        jac[(2, 4)] = -db * vx + da * vy;
        jac[(3, 4)] = dt * c * vx - dt * s * vy;
        jac
    }
}

impl ProcessModel for TurnProcess {
    fn state_dim(&self) -> usize {
        5
    }
    fn noise_dim(&self) -> usize {
        5 * self.spec.substeps
    }
    fn propagate(&self, _n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        let mut state = x.clone();
        for m in 0..self.spec.substeps {
            state = self.substep(&state, &noise.rows(5 * m, 5).into_owned());
        }
        state
    }
    fn noise_cov(&self, _n: usize) -> DMatrix<f64> {
        self.gamma.clone()
    }
    fn jacobian(&self, _n: usize, x: &DVector<f64>, noise: &DVector<f64>) -> DMatrix<f64> {
        let total = 5 + self.noise_dim();
        let mut jac = DMatrix::zeros(5, total);
        jac.view_mut((0, 0), (5, 5)).fill_with_identity();
        let mut state = x.clone();
        for m in 0..self.spec.substeps {
            jac = self.substep_jacobian(&state) * jac;
            for i in 0..5 {
                jac[(i, 5 + 5 * m + i)] += 1.0;
            }
            state = self.substep(&state, &noise.rows(5 * m, 5).into_owned());
        }
        jac
    }
}

/// Range and bearing from a radar at the origin.
#[derive(Debug, Clone)]
pub struct RangeBearing {
    pub range_var: f64,
    pub bearing_var: f64,
}

impl ObservationModel for RangeBearing {
    fn state_dim(&self) -> usize {
        5
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn observe(&self, _n: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0].hypot(x[2]), wrap_angle(x[2].atan2(x[0]))])
    }
    fn obs_cov(&self, _n: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.range_var, self.bearing_var]))
    }
    fn jacobian(&self, _n: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let r2 = x[0] * x[0] + x[2] * x[2];
        if r2 == 0.0 {
            return DMatrix::zeros(2, 5);
        }
        let r = r2.sqrt();
        let mut jac = DMatrix::zeros(2, 5);
        jac[(0, 0)] = x[0] / r;
        jac[(0, 2)] = x[2] / r;
        jac[(1, 0)] = -x[2] / r2;
        jac[(1, 2)] = x[0] / r2;
        jac
    }
    fn residual(&self, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![y[0] - z[0], wrap_angle(y[1] - z[1])])
    }
}

pub fn turn_models(spec: &TurnModelSpec) -> Result<(TurnProcess, RangeBearing)> {
    spec.validate()?;
    let block = turn_noise_cov(spec.dt, spec.q);
    let m = spec.substeps;
    let mut gamma = DMatrix::zeros(5 * m, 5 * m);
    for k in 0..m {
        gamma.view_mut((5 * k, 5 * k), (5, 5)).copy_from(&block);
    }
    Ok((
        TurnProcess { spec: *spec, gamma },
        RangeBearing {
            range_var: spec.range_var,
            bearing_var: spec.bearing_var,
        },
    ))
}

/// Initial distribution of the tracking experiment.
pub fn turn_prior() -> crate::gaussian::Gaussian {
    crate::gaussian::Gaussian {
        mean: DVector::from_vec(vec![1e3, 3e2, 1e3, 0.0, -3.0 * PI / 180.0]),
        cov: DMatrix::from_diagonal(&DVector::from_vec(vec![1e2, 10.0, 1e2, 10.0, 1e-4])),
    }
}

// ---------------------------------------------------------------------------
// Truth simulation
// ---------------------------------------------------------------------------

/// A simulated truth and the observations generated from it.
/// `observations[i]` is `yᵢ₊₁`, taken from `truth[i + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRun {
    pub truth: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
    pub seed: u64,
}

/// Rolls the model forward `steps` times from `x0`, drawing `ξₙ ~ N(0, Γₙ)`
/// and `ηₙ ~ N(0, Rₙ)` from a generator seeded with `seed`.
pub fn simulate_truth(
    process: &dyn ProcessModel,
    obs: &dyn ObservationModel,
    x0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<TruthRun> {
    if steps < 1 {
        return Err(Error::Config(
            "truth simulation needs at least one step".into(),
        ));
    }
    crate::error::check_dim(process.state_dim(), x0.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps);
    truth.push(x0.clone());
    let mut x = x0.clone();
    for n in 0..steps {
        let xi = psd_sqrt(&process.noise_cov(n)) * normal_vec(&mut rng, process.noise_dim());
        x = process.propagate(n, &x, &xi);
        let eta = psd_sqrt(&obs.obs_cov(n + 1)) * normal_vec(&mut rng, obs.obs_dim());
        observations.push(canonical_observation(obs, obs.observe(n + 1, &x) + eta));
        truth.push(x.clone());
    }
    Ok(TruthRun {
        truth,
        observations,
        seed,
    })
}

/// Brings angular components back into `(−π, π]` via the model's residual.
fn canonical_observation(obs: &dyn ObservationModel, y: DVector<f64>) -> DVector<f64> {
    obs.residual(&y, &DVector::zeros(y.len()))
}

/// Settings for [`simulate_bistable_transition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedTransition {
    /// The well-to-well crossing must happen inside `[start, end]` (time units).
    pub window: (f64, f64),
    /// Extra drift toward the other well while forcing, as a multiple of the
    /// largest barrier-side drift `2β/(3√3)`.
    #[serde(default = "default_push")]
    pub push: f64,
}

fn default_push() -> f64 {
    2.0
}

/// Bistable truth that switches wells at a time inside `forcing.window`.
///
/// Outside the forcing interval the truth follows the Euler scheme exactly.
/// From a start time drawn uniformly over the first 80% of the window a
/// constant drift toward the opposite well is added until the truth is halfway
/// into it. Draws whose zero crossing falls outside the window, or that cross
/// back afterwards, are discarded. Returns the truth and the crossing time.
pub fn simulate_bistable_transition(
    spec: &BistableSpec,
    x0: f64,
    steps: usize,
    forcing: &ForcedTransition,
    seed: u64,
) -> Result<(TruthRun, f64)> {
    spec.validate()?;
    let (lo, hi) = forcing.window;
    if !(hi > lo) || lo < 0.0 {
        return Err(Error::Config(format!(
            "invalid transition window [{lo}, {hi}]"
        )));
    }
    let interval = spec.dt * spec.substeps as f64;
    if (steps as f64) * interval < hi {
        return Err(Error::Config(
            "simulation ends before the transition window closes".into(),
        ));
    }
    let (_, obs) = bistable_models(spec)?;
    let push = forcing.push * 2.0 * spec.beta / (3.0 * 3f64.sqrt());
    let noise_sd = spec.sigma * spec.dt.sqrt();
    let obs_sd = spec.obs_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _attempt in 0..1000 {
        let start = lo + (hi - lo) * 0.8 * rand::Rng::random::<f64>(&mut rng);
        let mut x = x0;
        let mut t = 0.0;
        let mut forcing_sign = 0.0;
        let mut target = 0.0;
        let mut crossing = None;
        let mut recrossed = false;
        let mut truth = vec![DVector::from_element(1, x0)];
        let mut observations = Vec::with_capacity(steps);
        for n in 0..steps {
            for _ in 0..spec.substeps {
                if target == 0.0 && t >= start {
                    target = if x >= 0.0 { -1.0 } else { 1.0 };
                    forcing_sign = target;
                }
                let w: f64 = StandardNormal.sample(&mut rng);
                let prev = x;
                x += spec.dt * (spec.drift(x) + forcing_sign * push) + noise_sd * w;
                t += spec.dt;
                if target != 0.0 && prev * x <= 0.0 {
                    if crossing.is_none() && x * target >= 0.0 {
                        crossing = Some(t);
                    } else if forcing_sign == 0.0 {
                        recrossed = true;
                    }
                }
                if forcing_sign != 0.0 && x * target >= 0.5 {
                    forcing_sign = 0.0;
                }
            }
            let state = DVector::from_element(1, x);
            let eta: f64 = StandardNormal.sample(&mut rng);
            let y = obs.observe(n + 1, &state)[0] + obs_sd * eta;
            observations.push(DVector::from_element(1, y));
            truth.push(state);
        }
        if let Some(tc) = crossing {
            if !recrossed && tc >= lo && tc <= hi {
                return Ok((
                    TruthRun {
                        truth,
                        observations,
                        seed,
                    },
                    tc,
                ));
            }
        }
    }
    Err(Error::Config(
        "could not generate a transition inside the window".into(),
    ))
}
