//! The eight Gaussian filters and the sequential estimation loop.
//!
//! A conventional filter predicts then corrects:
//! `𝒳ₙ|ₙ → xₙ₊₁|ₙ ⇒ xₙ₊₁|ₙ₊₁`. A smoothing filter first conditions the
//! augmented state `[xₙ; ξₙ]` on `yₙ₊₁` through `Ψⁿ = φⁿ⁺¹ ∘ Φⁿ` and then
//! propagates the conditioned (biased, correlated) noise:
//! `𝒳ₙ|ₙ ⇒ 𝒳ₙ|ₙ₊₁ → xₙ₊₁|ₙ₊₁`.

use std::fmt;

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::cubature::RuleKind;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{add_diagonal, cholesky_factor, Gaussian};
use crate::kernels::{
    measurement_update_linear, measurement_update_points, measurement_update_variational,
    time_update_linear, time_update_points, Diagnostics,
};
use crate::model::{
    augment, composed_observation, AugmentedGaussian, MeasurementMap, ObservationAt,
    ObservationModel, ProcessModel,
};
use crate::optim::VariationalSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Lgf,
    Vgf,
    Cgf,
    Pgf,
    Lgsf,
    Vgsf,
    Cgsf,
    Pgsf,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Lgf,
        Family::Vgf,
        Family::Cgf,
        Family::Pgf,
        Family::Lgsf,
        Family::Vgsf,
        Family::Cgsf,
        Family::Pgsf,
    ];

    pub fn is_smoothing(self) -> bool {
        matches!(
            self,
            Family::Lgsf | Family::Vgsf | Family::Cgsf | Family::Pgsf
        )
    }

    /// The filter with the same update rules in the other ordering.
    pub fn counterpart(self) -> Family {
        match self {
            Family::Lgf => Family::Lgsf,
            Family::Vgf => Family::Vgsf,
            Family::Cgf => Family::Cgsf,
            Family::Pgf => Family::Pgsf,
            Family::Lgsf => Family::Lgf,
            Family::Vgsf => Family::Vgf,
            Family::Cgsf => Family::Cgf,
            Family::Pgsf => Family::Pgf,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Lgf => "LGF",
            Family::Vgf => "VGF",
            Family::Cgf => "CGF",
            Family::Pgf => "PGF",
            Family::Lgsf => "LGSF",
            Family::Vgsf => "VGSF",
            Family::Cgsf => "CGSF",
            Family::Pgsf => "PGSF",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How moments are mapped through the nonlinear models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approximation {
    Linear,
    Variational,
    Points(RuleKind),
}

fn default_degree() -> u8 {
    3
}

fn default_samples() -> usize {
    1000
}

/// A filter family plus its rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterKind {
    pub family: Family,
    /// Cubature degree for CGF/CGSF (3 or 5).
    #[serde(default = "default_degree")]
    pub rule_degree: u8,
    /// Empirical sample count for PGF/PGSF.
    #[serde(default = "default_samples")]
    pub sample_count: usize,
}

impl FilterKind {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            rule_degree: default_degree(),
            sample_count: default_samples(),
        }
    }

    pub fn cubature(family: Family, rule_degree: u8) -> Self {
        Self {
            rule_degree,
            ..Self::new(family)
        }
    }

    pub fn particle(family: Family, sample_count: usize) -> Self {
        Self {
            sample_count,
            ..Self::new(family)
        }
    }

    /// Same parameters, opposite ordering.
    pub fn counterpart(&self) -> Self {
        Self {
            family: self.family.counterpart(),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            Family::Cgf | Family::Cgsf if !matches!(self.rule_degree, 3 | 5) => Err(Error::Config(
                format!("cubature degree must be 3 or 5, got {}", self.rule_degree),
            )),
            Family::Pgf | Family::Pgsf if self.sample_count < 2 => Err(Error::Config(format!(
                "particle filters need at least 2 samples, got {}",
                self.sample_count
            ))),
            _ => Ok(()),
        }
    }

    pub fn approximation(&self) -> Approximation {
        match self.family {
            Family::Lgf | Family::Lgsf => Approximation::Linear,
            Family::Vgf | Family::Vgsf => Approximation::Variational,
            Family::Cgf | Family::Cgsf => Approximation::Points(if self.rule_degree == 5 {
                RuleKind::Cubature5
            } else {
                RuleKind::Cubature3
            }),
            Family::Pgf | Family::Pgsf => {
                Approximation::Points(RuleKind::Empirical(self.sample_count))
            }
        }
    }

    /// Short label used in reports, e.g. `LGF`, `CGSF(5)`, `PGF(1000)`.
    pub fn label(&self) -> String {
        match self.family {
            Family::Cgf | Family::Cgsf => format!("{}({})", self.family, self.rule_degree),
            Family::Pgf | Family::Pgsf => format!("{}({})", self.family, self.sample_count),
            _ => self.family.to_string(),
        }
    }
}

fn time_update(
    approx: Approximation,
    aug: &AugmentedGaussian,
    process: &dyn ProcessModel,
    n: usize,
    rng: &mut dyn RngCore,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    match approx {
        Approximation::Linear | Approximation::Variational => time_update_linear(aug, process, n),
        Approximation::Points(rule) => {
            let rng = rule.is_random().then_some(rng);
            time_update_points(aug, process, n, rule, rng, diag)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn measurement_update(
    approx: Approximation,
    prior: &Gaussian,
    map: &dyn MeasurementMap,
    y: &DVector<f64>,
    r: &nalgebra::DMatrix<f64>,
    settings: &VariationalSettings,
    rng: &mut dyn RngCore,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    match approx {
        Approximation::Linear => measurement_update_linear(prior, map, y, r, diag),
        Approximation::Variational => {
            let mut local = Diagnostics::default();
            match measurement_update_variational(prior, map, y, r, settings, &mut local) {
                Ok(post) => {
                    diag.absorb(local);
                    Ok(post)
                }
                Err(
                    Error::OptimizerDidNotConverge { .. }
                    | Error::LineSearchFailed { .. }
                    | Error::SingularHessian,
                ) => {
                    local.fallbacks += 1;
                    diag.absorb(local);
                    measurement_update_linear(prior, map, y, r, diag)
                }
                Err(e) => Err(e),
            }
        }
        Approximation::Points(rule) => {
            let rng = rule.is_random().then_some(rng);
            measurement_update_points(prior, map, y, r, rule, rng, diag)
        }
    }
}

/// Shared inputs of a single filter step.
pub struct StepContext<'a> {
    pub process: &'a dyn ProcessModel,
    pub obs: &'a dyn ObservationModel,
    pub settings: &'a VariationalSettings,
}

/// `𝒳ₙ|ₙ → xₙ₊₁|ₙ ⇒ xₙ₊₁|ₙ₊₁`.
pub fn conventional_step(
    kind: &FilterKind,
    posterior: &Gaussian,
    ctx: &StepContext<'_>,
    y_next: &DVector<f64>,
    n: usize,
    rng: &mut dyn RngCore,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    check_dim(ctx.obs.obs_dim(), y_next.len())?;
    let approx = kind.approximation();
    let aug = augment(posterior, ctx.process, n)?;
    let predicted = time_update(approx, &aug, ctx.process, n, rng, diag)?;
    let map = ObservationAt {
        model: ctx.obs,
        n: n + 1,
    };
    let r = ctx.obs.obs_cov(n + 1);
    measurement_update(
        approx,
        &predicted,
        &map,
        y_next,
        &r,
        ctx.settings,
        rng,
        diag,
    )
}

/// Measurement update of the augmented state on `yₙ₊₁`: `𝒳ₙ|ₙ ⇒ 𝒳ₙ|ₙ₊₁`.
pub fn smoothing_update(
    kind: &FilterKind,
    posterior: &Gaussian,
    ctx: &StepContext<'_>,
    y_next: &DVector<f64>,
    n: usize,
    rng: &mut dyn RngCore,
    diag: &mut Diagnostics,
) -> Result<AugmentedGaussian> {
    check_dim(ctx.obs.obs_dim(), y_next.len())?;
    let aug = augment(posterior, ctx.process, n)?;
    let psi = composed_observation(ctx.process, ctx.obs, n);
    let r = ctx.obs.obs_cov(n + 1);
    let conditioned = measurement_update(
        kind.approximation(),
        &aug.belief,
        &psi,
        y_next,
        &r,
        ctx.settings,
        rng,
        diag,
    )?;
    AugmentedGaussian::new(conditioned, aug.state_dim())
}

/// `𝒳ₙ|ₙ ⇒ 𝒳ₙ|ₙ₊₁ → xₙ₊₁|ₙ₊₁`.
pub fn smoothing_step(
    kind: &FilterKind,
    posterior: &Gaussian,
    ctx: &StepContext<'_>,
    y_next: &DVector<f64>,
    n: usize,
    rng: &mut dyn RngCore,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    let conditioned = smoothing_update(kind, posterior, ctx, y_next, n, rng, diag)?;
    time_update(
        kind.approximation(),
        &conditioned,
        ctx.process,
        n,
        rng,
        diag,
    )
}

/// One step of whichever ordering `kind` uses.
pub fn filter_step(
    kind: &FilterKind,
    posterior: &Gaussian,
    ctx: &StepContext<'_>,
    y_next: &DVector<f64>,
    n: usize,
    rng: &mut dyn RngCore,
    diag: &mut Diagnostics,
) -> Result<Gaussian> {
    if kind.family.is_smoothing() {
        smoothing_step(kind, posterior, ctx, y_next, n, rng, diag)
    } else {
        conventional_step(kind, posterior, ctx, y_next, n, rng, diag)
    }
}

/// Posterior at one step together with the numerical events of that step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub posterior: Gaussian,
    pub diagnostics: Diagnostics,
}

#[derive(Debug)]
pub struct StepFailure {
    pub step: usize,
    pub error: Error,
}

/// Sequence of posteriors starting with the prior at step 0.
#[derive(Debug)]
pub struct FilterTrajectory {
    pub kind: FilterKind,
    pub records: Vec<StepRecord>,
    /// Set when a step failed; `records` then stops at the last good step.
    pub failure: Option<StepFailure>,
}

impl FilterTrajectory {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn means(&self) -> Vec<DVector<f64>> {
        self.records
            .iter()
            .map(|r| r.posterior.mean.clone())
            .collect()
    }

    pub fn totals(&self) -> Diagnostics {
        let mut total = Diagnostics::default();
        for r in &self.records {
            total.absorb(r.diagnostics);
        }
        total
    }
}

/// Makes a covariance factorizable, recording a jitter event when a shift was needed.
fn repair(mut g: Gaussian, diag: &mut Diagnostics) -> Result<Gaussian> {
    let factor = cholesky_factor(&g.cov)?;
    if factor.jittered() {
        diag.jitters += 1;
        g.cov = add_diagonal(&g.cov, factor.jitter);
    }
    Ok(g)
}

/// Runs the filter over `observations`, where `observations[i]` is `yᵢ₊₁`.
pub fn run_filter(
    kind: &FilterKind,
    process: &dyn ProcessModel,
    obs: &dyn ObservationModel,
    prior: &Gaussian,
    observations: &[DVector<f64>],
    settings: &VariationalSettings,
    rng: &mut dyn RngCore,
) -> Result<FilterTrajectory> {
    if observations.is_empty() {
        return Err(Error::NoObservations);
    }
    kind.validate()?;
    check_dim(process.state_dim(), prior.dim())?;
    check_dim(obs.state_dim(), prior.dim())?;
    let ctx = StepContext {
        process,
        obs,
        settings,
    };
    let mut records = Vec::with_capacity(observations.len() + 1);
    records.push(StepRecord {
        step: 0,
        posterior: prior.clone(),
        diagnostics: Diagnostics::default(),
    });
    let mut current = prior.clone();
    for (n, y) in observations.iter().enumerate() {
        let mut diag = Diagnostics::default();
        let next = filter_step(kind, &current, &ctx, y, n, rng, &mut diag)
            .and_then(|g| repair(g, &mut diag));
        match next {
            Ok(g) => {
                current = g.clone();
                records.push(StepRecord {
                    step: n + 1,
                    posterior: g,
                    diagnostics: diag,
                });
            }
            Err(error) => {
                return Ok(FilterTrajectory {
                    kind: *kind,
                    records,
                    failure: Some(StepFailure { step: n + 1, error }),
                });
            }
        }
    }
    Ok(FilterTrajectory {
        kind: *kind,
        records,
        failure: None,
    })
}
