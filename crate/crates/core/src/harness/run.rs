use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::config::{BistableTestbed, ExperimentConfig, TestbedConfig};
use crate::error::{Error, Result};
use crate::filters::run_filter;
use crate::gaussian::{psd_sqrt, Gaussian};
use crate::kernels::Diagnostics;
use crate::model::{ObservationModel, ProcessModel};
use crate::testbeds::{
    bistable_models, lorenz63_models, simulate_bistable_transition, simulate_truth, turn_models,
    TruthRun,
};

/// Root mean square of the Euclidean distances `|Aᵢ − Bᵢ|`.
pub fn rmse(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        total += (x - y).norm_squared();
    }
    Ok((total / a.len() as f64).sqrt())
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `r`.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed ^ splitmix64(r as u64)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Independent stream within a replicate, keyed by a name such as a filter label.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a(tag))
}

/// A named group of state components scored together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metric {
    pub name: String,
    pub components: Vec<usize>,
}

impl Metric {
    fn new(name: &str, components: &[usize]) -> Self {
        Self {
            name: name.into(),
            components: components.to_vec(),
        }
    }

    pub fn error(&self, estimate: &DVector<f64>, truth: &DVector<f64>) -> f64 {
        self.components
            .iter()
            .map(|&i| (estimate[i] - truth[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn metrics_for(testbed: &TestbedConfig) -> Vec<Metric> {
    match testbed {
        TestbedConfig::Bistable(_) => vec![Metric::new("state", &[0])],
        TestbedConfig::Lorenz63(_) => vec![Metric::new("state", &[0, 1, 2])],
        TestbedConfig::Tracking(_) => vec![
            Metric::new("state", &[0, 1, 2, 3, 4]),
            Metric::new("position", &[0, 2]),
            Metric::new("velocity", &[1, 3]),
            Metric::new("turn_rate", &[4]),
        ],
    }
}

/// One filter on one replicate. `estimates[i]` and `diagnostics[i]` belong to step `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub label: String,
    pub estimates: Vec<DVector<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    /// Step and message of a failure; later estimates repeat the last good one.
    pub failure: Option<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub seed: u64,
    pub truth: TruthRun,
    /// Zero-crossing time of a forced transition.
    pub transition_time: Option<f64>,
    pub filters: Vec<FilterResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub filter: String,
    pub metric: String,
    pub mean_rmse: f64,
    pub var_rmse: f64,
}

/// Everything produced by [`run_experiment`], ordered by replicate then filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub labels: Vec<String>,
    pub metrics: Vec<Metric>,
    pub obs_interval: f64,
    pub replicates: Vec<ReplicateResult>,
}

impl RunResult {
    pub fn filter_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// Estimation error of one replicate at steps `1..=steps`.
    pub fn errors(&self, replicate: usize, filter: usize, metric: &Metric) -> Vec<f64> {
        let rep = &self.replicates[replicate];
        rep.filters[filter]
            .estimates
            .iter()
            .zip(&rep.truth.truth[1..])
            .map(|(e, t)| metric.error(e, t))
            .collect()
    }

    /// RMSE across replicates at each step.
    pub fn per_step_rmse(&self, filter: usize, metric: &Metric) -> Vec<f64> {
        let mut sums = vec![0.0; self.config.steps];
        for r in 0..self.replicates.len() {
            for (s, e) in sums.iter_mut().zip(self.errors(r, filter, metric)) {
                *s += e * e;
            }
        }
        let n = self.replicates.len() as f64;
        sums.into_iter().map(|s| (s / n).sqrt()).collect()
    }

    /// RMSE over the steps `lo..=hi` of each replicate.
    pub fn time_averaged_over(
        &self,
        filter: usize,
        metric: &Metric,
        lo: usize,
        hi: usize,
    ) -> Vec<f64> {
        (0..self.replicates.len())
            .map(|r| {
                let errs = self.errors(r, filter, metric);
                let window = &errs[lo - 1..hi];
                (window.iter().map(|e| e * e).sum::<f64>() / window.len() as f64).sqrt()
            })
            .collect()
    }

    /// RMSE over the configured averaging window, one value per replicate.
    pub fn time_averaged(&self, filter: usize, metric: &Metric) -> Vec<f64> {
        let (lo, hi) = self.config.window();
        self.time_averaged_over(filter, metric, lo, hi)
    }

    /// Mean and sample variance over replicates of the time-averaged RMSE.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for (f, label) in self.labels.iter().enumerate() {
            for metric in &self.metrics {
                let values = self.time_averaged(f, metric);
                let (mean_rmse, var_rmse) = mean_and_variance(&values);
                rows.push(SummaryRow {
                    filter: label.clone(),
                    metric: metric.name.clone(),
                    mean_rmse,
                    var_rmse,
                });
            }
        }
        rows
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, &str, usize, &str)> + '_ {
        self.replicates.iter().enumerate().flat_map(|(r, rep)| {
            rep.filters.iter().filter_map(move |f| {
                f.failure
                    .as_ref()
                    .map(|(step, msg)| (r, f.label.as_str(), *step, msg.as_str()))
            })
        })
    }
}

/// Mean and `n − 1` variance; the variance of a single value is 0.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

type TruthFn<'a> = dyn Fn(usize, u64) -> Result<(TruthRun, Option<f64>)> + Sync + 'a;

fn draw(g: &Gaussian, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(g.dim(), |_, _| StandardNormal.sample(&mut rng));
    &g.mean + psd_sqrt(&g.cov) * z
}

fn run_filters(
    config: &ExperimentConfig,
    process: &dyn ProcessModel,
    obs: &dyn ObservationModel,
    prior: &Gaussian,
    seed: u64,
    truth: TruthRun,
    transition_time: Option<f64>,
) -> Result<ReplicateResult> {
    let mut filters = Vec::with_capacity(config.filters.len());
    for kind in &config.filters {
        let label = kind.label();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &label));
        let traj = run_filter(
            kind,
            process,
            obs,
            prior,
            &truth.observations,
            &config.variational,
            &mut rng,
        )?;
        let mut estimates: Vec<DVector<f64>> = traj.means().into_iter().skip(1).collect();
        let mut diagnostics: Vec<Diagnostics> =
            traj.records.iter().skip(1).map(|r| r.diagnostics).collect();
        let last = traj
            .records
            .last()
            .expect("prior record")
            .posterior
            .mean
            .clone();
        estimates.resize(config.steps, last);
        diagnostics.resize(config.steps, Diagnostics::default());
        filters.push(FilterResult {
            label,
            estimates,
            diagnostics,
            failure: traj.failure.map(|f| (f.step, f.error.to_string())),
        });
    }
    Ok(ReplicateResult {
        seed,
        truth,
        transition_time,
        filters,
    })
}

pub(crate) fn run_with_models(
    config: &ExperimentConfig,
    process: &dyn ProcessModel,
    obs: &dyn ObservationModel,
    metrics: Vec<Metric>,
    obs_interval: f64,
    make_truth: &TruthFn<'_>,
) -> Result<RunResult> {
    let prior = config.prior.to_gaussian()?;
    let replicates = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(config.seed, r);
            let (truth, tc) = make_truth(r, seed)?;
            run_filters(config, process, obs, &prior, seed, truth, tc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        config: config.clone(),
        labels: config.filters.iter().map(|f| f.label()).collect(),
        metrics,
        obs_interval,
        replicates,
    })
}

fn standard_truth<'a>(
    config: &'a ExperimentConfig,
    process: &'a dyn ProcessModel,
    obs: &'a dyn ObservationModel,
    prior: &'a Gaussian,
) -> impl Fn(usize, u64) -> Result<(TruthRun, Option<f64>)> + Sync + 'a {
    move |_r, seed| {
        let x0 = match &config.truth_start {
            Some(x0) => DVector::from_column_slice(x0),
            None => draw(prior, sub_seed(seed, "truth-start")),
        };
        let run = simulate_truth(process, obs, &x0, config.steps, sub_seed(seed, "truth"))?;
        Ok((run, None))
    }
}

/// Runs every configured filter on every replicate.
///
/// Replicates run in parallel; each draws one truth and all filters consume
/// it. Per-trajectory failures are kept in the result rather than aborting.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let prior = config.prior.to_gaussian()?;
    let metrics = metrics_for(&config.testbed);
    let interval = config.testbed.obs_interval();
    match &config.testbed {
        TestbedConfig::Bistable(BistableTestbed {
            spec,
            forced_transition,
        }) => {
            let (process, obs) = bistable_models(spec)?;
            match forced_transition {
                Some(forcing) => {
                    let x0 = config.truth_start.as_ref().expect("validated")[0];
                    let truth = |_r: usize, seed: u64| {
                        let (run, tc) = simulate_bistable_transition(
                            spec,
                            x0,
                            config.steps,
                            forcing,
                            sub_seed(seed, "truth"),
                        )?;
                        Ok((run, Some(tc)))
                    };
                    run_with_models(config, &process, &obs, metrics, interval, &truth)
                }
                None => {
                    let truth = standard_truth(config, &process, &obs, &prior);
                    run_with_models(config, &process, &obs, metrics, interval, &truth)
                }
            }
        }
        TestbedConfig::Lorenz63(spec) => {
            let (process, obs) = lorenz63_models(spec)?;
            let truth = standard_truth(config, &process, &obs, &prior);
            run_with_models(config, &process, &obs, metrics, interval, &truth)
        }
        TestbedConfig::Tracking(spec) => {
            let (process, obs) = turn_models(spec)?;
            let truth = standard_truth(config, &process, &obs, &prior);
            run_with_models(config, &process, &obs, metrics, interval, &truth)
        }
    }
}
