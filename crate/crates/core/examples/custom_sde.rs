//! Plugging in your own model: an Ornstein-Uhlenbeck process with a
//! state-dependent volatility, discretized with several Euler substeps per
//! observation, and a logistic observation.

use std::sync::Arc;

use gsfilter::filters::{run_filter, Family, FilterKind};
use gsfilter::model::{discretize_sde, FnObservation, SdeSpec, Volatility};
use gsfilter::testbeds::simulate_truth;
use gsfilter::Gaussian;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gsfilter::Result<()> {
    let process = discretize_sde(SdeSpec {
        state_dim: 1,
        drift: Arc::new(|_t, x: &DVector<f64>| x.map(|v| -2.0 * v)),
        drift_jacobian: None,
        volatility: Volatility::StateDependent {
            brownian_dim: 1,
            func: Arc::new(|_t, x: &DVector<f64>| {
                DMatrix::from_element(1, 1, 0.3 * (1.0 + x[0].abs()))
            }),
        },
        dt: 0.02,
        substeps: 5,
    })?;
    let obs = FnObservation::new(
        1,
        DMatrix::from_element(1, 1, 0.01),
        |_, x: &DVector<f64>| x.map(|v| 1.0 / (1.0 + (-3.0 * v).exp())),
    );
    let truth = simulate_truth(&process, &obs, &DVector::from_element(1, 0.5), 100, 4)?;
    let prior = Gaussian::new(DVector::zeros(1), DMatrix::identity(1, 1))?;

    for family in Family::ALL {
        let kind = FilterKind::new(family);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let traj = run_filter(
            &kind,
            &process,
            &obs,
            &prior,
            &truth.observations,
            &Default::default(),
            &mut rng,
        )?;
        let err: f64 = traj
            .means()
            .iter()
            .zip(&truth.truth)
            .skip(1)
            .map(|(m, x)| (m[0] - x[0]).powi(2))
            .sum::<f64>()
            / 100.0;
        println!("{:<12} rmse {:.4}", kind.label(), err.sqrt());
    }
    Ok(())
}
