//! The smoothing filters condition the upcoming process noise on the next
//! observation, so its posterior mean is no longer zero.

use gsfilter::filters::{conventional_step, smoothing_update, Family, FilterKind, StepContext};
use gsfilter::kernels::Diagnostics;
use gsfilter::model::{LinearObservation, LinearProcess};
use gsfilter::Gaussian;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gsfilter::Result<()> {
    // x₁ = x₀ + ξ₀, y₁ = x₁ + η₁ with unit variances everywhere
    let process = LinearProcess::additive(DMatrix::identity(1, 1), DMatrix::identity(1, 1));
    let obs = LinearObservation {
        matrix: DMatrix::identity(1, 1),
        obs_cov: DMatrix::identity(1, 1),
    };
    let settings = Default::default();
    let ctx = StepContext {
        process: &process,
        obs: &obs,
        settings: &settings,
    };
    let prior = Gaussian::new(DVector::zeros(1), DMatrix::identity(1, 1))?;
    let y = DVector::from_element(1, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut diag = Diagnostics::default();

    let kind = FilterKind::new(Family::Lgsf);
    let conditioned = smoothing_update(&kind, &prior, &ctx, &y, 0, &mut rng, &mut diag)?;
    println!("after conditioning on y₁ = 3:");
    println!("  E[x₀ | y₁] = {:.4}", conditioned.state_mean()[0]);
    println!(
        "  E[ξ₀ | y₁] = {:.4}   (Γ/(C+Γ+R)·(y−x̄) = 1)",
        conditioned.noise_mean()[0]
    );
    println!("  cov[x₀, ξ₀ | y₁] = {:.4}", conditioned.belief.cov[(0, 1)]);

    let conventional = conventional_step(
        &FilterKind::new(Family::Lgf),
        &prior,
        &ctx,
        &y,
        0,
        &mut rng,
        &mut diag,
    )?;
    println!(
        "both orderings give x₁ | y₁ with mean {:.4}, variance {:.4}",
        conventional.mean[0],
        conventional.cov[(0, 0)]
    );
    Ok(())
}
