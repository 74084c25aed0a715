//! Stochastic Lorenz-63 observed through its distance from (0.5, 0, 0).

use gsfilter::filters::{run_filter, Family, FilterKind};
use gsfilter::harness::rmse;
use gsfilter::testbeds::{lorenz63_models, simulate_truth, Lorenz63Spec};
use gsfilter::Gaussian;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gsfilter::Result<()> {
    let (process, obs) = lorenz63_models(&Lorenz63Spec::default())?;
    let truth = simulate_truth(
        &process,
        &obs,
        &DVector::from_vec(vec![-0.2, -0.3, -0.5]),
        500,
        11,
    )?;
    let prior = Gaussian::new(
        DVector::from_vec(vec![1.35, -3.0, 6.0]),
        DMatrix::identity(3, 3) * 0.35,
    )?;

    println!(
        "{:<12} {:>10} {:>10} {:>10}",
        "filter", "rmse", "fallbacks", "jitters"
    );
    for family in Family::ALL {
        let kind = FilterKind::new(family);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let traj = run_filter(
            &kind,
            &process,
            &obs,
            &prior,
            &truth.observations,
            &Default::default(),
            &mut rng,
        )?;
        let means = traj.means();
        let n = means.len();
        let err = rmse(&means[1..], &truth.truth[1..n])?;
        let totals = traj.totals();
        println!(
            "{:<12} {err:>10.3} {:>10} {:>10}",
            kind.label(),
            totals.fallbacks,
            totals.jitters
        );
    }
    Ok(())
}
