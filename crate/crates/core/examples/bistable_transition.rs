//! A double-well truth forced to switch wells near t = 2, tracked by all
//! eight filters from identity observations every 20 Euler steps.

use gsfilter::filters::{run_filter, Family, FilterKind};
use gsfilter::testbeds::{
    bistable_models, simulate_bistable_transition, BistableSpec, ForcedTransition,
};
use gsfilter::Gaussian;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gsfilter::Result<()> {
    let spec = BistableSpec::identity_jump();
    let (process, obs) = bistable_models(&spec)?;
    let forcing = ForcedTransition {
        window: (1.5, 2.5),
        push: 2.0,
    };
    let (truth, crossing) = simulate_bistable_transition(&spec, 0.8, 25, &forcing, 7)?;
    let prior = Gaussian::new(
        DVector::from_element(1, 0.8),
        DMatrix::from_element(1, 1, 0.02),
    )?;
    println!("truth crosses zero at t = {crossing:.2}\n");

    let mut columns = Vec::new();
    for family in Family::ALL {
        let kind = FilterKind::new(family);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let traj = run_filter(
            &kind,
            &process,
            &obs,
            &prior,
            &truth.observations,
            &Default::default(),
            &mut rng,
        )?;
        columns.push((kind.label(), traj.means()));
    }
    print!("{:>5} {:>7} {:>7}", "t", "truth", "y");
    for (label, _) in &columns {
        print!(" {label:>10}");
    }
    println!();
    for n in 1..truth.truth.len() {
        print!(
            "{:>5.1} {:>7.3} {:>7.3}",
            n as f64 * 0.2,
            truth.truth[n][0],
            truth.observations[n - 1][0]
        );
        for (_, means) in &columns {
            print!(" {:>10.3}", means[n][0]);
        }
        println!();
    }
    Ok(())
}
