//! On a linear-Gaussian model every filter except the sampled ones reproduces
//! the Kalman filter, both orderings included.

use gsfilter::filters::{run_filter, Family, FilterKind};
use gsfilter::model::{LinearObservation, LinearProcess};
use gsfilter::testbeds::simulate_truth;
use gsfilter::Gaussian;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gsfilter::Result<()> {
    // damped oscillator observed through its first coordinate
    let process = LinearProcess::additive(
        DMatrix::from_row_slice(2, 2, &[0.95, 0.1, -0.1, 0.95]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04])),
    );
    let obs = LinearObservation {
        matrix: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        obs_cov: DMatrix::from_element(1, 1, 0.25),
    };
    let prior = Gaussian::new(DVector::from_vec(vec![1.0, 0.0]), DMatrix::identity(2, 2))?;
    let truth = simulate_truth(&process, &obs, &DVector::from_vec(vec![1.2, -0.3]), 30, 5)?;

    let kinds = [
        FilterKind::new(Family::Lgf),
        FilterKind::new(Family::Vgf),
        FilterKind::cubature(Family::Cgf, 3),
        FilterKind::cubature(Family::Cgf, 5),
        FilterKind::particle(Family::Pgf, 20_000),
        FilterKind::new(Family::Lgsf),
        FilterKind::new(Family::Vgsf),
        FilterKind::cubature(Family::Cgsf, 3),
        FilterKind::particle(Family::Pgsf, 20_000),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let reference = run_filter(
        &kinds[0],
        &process,
        &obs,
        &prior,
        &truth.observations,
        &Default::default(),
        &mut rng,
    )?;
    println!(
        "{:<12} {:>16} {:>16}",
        "filter", "max |Δmean|", "max |Δcov|"
    );
    for kind in &kinds {
        let traj = run_filter(
            kind,
            &process,
            &obs,
            &prior,
            &truth.observations,
            &Default::default(),
            &mut rng,
        )?;
        let (mut dm, mut dc) = (0.0f64, 0.0f64);
        for (a, b) in traj.records.iter().zip(&reference.records) {
            dm = dm.max((&a.posterior.mean - &b.posterior.mean).amax());
            dc = dc.max((&a.posterior.cov - &b.posterior.cov).amax());
        }
        println!("{:<12} {dm:>16.2e} {dc:>16.2e}", kind.label());
    }
    Ok(())
}
