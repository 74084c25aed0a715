//! Coordinated-turn aircraft with unknown turn rate, tracked from range and
//! bearing; compares CGF and CGSF, then the q = 0 turn-rate estimation mode.

use gsfilter::filters::{run_filter, Family, FilterKind};
use gsfilter::testbeds::{simulate_truth, turn_models, turn_prior, TurnModelSpec};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn errors(truth: &[DVector<f64>], means: &[DVector<f64>]) -> (f64, f64, f64) {
    let (mut p, mut v, mut w) = (0.0, 0.0, 0.0);
    let window = 50..means.len();
    let count = window.len() as f64;
    for n in window {
        let d = &means[n] - &truth[n];
        p += d[0] * d[0] + d[2] * d[2];
        v += d[1] * d[1] + d[3] * d[3];
        w += d[4] * d[4];
    }
    ((p / count).sqrt(), (v / count).sqrt(), (w / count).sqrt())
}

fn main() -> gsfilter::Result<()> {
    let prior = turn_prior();
    for (title, spec) in [
        ("maneuvering target", TurnModelSpec::default()),
        (
            "constant turn rate (q = 0)",
            TurnModelSpec {
                q: 0.0,
                ..Default::default()
            },
        ),
    ] {
        let (process, obs) = turn_models(&spec)?;
        let truth = simulate_truth(&process, &obs, &prior.mean, 200, 21)?;
        println!("{title}: time-averaged RMSE over steps 50..200");
        println!(
            "  {:<8} {:>10} {:>10} {:>12}",
            "filter", "position", "velocity", "turn rate"
        );
        for family in [Family::Cgf, Family::Cgsf] {
            let kind = FilterKind::new(family);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let traj = run_filter(
                &kind,
                &process,
                &obs,
                &prior,
                &truth.observations,
                &Default::default(),
                &mut rng,
            )?;
            let (p, v, w) = errors(&truth.truth, &traj.means());
            println!("  {:<8} {p:>10.3} {v:>10.3} {w:>12.2e}", kind.label());
        }
    }
    Ok(())
}
