//! Linear, cubature and variational measurement updates on a strongly
//! nonlinear observation, against a brute-force posterior on a grid.

use gsfilter::kernels::{
    measurement_update_linear, measurement_update_points, measurement_update_variational,
    Diagnostics,
};
use gsfilter::model::{FnObservation, ObservationAt};
use gsfilter::{Gaussian, RuleKind};
use nalgebra::{DMatrix, DVector};

fn main() -> gsfilter::Result<()> {
    let prior = Gaussian::new(
        DVector::from_element(1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
    )?;
    let r = DMatrix::from_element(1, 1, 0.1);
    let model = FnObservation::new(1, r.clone(), |_, x: &DVector<f64>| x.map(|v| v.powi(3)));
    let map = ObservationAt {
        model: &model,
        n: 0,
    };
    let y = DVector::from_element(1, 2.0);
    let mut diag = Diagnostics::default();

    let linear = measurement_update_linear(&prior, &map, &y, &r, &mut diag)?;
    let cubature =
        measurement_update_points(&prior, &map, &y, &r, RuleKind::Cubature5, None, &mut diag)?;
    let variational =
        measurement_update_variational(&prior, &map, &y, &r, &Default::default(), &mut diag)?;

    // posterior mode and moments by quadrature
    let (mut z, mut m1, mut m2, mut mode, mut best) = (0.0, 0.0, 0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..=20_000 {
        let x = -4.0 + 8.0 * i as f64 / 20_000.0;
        let log_p = -0.5 * (x - 0.5f64).powi(2) - 0.5 * (2.0 - x.powi(3)).powi(2) / 0.1;
        if log_p > best {
            best = log_p;
            mode = x;
        }
        let p = log_p.exp();
        z += p;
        m1 += p * x;
        m2 += p * x * x;
    }
    let mean = m1 / z;
    println!("{:<12} {:>10} {:>10}", "update", "mean", "variance");
    for (name, g) in [
        ("linear", &linear),
        ("cubature-5", &cubature),
        ("variational", &variational),
    ] {
        println!("{name:<12} {:>10.4} {:>10.4}", g.mean[0], g.cov[(0, 0)]);
    }
    println!(
        "{:<12} {mean:>10.4} {:>10.4}",
        "exact",
        m2 / z - mean * mean
    );
    println!(
        "\nthe variational mean sits on the posterior mode ({mode:.4}); BFGS used {} iterations",
        diag.optimizer_iterations
    );
    Ok(())
}
