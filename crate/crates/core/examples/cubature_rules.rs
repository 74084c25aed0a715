//! Degree-3 and degree-5 cubature rules: support sizes, weights, moment exactness,
//! and transport onto a correlated Gaussian.

use gsfilter::cubature::{moment_defect, moments, standard_rule, transform, RuleKind};
use nalgebra::{DMatrix, DVector};

fn main() -> gsfilter::Result<()> {
    println!(
        "{:>2} {:>8} {:>12} {:>8} {:>12}",
        "k", "deg3 pts", "deg3 defect", "deg5 pts", "deg5 defect"
    );
    for k in 1..=6 {
        let r3 = standard_rule(RuleKind::Cubature3, k, None)?;
        let r5 = standard_rule(RuleKind::Cubature5, k, None)?;
        println!(
            "{k:>2} {:>8} {:>12.1e} {:>8} {:>12.1e}",
            r3.len(),
            moment_defect(&r3, 3)?,
            r5.len(),
            moment_defect(&r5, 5)?
        );
    }

    // for k > 4 the axis weights of the degree-5 rule are negative
    let r5 = standard_rule(RuleKind::Cubature5, 6, None)?;
    let min_w = r5.weights().iter().cloned().fold(f64::INFINITY, f64::min);
    println!("\nsmallest degree-5 weight at k = 6: {min_w:.4}");

    let mean = DVector::from_vec(vec![1.0, -2.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
    let s = cov
        .clone()
        .cholesky()
        .expect("covariance is positive definite")
        .l();
    let mu = transform(&standard_rule(RuleKind::Cubature3, 2, None)?, &mean, &s)?;
    let (m, c) = moments(&mu);
    println!(
        "transported degree-3 rule: mean error {:.1e}, covariance error {:.1e}",
        (m - mean).amax(),
        (c - cov).amax()
    );
    Ok(())
}
