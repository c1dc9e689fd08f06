//! Cross-validating the misspecification radius.
//!
//! Good error fits want a small radius (trust the fit, stay active); an
//! adversarially wrong fit drives the chosen radius to the top of the grid,
//! which pushes the sampling rule toward uniform.
//!
//! ```bash
//! cargo run -p robust-active-inference --example cross_validation
//! ```

use robust_active_inference::cross_validate_c;
use robust_active_inference::rng::Rng;
use robust_active_inference::{
    normalize_to_budget, Budget, ConstraintSet, ErrorEstimate, ErrorSource, PathKind, RhoGrid,
};

fn main() {
    let n = 600;
    let mut rng = Rng::new(21);

    // True per-unit error scales, plus residual draws on the burn-in.
    let scale: Vec<f64> = (0..n).map(|_| rng.next_uniform(0.5, 2.0)).collect();
    let residual2: Vec<f64> = scale
        .iter()
        .map(|&s| {
            let z = rng.next_normal();
            s * s * z * z
        })
        .collect();
    let burn: Vec<usize> = (0..200).collect();

    let budget = Budget::new(150, n).unwrap();
    let grid = RhoGrid::default();
    let c_grid: Vec<f64> = vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

    for (label, ehat2) in [
        // Fit that matches the truth.
        ("faithful", scale.iter().map(|&s| s * s).collect::<Vec<f64>>()),
        // Fit that is exactly backwards: confident where errors are large.
        ("adversarial", scale.iter().map(|&s| 1.0 / (s * s)).collect::<Vec<f64>>()),
    ] {
        let estimate = ErrorEstimate::new(ehat2.clone(), ErrorSource::ExternalColumn).unwrap();
        let ehat: Vec<f64> = ehat2.iter().map(|&v| v.sqrt()).collect();
        let pi = normalize_to_budget(&ehat, &budget, 1e-3).unwrap();
        let result = cross_validate_c(
            &burn,
            &residual2,
            &pi,
            PathKind::Geometric,
            &grid,
            5,
            &c_grid,
            |c| ConstraintSet::L2 { c },
            99,
            |_train| Ok(estimate.clone()),
        )
        .unwrap();
        println!("{label} error fit: chose c = {}", result.c_star);
        for s in &result.scores {
            println!("  c {:>5.1}: score {:.4}", s.c, s.score);
        }
    }
}
