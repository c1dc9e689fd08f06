//! Picking the interpolation point by a worst-case grid search.
//!
//! With probabilities proportional to the estimated error magnitude and no
//! robustness set, the variance surrogate is minimized at the active end
//! (rho = 0) by construction. Growing the perturbation radius pushes the
//! minimizer toward uniform sampling.
//!
//! ```bash
//! cargo run -p robust-active-inference --example robust_rho
//! ```

use robust_active_inference::{
    normalize_to_budget, solve_rho, Budget, ConstraintSet, ErrorEstimate, ErrorSource, PathKind,
    RhoGrid,
};
use robust_active_inference::rng::Rng;

fn main() {
    let n = 200;
    let mut rng = Rng::new(7);
    let ehat: Vec<f64> = (0..n).map(|_| rng.next_uniform(0.5, 2.0)).collect();
    let ehat2 =
        ErrorEstimate::new(ehat.iter().map(|&e| e * e).collect(), ErrorSource::ExternalColumn)
            .unwrap();

    let budget = Budget::new(50, n).unwrap();
    let pi = normalize_to_budget(&ehat, &budget, 1e-3).unwrap();
    let grid = RhoGrid::default();

    println!("{:>10} {:>8} {:>12}", "radius c", "rho", "worst value");
    for &c in &[0.0, 1.0, 5.0, 20.0, 80.0, 320.0] {
        let sol =
            solve_rho(PathKind::Geometric, &pi, &ehat2, &ConstraintSet::L2 { c }, &grid).unwrap();
        println!("{c:>10.1} {:>8.2} {:>12.4}", sol.rho, sol.value);
    }

    // The trace of one solve shows the full profile over the grid.
    let sol = solve_rho(
        PathKind::Geometric,
        &pi,
        &ehat2,
        &ConstraintSet::L2 { c: 20.0 },
        &RhoGrid::new(0.1).unwrap(),
    )
    .unwrap();
    println!("\ntrace at c = 20 (step 0.1):");
    for row in &sol.trace {
        println!(
            "rho {:4.1}: objective {:8.4}  worst-case {:8.4}",
            row.rho, row.objective, row.robust_value
        );
    }
}
