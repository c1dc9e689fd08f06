//! Budget-preserving paths between an active rule and the uniform rule.
//!
//! Builds a rule proportional to made-up error magnitudes, then walks the
//! linear, geometric, and spherical interpolations, printing a few units'
//! probabilities and the (constant) mean at every point.
//!
//! ```bash
//! cargo run -p robust-active-inference --example budget_paths
//! ```

use robust_active_inference::{normalize_to_budget, path_eval, Budget, PathKind};

fn main() {
    let n = 10;
    let budget = Budget::new(3, n).unwrap();
    // Pretend the model is confident about the first units, unsure about the
    // last ones.
    let weights: Vec<f64> = (0..n).map(|i| 0.2 + 0.4 * i as f64).collect();
    let pi = normalize_to_budget(&weights, &budget, 1e-3).unwrap();

    println!("budget rate: {:.3}", budget.rate());
    println!("active rule: {:?}\n", rounded(pi.probs()));

    for kind in [PathKind::Linear, PathKind::Geometric, PathKind::Hellinger] {
        println!("--- {kind} path ---");
        for &rho in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let rule = path_eval(kind, &pi, rho).unwrap();
            let mean = rule.probs().iter().sum::<f64>() / n as f64;
            println!(
                "rho {rho:4.2}: mean {mean:.6}  probs[0] {:.4}  probs[{}] {:.4}",
                rule.probs()[0],
                n - 1,
                rule.probs()[n - 1]
            );
        }
        println!();
    }
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
