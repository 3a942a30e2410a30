mod common;

use common::gradcheck;
use mimofp::classifier::{init, ROWS, WIDTH};
use mimofp::rng::{gaussian, seeded};

#[test]
fn every_parameter_matches_finite_differences() {
    for (batch, seed) in [(2usize, 11u64), (2, 12), (2, 13)] {
        let model = init(seed);
        let mut rng = seeded(seed + 100);
        let x: Vec<f64> = (0..batch * ROWS * WIDTH).map(|_| gaussian(&mut rng)).collect();
        let labels: Vec<usize> = (0..batch).map(|b| (seed as usize * 3 + b * 7) % 10).collect();
        let (loss, grads) = model.loss_and_grads(&x, &labels).unwrap();
        let t = std::time::Instant::now();
        let r = gradcheck::check(&model, &x, &labels, &grads);
        println!(
            "seed {seed}: max rel {:.3e} at {} (analytic {:e}, numeric {:e}), {} kink refinements, {:?}",
            r.max_rel,
            r.worst_index,
            r.analytic,
            r.numeric,
            r.refined,
            t.elapsed()
        );
        assert!((loss - r.loss).abs() < 1e-12 * loss.max(1.0));
        assert!(r.max_rel < 1e-4);
    }
}
