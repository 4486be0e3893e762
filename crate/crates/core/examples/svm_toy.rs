//! RBF-SVM on two noisy concentric rings.

use p300bench::svm::{fit_svm, SvmConfig};
use p300bench::Matrix;
use rand::{RngExt, SeedableRng};

fn main() -> p300bench::Result<()> {
    let mut rng = rand_pcg::Pcg64::seed_from_u64(11);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..300 {
        let r = if i % 2 == 0 { 1.0 } else { 2.5 } + rng.random_range(-0.3..0.3);
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        rows.push(vec![r * t.cos(), r * t.sin()]);
        y.push((i % 2) as u8);
    }
    let x = Matrix::from_rows(&rows)?;
    let model = fit_svm(&x, &y, &SvmConfig::default())?;
    let correct = model.predict(&x)?.iter().zip(&y).filter(|(p, t)| p == t).count();
    println!(
        "{} support vectors, {} iterations, converged {}, dual objective {:.4}, training accuracy {:.3}",
        model.support_indices.len(),
        model.iterations,
        model.converged,
        model.dual_objective(),
        correct as f64 / y.len() as f64
    );
    Ok(())
}
