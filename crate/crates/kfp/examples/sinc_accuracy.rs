//! Convergence study for the Sinc differentiation matrices: at a fixed
//! span the interior derivative error on a smooth windowed sinusoid
//! collapses exponentially as the grid refines, while the skew/symmetric
//! structure of D1/D2 holds exactly at every size.

use kfp::discretize::sinc_diff_matrices;

fn main() {
    let f = |x: f64| (3.0 * x).sin() * (-x * x / 2.0).exp();
    let fp = |x: f64| ((3.0 * x).cos() * 3.0 - (3.0 * x).sin() * x) * (-x * x / 2.0).exp();

    println!("{:>6} {:>9} {:>16} {:>14} {:>14}", "nodes", "h", "band limit π/h", "max |D1f−f′|", "max |D1+D1ᵀ|");
    for &p in &[11usize, 21, 41, 81, 161] {
        let n_half = (p - 1) / 2;
        let h = 10.0 / (p - 1) as f64;
        let dm = sinc_diff_matrices(n_half, h);

        let xs: Vec<f64> = (0..p).map(|j| (j as f64 - n_half as f64) * h).collect();
        let samples: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let deriv = dm.d1.matvec(&samples);
        let worst = (2..p - 2)
            .map(|j| (deriv[j] - fp(xs[j])).abs())
            .fold(0.0f64, f64::max);

        let mut skew = 0.0f64;
        for j in 0..p {
            for k in 0..p {
                skew = skew.max((dm.d1[(j, k)] + dm.d1[(k, j)]).abs());
            }
        }
        println!(
            "{p:>6} {h:>9.4} {:>16.3} {worst:>14.3e} {skew:>14.3e}",
            std::f64::consts::PI / h
        );
    }
    println!("\nThe derivative error drops by orders of magnitude per refinement once the");
    println!("function's spectrum sits inside the band limit; the structural defect is 0.");
}
