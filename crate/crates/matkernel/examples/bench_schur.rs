//! Timing harness for the Schur pipeline at representative sizes.

use matkernel::hessenberg::hessenberg;
use matkernel::francis::francis_qr;
use matkernel::DenseMatrix;
use std::time::Instant;

fn lcg_matrix(n: usize, seed: u64) -> DenseMatrix {
    let mut state = seed;
    DenseMatrix::from_fn(n, n, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
    })
}

fn main() {
    let sizes: Vec<usize> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("size"))
        .collect();
    let sizes = if sizes.is_empty() { vec![400, 800, 1681] } else { sizes };
    for n in sizes {
        let a = lcg_matrix(n, 0x5eed + n as u64);
        let t0 = Instant::now();
        let (mut t, mut z) = hessenberg(&a);
        let t_hess = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        francis_qr(&mut t, Some(&mut z)).expect("francis");
        let t_qr = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let resid = z.matmul(&t).matmul_nt(&z).sub(&a).norm_fro() / a.norm_fro();
        let t_chk = t2.elapsed().as_secs_f64();

        let t3 = Instant::now();
        let mut t_only = matkernel::hessenberg::hessenberg_h(&a);
        francis_qr(&mut t_only, None).expect("francis");
        let t_vals = t3.elapsed().as_secs_f64();
        println!(
            "n={n:5}  hessenberg {t_hess:7.2}s  francis {t_qr:7.2}s  total {:7.2}s  eigs-only {t_vals:7.2}s  resid {resid:.3e}  (check {t_chk:.2}s)",
            t_hess + t_qr
        );
    }
}
