#![allow(dead_code)]

use jacobi_zero::net::Arch;
use jacobi_zero::SymMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-1, 1]`.
pub fn random_sym(rng: &mut impl Rng, n: usize) -> SymMatrix<f64> {
    SymMatrix::from_upper_fn(n, |_, _| rng.random_range(-1.0..=1.0)).unwrap()
}

pub fn tiny_arch(n: usize) -> Arch {
    Arch { n, trunk_channels: [3, 4, 3], kernel: 3, policy_channels: 2, value_channels: 2, value_hidden: 5 }
}

pub fn small_arch(n: usize) -> Arch {
    Arch { n, trunk_channels: [16, 16, 16], kernel: 3, policy_channels: 4, value_channels: 2, value_hidden: 32 }
}

/// Sorted eigenvalues from the characteristic polynomial, orders 1 to 3.
pub fn closed_form_eigenvalues(a: &SymMatrix<f64>) -> Vec<f64> {
    let g = |i, j| a.get(i, j);
    let mut ev = match a.order() {
        1 => vec![g(0, 0)],
        2 => {
            let m = 0.5 * (g(0, 0) + g(1, 1));
            let r = (0.25 * (g(0, 0) - g(1, 1)).powi(2) + g(0, 1).powi(2)).sqrt();
            vec![m - r, m + r]
        }
        3 => {
            // trigonometric solution of the depressed cubic
            let p1 = g(0, 1).powi(2) + g(0, 2).powi(2) + g(1, 2).powi(2);
            let q = (g(0, 0) + g(1, 1) + g(2, 2)) / 3.0;
            let p2 = (g(0, 0) - q).powi(2) + (g(1, 1) - q).powi(2) + (g(2, 2) - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            if p == 0.0 {
                vec![q; 3]
            } else {
                let b = |i: usize, j: usize| (g(i, j) - if i == j { q } else { 0.0 }) / p;
                let det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
                    - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
                    + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
                let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
                let e1 = q + 2.0 * p * phi.cos();
                let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                vec![e1, 3.0 * q - e1 - e3, e3]
            }
        }
        n => panic!("no closed form for order {n}"),
    };
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
