//! Slow reference computations that the fast paths are checked against.
//!
//! Nothing here shares code with the production routes: dense matrices
//! instead of gate sweeps, a matrix exponential instead of the walk series,
//! quadrature instead of the power series for Bessel functions.

use std::f64::consts::PI;

use crate::statevector::C64;

/// Row-major dense DFT matrix `F[r][c] = e^{2 pi i r c / N} / sqrt(N)`.
pub fn dft_matrix(n_qubits: usize) -> Vec<C64> {
    let dim = 1usize << n_qubits;
    let norm = 1.0 / (dim as f64).sqrt();
    let mut m = vec![C64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let turn = ((r * c) % dim) as f64 / dim as f64;
            m[r * dim + c] = C64::from_polar(norm, 2.0 * PI * turn);
        }
    }
    m
}

fn matmul(a: &[C64], b: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

/// `exp(A)` of a dense row-major matrix by scaling and squaring a Taylor
/// series.
pub fn expm(a: &[C64], dim: usize) -> Vec<C64> {
    let norm: f64 = (0..dim)
        .map(|i| (0..dim).map(|j| a[i * dim + j].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled: Vec<C64> = a.iter().map(|v| v * scale).collect();
    let mut result = vec![C64::new(0.0, 0.0); dim * dim];
    let mut term = vec![C64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        result[i * dim + i] = C64::new(1.0, 0.0);
        term[i * dim + i] = C64::new(1.0, 0.0);
    }
    for k in 1..=24 {
        term = matmul(&term, &scaled, dim);
        let inv = 1.0 / k as f64;
        term.iter_mut().for_each(|v| *v *= inv);
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, dim);
    }
    result
}

/// `exp(-i x (S + S^-1))` on a cycle of `size` cells, `S` the one-cell shift.
pub fn walk_unitary(size: usize, x: f64) -> Vec<C64> {
    let mut h = vec![C64::new(0.0, 0.0); size * size];
    for i in 0..size {
        h[((i + 1) % size) * size + i] += C64::new(0.0, -x);
        h[((i + size - 1) % size) * size + i] += C64::new(0.0, -x);
    }
    expm(&h, size)
}

pub fn apply_dense(m: &[C64], v: &[C64]) -> Vec<C64> {
    let dim = v.len();
    (0..dim)
        .map(|r| (0..dim).map(|c| m[r * dim + c] * v[c]).sum())
        .collect()
}

/// Bessel `J_l(z)` from `(1/2pi) int_0^{2pi} cos(l t - z sin t) dt`; the
/// trapezoid rule on a periodic analytic integrand converges geometrically.
pub fn bessel_j(l: usize, z: f64) -> f64 {
    const NODES: usize = 512;
    let h = 2.0 * PI / NODES as f64;
    let sum: f64 = (0..NODES)
        .map(|i| {
            let t = i as f64 * h;
            (l as f64 * t - z * t.sin()).cos()
        })
        .sum();
    sum / NODES as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_values() {
        assert!((bessel_j(0, 1.0) - 0.7651976865579666).abs() < 1e-14);
        assert!((bessel_j(1, 1.0) - 0.44005058574493355).abs() < 1e-14);
        assert!((bessel_j(2, 3.0) - 0.486_091_260_585_891).abs() < 1e-14);
    }

    #[test]
    fn expm_of_diagonal() {
        let a = vec![
            C64::new(0.0, 1.3),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-0.5, 0.0),
        ];
        let e = expm(&a, 2);
        assert!((e[0] - C64::from_polar(1.0, 1.3)).norm() < 1e-14);
        assert!((e[3] - C64::new((-0.5f64).exp(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn walk_unitary_is_unitary() {
        let u = walk_unitary(16, 1.5);
        for i in 0..16 {
            for j in 0..16 {
                let v: C64 = (0..16).map(|k| u[k * 16 + i].conj() * u[k * 16 + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - C64::new(e, 0.0)).norm() < 1e-12);
            }
        }
    }
}
