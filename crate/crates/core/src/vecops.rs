//! Small dense helpers on `&[f64]`. Paths are stored flat, so most numerics
//! go through these instead of a vector type.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves a symmetric tridiagonal system in place (Thomas algorithm).
///
/// `diag` has length n, `off` has length n - 1 (sub = super diagonal).
/// The matrices built by the solvers are diagonally dominant, so no pivoting.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    let mut c_prime = vec![0.0; n];
    let mut denom = diag[0];
    rhs[0] /= denom;
    for i in 1..n {
        c_prime[i - 1] = off[i - 1] / denom;
        denom = diag[i] - off[i - 1] * c_prime[i - 1];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
}

/// Inverts a small dense `n x n` matrix (row-major) by Gauss-Jordan with
/// partial pivoting. Returns `None` if it is numerically singular.
pub fn invert_small(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        for k in 0..n {
            m.swap(col * n + k, piv * n + k);
            inv.swap(col * n + k, piv * n + k);
        }
        let d = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[i * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        m[i * n + k] -= f * m[col * n + k];
                        inv[i * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Solves a block tridiagonal system with dense `dim x dim` diagonal blocks
/// and scalar multiples of the identity off the diagonal.
///
/// `diag` holds `n` row-major blocks, `off` the `n - 1` coupling scalars and
/// `rhs` is overwritten with the solution. Returns false if a pivot block is
/// singular.
pub fn solve_block_tridiagonal(dim: usize, diag: &[f64], off: &[f64], rhs: &mut [f64]) -> bool {
    let n = rhs.len() / dim;
    let bs = dim * dim;
    let mut inv: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut tmp = vec![0.0; dim];
    for k in 0..n {
        let mut b = diag[k * bs..(k + 1) * bs].to_vec();
        if k > 0 {
            let o = off[k - 1];
            let prev = &inv[k - 1];
            for i in 0..bs {
                b[i] -= o * o * prev[i];
            }
            // y_k -= o * B'_{k-1}^{-1} y_{k-1}
            for i in 0..dim {
                tmp[i] = (0..dim).map(|j| prev[i * dim + j] * rhs[(k - 1) * dim + j]).sum();
            }
            for i in 0..dim {
                rhs[k * dim + i] -= o * tmp[i];
            }
        }
        match invert_small(dim, &b) {
            Some(bi) => inv.push(bi),
            None => return false,
        }
    }
    for k in (0..n).rev() {
        let mut y: Vec<f64> = rhs[k * dim..(k + 1) * dim].to_vec();
        if k + 1 < n {
            for i in 0..dim {
                y[i] -= off[k] * rhs[(k + 1) * dim + i];
            }
        }
        for i in 0..dim {
            rhs[k * dim + i] = (0..dim).map(|j| inv[k][i * dim + j] * y[j]).sum();
        }
    }
    true
}

/// Gauss-Legendre nodes and weights on [0, 1] (8 points).
pub const GAUSS8: [(f64, f64); 8] = [
    (0.019_855_071_751_231_856, 0.050_614_268_145_188_13),
    (0.101_666_761_293_186_63, 0.111_190_517_226_687_24),
    (0.237_233_795_041_835_5, 0.156_853_322_938_943_64),
    (0.408_282_678_752_175_1, 0.181_341_891_689_180_99),
    (0.591_717_321_247_824_9, 0.181_341_891_689_180_99),
    (0.762_766_204_958_164_5, 0.156_853_322_938_943_64),
    (0.898_333_238_706_813_4, 0.111_190_517_226_687_24),
    (0.980_144_928_248_768_1, 0.050_614_268_145_188_13),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense() {
        let diag = [4.0, 5.0, 6.0, 7.0];
        let off = [-1.0, -2.0, 0.5];
        let x = [1.0, -2.0, 3.0, 0.25];
        let mut b = vec![0.0; 4];
        for i in 0..4 {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += off[i - 1] * x[i - 1];
            }
            if i < 3 {
                b[i] += off[i] * x[i + 1];
            }
        }
        solve_tridiagonal(&diag, &off, &mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn block_tridiagonal_matches_dense() {
        // two coordinates, three nodes, coupled end blocks
        let dim = 2;
        let diag = [4.0, 1.0, 1.0, 3.0, 5.0, 0.0, 0.0, 5.0, 6.0, -0.5, -0.5, 2.5];
        let off = [-1.0, -2.0];
        let x = [1.0, -2.0, 0.5, 3.0, -1.5, 0.25];
        let mut b = vec![0.0; 6];
        for k in 0..3 {
            for i in 0..2 {
                let mut s = 0.0;
                for j in 0..2 {
                    s += diag[k * 4 + i * 2 + j] * x[k * 2 + j];
                }
                if k > 0 {
                    s += off[k - 1] * x[(k - 1) * 2 + i];
                }
                if k < 2 {
                    s += off[k] * x[(k + 1) * 2 + i];
                }
                b[k * 2 + i] = s;
            }
        }
        assert!(solve_block_tridiagonal(dim, &diag, &off, &mut b));
        for i in 0..6 {
            assert!((b[i] - x[i]).abs() < 1e-13, "{i}: {} vs {}", b[i], x[i]);
        }
    }

    #[test]
    fn gauss_rule_integrates_degree_15() {
        let s: f64 = GAUSS8.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert!((s - 1.0 / 16.0).abs() < 1e-15);
        let total: f64 = GAUSS8.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
