//! Integer sublattices of `Z^N` in Hermite normal form.
//!
//! Used by the pendulum partition (membership in the current sublattice) and
//! by the multiplicity study (does the generator set span `Z^N`). Everything
//! here is exact integer arithmetic.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dim: usize,
    /// Row basis in echelon form: strictly increasing pivot columns, positive
    /// pivots, entries above each pivot reduced into `[0, pivot)`.
    rows: Vec<Vec<i64>>,
}

impl Lattice {
    /// The trivial lattice `{0}`.
    pub fn zero(dim: usize) -> Self {
        Lattice { dim, rows: Vec::new() }
    }

    pub fn full(dim: usize) -> Self {
        let rows = (0..dim)
            .map(|i| {
                let mut r = vec![0; dim];
                r[i] = 1;
                r
            })
            .collect();
        Lattice { dim, rows }
    }

    /// Integer span of `generators`.
    pub fn span(dim: usize, generators: &[Vec<i64>]) -> Self {
        let mut m: Vec<Vec<i64>> = generators
            .iter()
            .filter(|g| g.iter().any(|&x| x != 0))
            .cloned()
            .collect();
        debug_assert!(m.iter().all(|g| g.len() == dim));
        let mut rows = Vec::new();
        let mut col = 0;
        while col < dim && !m.is_empty() {
            // gcd-reduce column `col` across the remaining rows
            loop {
                let nonzero: Vec<usize> = (0..m.len()).filter(|&i| m[i][col] != 0).collect();
                if nonzero.len() <= 1 {
                    break;
                }
                let piv = *nonzero.iter().min_by_key(|&&i| m[i][col].abs()).unwrap();
                for &i in &nonzero {
                    if i == piv {
                        continue;
                    }
                    let q = m[i][col].div_euclid(m[piv][col]);
                    let prow = m[piv].clone();
                    for (a, b) in m[i].iter_mut().zip(&prow) {
                        *a -= q * b;
                    }
                }
            }
            if let Some(i) = (0..m.len()).find(|&i| m[i][col] != 0) {
                let mut r = m.swap_remove(i);
                if r[col] < 0 {
                    r.iter_mut().for_each(|x| *x = -*x);
                }
                rows.push(r);
            }
            m.retain(|r| r.iter().any(|&x| x != 0));
            col += 1;
        }
        // reduce entries above pivots
        for k in 0..rows.len() {
            let pc = pivot(&rows[k]).unwrap();
            for j in 0..k {
                let q = rows[j][pc].div_euclid(rows[k][pc]);
                if q != 0 {
                    let rk = rows[k].clone();
                    for (a, b) in rows[j].iter_mut().zip(&rk) {
                        *a -= q * b;
                    }
                }
            }
        }
        Lattice { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn basis(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        let mut r = v.to_vec();
        for row in &self.rows {
            let pc = pivot(row).unwrap();
            if r[pc] % row[pc] != 0 {
                return false;
            }
            let q = r[pc] / row[pc];
            for (a, b) in r.iter_mut().zip(row) {
                *a -= q * b;
            }
        }
        r.iter().all(|&x| x == 0)
    }

    /// True iff the lattice is all of `Z^N`: full rank with unit pivots.
    pub fn is_full(&self) -> bool {
        self.rows.len() == self.dim && self.rows.iter().all(|r| r[pivot(r).unwrap()] == 1)
    }

    /// Index `[Z^N : L]` for full-rank lattices (product of pivots), else None.
    pub fn index(&self) -> Option<i64> {
        (self.rows.len() == self.dim).then(|| self.rows.iter().map(|r| r[pivot(r).unwrap()]).product())
    }
}

fn pivot(row: &[i64]) -> Option<usize> {
    row.iter().position(|&x| x != 0)
}

/// Nearest lattice point of `Z^N` to `x` (componentwise rounding).
pub fn round_to_lattice(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| v.round() as i64).collect()
}

/// All integer vectors with sup-norm at most `radius` around `center`.
pub fn box_points(center: &[i64], radius: i64) -> Vec<Vec<i64>> {
    let dim = center.len();
    let side = (2 * radius + 1) as usize;
    let total = side.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut v = center.to_vec();
            for c in v.iter_mut() {
                *c += (idx % side) as i64 - radius;
                idx /= side;
            }
            v
        })
        .collect()
}
