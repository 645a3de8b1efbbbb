//! Direct solvers for the assembled sparse systems.
//!
//! Matrices are reordered with reverse Cuthill-McKee and factorized in band
//! storage: Cholesky for symmetric positive-definite operators, LU with
//! partial pivoting for the indefinite saddle systems. Every solve runs
//! iterative refinement against the original matrix until the componentwise
//! backward error is below [`REFINEMENT_TARGET`].

use std::collections::VecDeque;

use crate::assembly::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Componentwise backward error at which refinement stops.
pub const REFINEMENT_TARGET: f64 = 1e-12;
const MAX_REFINEMENT_STEPS: usize = 8;

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, _) in a.row(r) {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
        nb.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let bfs_levels = |start: usize, mark: &mut [bool]| -> Vec<Vec<usize>> {
        let mut levels = vec![vec![start]];
        mark[start] = true;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in &adj[v] {
                    if !mark[w] {
                        mark[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    };

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node (George-Liu)
        let mut start = seed;
        let mut depth = 0;
        loop {
            let mut mark = visited.clone();
            let levels = bfs_levels(start, &mut mark);
            if levels.len() <= depth {
                break;
            }
            depth = levels.len();
            let last = levels.last().unwrap();
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            if cand == start {
                break;
            }
            start = cand;
        }

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Runs refinement on top of an approximate solver.
fn refine(a: &CsrMatrix, b: &[f64], mut solve: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut x = solve(b);
    for _ in 0..MAX_REFINEMENT_STEPS {
        let mut r = vec![0.0; b.len()];
        let mut worst: f64 = 0.0;
        for i in 0..a.nrows() {
            let mut ax = 0.0;
            let mut abs_ax = 0.0;
            for (c, v) in a.row(i) {
                ax += v * x[c];
                abs_ax += (v * x[c]).abs();
            }
            r[i] = b[i] - ax;
            let denom = abs_ax + b[i].abs();
            if denom > 0.0 {
                worst = worst.max(r[i].abs() / denom);
            } else if r[i] != 0.0 {
                worst = f64::INFINITY;
            }
        }
        if worst <= REFINEMENT_TARGET {
            break;
        }
        let dx = solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    x
}

/// Banded LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandLu {
    matrix: CsrMatrix,
    perm: Vec<usize>,
    n: usize,
    kl: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::InvalidArgument("LU needs a square matrix".into()));
        }
        let perm = reverse_cuthill_mckee(matrix);
        let inv = inverse_permutation(&perm);
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            for (c, _) in matrix.row(r) {
                let (i, j) = (inv[r], inv[c]);
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        // row pivoting widens the upper band to kl + ku
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for r in 0..n {
            for (c, v) in matrix.row(r) {
                band[at(inv[r], inv[c])] += v;
            }
        }
        let anorm = matrix.max_abs();
        let tiny = f64::EPSILON * anorm * (n.max(1) as f64);
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = band[at(k, k)].abs();
            for i in k + 1..=last_row {
                let v = band[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            pivots[k] = p;
            if best <= tiny || !best.is_finite() {
                return Err(Error::Singular { context: format!("zero pivot at elimination step {k} of {n}") });
            }
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    band.swap(at(k, j), at(p, j));
                }
            }
            let pivot = band[at(k, k)];
            for i in k + 1..=last_row {
                let l = band[at(i, k)] / pivot;
                band[at(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        band[at(i, j)] -= l * band[at(k, j)];
                    }
                }
            }
        }
        Ok(Self { matrix: matrix.clone(), perm, n, kl, width, band, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            y.swap(k, self.pivots[k]);
            let yk = y[k];
            if yk != 0.0 {
                for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                    y[i] -= self.band[at(i, k)] * yk;
                }
            }
        }
        let upper = width - kl - 1;
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..=(i + upper).min(n - 1) {
                s -= self.band[at(i, j)] * y[j];
            }
            y[i] = s / self.band[at(i, i)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "right-hand side has the wrong length");
        if self.n == 0 {
            return Vec::new();
        }
        refine(&self.matrix, b, |r| self.solve_once(r))
    }
}

/// Banded Cholesky (`L Lᵀ`) factorization for symmetric positive-definite matrices.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    matrix: CsrMatrix,
    perm: Vec<usize>,
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::InvalidArgument("Cholesky needs a square matrix".into()));
        }
        let perm = reverse_cuthill_mckee(matrix);
        let inv = inverse_permutation(&perm);
        let mut bw = 0usize;
        for r in 0..n {
            for (c, _) in matrix.row(r) {
                bw = bw.max(inv[r].abs_diff(inv[c]));
            }
        }
        // row i keeps columns i-bw ..= i
        let width = bw + 1;
        let at = |i: usize, j: usize| i * width + (j + bw - i);
        let mut band = vec![0.0; n * width];
        for r in 0..n {
            for (c, v) in matrix.row(r) {
                let (i, j) = (inv[r], inv[c]);
                if j <= i {
                    band[at(i, j)] += v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = band[at(i, j)];
                for k in k0..j {
                    s -= band[at(i, k)] * band[at(j, k)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Singular {
                            context: format!("matrix not positive definite at row {i} of {n}"),
                        });
                    }
                    band[at(i, i)] = s.sqrt();
                } else {
                    band[at(i, j)] = s / band[at(j, j)];
                }
            }
        }
        Ok(Self { matrix: matrix.clone(), perm, n, bw, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn solve_once(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let width = bw + 1;
        let at = |i: usize, j: usize| i * width + (j + bw - i);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.band[at(i, k)] * y[k];
            }
            y[i] = s / self.band[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..=(i + bw).min(n - 1) {
                s -= self.band[at(k, i)] * y[k];
            }
            y[i] = s / self.band[at(i, i)];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "right-hand side has the wrong length");
        if self.n == 0 {
            return Vec::new();
        }
        refine(&self.matrix, b, |r| self.solve_once(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::sparse::TripletBuilder;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, density: f64, rng: &mut ChaCha8Rng) -> (CsrMatrix, DMatrix<f64>) {
        let mut b = TripletBuilder::new(n, n);
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j || rng.random::<f64>() < density {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    b.push(i, j, v);
                    d[(i, j)] += v;
                }
            }
        }
        (b.build(), d)
    }

    #[test]
    fn rcm_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, _) = random_sparse(40, 0.05, &mut rng);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn lu_matches_dense_solve_on_indefinite_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (a, d) = random_sparse(30, 0.1, &mut rng);
            let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lu = BandLu::factor(&a).unwrap();
            let x = lu.solve(&b);
            let want = d.clone().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let scale = want.amax().max(1.0);
            for i in 0..30 {
                assert!((x[i] - want[i]).abs() <= 1e-9 * scale, "{} vs {}", x[i], want[i]);
            }
        }
    }

    #[test]
    fn lu_needs_pivoting_for_zero_diagonal() {
        // [[0, 1], [1, 0]] has zero diagonal but is nonsingular
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        let lu = BandLu::factor(&b.build()).unwrap();
        assert_eq!(lu.solve(&[2.0, 3.0]), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_matrix_reported() {
        let mut b = TripletBuilder::new(2, 2);
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            b.push(r, c, 1.0);
        }
        let a = b.build();
        assert!(matches!(BandLu::factor(&a), Err(Error::Singular { .. })));
        assert!(matches!(BandCholesky::factor(&a), Err(Error::Singular { .. })));
    }

    #[test]
    fn cholesky_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, d) = random_sparse(25, 0.08, &mut rng);
        // AᵀA + I is SPD with a wider pattern
        let spd = d.transpose() * &d + DMatrix::identity(25, 25);
        let mut b = TripletBuilder::new(25, 25);
        for i in 0..25 {
            for j in 0..25 {
                if spd[(i, j)] != 0.0 {
                    b.push(i, j, spd[(i, j)]);
                }
            }
        }
        let _ = a;
        let ch = BandCholesky::factor(&b.build()).unwrap();
        let rhs: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let x = ch.solve(&rhs);
        let want = spd.cholesky().unwrap().solve(&DVector::from_vec(rhs));
        for i in 0..25 {
            assert!((x[i] - want[i]).abs() < 1e-11);
        }
    }
}
