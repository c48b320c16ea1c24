//! Symmetric positive definite solves in envelope (profile) storage.
//!
//! The matrix is reordered with reverse Cuthill-McKee so that the banded
//! structure of stage-wise optimal control problems is recovered regardless of
//! how the decision vector is laid out. Cholesky fill stays inside the
//! envelope, so factorization is `O(n b²)` for bandwidth `b`.

use std::collections::{BTreeSet, VecDeque};

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// new index -> old index
    perm: Vec<usize>,
    /// old index -> new index
    inv: Vec<usize>,
    /// first column stored in each (permuted) row
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
    pattern: BTreeSet<(usize, usize)>,
    factored: bool,
}

/// Reverse Cuthill-McKee ordering of a symmetric pattern (pairs in original indices).
pub fn rcm_order(n: usize, pattern: &BTreeSet<(usize, usize)>) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in pattern {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(start, &adj, &degree);
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(root: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::new();
    seen.insert(root);
    let mut levels = vec![vec![root]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if seen.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        next.sort_unstable();
        levels.push(next);
    }
}

fn pseudo_peripheral(start: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut root = start;
    let mut depth = bfs_levels(root, adj).len();
    for _ in 0..8 {
        let levels = bfs_levels(root, adj);
        let candidate = *levels.last().unwrap().iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let d = bfs_levels(candidate, adj).len();
        if d > depth {
            depth = d;
            root = candidate;
        } else {
            break;
        }
    }
    root
}

impl EnvelopeCholesky {
    /// `pattern` holds lower-or-upper index pairs; the diagonal is always included.
    pub fn new(n: usize, pattern: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut set = BTreeSet::new();
        for (i, j) in pattern {
            set.insert((i.max(j), i.min(j)));
        }
        for i in 0..n {
            set.insert((i, i));
        }
        let mut me = Self {
            n,
            perm: Vec::new(),
            inv: Vec::new(),
            first: Vec::new(),
            offset: Vec::new(),
            data: Vec::new(),
            pattern: set,
            factored: false,
        };
        me.rebuild();
        me
    }

    fn rebuild(&mut self) {
        let n = self.n;
        self.perm = rcm_order(n, &self.pattern);
        self.inv = vec![0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            self.inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j) in &self.pattern {
            let (a, b) = (self.inv[i], self.inv[j]);
            let (r, c) = (a.max(b), a.min(b));
            first[r] = first[r].min(c);
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (r, &f) in first.iter().enumerate() {
            offset.push(total);
            total += r - f + 1;
        }
        offset.push(total);
        self.first = first;
        self.offset = offset;
        self.data = vec![0.0; total];
        self.factored = false;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`); off-diagonal pairs
    /// must be added once. Entries outside the envelope trigger a rebuild,
    /// which discards what was assembled so far and returns `false`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) -> bool {
        let (a, b) = (self.inv[i], self.inv[j]);
        let (r, c) = (a.max(b), a.min(b));
        if c < self.first[r] {
            self.pattern.insert((i.max(j), i.min(j)));
            self.rebuild();
            return false;
        }
        self.data[self.offset[r] + c - self.first[r]] += v;
        true
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        let r = self.inv[i];
        self.data[self.offset[r] + r - self.first[r]]
    }

    /// In-place Cholesky; `false` if a pivot is not positive.
    pub fn factor(&mut self) -> bool {
        let n = self.n;
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..=i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let k0 = fi.max(fj);
                let mut sum = self.data[oi + j - fi];
                for k in k0..j {
                    sum -= self.data[oi + k - fi] * self.data[oj + k - fj];
                }
                if j < i {
                    let djj = self.data[oj + j - fj];
                    self.data[oi + j - fi] = sum / djj;
                } else {
                    if !(sum > 0.0) || !sum.is_finite() {
                        self.factored = false;
                        return false;
                    }
                    self.data[oi + i - fi] = sum.sqrt();
                }
            }
        }
        self.factored = true;
        true
    }

    /// Solves `A x = b` with the factored matrix; `b` and `x` in original order.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        assert!(self.factored, "solve before successful factorization");
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|r| b[self.perm[r]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[oi + k - fi] * y[k];
            }
            y[i] = s / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            y[i] /= self.data[oi + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[oi + k - fi] * yi;
            }
        }
        for r in 0..n {
            x[self.perm[r]] = y[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting, independent of the envelope code
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
            x[r] = (rhs[r] - s) / m[r][r];
        }
        x
    }

    #[test]
    fn solves_random_banded_spd_in_scrambled_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        // scrambled labelling of a banded matrix
        let mut labels: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let mut dense = vec![vec![0.0; n]; n];
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(3)..i {
                let v: f64 = rng.random_range(-1.0..1.0);
                entries.push((labels[i], labels[j], v));
            }
            entries.push((labels[i], labels[i], 8.0 + rng.random_range(0.0..1.0)));
        }
        for &(i, j, v) in &entries {
            dense[i][j] += v;
            if i != j {
                dense[j][i] += v;
            }
        }
        let mut chol = EnvelopeCholesky::new(n, entries.iter().map(|&(i, j, _)| (i, j)));
        assert!(chol.envelope_size() <= n * 5);
        for &(i, j, v) in &entries {
            assert!(chol.add(i, j, v));
        }
        assert!(chol.factor());
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        chol.solve(&b, &mut x);
        let expected = dense_solve(&dense, &b);
        for (a, e) in x.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn out_of_envelope_entry_triggers_rebuild() {
        let mut chol = EnvelopeCholesky::new(5, [(1, 0), (2, 1)]);
        assert!(!chol.add(4, 0, 1.0));
        for i in 0..5 {
            assert!(chol.add(i, i, 3.0));
        }
        assert!(chol.add(4, 0, 1.0));
        assert!(chol.factor());
    }

    #[test]
    fn indefinite_matrix_fails_factorization() {
        let mut chol = EnvelopeCholesky::new(2, [(1, 0)]);
        chol.add(0, 0, 1.0);
        chol.add(1, 1, 1.0);
        chol.add(1, 0, 2.0);
        assert!(!chol.factor());
    }
}
