use nalgebra::DMatrix;

/// Sparse symmetric matrix stored as its upper triangle: entries `(i, j, v)`
/// with `i ≤ j`; the mirror `(j, i, v)` is implied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary-order coordinates; `(j, i)` is folded onto `(i, j)`
    /// and repeated coordinates are summed. Entries are kept sorted.
    pub fn from_triplets(triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match out.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => out.push(e),
            }
        }
        out.retain(|e| e.2 != 0.0);
        Self { entries: out }
    }

    #[inline]
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz_upper(&self) -> usize {
        self.entries.len()
    }

    /// Number of stored values of the full (mirrored) matrix.
    pub fn nnz(&self) -> usize {
        self.entries
            .iter()
            .map(|&(i, j, _)| if i == j { 1 } else { 2 })
            .sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.1).max()
    }

    /// All nonzeros of the full matrix, mirror included.
    pub fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for &(i, j, v) in &self.entries {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            e.2 *= s;
        }
    }

    /// `tr(A M)`; `M` need not be symmetric.
    #[inline]
    pub fn dot(&self, m: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * m[(i, i)]
                } else {
                    v * (m[(i, j)] + m[(j, i)])
                }
            })
            .sum()
    }

    /// `M += s · A`.
    #[inline]
    pub fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.add_to(&mut m, 1.0);
        m
    }

    /// `⟨A, B⟩_F` between two sparse symmetric matrices with sorted entries.
    pub fn inner(&self, other: &SparseSym) -> f64 {
        let (mut p, mut q, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while p < a.len() && q < b.len() {
            match (a[p].0, a[p].1).cmp(&(b[q].0, b[q].1)) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let w = if a[p].0 == a[p].1 { 1.0 } else { 2.0 };
                    acc += w * a[p].2 * b[q].2;
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folding_and_dot() {
        let a = SparseSym::from_triplets([(1, 0, 0.5), (0, 1, 0.5), (2, 2, 3.0), (2, 2, -3.0)]);
        assert_eq!(a.entries(), &[(0, 1, 1.0)]);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 5.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.dot(&m), 7.0);
        assert_eq!(a.dot(&m), (a.to_dense(3) * &m).trace());
        assert!((a.frobenius_norm() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.inner(&a), 2.0);
    }
}
