//! Small dense symmetric linear algebra for Gram matrices (d is single digits).

use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<F> {
    n: usize,
    data: Vec<F>,
}

impl<F: Scalar> SquareMatrix<F> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![F::zero(); n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "square matrix rows");
            m.data[i * n..(i + 1) * n].copy_from_slice(row);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<F>> {
        self.data.chunks(self.n).map(<[F]>::to_vec).collect()
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    /// Adds `x x'` to the matrix.
    pub fn add_outer(&mut self, x: &[F]) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += x[i] * x[j];
            }
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<F: Scalar>(a: &SquareMatrix<F>) -> Vec<F> {
    let n = a.dim();
    let mut m = a.clone();
    let eps = F::epsilon();
    for _sweep in 0..100 {
        let mut off = F::zero();
        let mut diag = F::zero();
        for i in 0..n {
            diag += m.get(i, i) * m.get(i, i);
            for j in 0..n {
                if i != j {
                    off += m.get(i, j) * m.get(i, j);
                }
            }
        }
        if off <= eps * eps * diag || off == F::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == F::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (F::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut ev: Vec<F> = (0..n).map(|i| m.get(i, i)).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    ev
}

/// Lower-triangular Cholesky factor `L` with `A = L L'`; `None` if `A` is not positive definite.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    l: SquareMatrix<F>,
}

impl<F: Scalar> Cholesky<F> {
    pub fn factor(a: &SquareMatrix<F>) -> Option<Self> {
        let n = a.dim();
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l.get(j, k) * l.get(j, k);
            }
            if !(d > F::zero()) {
                return None;
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        Some(Self { l })
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let n = self.l.dim();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l.get(i, k) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }

    pub fn inverse(&self) -> SquareMatrix<F> {
        let n = self.l.dim();
        let mut inv = SquareMatrix::zeros(n);
        for j in 0..n {
            let mut e = vec![F::zero(); n];
            e[j] = F::one();
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        // Symmetrize away rounding asymmetry.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (inv.get(i, j) + inv.get(j, i)) / F::of(2.0);
                inv.set(i, j, avg);
                inv.set(j, i, avg);
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_of_known_matrix() {
        let a = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let ev = symmetric_eigenvalues(&a);
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_solves_and_inverts() {
        let a = SquareMatrix::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 5.0, 1.0],
            vec![0.4, 1.0, 3.0],
        ]);
        let ch = Cholesky::factor(&a).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (b, e) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*b, e, epsilon = 1e-12);
        }
        let inv = ch.inverse();
        let col = inv.mul_vec(&[0.0, 1.0, 0.0]);
        let e1 = a.mul_vec(&col);
        assert_relative_eq!(e1[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e1[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::factor(&a).is_none());
    }
}
