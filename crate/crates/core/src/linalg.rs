//! Dense symmetric matrices: finite-difference Hessians and a cyclic Jacobi
//! eigensolver. Sized for the few-hundred-parameter networks used here.

use crate::error::{Error, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Usage("matrix rows must form a square".into()));
        }
        Ok(Matrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `max |Aᵢⱼ − Aⱼᵢ|`
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Per-coordinate central-difference step: `base · max(1, |θⱼ|)`.
pub fn fd_step(base: f64, theta_j: f64) -> f64 {
    base * theta_j.abs().max(1.0)
}

/// Hessian by central differences of a gradient oracle.
///
/// Column `j` is `(∇J(θ + hⱼeⱼ) − ∇J(θ − hⱼeⱼ)) / 2hⱼ` with
/// `hⱼ = h · max(1, |θⱼ|)`; the result is symmetrized as `(H + Hᵀ)/2`.
pub fn hessian_fd<G>(mut grad_fn: G, theta: &[f64], h: f64) -> Result<Matrix>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::Usage(format!("hessian step must be positive, got {h}")));
    }
    let n = theta.len();
    let mut raw = Matrix::zeros(n);
    let mut probe = theta.to_vec();
    for j in 0..n {
        let hj = fd_step(h, theta[j]);
        probe[j] = theta[j] + hj;
        let gp = grad_fn(&probe)?;
        probe[j] = theta[j] - hj;
        let gm = grad_fn(&probe)?;
        probe[j] = theta[j];
        if gp.len() != n || gm.len() != n {
            return Err(Error::Usage("gradient length differs from parameter count".into()));
        }
        for i in 0..n {
            let v = (gp[i] - gm[i]) / (2.0 * hj);
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite Hessian entry ({i}, {j}) while perturbing coordinate {j}"
                )));
            }
            raw[(i, j)] = v;
        }
    }
    let mut sym = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (raw[(i, j)] + raw[(j, i)]);
        }
    }
    Ok(sym)
}

#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`, when requested.
    pub vectors: Option<Matrix>,
}

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) of a symmetric matrix via cyclic Jacobi rotations.
pub fn sym_eigenvalues(h: &Matrix) -> Result<Vec<f64>> {
    Ok(sym_eigen(h, false)?.values)
}

/// Full symmetric eigendecomposition via cyclic Jacobi rotations.
pub fn sym_eigen(h: &Matrix, want_vectors: bool) -> Result<SymEigen> {
    let n = h.dim();
    let norm = h.frobenius_norm();
    if h.asymmetry() > 1e-10 * norm {
        return Err(Error::Usage(format!(
            "matrix is not symmetric (max asymmetry {:.3e})",
            h.asymmetry()
        )));
    }
    let mut a = h.clone();
    let mut v = want_vectors.then(|| Matrix::identity(n));

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= f64::EPSILON * norm || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Rotation angle annihilating a[p][q] (Rutishauser's form).
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    let nrp = arp - s * (arq + tau * arp);
                    let nrq = arq + s * (arp - tau * arq);
                    a[(r, p)] = nrp;
                    a[(p, r)] = nrp;
                    a[(r, q)] = nrq;
                    a[(q, r)] = nrq;
                }
                if let Some(v) = v.as_mut() {
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = vrp - s * (vrq + tau * vrp);
                        v[(r, q)] = vrq + s * (vrp - tau * vrq);
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = v.map(|v| {
        let mut sorted = Matrix::zeros(n);
        for (k, &i) in order.iter().enumerate() {
            for r in 0..n {
                sorted[(r, k)] = v[(r, i)];
            }
        }
        sorted
    });
    Ok(SymEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(n: usize, seed: u64) -> Matrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = next();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn diagonal_is_exact() {
        let e = sym_eigenvalues(&Matrix::from_diag(&[1.0, 10.0])).unwrap();
        assert_eq!(e, vec![10.0, 1.0]);
        let e = sym_eigenvalues(&Matrix::from_diag(&[3.0, -2.0, 7.5, 0.0])).unwrap();
        assert_eq!(e, vec![7.5, 3.0, 0.0, -2.0]);
    }

    #[test]
    fn two_by_two() {
        let h = Matrix::from_rows(&[vec![8.0, 4.0], vec![4.0, 8.0]]).unwrap();
        let e = sym_eigenvalues(&h).unwrap();
        assert!((e[0] - 12.0).abs() < 1e-12 && (e[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_of_random_symmetric() {
        let h = lcg_matrix(20, 7);
        let eig = sym_eigen(&h, true).unwrap();
        let q = eig.vectors.unwrap();
        let lam = Matrix::from_diag(&eig.values);
        let rec = q.matmul(&lam).matmul(&q.transpose());
        let mut err = 0.0f64;
        for i in 0..20 {
            for j in 0..20 {
                err = err.max((rec[(i, j)] - h[(i, j)]).abs());
            }
        }
        assert!(err < 1e-8, "reconstruction error {err}");
        let sum: f64 = eig.values.iter().sum();
        assert!((sum - h.trace()).abs() < 1e-8 * h.frobenius_norm());
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_non_symmetric() {
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigenvalues(&h), Err(Error::Usage(_))));
    }

    #[test]
    fn quadratic_hessian_exact() {
        let a = Matrix::from_rows(&[vec![8.0, 4.0], vec![4.0, 8.0]]).unwrap();
        let h = hessian_fd(|t| Ok(a.mul_vec(t)), &[0.3, -2.0], 1e-4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - a[(i, j)]).abs() < 1e-8);
            }
        }
        assert_eq!(h.asymmetry(), 0.0);
    }

    #[test]
    fn hessian_reports_non_finite_coordinate() {
        let r = hessian_fd(
            |t: &[f64]| Ok(vec![if t[1] > 1.0 { f64::INFINITY } else { 0.0 }, 0.0]),
            &[0.0, 1.0],
            1e-4,
        );
        match r {
            Err(Error::Numerical(msg)) => assert!(msg.contains("coordinate 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(hessian_fd(|t: &[f64]| Ok(t.to_vec()), &[1.0], 0.0).is_err());
    }
}
