//! Exact eigendecomposition of `G` on uniform tensor meshes.
//!
//! On a uniform tensor mesh `G = K_x (x) I + I (x) K_y - a I`, where `K_d` is the
//! one-dimensional operator (with `a = 0`) along axis `d`. After reordering the
//! coefficients into a matrix `X` (rows: x-cells and x-degrees, columns: y-cells
//! and y-degrees) the transform `Q_x^T X Q_y` diagonalizes `G`.

use faer::{Mat, Side};

use super::assemble_g;
use crate::dg::DgSpace;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Debug)]
pub struct SpectralOperator {
    n: usize,
    rows: usize,
    cols: usize,
    /// Spectral index `i + rows * j` to DG coefficient index.
    perm: Vec<usize>,
    qx: Mat<f64>,
    qy: Mat<f64>,
    eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    pub fn new(space: &DgSpace, a: f64) -> Result<Self> {
        let mesh = space.mesh();
        let dim = space.dim();
        let k1 = space.degree() + 1;
        let nl = space.n_local();
        let mut qs = Vec::with_capacity(2);
        let mut mus = Vec::with_capacity(2);
        for d in 0..dim {
            let line = Mesh::new(&[*mesh.axis(d)], mesh.bc())?;
            let line_space = DgSpace::with_quadrature(line, space.degree(), space.rule().len());
            let k = assemble_g(&line_space, 0.0);
            let n = k.dim();
            let dense = Mat::<f64>::from_fn(n, n, |i, j| k.get(i, j));
            let eig = dense
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::SolverFailure {
                    reason: format!("1D eigendecomposition failed: {e:?}"),
                    residual: f64::NAN,
                })?;
            let s = eig.S().column_vector();
            mus.push((0..n).map(|i| s[i]).collect::<Vec<_>>());
            qs.push(eig.U().to_owned());
        }
        if dim == 1 {
            qs.push(Mat::<f64>::identity(1, 1));
            mus.push(vec![0.0]);
        }
        let rows = qs[0].nrows();
        let cols = qs[1].nrows();
        let nx = mesh.axis(0).cells;
        let mut perm = vec![0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                let (ix, p) = (i / k1, i % k1);
                let (iy, q) = (j / k1, j % k1);
                perm[i + rows * j] = (ix + nx * iy) * nl + p + k1 * q;
            }
        }
        let mut eigenvalues = vec![0.0; rows * cols];
        for j in 0..cols {
            for i in 0..rows {
                eigenvalues[i + rows * j] = mus[0][i] + mus[1][j] - a;
            }
        }
        let qy = qs.pop().unwrap();
        let qx = qs.pop().unwrap();
        Ok(Self {
            n: rows * cols,
            rows,
            cols,
            perm,
            qx,
            qy,
            eigenvalues,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Eigenvalues of `G`, in spectral order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Coefficients to spectral coordinates.
    pub fn forward(&self, v: &[f64], out: &mut [f64]) {
        let x = Mat::<f64>::from_fn(self.rows, self.cols, |i, j| v[self.perm[i + self.rows * j]]);
        let xh = self.qx.transpose() * &x * &self.qy;
        for j in 0..self.cols {
            for i in 0..self.rows {
                out[i + self.rows * j] = xh[(i, j)];
            }
        }
    }

    /// Spectral coordinates back to coefficients.
    pub fn backward(&self, vh: &[f64], out: &mut [f64]) {
        let xh = Mat::<f64>::from_fn(self.rows, self.cols, |i, j| vh[i + self.rows * j]);
        let x = &self.qx * &xh * self.qy.transpose();
        for j in 0..self.cols {
            for i in 0..self.rows {
                out[self.perm[i + self.rows * j]] = x[(i, j)];
            }
        }
    }

    /// `G v` through the factorization.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.n];
        self.forward(v, &mut h);
        for (x, l) in h.iter_mut().zip(&self.eigenvalues) {
            *x *= l;
        }
        let mut out = vec![0.0; self.n];
        self.backward(&h, &mut out);
        out
    }
}

/// Exact inverse of `I + tau (A (x) G^2)` for a block of stages with coupling matrix `A`.
#[derive(Clone, Debug)]
pub struct StagePreconditioner {
    stages: usize,
    /// Row-major coupling matrix.
    a: Vec<f64>,
    /// Row-major `stages x stages` inverse per eigenvalue.
    inverses: Vec<f64>,
}

impl StagePreconditioner {
    pub fn new(spectral: &SpectralOperator, a: &[Vec<f64>], tau: f64) -> Result<Self> {
        let r = a.len();
        let mut inverses = vec![0.0; spectral.len() * r * r];
        let mut m = vec![0.0; r * r];
        for (e, &lam) in spectral.eigenvalues().iter().enumerate() {
            let t = tau * lam * lam;
            for i in 0..r {
                for j in 0..r {
                    m[i * r + j] = t * a[i][j] + if i == j { 1.0 } else { 0.0 };
                }
            }
            invert_small(&mut m, &mut inverses[e * r * r..(e + 1) * r * r], r).ok_or_else(|| {
                Error::SolverFailure {
                    reason: format!("singular stage block at eigenvalue {lam}"),
                    residual: f64::NAN,
                }
            })?;
        }
        Ok(Self {
            stages: r,
            a: a.iter().flatten().copied().collect(),
            inverses,
        })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Applies the inverse to `rhs`, a stack of `stages` coefficient vectors.
    pub fn apply(&self, spectral: &SpectralOperator, rhs: &[f64], out: &mut [f64]) {
        let n = spectral.len();
        let r = self.stages;
        let mut hat = vec![0.0; r * n];
        for i in 0..r {
            spectral.forward(&rhs[i * n..(i + 1) * n], &mut hat[i * n..(i + 1) * n]);
        }
        let mut sol = vec![0.0; r * n];
        let mut local = vec![0.0; r];
        for e in 0..n {
            let inv = &self.inverses[e * r * r..(e + 1) * r * r];
            for (i, l) in local.iter_mut().enumerate() {
                *l = (0..r).map(|j| inv[i * r + j] * hat[j * n + e]).sum();
            }
            for i in 0..r {
                sol[i * n + e] = local[i];
            }
        }
        for i in 0..r {
            spectral.backward(&sol[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
    }

    /// Exact inverse of the unreduced stage block `[[I, G], [tau A (x) G, -I]]`.
    /// `rhs` and `out` hold `stages` first-row blocks followed by `stages`
    /// second-row blocks.
    pub fn apply_block(&self, spectral: &SpectralOperator, tau: f64, rhs: &[f64], out: &mut [f64]) {
        let n = spectral.len();
        let r = self.stages;
        let mut hat = vec![0.0; 2 * r * n];
        for k in 0..2 * r {
            spectral.forward(&rhs[k * n..(k + 1) * n], &mut hat[k * n..(k + 1) * n]);
        }
        let mut sol = vec![0.0; 2 * r * n];
        let mut red = vec![0.0; r];
        for (e, &lam) in spectral.eigenvalues().iter().enumerate() {
            let inv = &self.inverses[e * r * r..(e + 1) * r * r];
            for (i, v) in red.iter_mut().enumerate() {
                *v = hat[i * n + e] + lam * hat[(r + i) * n + e];
            }
            for i in 0..r {
                sol[i * n + e] = (0..r).map(|j| inv[i * r + j] * red[j]).sum();
            }
            for i in 0..r {
                let axi: f64 = (0..r).map(|j| self.a[i * r + j] * sol[j * n + e]).sum();
                sol[(r + i) * n + e] = tau * lam * axi - hat[(r + i) * n + e];
            }
        }
        for k in 0..2 * r {
            spectral.backward(&sol[k * n..(k + 1) * n], &mut out[k * n..(k + 1) * n]);
        }
    }
}

/// Gauss-Jordan inversion with partial pivoting; `m` is destroyed.
pub(crate) fn invert_small(m: &mut [f64], inv: &mut [f64], r: usize) -> Option<()> {
    for i in 0..r {
        for j in 0..r {
            inv[i * r + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    for col in 0..r {
        let piv = (col..r).max_by(|&x, &y| m[x * r + col].abs().total_cmp(&m[y * r + col].abs()))?;
        if m[piv * r + col] == 0.0 || !m[piv * r + col].is_finite() {
            return None;
        }
        if piv != col {
            for j in 0..r {
                m.swap(piv * r + j, col * r + j);
                inv.swap(piv * r + j, col * r + j);
            }
        }
        let d = m[col * r + col];
        for j in 0..r {
            m[col * r + j] /= d;
            inv[col * r + j] /= d;
        }
        for row in 0..r {
            if row != col {
                let f = m[row * r + col];
                if f != 0.0 {
                    for j in 0..r {
                        m[row * r + j] -= f * m[col * r + j];
                        inv[row * r + j] -= f * inv[col * r + j];
                    }
                }
            }
        }
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn kronecker_factorization_reproduces_g() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::Natural] {
            for k in [0, 1, 3] {
                let mesh = Mesh::rectangle((0.0, 3.0), (-1.0, 1.0), 5, 3, bc).unwrap();
                let space = DgSpace::new(mesh, k);
                let g = assemble_g(&space, 1.0);
                let sp = SpectralOperator::new(&space, 1.0).unwrap();
                let v = pseudo_random(space.n_dofs(), 7 + k as u64);
                let direct = g.mul_vec(&v);
                let spec = sp.apply(&v);
                let err = direct.iter().zip(&spec).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10 * g.max_abs(), "k={k} {bc:?}: {err}");

                let mut h = vec![0.0; v.len()];
                let mut back = vec![0.0; v.len()];
                sp.forward(&v, &mut h);
                sp.backward(&h, &mut back);
                let n0: f64 = v.iter().map(|x| x * x).sum();
                let n1: f64 = h.iter().map(|x| x * x).sum();
                assert!((n0 - n1).abs() < 1e-12 * n0);
                assert!(v.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-13));
            }
        }
    }

    #[test]
    fn one_dimensional_factorization() {
        let mesh = Mesh::interval(0.0, 1.0, 6, BoundaryKind::Periodic).unwrap();
        let space = DgSpace::new(mesh, 2);
        let g = assemble_g(&space, 0.5);
        let sp = SpectralOperator::new(&space, 0.5).unwrap();
        let v = pseudo_random(space.n_dofs(), 3);
        let d = g.mul_vec(&v);
        let s = sp.apply(&v);
        assert!(d.iter().zip(&s).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn preconditioner_inverts_the_stage_operator() {
        let mesh = Mesh::rectangle((0.0, 2.0), (0.0, 2.0), 4, 4, BoundaryKind::Periodic).unwrap();
        let space = DgSpace::new(mesh, 1);
        let g = assemble_g(&space, 1.0);
        let sp = SpectralOperator::new(&space, 1.0).unwrap();
        let a = vec![vec![0.25, -0.04], vec![0.54, 0.25]];
        let tau = 0.3;
        let pre = StagePreconditioner::new(&sp, &a, tau).unwrap();
        let n = space.n_dofs();
        let x = pseudo_random(2 * n, 11);
        // y_i = x_i + tau G^2 sum_j a_ij x_j
        let g2x: Vec<Vec<f64>> = (0..2).map(|j| g.mul_vec(&g.mul_vec(&x[j * n..(j + 1) * n]))).collect();
        let mut y = x.clone();
        for i in 0..2 {
            for e in 0..n {
                y[i * n + e] += tau * (a[i][0] * g2x[0][e] + a[i][1] * g2x[1][e]);
            }
        }
        let mut back = vec![0.0; 2 * n];
        pre.apply(&sp, &y, &mut back);
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn small_inverse() {
        let mut m = vec![0.0, 2.0, 1.0, 1.0];
        let mut inv = vec![0.0; 4];
        invert_small(&mut m, &mut inv, 2).unwrap();
        assert_eq!(inv, vec![-0.5, 1.0, 0.5, 0.0]);
        let mut sing = vec![1.0, 2.0, 2.0, 4.0];
        assert!(invert_small(&mut sing, &mut inv, 2).is_none());
    }
}
