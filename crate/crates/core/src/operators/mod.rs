//! The discrete operator `L_h`, its spectral factorization and the stage systems.
//!
//! With an orthonormal basis the mass matrix is the identity, so the matrix `G`
//! of the bilinear form
//!
//! `G(w, v) = sum_K int_K (grad w . grad v - a w v)
//!          + sum_F int_F ({d_n w}[v] + [w]{d_n v})`
//!
//! is also the matrix of `L_h`. Faces with natural boundary conditions drop out.

pub mod gmres;
pub mod sparse;
pub mod spectral;
pub mod stage;

use crate::dg::{DgField, DgSpace};
use crate::mesh::FaceKind;
pub use sparse::SparseOperator;
pub use spectral::{SpectralOperator, StagePreconditioner};
pub use stage::{assemble_stage_system, solve_stage_system, SolverKind, SolverOptions, StageSolution, StageSolver, StageSystem};

/// 1D reference stiffness `S[p][q] = int_{-1}^{1} l_p' l_q'`.
fn reference_stiffness(space: &DgSpace) -> Vec<f64> {
    let k1 = space.degree() + 1;
    let (_, der) = space.reference_tables();
    let rule = space.rule();
    let mut s = vec![0.0; k1 * k1];
    for (a, &w) in rule.weights.iter().enumerate() {
        let d = &der[a * k1..(a + 1) * k1];
        for p in 0..k1 {
            for q in 0..k1 {
                s[p * k1 + q] += w * d[p] * d[q];
            }
        }
    }
    s
}

/// Assembles `G` for the operator shift `a`.
pub fn assemble_g(space: &DgSpace, a: f64) -> SparseOperator {
    let mesh = space.mesh();
    let dim = space.dim();
    let k1 = space.degree() + 1;
    let nl = space.n_local();
    let stiff = reference_stiffness(space);
    let transverse = if dim == 2 { k1 } else { 1 };
    let local = |axis: usize, normal: usize, t: usize| if axis == 0 { normal + k1 * t } else { t + k1 * normal };
    let mut trip = Vec::with_capacity(mesh.num_cells() * nl * nl * (1 + 4 * dim));

    for c in 0..mesh.num_cells() {
        let base = c * nl;
        for axis in 0..dim {
            let h = mesh.axis(axis).spacing();
            let scale = (2.0 / h) * (2.0 / h);
            for t in 0..transverse {
                for p in 0..k1 {
                    for q in 0..k1 {
                        let v = scale * stiff[p * k1 + q];
                        if v != 0.0 {
                            trip.push((base + local(axis, q, t), base + local(axis, p, t), v));
                        }
                    }
                }
            }
        }
        if a != 0.0 {
            for l in 0..nl {
                trip.push((base + l, base + l, -a));
            }
        }
    }

    let (lo_v, hi_v, lo_d, hi_d) = space.reference_ends();
    for face in mesh.faces() {
        if face.kind == FaceKind::Boundary {
            continue;
        }
        let (Some(k1c), Some(k2c)) = (face.k1, face.k2) else {
            continue;
        };
        let h = mesh.axis(face.axis).spacing();
        let scale = 0.5 * (2.0 / h) * (2.0 / h);
        // (cell, sign in the jump, trace values, trace derivatives)
        let sides = [(k1c, -1.0, hi_v, hi_d), (k2c, 1.0, lo_v, lo_d)];
        for &(ca, sa, va, da) in &sides {
            for &(cb, sb, vb, db) in &sides {
                for p in 0..k1 {
                    for q in 0..k1 {
                        let v = scale * (da[p] * sb * vb[q] + sa * va[p] * db[q]);
                        if v == 0.0 {
                            continue;
                        }
                        for t in 0..transverse {
                            trip.push((
                                cb * nl + local(face.axis, q, t),
                                ca * nl + local(face.axis, p, t),
                                v,
                            ));
                        }
                    }
                }
            }
        }
    }
    SparseOperator::from_triplets(space.n_dofs(), trip).expect("indices lie inside the space")
}

/// `L_h u`, the field whose coefficients are `G u`.
pub fn apply_lh(g: &SparseOperator, u: &DgField) -> DgField {
    let coeffs = g.mul_vec(u.coeffs());
    DgField::from_coeffs(u.space(), coeffs).expect("operator matches the space")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryKind, Mesh};
    use std::f64::consts::PI;

    #[test]
    fn symmetric_on_periodic_and_natural_meshes() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::Natural] {
            for k in 0..=3 {
                let mesh = Mesh::rectangle((0.0, 2.0), (-1.0, 2.0), 3, 4, bc).unwrap();
                let space = DgSpace::new(mesh, k);
                let g = assemble_g(&space, 1.0);
                assert!(g.max_asymmetry() <= 1e-12 * g.max_abs(), "k={k} {bc:?}");
            }
        }
    }

    #[test]
    fn constants_are_in_the_kernel_when_a_is_zero() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::Natural] {
            let mesh = Mesh::rectangle((0.0, 1.0), (0.0, 1.0), 4, 4, bc).unwrap();
            let space = DgSpace::new(mesh, 2);
            let g = assemble_g(&space, 0.0);
            let one = space.project(|_| 1.0);
            let r = apply_lh(&g, &one);
            assert!(r.coeffs().iter().all(|v| v.abs() < 1e-11));
        }
    }

    #[test]
    fn consistent_on_smooth_periodic_functions() {
        // For smooth w, G(w, v) = (-(Laplacian + a) w, v); -(Laplacian + 1) of
        // sin x cos 2y is 4 sin x cos 2y. Without a penalty the strong error of
        // L_h Pi w is only O(h^(k-1)), the weak error converges faster.
        let w = |x: &[f64]| x[0].sin() * (2.0 * x[1]).cos();
        let lw = |x: &[f64]| 4.0 * x[0].sin() * (2.0 * x[1]).cos();
        let v = |x: &[f64]| (x[0] + 0.3).sin() * (2.0 * x[1] + 0.1).cos() + 0.5 * x[1].cos();
        let errors = |n: usize| {
            let mesh = Mesh::rectangle((0.0, 2.0 * PI), (0.0, 2.0 * PI), n, n, BoundaryKind::Periodic).unwrap();
            let space = DgSpace::new(mesh, 2);
            let g = assemble_g(&space, 1.0);
            let gw = apply_lh(&g, &space.project(w));
            let strong = space.error_l2(&gw, lw);
            let weak = (gw.dot(&space.project(v)) - space.project(lw).dot(&space.project(v))).abs();
            (strong, weak)
        };
        let (s8, w8) = errors(8);
        let (s16, w16) = errors(16);
        assert!(s16 < s8 / 1.8, "{s8} -> {s16}");
        assert!(w16 < w8 / 4.0, "{w8} -> {w16}");
    }

    #[test]
    fn two_cell_piecewise_constant() {
        // k = 0 on two periodic cells of width h: the only coupling is through the
        // jumps of constants, and the derivative averages vanish, so G = -a I.
        let mesh = Mesh::interval(0.0, 2.0, 2, BoundaryKind::Periodic).unwrap();
        let space = DgSpace::new(mesh, 0);
        let g = assemble_g(&space, 1.0);
        assert_eq!(g.to_dense(), vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn two_cell_linear_by_hand() {
        // k = 1, periodic cells [0,1] and [1,2]. Per cell the orthonormal basis is
        // 1 and sqrt(3) * 2(x - x_c): slope 2 sqrt(3), end values -sqrt(3), sqrt(3).
        // Worked out by hand: each face adds -3 - 3 to the slope-slope coupling and
        // the constant rows cancel between the two faces.
        let mesh = Mesh::interval(0.0, 2.0, 2, BoundaryKind::Periodic).unwrap();
        let space = DgSpace::new(mesh, 1);
        let g = assemble_g(&space, 0.0).to_dense();
        let want = [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -12.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, -12.0, 0.0, 0.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((g[i][j] - want[i][j]).abs() < 1e-12, "({i},{j}) {} vs {}", g[i][j], want[i][j]);
            }
        }
    }
}
