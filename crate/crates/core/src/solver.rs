//! Jacobi-preconditioned conjugate gradients for the Newton system `H δu = K̄ − K`.

use crate::error::{Error, Result};
use crate::hessian::SparseHessian;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// Solve on the subspace `Σ x = 0`; the right-hand side is projected onto it.
    ZeroMean,
    /// Fix `x[v] = 0` and drop equation `v`.
    Pinned(usize),
}

pub struct LinearSystem<'a> {
    pub matrix: &'a SparseHessian,
    pub rhs: Vec<f64>,
    pub constraint: Constraint,
}

pub fn default_max_iter(n: usize) -> usize {
    10 * n.max(1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LinearSystem<'_> {
    fn project(&self, x: &mut [f64]) {
        match self.constraint {
            Constraint::None => {}
            Constraint::ZeroMean => {
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                x.iter_mut().for_each(|v| *v -= mean);
            }
            Constraint::Pinned(k) => x[k] = 0.0,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.matrix.matvec(x);
        self.project(&mut y);
        y
    }

    fn projected_rhs(&self) -> Vec<f64> {
        let mut b = self.rhs.clone();
        self.project(&mut b);
        b
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
    }
}

/// Returns `x` with `‖b − Hx‖ ≤ tol ‖b‖` for the projected system.
pub fn solve(sys: &LinearSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = sys.matrix.dim();
    if sys.rhs.len() != n {
        return Err(Error::InvalidInput(format!("rhs has {} entries for a {n}x{n} system", sys.rhs.len())));
    }
    if let Constraint::Pinned(k) = sys.constraint {
        if k >= n {
            return Err(Error::InvalidInput(format!("pinned vertex {k} out of range")));
        }
    }
    let diag = sys.matrix.diagonal();
    let free = |i: usize| !matches!(sys.constraint, Constraint::Pinned(k) if k == i);
    if let Some(i) = (0..n).find(|&i| free(i) && !(diag[i] > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {}", diag[i])));
    }
    if sys.constraint == Constraint::None && n > 0 {
        let ones = vec![1.0; n];
        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if norm(&sys.matrix.matvec(&ones)) <= 1e-12 * scale * (n as f64).sqrt() {
            return Err(Error::NotPositiveDefinite(
                "matrix annihilates the constant vector; a gauge constraint is required".into(),
            ));
        }
    }

    let b = sys.projected_rhs();
    let b_norm = norm(&b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
        sys.project(&mut z);
        z
    };

    let mut r = b.clone();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while iterations < max_iter {
        if norm(&r) <= tol * b_norm {
            // the recursive residual drifts; accept only on the true one
            r = sys.residual(&x, &b);
            if norm(&r) <= tol * b_norm {
                return Ok(x);
            }
            z = precondition(&r);
            p = z.clone();
            rz = dot(&r, &z);
        }
        let ap = sys.apply(&p);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "search direction curvature {curvature:e} at iteration {iterations}"
            )));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
    let residual = norm(&sys.residual(&x, &b)) / b_norm;
    if residual <= tol {
        return Ok(x);
    }
    Err(Error::NoConvergence { iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{init_circle_packing, Background, ConformalState, Scheme};
    use crate::hessian::curvature_hessian;
    use crate::shapes;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn tetra_hessian() -> SparseHessian {
        let mesh = shapes::tetrahedron();
        let lengths = mesh.embedded_edge_lengths();
        let metric = init_circle_packing(&mesh, &lengths, Scheme::Yamabe, Background::E2).unwrap();
        let state = ConformalState::new(&mesh, &metric, vec![0.1, -0.2, 0.05, 0.05]).unwrap();
        curvature_hessian(&mesh, &metric, &state).unwrap()
    }

    #[test]
    fn diagonal_system_returns_scaled_rhs() {
        let m = SparseHessian::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let sys = LinearSystem { matrix: &m, rhs: vec![1.0, -2.0, 3.0], constraint: Constraint::None };
        assert_eq!(solve(&sys, DEFAULT_TOL, 30).unwrap(), vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn tetrahedron_matches_dense_pseudoinverse() {
        let h = tetra_hessian();
        let rhs = vec![0.2, -0.2, 0.1, -0.1];
        let sys = LinearSystem { matrix: &h, rhs: rhs.clone(), constraint: Constraint::ZeroMean };
        let x = solve(&sys, DEFAULT_TOL, default_max_iter(4)).unwrap();
        let dense = h.to_dense().pseudo_inverse(1e-12).unwrap() * DVector::from_vec(rhs);
        for i in 0..4 {
            assert!((x[i] - dense[i]).abs() < 1e-9);
        }
        assert!(x.iter().sum::<f64>().abs() < 1e-12 * 4.0);
    }

    #[test]
    fn rank_deficient_without_constraint_is_rejected() {
        let h = tetra_hessian();
        let sys = LinearSystem { matrix: &h, rhs: vec![0.2, -0.2, 0.1, -0.1], constraint: Constraint::None };
        assert!(matches!(solve(&sys, DEFAULT_TOL, 40), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn indefinite_matrix_breaks_down() {
        let m = SparseHessian::from_triplets(2, &[(0, 0, 1.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 1.0)]);
        let sys = LinearSystem { matrix: &m, rhs: vec![1.0, -1.0], constraint: Constraint::None };
        assert!(matches!(solve(&sys, DEFAULT_TOL, 20), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let mesh = shapes::grid_disk(8);
        let lengths = mesh.embedded_edge_lengths();
        let metric = init_circle_packing(&mesh, &lengths, Scheme::Yamabe, Background::E2).unwrap();
        let state = ConformalState::new(&mesh, &metric, vec![0.0; 64]).unwrap();
        let h = curvature_hessian(&mesh, &metric, &state).unwrap();
        let rhs = (0..64).map(|i| (i as f64).sin()).collect();
        let sys = LinearSystem { matrix: &h, rhs, constraint: Constraint::ZeroMean };
        assert!(matches!(solve(&sys, DEFAULT_TOL, 2), Err(Error::NoConvergence { iterations: 2, .. })));
    }

    #[test]
    fn pinned_vertex_stays_zero() {
        let h = tetra_hessian();
        let sys = LinearSystem { matrix: &h, rhs: vec![0.3, -0.1, 0.0, 0.2], constraint: Constraint::Pinned(2) };
        let x = solve(&sys, DEFAULT_TOL, 40).unwrap();
        assert_eq!(x[2], 0.0);
        let hx = h.matvec(&x);
        for i in [0, 1, 3] {
            assert!((hx[i] - sys.rhs[i]).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn agrees_with_dense_solve(seed in 0u64..1000, n in 3usize..6, scheme_index in 0usize..3) {
            let mesh = shapes::perturbed_disk(n, 0.25, 0.2, seed);
            let lengths = mesh.embedded_edge_lengths();
            let scheme = [Scheme::Yamabe, Scheme::Inversive, Scheme::Virtual][scheme_index];
            let metric = init_circle_packing(&mesh, &lengths, scheme, Background::H2).unwrap();
            let state = ConformalState::new(&mesh, &metric, metric.conformal_factors().unwrap()).unwrap();
            let h = curvature_hessian(&mesh, &metric, &state).unwrap();
            let nv = mesh.num_vertices();
            let rhs: Vec<f64> = (0..nv).map(|i| ((i as f64) * 1.3 + seed as f64).cos()).collect();
            let sys = LinearSystem { matrix: &h, rhs: rhs.clone(), constraint: Constraint::None };
            let Ok(x) = solve(&sys, 1e-12, default_max_iter(nv)) else {
                // off the convex region the Hessian may be indefinite
                prop_assume!(false);
                unreachable!()
            };
            let dense: DMatrix<f64> = h.to_dense();
            let reference = dense.lu().solve(&DVector::from_vec(rhs)).unwrap();
            let scale = reference.amax();
            for i in 0..nv {
                prop_assert!((x[i] - reference[i]).abs() <= 1e-9 * scale);
            }
        }
    }
}
