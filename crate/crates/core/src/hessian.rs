//! Derivatives of corner angles and vertex curvatures with respect to the
//! conformal factors.
//!
//! A [`FaceHessian`] holds `∂θ_a/∂u_b` for the three corners of one face, in
//! `face_vertices` order. The global matrix is `∂K/∂u = −Σ_f ∂θ/∂u`; it is
//! positive semidefinite (E², kernel = constants) or positive definite (H²) on
//! the convex region of the flow.

use std::fmt::Write as _;

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{corner_angles, Background, CirclePackingMetric, ConformalState, Epsilon};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceHessian(pub Matrix3<f64>);

impl FaceHessian {
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.0[(a, b)]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = &self.0;
        let mut worst: f64 = 0.0;
        for a in 0..3 {
            for b in a + 1..3 {
                let scale = m[(a, b)].abs().max(1.0);
                worst = worst.max((m[(a, b)] - m[(b, a)]).abs() / scale);
            }
        }
        worst
    }
}

fn others(k: usize) -> (usize, usize) {
    ((k + 1) % 3, (k + 2) % 3)
}

/// `cosh^ε γ` (H²) or `cos^ε γ` (S²); unused for E².
fn radius_power(gamma: f64, eps: Epsilon, bg: Background) -> f64 {
    match bg {
        Background::E2 => 1.0,
        Background::H2 => gamma.cosh().powi(eps.as_i32()),
        Background::S2 => gamma.cos().powi(eps.as_i32()),
    }
}

fn sine_like(x: f64, bg: Background) -> f64 {
    match bg {
        Background::E2 => x,
        Background::H2 => x.sinh(),
        Background::S2 => x.sin(),
    }
}

/// `s(l_a) ∂l_a/∂u_b` for the edge opposite corner `a`, `b` one of its endpoints.
fn tau(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3], bg: Background, a: usize, b: usize) -> f64 {
    let c = 3 - a - b;
    match bg {
        Background::E2 => {
            let p = |s: usize| eps[s].value() * gamma[s] * gamma[s];
            0.5 * (l[a] * l[a] + p(b) - p(c))
        }
        Background::H2 => l[a].cosh() * radius_power(gamma[b], eps[b], bg) - radius_power(gamma[c], eps[c], bg),
        Background::S2 => radius_power(gamma[c], eps[c], bg) - l[a].cos() * radius_power(gamma[b], eps[b], bg),
    }
}

/// `−(1/2A) LΘL⁻¹D`, with `2A = sin θ_a s(l_b) s(l_c)`.
pub fn face_hessian_analytic(
    l: [f64; 3],
    theta: [f64; 3],
    gamma: [f64; 3],
    eps: [Epsilon; 3],
    bg: Background,
) -> Result<FaceHessian> {
    analytic_with_scale(l, theta, gamma, eps, bg, 1.0)
}

fn analytic_with_scale(
    l: [f64; 3],
    theta: [f64; 3],
    gamma: [f64; 3],
    eps: [Epsilon; 3],
    bg: Background,
    scale: f64,
) -> Result<FaceHessian> {
    let s = l.map(|x| sine_like(x, bg));
    let two_area = scale * theta[0].sin() * s[1] * s[2];
    if !(two_area > 0.0) || !two_area.is_finite() {
        return Err(Error::DegenerateFace(format!("lengths {l:?}, angles {theta:?}")));
    }
    let cos = theta.map(f64::cos);
    let big_theta = Matrix3::new(
        -1.0, cos[2], cos[1], //
        cos[2], -1.0, cos[0], //
        cos[1], cos[0], -1.0,
    );
    let mut d = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                d[(a, b)] = tau(l, gamma, eps, bg, a, b);
            }
        }
    }
    let lmat = Matrix3::from_diagonal(&s.into());
    let linv = Matrix3::from_diagonal(&s.map(|x| 1.0 / x).into());
    Ok(FaceHessian(-(lmat * big_theta * linv * d) / two_area))
}

/// Power circle of a Euclidean face in the local frame `v0 = 0`, `v1 = (l_2, 0)`,
/// `v2` in the upper half-plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerCircleData {
    pub center: [f64; 2],
    /// May be negative (imaginary power circle).
    pub radius_sq: f64,
    /// Signed distance from the center to the edge opposite each corner, positive inside.
    pub h: [f64; 3],
    /// `d[a][b]`: distance from corner `a` to the foot of the center on edge `ab`.
    pub d: [[f64; 3]; 3],
    pub vertices: [[f64; 2]; 3],
}

pub fn euclidean_power_circle(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3]) -> Result<PowerCircleData> {
    corner_angles(l, Background::E2).map_err(|_| Error::DegenerateFace(format!("lengths {l:?}")))?;
    let x = (l[1] * l[1] - l[0] * l[0] + l[2] * l[2]) / (2.0 * l[2]);
    let sorted = {
        let mut s = l;
        s.sort_by(|p, q| q.total_cmp(p));
        s
    };
    let [p, q, r] = sorted;
    let four_area = ((p + (q + r)) * (r - (p - q)) * (r + (p - q)) * (p + (q - r))).sqrt();
    let y = four_area / (2.0 * l[2]);
    let v = [[0.0, 0.0], [l[2], 0.0], [x, y]];

    let pw = eps.iter().zip(gamma).map(|(e, g)| e.value() * g * g).collect::<Vec<_>>();
    let ox = (l[2] * l[2] - pw[1] + pw[0]) / (2.0 * l[2]);
    let oy = (x * x + y * y - pw[2] + pw[0] - 2.0 * ox * x) / (2.0 * y);
    let o = [ox, oy];

    let mut h = [0.0; 3];
    for a in 0..3 {
        let (b, c) = others(a);
        let e = [v[c][0] - v[b][0], v[c][1] - v[b][1]];
        let w = [o[0] - v[b][0], o[1] - v[b][1]];
        h[a] = (e[0] * w[1] - e[1] * w[0]) / l[a];
    }
    let mut d = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                let len = l[3 - a - b];
                let e = [v[b][0] - v[a][0], v[b][1] - v[a][1]];
                d[a][b] = ((o[0] - v[a][0]) * e[0] + (o[1] - v[a][1]) * e[1]) / len;
            }
        }
    }
    Ok(PowerCircleData { center: o, radius_sq: ox * ox + oy * oy - pw[0], h, d, vertices: v })
}

impl PowerCircleData {
    /// Power of corner `a` with respect to the circle; equal for all corners.
    pub fn power(&self, a: usize, gamma: f64, eps: Epsilon) -> f64 {
        let v = self.vertices[a];
        let dx = v[0] - self.center[0];
        let dy = v[1] - self.center[1];
        dx * dx + dy * dy - eps.value() * gamma * gamma
    }
}

/// Off-diagonals `h_c/l_c`; diagonals make each row sum to zero.
pub fn face_hessian_geometric_e2(pc: &PowerCircleData, l: [f64; 3]) -> FaceHessian {
    let mut m = Matrix3::zeros();
    for c in 0..3 {
        let (a, b) = others(c);
        let w = pc.h[c] / l[c];
        m[(a, b)] = w;
        m[(b, a)] = w;
        m[(a, a)] -= w;
        m[(b, b)] -= w;
    }
    FaceHessian(m)
}

/// `d[a][b] = ∂l_ab/∂u_a`.
pub fn length_derivative_splits(pc: &PowerCircleData) -> [[f64; 3]; 3] {
    pc.d
}

/// Quantities of the power-circle construction for a hyperbolic or spherical
/// face, shared by both closed forms.
struct CurvedFace {
    /// `cosh l` or `cos l`.
    c: [f64; 3],
    /// Vertex radius powers `cosh^ε γ` or `cos^ε γ`.
    w: [f64; 3],
    /// Gram determinant of the vertex vectors.
    n: f64,
    /// `wᵀ adj(G) w`.
    d: f64,
}

impl CurvedFace {
    fn new(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3], bg: Background) -> Result<CurvedFace> {
        corner_angles(l, bg)?;
        let c = l.map(|x| if bg == Background::H2 { x.cosh() } else { x.cos() });
        let w = [0, 1, 2].map(|s| radius_power(gamma[s], eps[s], bg));
        let n = 1.0 + 2.0 * c[0] * c[1] * c[2] - c.iter().map(|x| x * x).sum::<f64>();
        let mut d = 0.0;
        for i in 0..3 {
            let (j, k) = others(i);
            d += w[i] * w[i] * (1.0 - c[i] * c[i]) + 2.0 * w[j] * w[k] * (c[j] * c[k] - c[i]);
        }
        if !(n > 0.0) || !(d > 0.0) {
            return Err(Error::PowerCircleUndefined(format!("N = {n:e}, D = {d:e}")));
        }
        Ok(CurvedFace { c, w, n, d })
    }

    /// Row `k` of `adj(G) w`; its sign is the sign of the `(i, j)` entry.
    fn bracket(&self, k: usize) -> f64 {
        let (i, j) = others(k);
        let c = &self.c;
        (c[i] * c[k] - c[j]) * self.w[i] + (c[j] * c[k] - c[i]) * self.w[j] + (1.0 - c[k] * c[k]) * self.w[k]
    }
}

fn squared_distance_ratio(ratio: f64, scale: f64) -> Result<f64> {
    // tiny negative values are rounding around h = 0
    if ratio < -1e-9 * scale.max(1.0) || !ratio.is_finite() {
        return Err(Error::PowerCircleUndefined(format!("squared distance term {ratio:e}")));
    }
    Ok(ratio.max(0.0))
}

/// Closed-form off-diagonals `sign · tanh h_k / sinh² l_k · √(2 c_i c_j cosh l_k − c_i² − c_j²)`;
/// diagonals from the analytic route.
pub fn face_hessian_geometric_h2(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3]) -> Result<FaceHessian> {
    closed_form(l, gamma, eps, Background::H2)
}

/// Spherical analogue with `tan h_k / sin² l_k · √(−2 c_i c_j cos l_k + c_i² + c_j²)`.
pub fn face_hessian_geometric_s2(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3]) -> Result<FaceHessian> {
    closed_form(l, gamma, eps, Background::S2)
}

fn closed_form(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3], bg: Background) -> Result<FaceHessian> {
    let f = CurvedFace::new(l, gamma, eps, bg)?;
    let hyp = bg == Background::H2;
    let theta = corner_angles(l, bg)?;
    let mut m = face_hessian_analytic(l, theta, gamma, eps, bg)?.0;
    for k in 0..3 {
        let (i, j) = others(k);
        let (wi, wj) = (f.w[i], f.w[j]);
        let q = if hyp {
            2.0 * wi * wj * f.c[k] - wi * wi - wj * wj
        } else {
            -2.0 * wi * wj * f.c[k] + wi * wi + wj * wj
        };
        if !(q > 1e-12 * (wi * wi + wj * wj).max(1.0)) {
            return Err(Error::PowerCircleUndefined(format!("radicand {q:e} on edge opposite corner {k}")));
        }
        let sin_sq = (1.0 - f.c[k] * f.c[k]).abs();
        let nq = f.n * q;
        let t2 = if hyp {
            squared_distance_ratio((nq - f.d * sin_sq) / nq, 1.0)?
        } else {
            squared_distance_ratio((f.d * sin_sq - nq) / nq, 1.0)?
        };
        let value = f.bracket(k).signum() * t2.sqrt() * q.sqrt() / sin_sq;
        m[(i, j)] = value;
        m[(j, i)] = value;
    }
    Ok(FaceHessian(m))
}

/// Exact rational form of the closed-form off-diagonal, `adj(G)w / (√N · s²(l_k))`.
pub fn closed_form_entry(l: [f64; 3], gamma: [f64; 3], eps: [Epsilon; 3], bg: Background, k: usize) -> Result<f64> {
    let f = CurvedFace::new(l, gamma, eps, bg)?;
    let sin_sq = (1.0 - f.c[k] * f.c[k]).abs();
    Ok(f.bracket(k) / (f.n.sqrt() * sin_sq))
}

/// Symmetric matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHessian {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseHessian {
    /// Duplicate `(row, col)` entries are summed in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> SparseHessian {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last = None;
        for t in order {
            let (r, c, v) = triplets[t];
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseHessian { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).into_par_iter().map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Matrix Market coordinate format, lower triangle of a symmetric matrix.
    pub fn to_matrix_market(&self) -> String {
        let lower: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|r| self.row(r).filter(move |&(c, _)| c <= r).map(move |(c, v)| (r, c, v)))
            .collect();
        let mut out = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(out, "{} {} {}", self.n, self.n, lower.len());
        for (r, c, v) in lower {
            let _ = writeln!(out, "{} {} {:e}", r + 1, c + 1, v);
        }
        out
    }
}

/// `∂K/∂u = −Σ_f ∂θ/∂u`; off-diagonal face contributions are symmetrized.
pub fn assemble_global(mesh: &Mesh, faces: &[FaceHessian]) -> SparseHessian {
    assert_eq!(faces.len(), mesh.num_faces());
    let mut triplets = Vec::with_capacity(9 * faces.len());
    for (f, fh) in faces.iter().enumerate() {
        let vs = mesh.face_vertices(f);
        for a in 0..3 {
            for b in 0..3 {
                let v = if a == b { fh.0[(a, a)] } else { 0.5 * (fh.0[(a, b)] + fh.0[(b, a)]) };
                triplets.push((vs[a], vs[b], -v));
            }
        }
    }
    SparseHessian::from_triplets(mesh.num_vertices(), &triplets)
}

/// Analytic face Hessians of every face, in face order.
pub fn face_hessians(mesh: &Mesh, metric: &CirclePackingMetric, state: &ConformalState) -> Result<Vec<FaceHessian>> {
    let gamma = state
        .u
        .iter()
        .map(|&u| crate::geometry::gamma_from_u(u, metric.bg))
        .collect::<Result<Vec<_>>>()?;
    (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let vs = mesh.face_vertices(f);
            face_hessian_analytic(
                state.face_lengths(mesh, f),
                state.angles[f],
                vs.map(|v| gamma[v]),
                vs.map(|v| metric.epsilon[v]),
                metric.bg,
            )
        })
        .collect()
}

pub fn curvature_hessian(mesh: &Mesh, metric: &CirclePackingMetric, state: &ConformalState) -> Result<SparseHessian> {
    Ok(assemble_global(mesh, &face_hessians(mesh, metric, state)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{init_circle_packing, vertex_curvatures, Scheme};
    use crate::oracle::{fd_face_hessian, matrix_rel_error, FaceSampler};
    use crate::shapes;

    const P: Epsilon = Epsilon::Plus;
    const Z: Epsilon = Epsilon::Zero;

    #[test]
    fn equilateral_yamabe_off_diagonals() {
        let t = std::f64::consts::FRAC_PI_3;
        let h = face_hessian_analytic([1.0; 3], [t; 3], [1.0; 3], [Z; 3], Background::E2).unwrap();
        // 1/(2√3), 30-digit reference value
        for (a, b) in [(0, 1), (1, 2), (0, 2), (1, 0)] {
            assert!((h.entry(a, b) - 0.288675134594812882).abs() < 1e-15);
        }
        for a in 0..3 {
            assert!(h.0.row(a).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn prefactor_matches_finite_differences_only_at_unit_scale() {
        let mut sampler = FaceSampler::new(Background::E2, Scheme::Yamabe, 11);
        for _ in 0..50 {
            let s = sampler.sample();
            let fd = fd_face_hessian(s.u, s.eta, s.eps, Background::E2, 1e-6).unwrap();
            let err = |scale: f64| {
                let m = analytic_with_scale(s.l, s.theta, s.gamma, s.eps, Background::E2, scale).unwrap();
                matrix_rel_error(&m.0, &fd)
            };
            assert!(err(1.0) < 1e-6);
            assert!(err(2.0) > 0.4);
            assert!(err(4.0) > 0.4);
        }
    }

    #[test]
    fn tangential_equilateral_power_circle() {
        let pc = euclidean_power_circle([2.0; 3], [1.0; 3], [P; 3]).unwrap();
        assert!((pc.radius_sq - 1.0 / 3.0).abs() < 1e-14);
        assert!((pc.center[0] - 1.0).abs() < 1e-14);
        assert!((pc.center[1] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        for a in 0..3 {
            assert!((pc.h[a] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
            for b in 0..3 {
                if a != b {
                    assert!((pc.d[a][b] - 1.0).abs() < 1e-14);
                }
            }
        }
        let h = face_hessian_geometric_e2(&pc, [2.0; 3]);
        assert!((h.entry(0, 1) - 0.288675134594812882).abs() < 1e-14);
        assert!((h.entry(2, 2) + 1.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn yamabe_power_circle_is_circumcircle() {
        let pc = euclidean_power_circle([3.0, 4.0, 5.0], [1.0; 3], [Z; 3]).unwrap();
        assert!((pc.radius_sq - 6.25).abs() < 1e-13);
        // hypotenuse is opposite corner 2
        assert!(pc.h[2].abs() < 1e-14);
        let h = face_hessian_geometric_e2(&pc, [3.0, 4.0, 5.0]);
        assert!(h.entry(0, 1).abs() < 1e-14);
    }

    #[test]
    fn obtuse_yamabe_entry_is_negative() {
        let l = [1.0, 1.0, 1.8];
        let pc = euclidean_power_circle(l, [1.0; 3], [Z; 3]).unwrap();
        let h = face_hessian_geometric_e2(&pc, l);
        assert!(h.entry(0, 1) < 0.0);
        let u = [0.0; 3];
        let eta = l.map(|x| x * x / 2.0);
        let fd = fd_face_hessian(u, eta, [Z; 3], Background::E2, 1e-6).unwrap();
        assert!(fd[(0, 1)] < 0.0);
        assert!((fd[(0, 1)] - h.entry(0, 1)).abs() < 1e-8);
    }

    #[test]
    fn power_is_equal_at_all_corners() {
        for scheme in [Scheme::Inversive, Scheme::Virtual, Scheme::Mixed] {
            let mut sampler = FaceSampler::new(Background::E2, scheme, 5);
            for _ in 0..100 {
                let s = sampler.sample();
                let pc = euclidean_power_circle(s.l, s.gamma, s.eps).unwrap();
                let p0 = pc.power(0, s.gamma[0], s.eps[0]);
                for a in 0..3 {
                    let pa = pc.power(a, s.gamma[a], s.eps[a]);
                    assert!((pa - p0).abs() <= 1e-10 * p0.abs().max(1.0));
                    assert!((pa - pc.radius_sq).abs() <= 1e-10 * p0.abs().max(1.0));
                }
                for a in 0..3 {
                    let (b, c) = others(a);
                    assert!((pc.d[b][c] + pc.d[c][b] - s.l[a]).abs() < 1e-12 * s.l[a]);
                }
            }
        }
    }

    #[test]
    fn tangential_splits_equal_radii() {
        let gamma = [0.7, 1.1, 0.4];
        let l = [gamma[1] + gamma[2], gamma[0] + gamma[2], gamma[0] + gamma[1]];
        let pc = euclidean_power_circle(l, gamma, [P; 3]).unwrap();
        let d = length_derivative_splits(&pc);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!((d[a][b] - gamma[a]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_rational_form() {
        for bg in [Background::H2, Background::S2] {
            let mut sampler = FaceSampler::new(bg, Scheme::Mixed, 21);
            for _ in 0..200 {
                let s = sampler.sample();
                let Ok(FaceHessian(m)) = closed_form(s.l, s.gamma, s.eps, bg) else { continue };
                for k in 0..3 {
                    let (i, j) = others(k);
                    let exact = closed_form_entry(s.l, s.gamma, s.eps, bg, k).unwrap();
                    assert!((m[(i, j)] - exact).abs() < 1e-8 * exact.abs().max(1.0), "{bg}: {} vs {exact}", m[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn symmetric_curved_faces_have_equal_off_diagonals() {
        let h = face_hessian_geometric_h2([1.2; 3], [0.5; 3], [P; 3]).unwrap();
        let s = face_hessian_geometric_s2([0.9; 3], [0.4; 3], [P; 3]).unwrap();
        for m in [h, s] {
            assert!((m.entry(0, 1) - m.entry(1, 2)).abs() < 1e-13);
            assert!((m.entry(0, 2) - m.entry(1, 2)).abs() < 1e-13);
        }
    }

    #[test]
    fn spherical_zero_radicand_is_an_error() {
        let g = std::f64::consts::FRAC_PI_2;
        let r = face_hessian_geometric_s2([1.0; 3], [g, g, 0.5], [P; 3]);
        assert!(matches!(r, Err(Error::PowerCircleUndefined(_))));
    }

    #[test]
    fn single_triangle_global_is_negated_face() {
        let mesh = shapes::single_triangle([3.0, 4.0, 5.0]);
        let lengths = mesh.embedded_edge_lengths();
        let metric = init_circle_packing(&mesh, &lengths, Scheme::Inversive, Background::E2).unwrap();
        let state = ConformalState::new(&mesh, &metric, metric.conformal_factors().unwrap()).unwrap();
        let faces = face_hessians(&mesh, &metric, &state).unwrap();
        let global = assemble_global(&mesh, &faces);
        for a in 0..3 {
            for b in 0..3 {
                let sym = 0.5 * (faces[0].0[(a, b)] + faces[0].0[(b, a)]);
                assert!((global.get(a, b) + sym).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tetrahedron_global_matches_curvature_differences() {
        let mesh = shapes::tetrahedron();
        let lengths = mesh.embedded_edge_lengths();
        let metric = init_circle_packing(&mesh, &lengths, Scheme::Yamabe, Background::E2).unwrap();
        let u0 = vec![0.1, -0.2, 0.05, 0.0];
        let state = ConformalState::new(&mesh, &metric, u0.clone()).unwrap();
        let hess = curvature_hessian(&mesh, &metric, &state).unwrap();
        assert_eq!(hess.dim(), 4);
        assert!(hess.max_asymmetry() < 1e-15);
        assert!(hess.row_sums().iter().all(|s| s.abs() < 1e-12));
        let h = 1e-6;
        for w in 0..4 {
            let shifted = |dir: f64| {
                let mut u = u0.clone();
                u[w] += dir * h;
                vertex_curvatures(&mesh, &ConformalState::new(&mesh, &metric, u).unwrap())
            };
            let (kp, km) = (shifted(1.0), shifted(-1.0));
            for v in 0..4 {
                let fd = (kp[v] - km[v]) / (2.0 * h);
                assert!((fd - hess.get(v, w)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn grid_sparsity_is_adjacency_plus_diagonal() {
        let mesh = shapes::grid_disk(4);
        let lengths = mesh.embedded_edge_lengths();
        let metric = init_circle_packing(&mesh, &lengths, Scheme::Yamabe, Background::E2).unwrap();
        let state = ConformalState::new(&mesh, &metric, vec![0.0; 16]).unwrap();
        let hess = curvature_hessian(&mesh, &metric, &state).unwrap();
        assert_eq!(hess.nnz(), 16 + 2 * mesh.num_edges());
        for v in 0..16 {
            let mut cols: Vec<usize> = hess.row(v).map(|(c, _)| c).collect();
            let mut expect = mesh.one_ring_vertices(v);
            expect.push(v);
            cols.sort();
            expect.sort();
            assert_eq!(cols, expect);
        }
    }

    #[test]
    fn delaunay_yamabe_global_is_diagonally_dominant() {
        let mesh = shapes::grid_disk(5);
        let lengths = mesh.embedded_edge_lengths();
        let metric = init_circle_packing(&mesh, &lengths, Scheme::Yamabe, Background::E2).unwrap();
        let state = ConformalState::new(&mesh, &metric, vec![0.0; 25]).unwrap();
        let hess = curvature_hessian(&mesh, &metric, &state).unwrap();
        for v in 0..25 {
            let off: f64 = hess.row(v).filter(|&(c, _)| c != v).map(|(_, x)| x).sum();
            assert!(hess.row(v).all(|(c, x)| c == v || x <= 1e-15));
            assert!(hess.get(v, v) + off >= -1e-12);
        }
    }

    #[test]
    fn matrix_market_dump() {
        let t = SparseHessian::from_triplets(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (0, 0, 1.0)]);
        let text = t.to_matrix_market();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n"));
        assert!(text.contains("1 1 3e0"));
        assert_eq!(t.matvec(&[1.0, 1.0]), vec![2.0, 1.0]);
    }
}
