//! Pointwise metric formulas for circle packing metrics.
//!
//! Conventions shared with the rest of the crate: the conformal factor `u` is
//! `ln γ` (E²), `ln tanh(γ/2)` (H²) or `ln tan(γ/2)` (S²); inside a face, slot
//! `s` holds the corner at the face's `s`-th vertex and `l[s]` is the length of
//! the edge opposite that corner.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Background {
    E2,
    H2,
    S2,
}

impl Background {
    pub const ALL: [Background; 3] = [Background::E2, Background::H2, Background::S2];

    /// Coefficient of the area term in the discrete Gauss-Bonnet identity.
    pub fn area_sign(self) -> f64 {
        match self {
            Background::E2 => 0.0,
            Background::H2 => -1.0,
            Background::S2 => 1.0,
        }
    }
}

impl fmt::Display for Background {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Background::E2 => "e2",
            Background::H2 => "h2",
            Background::S2 => "s2",
        })
    }
}

impl FromStr for Background {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e2" => Ok(Background::E2),
            "h2" => Ok(Background::H2),
            "s2" => Ok(Background::S2),
            other => Err(Error::InvalidInput(format!("unknown background geometry `{other}`"))),
        }
    }
}

/// Per-vertex scheme indicator ε.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Epsilon {
    Minus,
    Zero,
    Plus,
}

impl Epsilon {
    pub const ALL: [Epsilon; 3] = [Epsilon::Plus, Epsilon::Zero, Epsilon::Minus];

    pub fn value(self) -> f64 {
        i8::from(self) as f64
    }

    pub fn as_i32(self) -> i32 {
        i8::from(self) as i32
    }
}

impl From<Epsilon> for i8 {
    fn from(e: Epsilon) -> i8 {
        match e {
            Epsilon::Minus => -1,
            Epsilon::Zero => 0,
            Epsilon::Plus => 1,
        }
    }
}

impl TryFrom<i8> for Epsilon {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(Epsilon::Minus),
            0 => Ok(Epsilon::Zero),
            1 => Ok(Epsilon::Plus),
            other => Err(format!("scheme indicator must be -1, 0 or 1, got {other}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Tangential,
    Thurston,
    Inversive,
    Yamabe,
    Virtual,
    Mixed,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Tangential,
        Scheme::Thurston,
        Scheme::Inversive,
        Scheme::Yamabe,
        Scheme::Virtual,
        Scheme::Mixed,
    ];

    /// The indicator every vertex carries, or `None` for the mixed scheme.
    pub fn uniform_epsilon(self) -> Option<Epsilon> {
        match self {
            Scheme::Tangential | Scheme::Thurston | Scheme::Inversive => Some(Epsilon::Plus),
            Scheme::Yamabe => Some(Epsilon::Zero),
            Scheme::Virtual => Some(Epsilon::Minus),
            Scheme::Mixed => None,
        }
    }

    pub fn eta_in_range(self, eta: f64) -> bool {
        match self {
            Scheme::Tangential => (eta - 1.0).abs() <= 1e-12,
            Scheme::Thurston => (0.0..=1.0).contains(&eta),
            _ => eta > 0.0,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Tangential => "tangential",
            Scheme::Thurston => "thurston",
            Scheme::Inversive => "inversive",
            Scheme::Yamabe => "yamabe",
            Scheme::Virtual => "virtual",
            Scheme::Mixed => "mixed",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidInput(format!("unknown scheme `{s}`")))
    }
}

pub fn u_from_gamma(gamma: f64, bg: Background) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("radius must be positive, got {gamma}")));
    }
    match bg {
        Background::E2 => Ok(gamma.ln()),
        Background::H2 => Ok((gamma / 2.0).tanh().ln()),
        Background::S2 => {
            if gamma >= PI {
                return Err(Error::Domain(format!("spherical radius must be below π, got {gamma}")));
            }
            Ok((gamma / 2.0).tan().ln())
        }
    }
}

pub fn gamma_from_u(u: f64, bg: Background) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::Domain(format!("conformal factor {u} is not finite")));
    }
    match bg {
        Background::E2 => Ok(u.exp()),
        Background::H2 => {
            // tanh(γ/2) = e^u needs u < 0
            if u >= 0.0 {
                return Err(Error::Domain(format!("hyperbolic conformal factor must be negative, got {u}")));
            }
            Ok(2.0 * u.exp().atanh())
        }
        Background::S2 => Ok(2.0 * u.exp().atan()),
    }
}

/// `cosh^ε γ` (H²) or `cos^ε γ` (S²) expressed through `u`; 1 for ε = 0.
pub fn radius_factor(u: f64, eps: Epsilon, bg: Background) -> f64 {
    let t2 = (2.0 * u).exp();
    match (bg, eps) {
        (_, Epsilon::Zero) | (Background::E2, _) => 1.0,
        (Background::H2, Epsilon::Plus) => (1.0 + t2) / (1.0 - t2),
        (Background::H2, Epsilon::Minus) => (1.0 - t2) / (1.0 + t2),
        (Background::S2, Epsilon::Plus) => (1.0 - t2) / (1.0 + t2),
        (Background::S2, Epsilon::Minus) => (1.0 + t2) / (1.0 - t2),
    }
}

/// Unified edge length of a circle packing metric.
pub fn edge_length(u_i: f64, u_j: f64, eta: f64, eps_i: Epsilon, eps_j: Epsilon, bg: Background) -> Result<f64> {
    let a = eps_i.value() * (2.0 * u_i).exp();
    let b = eps_j.value() * (2.0 * u_j).exp();
    let cross = eta * (u_i + u_j).exp();
    let degenerate = |what: &str, v: f64| {
        Err(Error::DegenerateLength(format!(
            "{what} = {v:e} (u = ({u_i}, {u_j}), eta = {eta}, {bg})"
        )))
    };
    match bg {
        Background::E2 => {
            let sq = 2.0 * cross + a + b;
            if !(sq > 0.0) || !sq.is_finite() {
                return degenerate("squared length", sq);
            }
            Ok(sq.sqrt())
        }
        Background::H2 => {
            let den = (1.0 - a) * (1.0 - b);
            // cosh l - 1, rewritten to avoid cancellation near l = 0
            let x = (4.0 * cross + 2.0 * (a + b)) / den;
            if !(den > 0.0) || !(x > 0.0) || !x.is_finite() {
                return degenerate("cosh l - 1", x);
            }
            Ok(2.0 * (0.5 * x).sqrt().asinh())
        }
        Background::S2 => {
            let den = (1.0 + a) * (1.0 + b);
            // 1 - cos l
            let y = (4.0 * cross + 2.0 * (a + b)) / den;
            if !(den > 0.0) || !(y > 0.0 && y < 2.0) || !y.is_finite() {
                return degenerate("1 - cos l", y);
            }
            Ok(2.0 * (0.5 * y).sqrt().asin())
        }
    }
}

/// Conformal structure coefficient reproducing length `l` for the given factors.
pub fn solve_eta(l: f64, u_i: f64, u_j: f64, eps_i: Epsilon, eps_j: Epsilon, bg: Background) -> f64 {
    let a = eps_i.value() * (2.0 * u_i).exp();
    let b = eps_j.value() * (2.0 * u_j).exp();
    let scale = (u_i + u_j).exp();
    match bg {
        Background::E2 => (l * l - a - b) / (2.0 * scale),
        Background::H2 => {
            let x = 2.0 * (0.5 * l).sinh().powi(2);
            (x * (1.0 - a) * (1.0 - b) - 2.0 * (a + b)) / (4.0 * scale)
        }
        Background::S2 => {
            let y = 2.0 * (0.5 * l).sin().powi(2);
            (y * (1.0 + a) * (1.0 + b) - 2.0 * (a + b)) / (4.0 * scale)
        }
    }
}

fn check_triangle(l: [f64; 3], bg: Background) -> Result<()> {
    let bad = || Err(Error::TriangleInequalityViolation(l[0], l[1], l[2]));
    if l.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return bad();
    }
    for s in 0..3 {
        if l[s] >= l[(s + 1) % 3] + l[(s + 2) % 3] {
            return bad();
        }
    }
    if bg == Background::S2 && (l.iter().any(|&x| x >= PI) || l.iter().sum::<f64>() >= TAU) {
        return bad();
    }
    Ok(())
}

/// Sixteen times the squared Euclidean area (Heron, cancellation-safe ordering).
fn heron16(l: [f64; 3]) -> f64 {
    let mut s = l;
    s.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = s;
    (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
}

/// Corner angles from edge lengths by the cosine law of `bg`; `θ[s]` faces `l[s]`.
pub fn corner_angles(l: [f64; 3], bg: Background) -> Result<[f64; 3]> {
    check_triangle(l, bg)?;
    let mut theta = [0.0; 3];
    match bg {
        Background::E2 => {
            let h16 = heron16(l);
            if !(h16 > 0.0) {
                return Err(Error::TriangleInequalityViolation(l[0], l[1], l[2]));
            }
            let four_area = h16.sqrt();
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                theta[k] = four_area.atan2(l[i] * l[i] + l[j] * l[j] - l[k] * l[k]);
            }
        }
        Background::H2 | Background::S2 => {
            let hyp = bg == Background::H2;
            let c: Vec<f64> = l.iter().map(|&x| if hyp { x.cosh() } else { x.cos() }).collect();
            let gram = 1.0 + 2.0 * c[0] * c[1] * c[2] - c[0] * c[0] - c[1] * c[1] - c[2] * c[2];
            if !(gram > 0.0) {
                return Err(Error::TriangleInequalityViolation(l[0], l[1], l[2]));
            }
            let root = gram.sqrt();
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let adj = if hyp { c[i] * c[j] - c[k] } else { c[k] - c[i] * c[j] };
                theta[k] = root.atan2(adj);
            }
        }
    }
    Ok(theta)
}

/// Face area: Heron (E²), angle defect (H²) or angle excess (S²).
pub fn face_area(l: [f64; 3], theta: [f64; 3], bg: Background) -> f64 {
    let sum: f64 = theta.iter().sum();
    match bg {
        Background::E2 => 0.25 * heron16(l).max(0.0).sqrt(),
        Background::H2 => PI - sum,
        Background::S2 => sum - PI,
    }
}

/// Conformal factors with the lengths and corner angles they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalState {
    pub u: Vec<f64>,
    /// Per edge.
    pub lengths: Vec<f64>,
    /// Per face, in `face_vertices` order.
    pub angles: Vec<[f64; 3]>,
}

impl ConformalState {
    pub fn new(mesh: &Mesh, metric: &CirclePackingMetric, u: Vec<f64>) -> Result<ConformalState> {
        let lengths = metric.edge_lengths(mesh, &u)?;
        ConformalState::from_lengths(mesh, u, lengths, metric.bg)
    }

    pub fn from_lengths(mesh: &Mesh, u: Vec<f64>, lengths: Vec<f64>, bg: Background) -> Result<ConformalState> {
        let angles = face_angles(mesh, &lengths, bg)?;
        Ok(ConformalState { u, lengths, angles })
    }

    pub fn face_lengths(&self, mesh: &Mesh, f: usize) -> [f64; 3] {
        mesh.face_edges(f).map(|e| self.lengths[e])
    }
}

pub fn face_angles(mesh: &Mesh, lengths: &[f64], bg: Background) -> Result<Vec<[f64; 3]>> {
    (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| corner_angles(mesh.face_edges(f).map(|e| lengths[e]), bg))
        .collect()
}

/// Angle deficit: 2π (interior) or π (boundary) minus the incident corner angles.
pub fn vertex_curvatures(mesh: &Mesh, state: &ConformalState) -> Vec<f64> {
    let mut k: Vec<f64> = (0..mesh.num_vertices())
        .map(|v| if mesh.is_boundary_vertex(v) { PI } else { TAU })
        .collect();
    for (f, theta) in state.angles.iter().enumerate() {
        for (v, t) in mesh.face_vertices(f).into_iter().zip(theta) {
            k[v] -= t;
        }
    }
    k
}

pub fn total_area(mesh: &Mesh, state: &ConformalState, bg: Background) -> f64 {
    (0..mesh.num_faces()).map(|f| face_area(state.face_lengths(mesh, f), state.angles[f], bg)).sum()
}

/// `Σ K + ε_bg · A − 2πχ`; zero up to rounding for every valid metric.
pub fn gauss_bonnet_residual(mesh: &Mesh, k: &[f64], total_area: f64, bg: Background) -> f64 {
    let chi = mesh.topology().euler_characteristic as f64;
    k.iter().sum::<f64>() + bg.area_sign() * total_area - TAU * chi
}

pub fn eta_from_lambda(lambda: f64, eps_i: Epsilon, eps_j: Epsilon) -> f64 {
    0.5 * (lambda.exp() + eps_i.value() * eps_j.value() * (-lambda).exp())
}

/// Inverse of [`eta_from_lambda`]; the non-negative branch when `ε_iε_j = 1`.
pub fn lambda_from_eta(eta: f64, eps_i: Epsilon, eps_j: Epsilon) -> Result<f64> {
    match eps_i.as_i32() * eps_j.as_i32() {
        0 if eta > 0.0 => Ok((2.0 * eta).ln()),
        1 if eta >= 1.0 => Ok(eta.acosh()),
        -1 => Ok(eta.asinh()),
        _ => Err(Error::InverseUndefined(eta)),
    }
}

/// Circle packing metric: radii and scheme indicators per vertex, conformal
/// structure coefficients per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct CirclePackingMetric {
    pub bg: Background,
    pub scheme: Scheme,
    pub epsilon: Vec<Epsilon>,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
}

impl CirclePackingMetric {
    pub fn conformal_factors(&self) -> Result<Vec<f64>> {
        self.gamma.iter().map(|&g| u_from_gamma(g, self.bg)).collect()
    }

    /// Same metric with radii replaced by those of the conformal factors `u`.
    pub fn with_factors(&self, u: &[f64]) -> Result<CirclePackingMetric> {
        let gamma = u.iter().map(|&x| gamma_from_u(x, self.bg)).collect::<Result<Vec<_>>>()?;
        Ok(CirclePackingMetric { gamma, ..self.clone() })
    }

    pub fn edge_length_of(&self, mesh: &Mesh, u: &[f64], e: usize) -> Result<f64> {
        let (i, j) = mesh.edge(e).vertices;
        edge_length(u[i], u[j], self.eta[e], self.epsilon[i], self.epsilon[j], self.bg)
    }

    pub fn edge_lengths(&self, mesh: &Mesh, u: &[f64]) -> Result<Vec<f64>> {
        (0..mesh.num_edges()).into_par_iter().map(|e| self.edge_length_of(mesh, u, e)).collect()
    }

    /// Radii, indicator/scheme consistency, and triangle inequalities of the induced lengths.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.gamma.len() != mesh.num_vertices()
            || self.epsilon.len() != mesh.num_vertices()
            || self.eta.len() != mesh.num_edges()
        {
            return Err(Error::InvalidInput("metric dimensions do not match the mesh".into()));
        }
        for &g in &self.gamma {
            u_from_gamma(g, self.bg)?;
        }
        if let Some(expected) = self.scheme.uniform_epsilon() {
            if let Some(v) = self.epsilon.iter().position(|&e| e != expected) {
                return Err(Error::InvalidInput(format!(
                    "vertex {v} has indicator {:?}, inconsistent with scheme {}",
                    self.epsilon[v], self.scheme
                )));
            }
        }
        if let Some(e) = self.eta.iter().position(|&x| !self.scheme.eta_in_range(x)) {
            return Err(Error::InvalidInput(format!(
                "edge {e} has eta {} outside the range of scheme {}",
                self.eta[e], self.scheme
            )));
        }
        let u = self.conformal_factors()?;
        ConformalState::new(mesh, self, u).map(|_| ())
    }

    pub fn to_document(&self, mesh: &Mesh, u: Option<&[f64]>) -> MetricDocument {
        MetricDocument {
            bg: self.bg,
            scheme: self.scheme,
            epsilon: self.epsilon.clone(),
            gamma: self.gamma.clone(),
            eta: mesh
                .edges()
                .iter()
                .zip(&self.eta)
                .map(|(edge, &eta)| EdgeCoefficient { i: edge.vertices.0, j: edge.vertices.1, eta })
                .collect(),
            u: u.map(|u| u.to_vec()),
        }
    }

    pub fn from_document(mesh: &Mesh, doc: &MetricDocument) -> Result<CirclePackingMetric> {
        let mut eta = vec![f64::NAN; mesh.num_edges()];
        for entry in &doc.eta {
            let e = mesh
                .edge_between(entry.i, entry.j)
                .ok_or_else(|| Error::InvalidInput(format!("no edge ({}, {}) in mesh", entry.i, entry.j)))?;
            eta[e] = entry.eta;
        }
        if eta.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidInput("metric document misses edges".into()));
        }
        Ok(CirclePackingMetric {
            bg: doc.bg,
            scheme: doc.scheme,
            epsilon: doc.epsilon.clone(),
            gamma: doc.gamma.clone(),
            eta,
        })
    }
}

/// JSON form of a metric; `eta` is keyed by the sorted vertex pair of each edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDocument {
    pub bg: Background,
    pub scheme: Scheme,
    pub epsilon: Vec<Epsilon>,
    pub gamma: Vec<f64>,
    pub eta: Vec<EdgeCoefficient>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeCoefficient {
    pub i: usize,
    pub j: usize,
    pub eta: f64,
}

/// Indicator pattern used for the mixed scheme when none is supplied: +1, 0, −1 by vertex index.
pub fn default_mixed_epsilon(n: usize) -> Vec<Epsilon> {
    (0..n).map(|v| Epsilon::ALL[v % 3]).collect()
}

/// Initial circle packing for `scheme` from an edge-length assignment.
///
/// Inversive, Yamabe, virtual and mixed metrics reproduce `lengths`; tangential
/// and Thurston metrics cannot in general and use incircle tangency radii instead.
pub fn init_circle_packing(
    mesh: &Mesh,
    lengths: &[f64],
    scheme: Scheme,
    bg: Background,
) -> Result<CirclePackingMetric> {
    let epsilon = match scheme.uniform_epsilon() {
        Some(e) => vec![e; mesh.num_vertices()],
        None => default_mixed_epsilon(mesh.num_vertices()),
    };
    init_with_epsilon(mesh, lengths, scheme, epsilon, bg)
}

pub fn init_with_epsilon(
    mesh: &Mesh,
    lengths: &[f64],
    scheme: Scheme,
    epsilon: Vec<Epsilon>,
    bg: Background,
) -> Result<CirclePackingMetric> {
    let (nv, ne) = (mesh.num_vertices(), mesh.num_edges());
    if lengths.len() != ne || epsilon.len() != nv {
        return Err(Error::InvalidInput("length or indicator count does not match the mesh".into()));
    }
    face_angles(mesh, lengths, bg)?;

    let mut min_incident = vec![f64::INFINITY; nv];
    for (e, edge) in mesh.edges().iter().enumerate() {
        let (i, j) = edge.vertices;
        min_incident[i] = min_incident[i].min(lengths[e]);
        min_incident[j] = min_incident[j].min(lengths[e]);
    }

    let reproduces = !matches!(scheme, Scheme::Tangential | Scheme::Thurston);
    let gamma: Vec<f64> = if reproduces {
        (0..nv)
            .map(|v| match epsilon[v] {
                Epsilon::Plus => min_incident[v] / 3.0,
                Epsilon::Zero | Epsilon::Minus => 1.0,
            })
            .collect()
    } else {
        // smallest incircle tangency distance over the incident faces
        let mut g = vec![f64::INFINITY; nv];
        for f in 0..mesh.num_faces() {
            let vs = mesh.face_vertices(f);
            let l = mesh.face_edges(f).map(|e| lengths[e]);
            for s in 0..3 {
                let tangent = 0.5 * (l[(s + 1) % 3] + l[(s + 2) % 3] - l[s]);
                g[vs[s]] = g[vs[s]].min(tangent);
            }
        }
        g
    };
    let u = gamma.iter().map(|&g| u_from_gamma(g, bg)).collect::<Result<Vec<_>>>()?;

    let mut eta = Vec::with_capacity(ne);
    for (e, edge) in mesh.edges().iter().enumerate() {
        let (i, j) = edge.vertices;
        let solved = solve_eta(lengths[e], u[i], u[j], epsilon[i], epsilon[j], bg);
        let value = match scheme {
            Scheme::Tangential => 1.0,
            Scheme::Thurston => solved.clamp(0.0, 1.0),
            _ => solved,
        };
        if !scheme.eta_in_range(value) || !value.is_finite() {
            return Err(Error::InitializationInfeasible(format!(
                "edge ({i}, {j}) needs eta = {value}, outside the {scheme} range"
            )));
        }
        eta.push(value);
    }

    let metric = CirclePackingMetric { bg, scheme, epsilon, gamma, eta };
    let induced = metric
        .edge_lengths(mesh, &u)
        .map_err(|err| Error::InitializationInfeasible(err.to_string()))?;
    if reproduces {
        for (e, (&got, &want)) in induced.iter().zip(lengths).enumerate() {
            if (got - want).abs() > 1e-12 * want.max(1.0) {
                return Err(Error::InitializationInfeasible(format!(
                    "edge {e} reproduced as {got}, expected {want}"
                )));
            }
        }
    }
    face_angles(mesh, &induced, bg).map_err(|err| Error::InitializationInfeasible(err.to_string()))?;
    Ok(metric)
}
