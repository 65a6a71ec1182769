//! Newton and gradient iterations of the discrete Ricci flow `du/dt = K̄ − K`.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::PathBuf;

use log::{debug, info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    corner_angles, solve_eta, vertex_curvatures, Background, CirclePackingMetric, ConformalState, Epsilon, Scheme,
};
use crate::hessian::curvature_hessian;
use crate::mesh::Mesh;
use crate::solver::{default_max_iter, solve, Constraint, LinearSystem, DEFAULT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Newton,
    Gradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Surgery {
    Off,
    DelaunayE2,
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub step_length: f64,
    /// Max-norm curvature error at which the flow stops.
    pub threshold: f64,
    pub max_iterations: usize,
    pub method: Method,
    pub surgery: Surgery,
    pub backtracking: bool,
    /// CSV iteration log.
    pub log_path: Option<PathBuf>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            step_length: 0.5,
            threshold: 1e-6,
            max_iterations: 200,
            method: Method::Newton,
            surgery: Surgery::Off,
            backtracking: true,
            log_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetCurvature(pub Vec<f64>);

impl TargetCurvature {
    /// `2πχ/V` everywhere for E², zero for H² and S².
    pub fn uniform(mesh: &Mesh, bg: Background) -> TargetCurvature {
        let n = mesh.num_vertices();
        let value = match bg {
            Background::E2 => TAU * mesh.topology().euler_characteristic as f64 / n as f64,
            Background::H2 | Background::S2 => 0.0,
        };
        TargetCurvature(vec![value; n])
    }

    /// Zero at interior vertices; boundary vertices keep their share of the
    /// current boundary curvature, rescaled to total `2πχ`.
    pub fn zero_interior(mesh: &Mesh, current: &[f64]) -> Result<TargetCurvature> {
        let boundary = mesh.boundary_vertices();
        let total: f64 = (0..mesh.num_vertices()).filter(|&v| boundary[v]).map(|v| current[v]).sum();
        if !boundary.iter().any(|&b| b) || total.abs() < 1e-12 {
            return Err(Error::InvalidInput("zero-interior target needs boundary curvature".into()));
        }
        let scale = TAU * mesh.topology().euler_characteristic as f64 / total;
        Ok(TargetCurvature(
            (0..mesh.num_vertices()).map(|v| if boundary[v] { current[v] * scale } else { 0.0 }).collect(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetViolation {
    /// `None` for the total-curvature condition.
    pub vertex: Option<usize>,
    pub value: f64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetReport {
    pub ok: bool,
    pub total: f64,
    pub two_pi_chi: f64,
    pub violations: Vec<TargetViolation>,
}

/// Gauss-Bonnet and per-vertex admissibility of a target curvature.
///
/// E² needs `Σ K̄ = 2πχ`; since `Σ K = 2πχ ± A`, H² needs `Σ K̄ > 2πχ` and S²
/// needs `Σ K̄ < 2πχ`.
pub fn validate_target(mesh: &Mesh, target: &TargetCurvature, bg: Background) -> TargetReport {
    let two_pi_chi = TAU * mesh.topology().euler_characteristic as f64;
    let mut violations = Vec::new();
    if target.0.len() != mesh.num_vertices() {
        violations.push(TargetViolation {
            vertex: None,
            value: target.0.len() as f64,
            message: format!("expected {} values", mesh.num_vertices()),
        });
        return TargetReport { ok: false, total: f64::NAN, two_pi_chi, violations };
    }
    for (v, &k) in target.0.iter().enumerate() {
        let bound = if mesh.is_boundary_vertex(v) { PI } else { TAU };
        if !k.is_finite() || k >= bound {
            violations.push(TargetViolation {
                vertex: Some(v),
                value: k,
                message: format!("must be finite and below {bound}"),
            });
        }
    }
    let total: f64 = target.0.iter().sum();
    let total_ok = match bg {
        Background::E2 => (total - two_pi_chi).abs() <= 1e-9 * two_pi_chi.abs().max(1.0),
        Background::H2 => total > two_pi_chi,
        Background::S2 => total < two_pi_chi,
    };
    if !total_ok {
        let relation = match bg {
            Background::E2 => "equal",
            Background::H2 => "exceed",
            Background::S2 => "stay below",
        };
        violations.push(TargetViolation {
            vertex: None,
            value: total,
            message: format!("total curvature must {relation} 2πχ = {two_pi_chi}"),
        });
    }
    TargetReport { ok: violations.is_empty(), total, two_pi_chi, violations }
}

/// `max_i |K̄_i − K_i|`, zero for empty input.
pub fn curvature_error(k: &[f64], target: &[f64]) -> f64 {
    assert_eq!(k.len(), target.len());
    k.iter().zip(target).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Converged,
    MaxIterations,
    Degenerate,
    SolverFailure,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub status: FlowStatus,
    pub iterations: usize,
    pub u_final: Vec<f64>,
    pub metric_final: CirclePackingMetric,
    pub lengths: Vec<f64>,
    /// Connectivity after surgery; equal to the input mesh without it.
    pub mesh: Mesh,
    /// Curvature error before the first step and after every step.
    pub error_history: Vec<f64>,
    pub flips: usize,
    pub surgery_capped: bool,
}

impl FlowResult {
    pub fn final_error(&self) -> f64 {
        *self.error_history.last().unwrap_or(&f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SurgeryOutcome {
    pub flips: usize,
    /// The `E²` flip budget ran out before the triangulation became Delaunay.
    pub capped: bool,
}

fn opposite_angle(mesh: &Mesh, lengths: &[f64], face: usize, slot: usize) -> Result<f64> {
    let l = mesh.face_edges(face).map(|e| lengths[e]);
    Ok(corner_angles(l, Background::E2)?[slot])
}

fn corner_at(mesh: &Mesh, lengths: &[f64], face: usize, v: usize) -> Result<f64> {
    let slot = mesh.face_vertices(face).iter().position(|&w| w == v).expect("vertex on face");
    opposite_angle(mesh, lengths, face, slot)
}

/// Flips interior edges whose opposite angles sum to more than π, keeping every
/// other length. The new diagonal gets its length from the unfolded quad and a
/// fresh η so the metric reproduces it.
pub fn delaunay_surgery(
    mesh: &mut Mesh,
    metric: &mut CirclePackingMetric,
    u: &[f64],
    lengths: &mut [f64],
) -> Result<SurgeryOutcome> {
    if metric.bg != Background::E2 || metric.epsilon.iter().any(|&e| e != Epsilon::Zero) {
        return Err(Error::InvalidInput("Delaunay surgery supports Euclidean Yamabe metrics only".into()));
    }
    let ne = mesh.num_edges();
    let cap = ne * ne;
    let mut queue: VecDeque<usize> = (0..ne).collect();
    let mut queued = vec![true; ne];
    let mut flips = 0;
    while let Some(e) = queue.pop_front() {
        queued[e] = false;
        let [Some((f0, s0)), Some((f1, s1))] = mesh.edge_opposite_corners(e) else { continue };
        let opposite = opposite_angle(mesh, lengths, f0, s0)? + opposite_angle(mesh, lengths, f1, s1)?;
        if opposite <= PI + 1e-12 {
            continue;
        }
        if flips == cap {
            warn!("surgery stopped after {flips} flips");
            return Ok(SurgeryOutcome { flips, capped: true });
        }
        let (a, _) = mesh.edge(e).vertices;
        let c = mesh.face_vertices(f0)[s0];
        let d = mesh.face_vertices(f1)[s1];
        let at_a = corner_at(mesh, lengths, f0, a)? + corner_at(mesh, lengths, f1, a)?;
        let l_ac = lengths[mesh.edge_between(a, c).expect("quad edge")];
        let l_ad = lengths[mesh.edge_between(a, d).expect("quad edge")];
        let diagonal = (l_ac * l_ac + l_ad * l_ad - 2.0 * l_ac * l_ad * at_a.cos()).sqrt();
        let ring: Vec<usize> =
            [f0, f1].iter().flat_map(|&f| mesh.face_edges(f)).filter(|&x| x != e).collect();
        if !mesh.flip_edge(e) {
            continue;
        }
        flips += 1;
        lengths[e] = diagonal;
        metric.eta[e] = solve_eta(diagonal, u[c], u[d], Epsilon::Zero, Epsilon::Zero, Background::E2);
        for x in ring {
            if !queued[x] {
                queued[x] = true;
                queue.push_back(x);
            }
        }
    }
    Ok(SurgeryOutcome { flips, capped: false })
}

struct Trial {
    u: Vec<f64>,
    state: ConformalState,
    k: Vec<f64>,
    error: f64,
    step: f64,
}

fn evaluate(mesh: &Mesh, metric: &CirclePackingMetric, u: Vec<f64>, target: &[f64]) -> Option<Trial> {
    let state = ConformalState::new(mesh, metric, u).ok()?;
    let k = vertex_curvatures(mesh, &state);
    let error = curvature_error(&k, target);
    Some(Trial { u: state.u.clone(), state, k, error, step: 0.0 })
}

/// Drives the curvature of `metric0` towards `target`.
///
/// Invalid input (mesh/metric mismatch, inadmissible target) is an `Err`;
/// every runtime outcome is reported through [`FlowResult::status`].
pub fn run(mesh: &Mesh, metric0: &CirclePackingMetric, target: &TargetCurvature, cfg: &FlowConfig) -> Result<FlowResult> {
    metric0.validate(mesh)?;
    let report = validate_target(mesh, target, metric0.bg);
    if !report.ok {
        let first = &report.violations[0];
        return Err(Error::InvalidInput(format!("target curvature rejected: {}", first.message)));
    }
    if !(cfg.step_length > 0.0 && cfg.step_length <= 1.0) || !(cfg.threshold > 0.0) {
        return Err(Error::InvalidInput("step length must lie in (0, 1] and threshold be positive".into()));
    }
    let surgery = cfg.surgery == Surgery::DelaunayE2;
    if surgery && (metric0.bg != Background::E2 || metric0.scheme != Scheme::Yamabe) {
        return Err(Error::InvalidInput("Delaunay surgery supports Euclidean Yamabe metrics only".into()));
    }
    let bg = metric0.bg;
    let target = &target.0;
    let mut mesh = mesh.clone();
    let mut metric = metric0.clone();
    let mut current = evaluate(&mesh, &metric, metric.conformal_factors()?, target)
        .ok_or_else(|| Error::InvalidInput("initial metric is degenerate".into()))?;

    let mut history = vec![current.error];
    let mut log = String::from("iteration,max_error,step_used,flips\n");
    let _ = writeln!(log, "0,{:e},0,0", current.error);
    let mut status = FlowStatus::MaxIterations;
    let mut iterations = 0;
    let mut total_flips = 0;
    let mut capped = false;

    loop {
        if current.error <= cfg.threshold {
            status = FlowStatus::Converged;
            break;
        }
        if iterations == cfg.max_iterations {
            break;
        }
        iterations += 1;

        let mut flips = 0;
        if surgery {
            let mut lengths = current.state.lengths.clone();
            let outcome = delaunay_surgery(&mut mesh, &mut metric, &current.u, &mut lengths)?;
            flips = outcome.flips;
            total_flips += flips;
            capped |= outcome.capped;
            if flips > 0 {
                match evaluate(&mesh, &metric, current.u.clone(), target) {
                    Some(t) => current = t,
                    None => {
                        status = FlowStatus::Degenerate;
                        break;
                    }
                }
            }
        }

        let residual: Vec<f64> = target.iter().zip(&current.k).map(|(t, k)| t - k).collect();
        let mut direction = match cfg.method {
            Method::Gradient => residual,
            Method::Newton => {
                let hessian = curvature_hessian(&mesh, &metric, &current.state)?;
                let constraint = if bg == Background::E2 { Constraint::ZeroMean } else { Constraint::None };
                let sys = LinearSystem { matrix: &hessian, rhs: residual, constraint };
                match solve(&sys, DEFAULT_TOL, default_max_iter(mesh.num_vertices())) {
                    Ok(x) => x,
                    Err(err) => {
                        warn!("iteration {iterations}: linear solve failed: {err}");
                        status = FlowStatus::SolverFailure;
                        break;
                    }
                }
            }
        };
        if bg == Background::E2 {
            // keep the mean of u fixed: lengths only scale along constants
            let mean = direction.iter().sum::<f64>() / direction.len() as f64;
            direction.iter_mut().for_each(|x| *x -= mean);
        }

        let mut step = cfg.step_length;
        let mut accepted = None;
        let mut best: Option<Trial> = None;
        let attempts = if cfg.backtracking { 21 } else { 1 };
        for _ in 0..attempts {
            let u: Vec<f64> = current.u.iter().zip(&direction).map(|(x, d)| x + step * d).collect();
            if let Some(mut trial) = evaluate(&mesh, &metric, u, target) {
                trial.step = step;
                if !cfg.backtracking || trial.error <= current.error {
                    accepted = Some(trial);
                    break;
                }
                if best.as_ref().is_none_or(|b| trial.error < b.error) {
                    best = Some(trial);
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted.or(best) else {
            warn!("iteration {iterations}: metric degenerates along the update");
            status = FlowStatus::Degenerate;
            break;
        };
        debug!("iteration {iterations}: error {:e}, step {}", next.error, next.step);
        let _ = writeln!(log, "{iterations},{:e},{},{flips}", next.error, next.step);
        history.push(next.error);
        current = next;
    }
    info!("flow finished: {status:?} after {iterations} iterations, error {:e}", current.error);

    if let Some(path) = &cfg.log_path {
        std::fs::write(path, log).map_err(|source| Error::Io { path: path.clone(), source })?;
    }
    let metric_final = metric.with_factors(&current.u)?;
    Ok(FlowResult {
        status,
        iterations,
        lengths: current.state.lengths.clone(),
        u_final: current.u,
        metric_final,
        mesh,
        error_history: history,
        flips: total_flips,
        surgery_capped: capped,
    })
}

/// Recomputes lengths, angles and curvatures of `metric` at `u` from scratch
/// and returns the curvature error.
pub fn certify(mesh: &Mesh, metric: &CirclePackingMetric, u: &[f64], target: &TargetCurvature) -> Result<f64> {
    let lengths: Vec<f64> = (0..mesh.num_edges())
        .map(|e| metric.edge_length_of(mesh, u, e))
        .collect::<Result<_>>()?;
    let mut k: Vec<f64> = (0..mesh.num_vertices())
        .map(|v| if mesh.is_boundary_vertex(v) { PI } else { TAU })
        .collect();
    for f in 0..mesh.num_faces() {
        let theta = corner_angles(mesh.face_edges(f).map(|e| lengths[e]), metric.bg)?;
        for (v, t) in mesh.face_vertices(f).into_iter().zip(theta) {
            k[v] -= t;
        }
    }
    Ok(curvature_error(&k, &target.0))
}
