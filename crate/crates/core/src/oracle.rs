//! Central-difference oracles for the derivative formulas, and seeded random
//! face samplers to drive them.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{corner_angles, edge_length, gamma_from_u, solve_eta, u_from_gamma, Background, Epsilon, Scheme};
use crate::hessian::{face_hessian_analytic, face_hessian_geometric_h2, face_hessian_geometric_s2};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const ANGLE_MARGIN: f64 = 0.05;

fn face_lengths(u: [f64; 3], eta: [f64; 3], eps: [Epsilon; 3], bg: Background) -> Result<[f64; 3]> {
    let mut l = [0.0; 3];
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        l[k] = edge_length(u[i], u[j], eta[k], eps[i], eps[j], bg)?;
    }
    Ok(l)
}

/// Corner angles of the face with conformal factors `u`; `eta[k]` belongs to the edge opposite corner `k`.
pub fn face_angles_at(u: [f64; 3], eta: [f64; 3], eps: [Epsilon; 3], bg: Background) -> Result<[f64; 3]> {
    corner_angles(face_lengths(u, eta, eps, bg)?, bg)
}

/// `(θ_a(u + h e_b) − θ_a(u − h e_b)) / 2h`.
pub fn fd_face_hessian(u: [f64; 3], eta: [f64; 3], eps: [Epsilon; 3], bg: Background, h: f64) -> Result<Matrix3<f64>> {
    let mut m = Matrix3::zeros();
    for b in 0..3 {
        let eval = |dir: f64| {
            let mut v = u;
            v[b] += dir * h;
            face_angles_at(v, eta, eps, bg)
                .map_err(|e| Error::DegenerateNeighborhood(format!("u = {v:?}: {e}")))
        };
        let (plus, minus) = (eval(1.0)?, eval(-1.0)?);
        for a in 0..3 {
            m[(a, b)] = (plus[a] - minus[a]) / (2.0 * h);
        }
    }
    Ok(m)
}

/// Richardson combination `(4 D(h) − D(2h)) / 3` of two central differences,
/// fourth order in `h`. Used where the Hessian entries are large enough that the
/// `h²` truncation of a single quotient shows up at the 1e-6 level.
pub fn fd_face_hessian_extrapolated(
    u: [f64; 3],
    eta: [f64; 3],
    eps: [Epsilon; 3],
    bg: Background,
    h: f64,
) -> Result<Matrix3<f64>> {
    let fine = fd_face_hessian(u, eta, eps, bg, h)?;
    let coarse = fd_face_hessian(u, eta, eps, bg, 2.0 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

pub fn fd_edge_length_derivative(
    u_i: f64,
    u_j: f64,
    eta: f64,
    eps_i: Epsilon,
    eps_j: Epsilon,
    bg: Background,
    h: f64,
) -> Result<(f64, f64)> {
    let l = |a: f64, b: f64| {
        edge_length(a, b, eta, eps_i, eps_j, bg).map_err(|e| Error::DegenerateNeighborhood(e.to_string()))
    };
    let di = (l(u_i + h, u_j)? - l(u_i - h, u_j)?) / (2.0 * h);
    let dj = (l(u_i, u_j + h)? - l(u_i, u_j - h)?) / (2.0 * h);
    Ok((di, dj))
}

/// Entrywise error relative to the largest reference entry.
pub fn matrix_rel_error(got: &Matrix3<f64>, reference: &Matrix3<f64>) -> f64 {
    let scale = reference.amax().max(f64::MIN_POSITIVE);
    (got - reference).amax() / scale
}

/// As [`matrix_rel_error`], over the off-diagonal entries only.
pub fn off_diagonal_rel_error(got: &Matrix3<f64>, reference: &Matrix3<f64>) -> f64 {
    let mut diff: f64 = 0.0;
    let mut scale: f64 = f64::MIN_POSITIVE;
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                diff = diff.max((got[(a, b)] - reference[(a, b)]).abs());
                scale = scale.max(reference[(a, b)].abs());
            }
        }
    }
    diff / scale
}

/// One face of a circle packing metric with everything derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FaceSample {
    pub u: [f64; 3],
    pub gamma: [f64; 3],
    pub eps: [Epsilon; 3],
    /// `eta[k]` and `l[k]` belong to the edge opposite corner `k`.
    pub eta: [f64; 3],
    pub l: [f64; 3],
    pub theta: [f64; 3],
}

/// Seeded generator of valid faces for one background and scheme.
///
/// Radii are uniform in [0.2, 2] (E², H²) or [0.2, 1.2] (S²). Tangential and
/// Thurston faces take η = 1 and η ∈ [0, 1]; the other schemes draw edge lengths
/// `ρ (γ_i + γ_j)` with ρ ∈ [0.7, 1.6] and solve for η, rejecting η ≤ 0.
/// Faces with a corner angle within [`ANGLE_MARGIN`] of 0 or π are rejected:
/// near such faces the difference quotients themselves lose their accuracy.
pub struct FaceSampler {
    bg: Background,
    scheme: Scheme,
    rng: ChaCha8Rng,
    pub rejected: usize,
}

impl FaceSampler {
    pub fn new(bg: Background, scheme: Scheme, seed: u64) -> FaceSampler {
        FaceSampler { bg, scheme, rng: ChaCha8Rng::seed_from_u64(seed), rejected: 0 }
    }

    pub fn sample(&mut self) -> FaceSample {
        loop {
            if let Some(s) = self.try_sample() {
                return s;
            }
            self.rejected += 1;
        }
    }

    fn try_sample(&mut self) -> Option<FaceSample> {
        let bg = self.bg;
        let hi = if bg == Background::S2 { 1.2 } else { 2.0 };
        let gamma: [f64; 3] = std::array::from_fn(|_| self.rng.gen_range(0.2..hi));
        let eps: [Epsilon; 3] = match self.scheme.uniform_epsilon() {
            Some(e) => [e; 3],
            None => std::array::from_fn(|_| Epsilon::ALL[self.rng.gen_range(0..3)]),
        };
        let u = gamma.map(|g| u_from_gamma(g, bg).ok());
        let u = [u[0]?, u[1]?, u[2]?];
        let mut eta = [0.0; 3];
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            eta[k] = match self.scheme {
                Scheme::Tangential => 1.0,
                Scheme::Thurston => self.rng.gen_range(0.0..=1.0),
                _ => {
                    let rho = self.rng.gen_range(0.7..1.6);
                    let l = rho * (gamma[i] + gamma[j]);
                    solve_eta(l, u[i], u[j], eps[i], eps[j], bg)
                }
            };
            if !self.scheme.eta_in_range(eta[k]) {
                return None;
            }
        }
        let l = face_lengths(u, eta, eps, bg).ok()?;
        let theta = corner_angles(l, bg).ok()?;
        if theta.iter().any(|t| !(ANGLE_MARGIN..=PI - ANGLE_MARGIN).contains(t)) {
            return None;
        }
        debug_assert!(gamma.iter().zip(u).all(|(g, x)| (gamma_from_u(x, bg).unwrap() - g).abs() < 1e-9));
        Some(FaceSample { u, gamma, eps, eta, l, theta })
    }

    pub fn take(&mut self, n: usize) -> Vec<FaceSample> {
        (0..n).map(|_| self.sample()).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub samples: usize,
    /// Faces skipped because the sampler or the route under test rejected them.
    pub rejected: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub max_asymmetry: f64,
    pub worst_case: Option<FaceSample>,
}

impl OracleReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Outcome {
    abs: f64,
    rel: f64,
    asym: f64,
}

fn summarize(samples: &[FaceSample], outcomes: Vec<Option<Outcome>>, rejected: usize) -> OracleReport {
    let mut report = OracleReport {
        samples: 0,
        rejected,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        max_asymmetry: 0.0,
        worst_case: None,
    };
    for (s, o) in samples.iter().zip(outcomes) {
        let Some(o) = o else {
            report.rejected += 1;
            continue;
        };
        report.samples += 1;
        report.max_abs_error = report.max_abs_error.max(o.abs);
        report.max_asymmetry = report.max_asymmetry.max(o.asym);
        if o.rel > report.max_rel_error || report.worst_case.is_none() {
            report.max_rel_error = report.max_rel_error.max(o.rel);
            report.worst_case = Some(*s);
        }
    }
    report
}

/// Draws faces until `n` of them are accepted by `check`, giving up after
/// `20 n` draws.
fn audit<F>(bg: Background, scheme: Scheme, n: usize, seed: u64, check: F) -> OracleReport
where
    F: Fn(&FaceSample) -> Option<Outcome> + Sync,
{
    let mut sampler = FaceSampler::new(bg, scheme, seed);
    let mut samples = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut accepted = 0;
    let mut drawn = 0;
    while accepted < n && drawn < 20 * n.max(1) {
        let batch = sampler.take(n - accepted);
        drawn += batch.len();
        let results: Vec<Option<Outcome>> = batch.par_iter().map(&check).collect();
        accepted += results.iter().filter(|o| o.is_some()).count();
        samples.extend(batch);
        outcomes.extend(results);
    }
    summarize(&samples, outcomes, sampler.rejected)
}

/// Analytic face Hessian against central differences on `n` accepted faces.
pub fn audit_analytic(bg: Background, scheme: Scheme, n: usize, seed: u64, h: f64) -> OracleReport {
    audit(bg, scheme, n, seed, |s| {
        let m = face_hessian_analytic(s.l, s.theta, s.gamma, s.eps, bg).ok()?.0;
        let fd = fd_face_hessian(s.u, s.eta, s.eps, bg, h).ok()?;
        let asym = crate::hessian::FaceHessian(m).max_asymmetry();
        Some(Outcome { abs: (m - fd).amax(), rel: matrix_rel_error(&m, &fd), asym })
    })
}

/// Closed-form H²/S² off-diagonals against extrapolated differences with base
/// step `h`; faces whose power circle is undefined count as rejected.
pub fn audit_closed_form(bg: Background, scheme: Scheme, n: usize, seed: u64, h: f64) -> OracleReport {
    assert!(bg != Background::E2, "closed forms exist for H2 and S2");
    audit(bg, scheme, n, seed, |s| {
        let m = match bg {
            Background::H2 => face_hessian_geometric_h2(s.l, s.gamma, s.eps),
            _ => face_hessian_geometric_s2(s.l, s.gamma, s.eps),
        }
        .ok()?
        .0;
        let fd = fd_face_hessian_extrapolated(s.u, s.eta, s.eps, bg, h).ok()?;
        let mut abs: f64 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    abs = abs.max((m[(a, b)] - fd[(a, b)]).abs());
                }
            }
        }
        let asym = crate::hessian::FaceHessian(m).max_asymmetry();
        Some(Outcome { abs, rel: off_diagonal_rel_error(&m, &fd), asym })
    })
}
