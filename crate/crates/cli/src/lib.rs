//! `flow` and `check` subcommands of the `ricci` binary.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use log::{info, warn};
use ricci_core::flow::{self, FlowConfig, FlowResult, FlowStatus, Method, Surgery, TargetCurvature, TargetReport};
use ricci_core::geometry::{gauss_bonnet_residual, init_circle_packing, total_area, vertex_curvatures};
use ricci_core::hessian::face_hessian_analytic;
use ricci_core::layout::{embed_disk, IsometryAudit};
use ricci_core::mesh::TopologyReport;
use ricci_core::oracle::{fd_face_hessian, matrix_rel_error, DEFAULT_STEP};
use ricci_core::{obj, Background, CirclePackingMetric, ConformalState, Mesh, Scheme};
use serde::Serialize;

/// Largest interior |K| accepted when laying out a converged E² disk.
pub const LAYOUT_FLATNESS: f64 = 1e-4;
pub const GAUSS_BONNET_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-5;
/// Faces checked by `check`, evenly spaced through the face list.
pub const ORACLE_FACES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ricci_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("target file {path}: {message}")]
    TargetFile { path: PathBuf, message: String },
    #[error("infeasible target curvature")]
    InfeasibleTarget(TargetReport),
    #[error("{0}")]
    AuditFailed(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetSpec {
    Uniform,
    ZeroInterior,
    File(PathBuf),
}

impl FromStr for TargetSpec {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "uniform" => TargetSpec::Uniform,
            "zero-interior" => TargetSpec::ZeroInterior,
            path => TargetSpec::File(PathBuf::from(path)),
        })
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Uniform => f.write_str("uniform"),
            TargetSpec::ZeroInterior => f.write_str("zero-interior"),
            TargetSpec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Newton,
    Gradient,
}

#[derive(Clone, Debug, Args)]
pub struct CliConfig {
    /// Triangle mesh in OBJ format.
    #[arg(long)]
    pub input: PathBuf,
    /// Background geometry: e2, h2 or s2.
    #[arg(long, default_value = "e2")]
    pub geometry: Background,
    /// tangential, thurston, inversive, yamabe, virtual or mixed.
    #[arg(long, default_value = "yamabe")]
    pub scheme: Scheme,
    /// `uniform`, `zero-interior`, or a JSON file holding one curvature per vertex.
    #[arg(long, default_value = "uniform")]
    pub target: TargetSpec,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "newton")]
    pub method: MethodArg,
    /// Flip edges to keep the E² triangulation Delaunay during the flow.
    #[arg(long)]
    pub surgery: bool,
    /// Output path prefix; `<prefix>.metric.json`, `<prefix>.report.json`, `<prefix>.obj`.
    #[arg(long, default_value = "ricci")]
    pub output: PathBuf,
    /// CSV log of the iterations.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

impl CliConfig {
    fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            step_length: self.step,
            threshold: self.threshold,
            max_iterations: self.max_iter,
            method: match self.method {
                MethodArg::Newton => Method::Newton,
                MethodArg::Gradient => Method::Gradient,
            },
            surgery: if self.surgery { Surgery::DelaunayE2 } else { Surgery::Off },
            log_path: self.log.clone(),
            ..FlowConfig::default()
        }
    }

    fn output_path(&self, suffix: &str) -> PathBuf {
        let mut s = self.output.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowReport {
    pub status: FlowStatus,
    pub converged: bool,
    pub iterations: usize,
    pub final_error: f64,
    pub error_history: Vec<f64>,
    pub flips: usize,
    pub surgery_capped: bool,
    pub geometry: Background,
    pub scheme: Scheme,
    pub target: String,
    pub topology: TopologyReport,
    pub isometry_audit: Option<IsometryAudit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout_error: Option<String>,
}

/// Outcome of a subcommand: the JSON written to standard output and the exit code.
pub struct Outcome {
    pub json: String,
    pub code: i32,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn initial_metric(cfg: &CliConfig, mesh: &Mesh) -> Result<CirclePackingMetric, CliError> {
    let lengths = mesh.embedded_edge_lengths();
    Ok(init_circle_packing(mesh, &lengths, cfg.scheme, cfg.geometry)?)
}

pub fn load_target(
    spec: &TargetSpec,
    mesh: &Mesh,
    metric: &CirclePackingMetric,
) -> Result<TargetCurvature, CliError> {
    match spec {
        TargetSpec::Uniform => Ok(TargetCurvature::uniform(mesh, metric.bg)),
        TargetSpec::ZeroInterior => {
            let state = ConformalState::new(mesh, metric, metric.conformal_factors()?)?;
            Ok(TargetCurvature::zero_interior(mesh, &vertex_curvatures(mesh, &state))?)
        }
        TargetSpec::File(path) => {
            let err = |message: String| CliError::TargetFile { path: path.clone(), message };
            let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
            let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
            if values.len() != mesh.num_vertices() {
                return Err(err(format!("{} values for {} vertices", values.len(), mesh.num_vertices())));
            }
            Ok(TargetCurvature(values))
        }
    }
}

pub fn cmd_flow(cfg: &CliConfig) -> Result<Outcome, CliError> {
    let mesh = obj::load_obj(&cfg.input)?;
    let topology = mesh.topology();
    info!(
        "loaded {}: {} vertices, {} faces, χ = {}",
        cfg.input.display(),
        topology.num_vertices,
        topology.num_faces,
        topology.euler_characteristic
    );
    let metric = initial_metric(cfg, &mesh)?;
    let target = load_target(&cfg.target, &mesh, &metric)?;
    let validation = flow::validate_target(&mesh, &target, cfg.geometry);
    if !validation.ok {
        return Err(CliError::InfeasibleTarget(validation));
    }

    let result = flow::run(&mesh, &metric, &target, &cfg.flow_config())?;
    info!("{:?} after {} iterations, error {:e}", result.status, result.iterations, result.final_error());

    let doc = result.metric_final.to_document(&result.mesh, Some(&result.u_final));
    write(&cfg.output_path(".metric.json"), &to_json(&doc))?;

    let (isometry_audit, layout_error) = layout(cfg, &result)?;
    let report = FlowReport {
        status: result.status,
        converged: result.status == FlowStatus::Converged,
        iterations: result.iterations,
        final_error: result.final_error(),
        error_history: result.error_history.clone(),
        flips: result.flips,
        surgery_capped: result.surgery_capped,
        geometry: cfg.geometry,
        scheme: cfg.scheme,
        target: cfg.target.to_string(),
        topology,
        isometry_audit,
        layout_error,
    };
    let json = to_json(&report);
    write(&cfg.output_path(".report.json"), &json)?;
    let code = if report.converged { 0 } else { 2 };
    Ok(Outcome { json, code })
}

/// Lays out converged E² disks and writes `<prefix>.obj` with texture coordinates.
fn layout(cfg: &CliConfig, result: &FlowResult) -> Result<(Option<IsometryAudit>, Option<String>), CliError> {
    let topo = result.mesh.topology();
    if cfg.geometry != Background::E2 || topo.euler_characteristic != 1 || topo.num_boundary_loops != 1 {
        return Ok((None, None));
    }
    match embed_disk(&result.mesh, &result.lengths, LAYOUT_FLATNESS) {
        Ok(embedding) => {
            let audit = embedding.audit(&result.mesh, &result.lengths);
            obj::save_obj(&result.mesh, cfg.output_path(".obj"), Some(&embedding.uv))?;
            Ok((Some(audit), None))
        }
        Err(e) => {
            warn!("no layout: {e}");
            Ok((None, Some(e.to_string())))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussBonnetAudit {
    pub total_curvature: f64,
    pub total_area: f64,
    pub two_pi_chi: f64,
    pub residual: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleAudit {
    pub faces: usize,
    pub step: f64,
    pub max_rel_error: f64,
    pub worst_face: Option<usize>,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub geometry: Background,
    pub scheme: Scheme,
    pub topology: TopologyReport,
    pub gauss_bonnet: GaussBonnetAudit,
    pub oracle: OracleAudit,
    pub ok: bool,
}

fn oracle_audit(mesh: &Mesh, metric: &CirclePackingMetric, state: &ConformalState) -> Result<OracleAudit, CliError> {
    let nf = mesh.num_faces();
    let count = nf.min(ORACLE_FACES);
    let mut audit = OracleAudit { faces: count, step: DEFAULT_STEP, max_rel_error: 0.0, worst_face: None, ok: true };
    for i in 0..count {
        let f = i * nf / count;
        let vs = mesh.face_vertices(f);
        let edges = mesh.face_edges(f);
        let analytic = face_hessian_analytic(
            state.face_lengths(mesh, f),
            state.angles[f],
            vs.map(|v| metric.gamma[v]),
            vs.map(|v| metric.epsilon[v]),
            metric.bg,
        )?;
        let fd = fd_face_hessian(
            vs.map(|v| state.u[v]),
            edges.map(|e| metric.eta[e]),
            vs.map(|v| metric.epsilon[v]),
            metric.bg,
            DEFAULT_STEP,
        )?;
        let rel = matrix_rel_error(&analytic.0, &fd);
        if audit.worst_face.is_none() || rel > audit.max_rel_error {
            audit.max_rel_error = rel;
            audit.worst_face = Some(f);
        }
    }
    audit.ok = audit.max_rel_error <= ORACLE_TOL;
    Ok(audit)
}

pub fn cmd_check(cfg: &CliConfig) -> Result<Outcome, CliError> {
    let mesh = obj::load_obj(&cfg.input)?;
    let topology = mesh.topology();
    let metric = initial_metric(cfg, &mesh)?;
    let state = ConformalState::new(&mesh, &metric, metric.conformal_factors()?)?;
    let k = vertex_curvatures(&mesh, &state);
    let area = total_area(&mesh, &state, cfg.geometry);
    let residual = gauss_bonnet_residual(&mesh, &k, area, cfg.geometry);
    let gauss_bonnet = GaussBonnetAudit {
        total_curvature: k.iter().sum(),
        total_area: area,
        two_pi_chi: std::f64::consts::TAU * topology.euler_characteristic as f64,
        residual,
        ok: residual.abs() <= GAUSS_BONNET_TOL,
    };
    let oracle = oracle_audit(&mesh, &metric, &state)?;
    let ok = gauss_bonnet.ok && oracle.ok;
    let report = CheckReport { geometry: cfg.geometry, scheme: cfg.scheme, topology, gauss_bonnet, oracle, ok };
    Ok(Outcome { json: to_json(&report), code: if ok { 0 } else { 1 } })
}

/// Caps the global rayon pool at `RICCI_THREADS` workers when the variable is set.
pub fn configure_threads(value: Option<&str>) -> Result<(), String> {
    let Some(value) = value else { return Ok(()) };
    let n: usize = value.trim().parse().map_err(|_| format!("RICCI_THREADS must be a positive integer, got `{value}`"))?;
    if n == 0 {
        return Err("RICCI_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ricci_core::shapes;

    #[test]
    fn target_spec_parsing() {
        assert_eq!("uniform".parse::<TargetSpec>().unwrap(), TargetSpec::Uniform);
        assert_eq!("zero-interior".parse::<TargetSpec>().unwrap(), TargetSpec::ZeroInterior);
        assert_eq!("k.json".parse::<TargetSpec>().unwrap(), TargetSpec::File("k.json".into()));
    }

    #[test]
    fn target_file_length_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        fs::write(&path, "[1.0, 2.0]").unwrap();
        let mesh = shapes::tetrahedron();
        let metric = init_circle_packing(&mesh, &mesh.embedded_edge_lengths(), Scheme::Yamabe, Background::E2).unwrap();
        let err = load_target(&TargetSpec::File(path), &mesh, &metric).unwrap_err();
        assert!(err.to_string().contains("2 values for 4 vertices"), "{err}");
    }

    #[test]
    fn output_paths_append_suffix() {
        let cfg = CliConfig {
            input: "m.obj".into(),
            geometry: Background::E2,
            scheme: Scheme::Yamabe,
            target: TargetSpec::Uniform,
            step: 0.5,
            threshold: 1e-6,
            max_iter: 200,
            method: MethodArg::Newton,
            surgery: false,
            output: "out/run.v1".into(),
            log: None,
        };
        assert_eq!(cfg.output_path(".metric.json"), PathBuf::from("out/run.v1.metric.json"));
        let flow = cfg.flow_config();
        assert_eq!(flow.surgery, Surgery::Off);
        assert!(flow.backtracking);
    }

    #[test]
    fn thread_variable_is_validated() {
        assert!(configure_threads(None).is_ok());
        assert!(configure_threads(Some("zero")).is_err());
        assert!(configure_threads(Some("0")).is_err());
    }
}
