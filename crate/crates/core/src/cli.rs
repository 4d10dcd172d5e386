//! Batch front end: one subcommand per verification, JSON report out.
//!
//! Exit codes: 0 when every residual is within tolerance, 1 on tolerance or
//! numerical failure (the report is still written), 2 on an invalid config.

use crate::anomaly::{anomaly_verify, index, AnomalyCase, AnomalyConfig};
use crate::circle_calculus::{annulus_transfer, apply_transfer, disk_alvarez_operator, BlockCircleOperator};
use crate::error::Error;
use crate::genus1::{bosonization_verify, fay_constants, insertion_verify, Genus1Data, InsertionConfig};
use crate::glue::{
    bfk_verify, jump_asymptotics_sphere_meromorphic, jump_asymptotics_torus, sphere_equator_check,
    zero_mode_bfk_verify, CutDecomposition, Framing,
};
use crate::mat2::{c, Mat2};
use crate::regdet::{det_q, Regularizer};
use crate::special::{dedekind_eta, riemann_zeta_deriv};
use crate::spectra::{
    check_heat_coefficients, enumerate_spectrum, zeta_det, BoundaryCondition, Bundle, ModelGeometry, SpectrumGenerator,
};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA_VERSION: &str = "gluedet-report/1";

#[derive(Parser, Debug)]
#[command(name = "gluedet", version, about = "Gluing and determinant checks on model Riemann surfaces")]
struct Cli {
    /// worker threads for the numeric kernels (falls back to GLUE_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// flat JSON config; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON report path (stdout if absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV side output (spectrum: k, lambda, mult)
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
enum Command {
    Spectrum(RunConfig),
    Det(RunConfig),
    Bfk(RunConfig),
    ZeroModes(RunConfig),
    Degenerate(RunConfig),
    Anomaly(RunConfig),
    Index(RunConfig),
    Sphere(RunConfig),
    Bosonize(RunConfig),
    Insertion(RunConfig),
    Selftest(RunConfig),
}

impl Command {
    fn config(&self) -> RunConfig {
        match self {
            Command::Spectrum(c)
            | Command::Det(c)
            | Command::Bfk(c)
            | Command::ZeroModes(c)
            | Command::Degenerate(c)
            | Command::Anomaly(c)
            | Command::Index(c)
            | Command::Sphere(c)
            | Command::Bosonize(c)
            | Command::Insertion(c)
            | Command::Selftest(c) => c.clone(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Det(_) => "det",
            Command::Bfk(_) => "bfk",
            Command::ZeroModes(_) => "zero-modes",
            Command::Degenerate(_) => "degenerate",
            Command::Anomaly(_) => "anomaly",
            Command::Index(_) => "index",
            Command::Sphere(_) => "sphere",
            Command::Bosonize(_) => "bosonize",
            Command::Insertion(_) => "insertion",
            Command::Selftest(_) => "selftest",
        }
    }
}

/// Every parameter any subcommand reads. Unset entries get per-command defaults
/// before the run, and the report embeds the resolved config.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// torus, cylinder, disk, annulus, sphere, hemisphere
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_in: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_out: Option<f64>,
    /// closed, alvarez, dirichlet, neumann
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bc: Option<String>,
    /// trivial or K^q
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_im: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// marked points as re,im,re,im,...
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    /// max_abs or sqrt_shift
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_mass: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub twist: Option<i32>,
    /// constant_rescaling or disk_hemisphere
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    /// the constant sigma = c of a rescaling
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Serialize)]
struct Payload<'a> {
    schema_version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    result: Value,
    residual: Option<f64>,
    tolerance: f64,
    pass: bool,
    error: Option<String>,
}

struct Outcome {
    result: Value,
    residual: Option<f64>,
    pass: Option<bool>,
    csv: Option<String>,
}

impl Outcome {
    fn residual(result: Value, residual: f64) -> Self {
        Outcome { result, residual: Some(residual), pass: None, csv: None }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, Error> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn overlay(base: RunConfig, over: RunConfig) -> RunConfig {
    let mut b = serde_json::to_value(base).expect("config serializes");
    let o = serde_json::to_value(over).expect("config serializes");
    if let (Value::Object(bm), Value::Object(om)) = (&mut b, o) {
        for (k, v) in om {
            if !v.is_null() {
                bm.insert(k, v);
            }
        }
    }
    serde_json::from_value(b).expect("merged config deserializes")
}

fn load_config(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn parse_bundle(s: &str) -> Result<Bundle, Error> {
    match s {
        "trivial" | "O" => Ok(Bundle::Trivial),
        _ => {
            let q = s
                .strip_prefix("K^")
                .or_else(|| s.strip_prefix("K"))
                .ok_or_else(|| invalid(format!("unknown bundle {s}")))?;
            let q = if q.is_empty() { 1 } else { q.parse().map_err(|_| invalid(format!("unknown bundle {s}")))? };
            Ok(Bundle::CanonicalPower(q))
        }
    }
}

fn parse_bc(s: &str) -> Result<BoundaryCondition, Error> {
    match s {
        "closed" => Ok(BoundaryCondition::Closed),
        "alvarez" => Ok(BoundaryCondition::AlvarezTrivial),
        "dirichlet" => Ok(BoundaryCondition::Dirichlet),
        "neumann" => Ok(BoundaryCondition::Neumann),
        _ => Err(invalid(format!("unknown boundary condition {s}"))),
    }
}

fn set<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

fn geometry(cfg: &mut RunConfig, default: &str) -> Result<ModelGeometry, Error> {
    let g = match set(&mut cfg.geometry, default.to_string()).as_str() {
        "torus" => ModelGeometry::Torus { a: set(&mut cfg.a, 1.0), b: set(&mut cfg.b, 1.0) },
        "cylinder" => ModelGeometry::Cylinder { a: set(&mut cfg.a, 1.0), b: set(&mut cfg.b, 1.0) },
        "disk" => ModelGeometry::Disk { radius: set(&mut cfg.radius, 1.0) },
        "annulus" => ModelGeometry::Annulus { r_in: set(&mut cfg.r_in, 0.5), r_out: set(&mut cfg.r_out, 1.0) },
        "sphere" => ModelGeometry::Sphere { r: set(&mut cfg.radius, 1.0) },
        "hemisphere" => ModelGeometry::Hemisphere { r: set(&mut cfg.radius, 1.0) },
        other => return Err(invalid(format!("unknown geometry {other}"))),
    };
    g.validate()?;
    Ok(g)
}

fn torus_sides(cfg: &mut RunConfig, default: f64) -> Result<(f64, f64), Error> {
    let g = set(&mut cfg.geometry, "torus".to_string());
    if g != "torus" {
        return Err(invalid(format!("this command needs geometry torus, got {g}")));
    }
    Ok((positive("a", set(&mut cfg.a, default))?, positive("b", set(&mut cfg.b, default))?))
}

fn regularizer(cfg: &mut RunConfig) -> Result<Regularizer, Error> {
    match set(&mut cfg.q, "max_abs".to_string()).as_str() {
        "max_abs" => Ok(Regularizer::default()),
        "sqrt_shift" => Ok(Regularizer::sqrt_shift(positive("q_mass", set(&mut cfg.q_mass, 1.0))?)),
        other => Err(invalid(format!("unknown regularizer {other}"))),
    }
}

fn tau(cfg: &mut RunConfig) -> Result<C64, Error> {
    let t = C64::new(set(&mut cfg.tau_re, 0.0), set(&mut cfg.tau_im, 1.0));
    positive("tau_im", t.im)?;
    Ok(t)
}

fn points(cfg: &mut RunConfig, default: &[f64]) -> Result<Vec<C64>, Error> {
    let p = set(&mut cfg.points, default.to_vec());
    if p.len() % 2 != 0 {
        return Err(invalid("points must be re,im pairs"));
    }
    Ok(p.chunks(2).map(|w| C64::new(w[0], w[1])).collect())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn spectrum_generator(cfg: &mut RunConfig) -> Result<SpectrumGenerator, Error> {
    let geom = geometry(cfg, "disk")?;
    let default_bc = if geom.is_closed() { "closed" } else { "dirichlet" };
    let bc = parse_bc(&set(&mut cfg.bc, default_bc.to_string()))?;
    let lm = positive("lambda_max", set(&mut cfg.lambda_max, 40000.0))?;
    enumerate_spectrum(&geom, bc, 0, lm)
}

fn cmd_spectrum(cfg: &mut RunConfig, want_csv: bool) -> Result<Outcome, Error> {
    let gen = spectrum_generator(cfg)?;
    let fit = check_heat_coefficients(&gen)?;
    let h = gen.heat;
    let residual = [(fit.c_minus1, h.c_minus1), (fit.c_half, h.c_half), (fit.c_zero, h.c_zero)]
        .iter()
        .map(|(f, w)| (f - w).abs())
        .fold(0.0, f64::max);
    let csv = want_csv.then(|| {
        let mut s = String::from("k,lambda,mult\n");
        for (k, (l, m)) in gen.levels.iter().enumerate() {
            s.push_str(&format!("{k},{l:.17e},{m}\n"));
        }
        s
    });
    let first: Vec<Value> = gen.levels.iter().take(12).map(|(l, m)| json!([l, m])).collect();
    let result = json!({
        "label": gen.label,
        "levels": gen.levels.len(),
        "eigenvalues": gen.expanded().len(),
        "dim_ker": gen.dim_ker,
        "heat_model": gen.heat,
        "heat_fit": fit,
        "first_levels": first,
    });
    Ok(Outcome { csv, ..Outcome::residual(result, residual) })
}

fn reference_log_det(geom: &ModelGeometry) -> Option<f64> {
    match *geom {
        ModelGeometry::Torus { a, b } => Some(2.0 * b.ln() + 4.0 * dedekind_eta(C64::new(0.0, b / a)).norm().ln()),
        ModelGeometry::Sphere { r } => Some(0.5 - 4.0 * riemann_zeta_deriv(-1.0) + 4.0 / 3.0 * r.ln()),
        _ => None,
    }
}

fn cmd_det(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let gen = spectrum_generator(cfg)?;
    let geom = geometry(cfg, "disk")?;
    let closed = cfg.bc.as_deref() == Some("closed");
    let lambdas = set(&mut cfg.lambda, vec![0.0]);
    let mut rows = Vec::new();
    let mut residual: f64 = 0.0;
    for &l in &lambdas {
        if !(l >= 0.0) {
            return Err(invalid("lambda must be >= 0"));
        }
        let z = zeta_det(&gen, l)?;
        let reference = if l == 0.0 && closed { reference_log_det(&geom) } else { None };
        residual = residual.max(z.tail_error);
        if let Some(r) = reference {
            residual = residual.max((z.log_det - r).abs());
        }
        rows.push(json!({ "lambda": l, "zeta": z, "reference_log_det": reference }));
    }
    Ok(Outcome::residual(json!({ "label": gen.label, "determinants": rows }), residual))
}

fn cmd_bfk(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let (a, b) = torus_sides(cfg, 1.0)?;
    let q = regularizer(cfg)?;
    let n_max = set(&mut cfg.n_max, 128);
    let cut = CutDecomposition::torus(a, b, Framing::Trivial);
    let mut reports = Vec::new();
    let mut residual: f64 = 0.0;
    for &l in &set(&mut cfg.lambda, vec![1.0]) {
        positive("lambda", l)?;
        let r = bfk_verify(&cut, l, &q, n_max)?;
        residual = residual.max(r.residual.abs());
        reports.push(r);
    }
    Ok(Outcome::residual(json!({ "cut": cut, "reports": reports }), residual))
}

fn cmd_zero_modes(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let (a, b) = torus_sides(cfg, 1.0)?;
    let q = regularizer(cfg)?;
    let k = set(&mut cfg.twist, 1);
    let n_max = set(&mut cfg.n_max, 1024);
    let framing = if k == 0 { Framing::Trivial } else { Framing::Twist(k) };
    let r = zero_mode_bfk_verify(&CutDecomposition::torus(a, b, framing), &q, n_max)?;
    let res = r.residual.abs();
    Ok(Outcome::residual(to_value(&r), res))
}

fn cmd_degenerate(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let q = regularizer(cfg)?;
    let eps = set(&mut cfg.eps, vec![0.5, 0.25, 0.125, 0.0625]);
    let r = match set(&mut cfg.geometry, "torus".to_string()).as_str() {
        "torus" => {
            let (a, b) = torus_sides(cfg, 4.0)?;
            jump_asymptotics_torus(a, b, &eps, &q, set(&mut cfg.n_max, 24))?
        }
        "sphere" => jump_asymptotics_sphere_meromorphic(&eps, &q, set(&mut cfg.n_max, 40))?,
        other => return Err(invalid(format!("degenerate supports torus and sphere, got {other}"))),
    };
    let res = (r.extrapolated - r.target).abs();
    Ok(Outcome::residual(to_value(&r), res))
}

fn cmd_anomaly(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let case = match set(&mut cfg.case, "disk_hemisphere".to_string()).as_str() {
        "disk_hemisphere" => AnomalyCase::DiskToHemisphere,
        "constant_rescaling" => {
            let geometry = geometry(cfg, "torus")?;
            AnomalyCase::ConstantRescaling { geometry, c: set(&mut cfg.rescale, 0.3) }
        }
        other => return Err(invalid(format!("unknown anomaly case {other}"))),
    };
    let d = AnomalyConfig::new(case);
    let ac = AnomalyConfig {
        case,
        n_r: set(&mut cfg.n_r, d.n_r),
        n_theta: set(&mut cfg.n_theta, d.n_theta),
        lambda_max: positive("lambda_max", set(&mut cfg.lambda_max, d.lambda_max))?,
    };
    let r = anomaly_verify(&ac)?;
    let res = r.residual.abs();
    Ok(Outcome::residual(to_value(&r), res))
}

fn cmd_index(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let geom = geometry(cfg, "disk")?;
    let bundle = parse_bundle(&set(&mut cfg.bundle, "trivial".to_string()))?;
    let a = index(&geom, bundle, set(&mut cfg.n_r, 64), set(&mut cfg.n_theta, 32))?;
    let res = (a.curvature_integral_value - a.index as f64).abs();
    let mut result = to_value(&a);
    result["bundle"] = to_value(&bundle);
    Ok(Outcome::residual(result, res))
}

fn cmd_sphere(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let r = sphere_equator_check(positive("radius", set(&mut cfg.radius, 1.0))?)?;
    let res = r.residual.abs();
    Ok(Outcome::residual(to_value(&r), res))
}

const DEFAULT_POINTS: [f64; 6] = [0.21, 0.13, 0.6, 0.41, 0.37, 0.77];

fn cmd_bosonize(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let d = set(&mut cfg.degree, 1);
    if d == 0 || d > 3 {
        return Err(invalid("degree must be 1, 2 or 3"));
    }
    let t = tau(cfg)?;
    let pts = points(cfg, &DEFAULT_POINTS[..2 * d])?;
    let data = Genus1Data::new(t)?;
    let r = bosonization_verify(d, &pts, &data, set(&mut cfg.n_grid, 64))?;
    let res = r.residual.abs();
    Ok(Outcome::residual(to_value(&r), res))
}

fn cmd_insertion(cfg: &mut RunConfig) -> Result<Outcome, Error> {
    let d = set(&mut cfg.degree, 1);
    if d == 0 {
        return Err(invalid("degree must be positive"));
    }
    let t = tau(cfg)?;
    let p = points(cfg, &[0.3, 0.2])?;
    if p.len() != 1 {
        return Err(invalid("insertion takes exactly one point"));
    }
    let mut ic = InsertionConfig::new(d, p[0]);
    ic.n_grid = set(&mut cfg.n_grid, ic.n_grid);
    let r = insertion_verify(&ic, &Genus1Data::new(t)?)?;
    let res = r.residual.abs();
    Ok(Outcome::residual(to_value(&r), res))
}

fn selftest_cases() -> Vec<(&'static str, Result<bool, Error>)> {
    let q = Regularizer::default();
    vec![
        ("det_q(I) = 0", det_q(&BlockCircleOperator::identity(64), &q).map(|r| r.log_det == 0.0)),
        (
            "det_q(2I) = 0 with c_Q = 1",
            det_q(&BlockCircleOperator::identity(64).conjugate_by(Mat2::real(2.0, 0.0, 0.0, 2.0), Mat2::identity()), &q)
                .map(|r| r.log_det.abs() < 1e-13),
        ),
        (
            "disk block at n = 1",
            disk_alvarez_operator(1.0, 4)
                .map(|d| d.block(1) == Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(-1.0, 0.0))),
        ),
        (
            "transfer of zero is S",
            apply_transfer(&BlockCircleOperator::zero(16), 0.3)
                .and_then(|out| annulus_transfer(0.3, 16).map(|(s, _, _)| (-16..=16).all(|n| out.block(n) == s.block(n)))),
        ),
        (
            "zeta determinant of the integers is log sqrt(2 pi)",
            zeta_det(&SpectrumGenerator::synthetic_integers(40000.0), 0.0)
                .map(|z| (z.log_det - 0.5 * (2.0 * PI).ln()).abs() < 1e-9),
        ),
        (
            "index of the trivial bundle on the disk is 1",
            index(&ModelGeometry::Disk { radius: 1.0 }, Bundle::Trivial, 32, 16).map(|a| a.index == 1),
        ),
        ("Fay constant delta_1 = (2 pi)^(2/3)", Ok((fay_constants(1).delta_g - (2.0 * PI).powf(2.0 / 3.0)).abs() < 1e-14)),
    ]
}

fn cmd_selftest() -> Result<Outcome, Error> {
    let cases = selftest_cases();
    let pass = cases.iter().all(|(_, r)| matches!(r, Ok(true)));
    let rows: Vec<Value> = cases
        .iter()
        .map(|(name, r)| match r {
            Ok(ok) => json!({ "name": name, "pass": ok }),
            Err(e) => json!({ "name": name, "pass": false, "error": e.to_string() }),
        })
        .collect();
    Ok(Outcome { result: json!({ "cases": rows }), residual: None, pass: Some(pass), csv: None })
}

fn default_tol(cmd: &Command) -> f64 {
    match cmd {
        Command::Spectrum(_) => 1e-2,
        Command::Bfk(_) | Command::Sphere(_) | Command::Det(_) => 1e-6,
        Command::ZeroModes(_) => 1e-5,
        Command::Degenerate(_) | Command::Bosonize(_) | Command::Insertion(_) => 1e-3,
        Command::Anomaly(_) => 1e-4,
        Command::Index(_) => 1e-8,
        Command::Selftest(_) => 0.0,
    }
}

fn execute(cmd: &Command, cfg: &mut RunConfig, want_csv: bool) -> Result<Outcome, Error> {
    match cmd {
        Command::Spectrum(_) => cmd_spectrum(cfg, want_csv),
        Command::Det(_) => cmd_det(cfg),
        Command::Bfk(_) => cmd_bfk(cfg),
        Command::ZeroModes(_) => cmd_zero_modes(cfg),
        Command::Degenerate(_) => cmd_degenerate(cfg),
        Command::Anomaly(_) => cmd_anomaly(cfg),
        Command::Index(_) => cmd_index(cfg),
        Command::Sphere(_) => cmd_sphere(cfg),
        Command::Bosonize(_) => cmd_bosonize(cfg),
        Command::Insertion(_) => cmd_insertion(cfg),
        Command::Selftest(_) => cmd_selftest(),
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("GLUE_THREADS") {
            Ok(s) => Some(s.trim().parse().map_err(|_| invalid(format!("GLUE_THREADS={s} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(invalid("thread count must be at least 1"));
    }
    Ok(n)
}

/// Deterministic part of a report: everything but the wall time.
pub fn payload_json(command: &str, cfg: &RunConfig, outcome: &Result<(Value, Option<f64>, bool), Error>, tol: f64) -> Value {
    let (result, residual, pass, error) = match outcome {
        Ok((v, r, p)) => (v.clone(), *r, *p, None),
        Err(e) => (Value::Null, None, false, Some(e.to_string())),
    };
    to_value(&Payload { schema_version: SCHEMA_VERSION, command, config: cfg, result, residual, tolerance: tol, pass, error })
}

fn write_out(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            use std::io::Write;
            writeln!(std::io::stdout().lock(), "{text}")
        }
    }
}

/// Run with the given argv (argv[0] is the program name) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let flags = cli.command.config();
    let cmd = &cli.command;
    let mut cfg = match &cli.config {
        Some(p) => match load_config(p) {
            Ok(c) => overlay(c, flags),
            Err(e) => {
                eprintln!("invalid config: {e}");
                return 2;
            }
        },
        None => flags,
    };
    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return 2;
        }
    };
    let tol = match cfg.tol {
        Some(t) if !(t > 0.0) => {
            eprintln!("invalid config: tol must be positive");
            return 2;
        }
        Some(t) => t,
        None => default_tol(cmd),
    };
    cfg.tol = Some(tol);
    let start = Instant::now();
    let want_csv = cli.csv.is_some();
    let outcome = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cmd, &mut cfg, want_csv)),
            Err(e) => {
                eprintln!("thread pool: {e}");
                return 2;
            }
        },
        None => execute(cmd, &mut cfg, want_csv),
    };
    if let Err(Error::InvalidArgument(msg)) = &outcome {
        eprintln!("invalid config: {msg}");
        return 2;
    }
    let wall = start.elapsed().as_secs_f64();
    let mut csv = None;
    let summary = outcome.map(|o| {
        csv = o.csv;
        let pass = o.pass.unwrap_or_else(|| o.residual.is_some_and(|r| r < tol));
        (o.result, o.residual, pass)
    });
    let pass = matches!(summary, Ok((_, _, true)));
    let payload = payload_json(cmd.name(), &cfg, &summary, tol);
    let report = json!({ "payload": payload, "wall_time_s": wall });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = write_out(cli.out.as_deref(), &text) {
        eprintln!("writing report: {e}");
        return 1;
    }
    if let (Some(path), Some(body)) = (&cli.csv, csv) {
        if let Err(e) = std::fs::write(path, body) {
            eprintln!("writing csv: {e}");
            return 1;
        }
    }
    if pass {
        0
    } else {
        1
    }
}
