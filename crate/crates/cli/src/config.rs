//! Strict JSON run configuration: unknown keys are rejected, every schema
//! violation is reported with a JSON pointer to the offending field, and
//! expression strings are parsed eagerly so their errors carry field context.

use std::path::PathBuf;

use cqw_core::expr::Expr;
use cqw_core::geometry::MetricFamily;
use cqw_core::harness::Packet;
use cqw_core::Complex64;
use nalgebra::Vector2;
use serde::Deserialize;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Honeycomb,
    Triangular,
    Square,
}

impl LatticeKind {
    pub fn name(self) -> &'static str {
        match self {
            LatticeKind::Honeycomb => "honeycomb",
            LatticeKind::Triangular => "triangular",
            LatticeKind::Square => "square",
        }
    }

    /// Code used in the snapshot header.
    pub fn code(self) -> u32 {
        match self {
            LatticeKind::Honeycomb => 0,
            LatticeKind::Triangular => 1,
            LatticeKind::Square => 2,
        }
    }
}

/// Statistic columns selectable for observables.csv, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Observable {
    Norm,
    Mean,
    Spread,
}

#[derive(Debug, Clone)]
pub enum Initial {
    Gaussian(Packet),
    PlaneWave { k: Vector2<f64>, positive: bool },
    Delta { a: usize, b: usize, spinor: [Complex64; 2] },
}

/// A validated run configuration with all defaults resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lattice: LatticeKind,
    pub n1: usize,
    pub n2: usize,
    pub epsilon: f64,
    pub family: MetricFamily,
    pub mass: f64,
    pub steps: usize,
    /// Physical duration `steps * epsilon`.
    pub time: f64,
    pub initial: Initial,
    pub directory: Option<PathBuf>,
    pub dump_every: usize,
    pub observables: Vec<Observable>,
    pub study_epsilons: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    lattice: RawLattice,
    metric: RawMetric,
    mass: f64,
    time: RawTime,
    initial: RawInitial,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    study: Option<RawStudy>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    kind: LatticeKind,
    n1: u32,
    n2: u32,
    epsilon: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetric {
    family: String,
    lambda: Option<[[String; 2]; 2]>,
    f: Option<String>,
    g_tt: Option<String>,
    g_xx: Option<String>,
    g_yy: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    steps: Option<u64>,
    t: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    gaussian: Option<RawGaussian>,
    plane_wave: Option<RawPlaneWave>,
    delta: Option<RawDelta>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGaussian {
    center: [f64; 2],
    width: f64,
    momentum: [f64; 2],
    spinor: [[f64; 2]; 2],
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawBranch {
    Positive,
    Negative,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlaneWave {
    k: [f64; 2],
    branch: RawBranch,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDelta {
    site: [u64; 2],
    spinor: Option<[[f64; 2]; 2]>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    dump_every: Option<u64>,
    observables: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    epsilons: Vec<f64>,
}

/// RFC 6901 pointer for a deserialization error location.
fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        use serde_path_to_error::Segment;
        match seg {
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Seq { index } => {
                out.push('/');
                out.push_str(&index.to_string());
            }
            Segment::Enum { variant } => {
                out.push('/');
                out.push_str(&variant.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| ConfigError::new(pointer(e.path()), e.inner().to_string()))?;
    de.end()
        .map_err(|e| ConfigError::new("/", format!("trailing data after config object: {e}")))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ConfigError> {

    if raw.lattice.n1 == 0 || raw.lattice.n2 == 0 {
        return Err(ConfigError::new("/lattice", "grid dims n1, n2 must be positive"));
    }
    let epsilon = raw.lattice.epsilon;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(ConfigError::new(
            "/lattice/epsilon",
            format!("must be positive and finite, got {epsilon}"),
        ));
    }
    let (n1, n2) = (raw.lattice.n1 as usize, raw.lattice.n2 as usize);

    let family = resolve_metric(raw.metric)?;

    if !raw.mass.is_finite() {
        return Err(ConfigError::new("/mass", format!("must be finite, got {}", raw.mass)));
    }

    let (steps, time) = resolve_time(&raw.time, epsilon)?;
    let initial = resolve_initial(raw.initial, n1, n2)?;

    let directory = raw.output.directory.map(PathBuf::from);
    let dump_every = match raw.output.dump_every {
        None => steps.max(1),
        Some(0) => return Err(ConfigError::new("/output/dump_every", "must be at least 1")),
        Some(d) => d as usize,
    };
    let observables = resolve_observables(raw.output.observables)?;

    let study_epsilons = match raw.study {
        None => None,
        Some(s) => {
            for (i, &e) in s.epsilons.iter().enumerate() {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(ConfigError::new(
                        format!("/study/epsilons/{i}"),
                        format!("must be positive and finite, got {e}"),
                    ));
                }
            }
            Some(s.epsilons)
        }
    };

    Ok(RunConfig {
        lattice: raw.lattice.kind,
        n1,
        n2,
        epsilon,
        family,
        mass: raw.mass,
        steps,
        time,
        initial,
        directory,
        dump_every,
        observables,
        study_epsilons,
    })
}

fn parse_expr(pointer: &str, src: &str) -> Result<Expr, ConfigError> {
    Expr::parse(src).map_err(|e| ConfigError::new(pointer, format!("in `{src}`: {e}")))
}

fn resolve_metric(raw: RawMetric) -> Result<MetricFamily, ConfigError> {
    let reject_extra = |allowed: &str, raw: &RawMetric| -> Result<(), ConfigError> {
        let extras: &[(&str, bool)] = &[
            ("lambda", raw.lambda.is_some()),
            ("f", raw.f.is_some()),
            ("g_tt", raw.g_tt.is_some()),
            ("g_xx", raw.g_xx.is_some()),
            ("g_yy", raw.g_yy.is_some()),
        ];
        for (name, present) in extras {
            if *present && !allowed.split(',').any(|a| a == *name) {
                return Err(ConfigError::new(
                    format!("/metric/{name}"),
                    format!(
                        "not a parameter of the {} family",
                        if allowed.is_empty() { "flat" } else { "requested" }
                    ),
                ));
            }
        }
        Ok(())
    };

    let family = match raw.family.as_str() {
        "flat" => {
            reject_extra("", &raw)?;
            MetricFamily::Flat
        }
        "homogeneous" => {
            reject_extra("lambda", &raw)?;
            let entries = raw
                .lambda
                .as_ref()
                .ok_or_else(|| ConfigError::new("/metric/lambda", "required for the homogeneous family"))?;
            let mut lambda = [[Expr::Num(0.0), Expr::Num(0.0)], [Expr::Num(0.0), Expr::Num(0.0)]];
            for s in 0..2 {
                for j in 0..2 {
                    lambda[s][j] = parse_expr(&format!("/metric/lambda/{s}/{j}"), &entries[s][j])?;
                }
            }
            MetricFamily::Homogeneous { lambda }
        }
        "conformal" => {
            reject_extra("f", &raw)?;
            let f = raw
                .f
                .as_ref()
                .ok_or_else(|| ConfigError::new("/metric/f", "required for the conformal family"))?;
            MetricFamily::Conformal {
                f: parse_expr("/metric/f", f)?,
            }
        }
        "custom" => {
            reject_extra("g_tt,g_xx,g_yy", &raw)?;
            let get = |name: &str, v: &Option<String>| -> Result<String, ConfigError> {
                v.clone()
                    .ok_or_else(|| ConfigError::new(format!("/metric/{name}"), "required for the custom family"))
            };
            MetricFamily::CustomDiagonal {
                g_tt: parse_expr("/metric/g_tt", &get("g_tt", &raw.g_tt)?)?,
                g_xx: parse_expr("/metric/g_xx", &get("g_xx", &raw.g_xx)?)?,
                g_yy: parse_expr("/metric/g_yy", &get("g_yy", &raw.g_yy)?)?,
            }
        }
        other => {
            return Err(ConfigError::new(
                "/metric/family",
                format!("unknown family `{other}`; allowed: flat, homogeneous, conformal, custom"),
            ))
        }
    };
    family
        .validate()
        .map_err(|e| ConfigError::new("/metric", e.to_string()))?;
    Ok(family)
}

fn resolve_time(raw: &RawTime, epsilon: f64) -> Result<(usize, f64), ConfigError> {
    match (raw.steps, raw.t) {
        (None, None) => Err(ConfigError::new("/time", "provide steps, t, or both")),
        (Some(s), None) => {
            let steps = s as usize;
            Ok((steps, steps as f64 * epsilon))
        }
        (steps, Some(t)) => {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ConfigError::new("/time/t", format!("must be non-negative and finite, got {t}")));
            }
            let derived = (t / epsilon).round();
            let steps = match steps {
                Some(s) => s as f64,
                None => derived,
            };
            if (steps * epsilon - t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(ConfigError::new(
                    "/time",
                    format!(
                        "t = {t} is not steps * epsilon (nearest: {} steps of {epsilon})",
                        derived as u64
                    ),
                ));
            }
            Ok((steps as usize, t))
        }
    }
}

fn resolve_initial(raw: RawInitial, n1: usize, n2: usize) -> Result<Initial, ConfigError> {
    let count =
        raw.gaussian.is_some() as usize + raw.plane_wave.is_some() as usize + raw.delta.is_some() as usize;
    if count != 1 {
        return Err(ConfigError::new(
            "/initial",
            format!("exactly one of gaussian, plane_wave, delta required, got {count}"),
        ));
    }
    if let Some(g) = raw.gaussian {
        if !(g.width > 0.0 && g.width.is_finite()) {
            return Err(ConfigError::new(
                "/initial/gaussian/width",
                format!("must be positive and finite, got {}", g.width),
            ));
        }
        let spinor = [
            Complex64::new(g.spinor[0][0], g.spinor[0][1]),
            Complex64::new(g.spinor[1][0], g.spinor[1][1]),
        ];
        if spinor[0].norm_sqr() + spinor[1].norm_sqr() == 0.0 {
            return Err(ConfigError::new("/initial/gaussian/spinor", "must be nonzero"));
        }
        return Ok(Initial::Gaussian(Packet {
            center: Vector2::new(g.center[0], g.center[1]),
            width: g.width,
            momentum: Vector2::new(g.momentum[0], g.momentum[1]),
            spinor,
        }));
    }
    if let Some(p) = raw.plane_wave {
        return Ok(Initial::PlaneWave {
            k: Vector2::new(p.k[0], p.k[1]),
            positive: matches!(p.branch, RawBranch::Positive),
        });
    }
    let d = raw.delta.expect("counted above");
    let (a, b) = (d.site[0] as usize, d.site[1] as usize);
    if a >= n1 || b >= n2 {
        return Err(ConfigError::new(
            "/initial/delta/site",
            format!("({a}, {b}) outside the {n1} x {n2} grid"),
        ));
    }
    let spinor = match d.spinor {
        None => [Complex64::new(1.0, 0.0), Complex64::ZERO],
        Some(s) => {
            let sp = [
                Complex64::new(s[0][0], s[0][1]),
                Complex64::new(s[1][0], s[1][1]),
            ];
            if sp[0].norm_sqr() + sp[1].norm_sqr() == 0.0 {
                return Err(ConfigError::new("/initial/delta/spinor", "must be nonzero"));
            }
            sp
        }
    };
    Ok(Initial::Delta { a, b, spinor })
}

fn resolve_observables(names: Option<Vec<String>>) -> Result<Vec<Observable>, ConfigError> {
    let Some(names) = names else {
        return Ok(vec![Observable::Norm]);
    };
    if names.is_empty() {
        return Err(ConfigError::new("/output/observables", "must not be empty"));
    }
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let o = match name.as_str() {
            "norm" => Observable::Norm,
            "mean" => Observable::Mean,
            "spread" => Observable::Spread,
            other => {
                return Err(ConfigError::new(
                    format!("/output/observables/{i}"),
                    format!("unknown observable `{other}`; allowed: norm, mean, spread"),
                ))
            }
        };
        out.push(o);
    }
    out.sort();
    out.dedup();
    Ok(out)
}
