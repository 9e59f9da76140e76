//! The five verbs behind the `cqw` binary: compile, run, study, oracle,
//! dispersion. Each writes deterministically named files into the output
//! directory; identical configs give bitwise-identical outputs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use cqw_core::coin::{CoinField, CompileMode};
use cqw_core::geometry::{deformation_of, MetricFamily, SpacetimePoint};
use cqw_core::grid::BravaisGrid;
use cqw_core::harness::{
    convergence_study, delta_field, dispersion_extract, edge_observables, observables,
    plane_wave_field, Observables, StudyLattice, StudySetup,
};
use cqw_core::oracle::{build_generator, evolve_rk4, flat_evolve};
use cqw_core::walk::honeycomb::{self, CellLattice};
use cqw_core::walk::triangular::{self, EdgeField};
use cqw_core::walk::{SpinorField, WalkParams};
use nalgebra::Vector2;
use serde::Serialize;

use crate::config::{Initial, LatticeKind, Observable, RunConfig};
use crate::error::{CliError, ConfigError};
use crate::snapshot;

/// 17 significant digits: enough to round-trip any f64.
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn obs_header(obs: &[Observable]) -> String {
    let mut h = String::from("step,time");
    for o in obs {
        h.push_str(match o {
            Observable::Norm => ",norm",
            Observable::Mean => ",mean_x,mean_y",
            Observable::Spread => ",spread",
        });
    }
    h.push('\n');
    h
}

fn push_row(csv: &mut String, step: usize, time: f64, st: &Observables, obs: &[Observable]) {
    csv.push_str(&format!("{step},{}", fmt_f(time)));
    for o in obs {
        match o {
            Observable::Norm => csv.push_str(&format!(",{}", fmt_f(st.norm))),
            Observable::Mean => {
                csv.push_str(&format!(",{},{}", fmt_f(st.mean.x), fmt_f(st.mean.y)))
            }
            Observable::Spread => csv.push_str(&format!(",{}", fmt_f(st.spread))),
        }
    }
    csv.push('\n');
}

fn snap_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:06}.cqw"))
}

fn cell_lattice(kind: LatticeKind) -> Option<CellLattice> {
    match kind {
        LatticeKind::Honeycomb => Some(CellLattice::Honeycomb),
        LatticeKind::Square => Some(CellLattice::Square),
        LatticeKind::Triangular => None,
    }
}

fn walk_params(cfg: &RunConfig) -> WalkParams {
    WalkParams {
        epsilon: cfg.epsilon,
        mass: cfg.mass,
        recompile_every: 1,
        mode: CompileMode::Banded,
    }
}

/// Samples the configured initial state on a site grid. Plane waves ignore
/// the offset: it only contributes a constant global phase.
fn sites_initial(cfg: &RunConfig, grid: &BravaisGrid, offset: Vector2<f64>) -> SpinorField {
    match &cfg.initial {
        Initial::Gaussian(p) => p.normalized_sample(grid, offset),
        Initial::PlaneWave { k, positive } => plane_wave_field(grid, *k, cfg.mass, *positive),
        Initial::Delta { a, b, spinor } => delta_field(grid, *a, *b, *spinor),
    }
}

pub fn run(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<(), CliError> {
    let (final_norm, snaps) = match cell_lattice(cfg.lattice) {
        Some(lat) => run_sites(cfg, lat, dir)?,
        None => run_edges(cfg, dir)?,
    };
    if !quiet {
        println!(
            "run: {} {}x{}, {} steps, final norm {}",
            cfg.lattice.name(),
            cfg.n1,
            cfg.n2,
            cfg.steps,
            fmt_f(final_norm)
        );
        println!("wrote observables.csv and {snaps} snapshots to {}", dir.display());
    }
    Ok(())
}

fn run_sites(cfg: &RunConfig, lat: CellLattice, dir: &Path) -> Result<(f64, usize), CliError> {
    let grid = lat.grid(cfg.n1, cfg.n2, cfg.epsilon);
    let mut field = sites_initial(cfg, &grid, Vector2::zeros());
    let code = cfg.lattice.code();

    let mut csv = obs_header(&cfg.observables);
    push_row(&mut csv, 0, 0.0, &observables(&field), &cfg.observables);
    snapshot::write_sites(&snap_path(dir, 0), code, &field)?;
    let mut snaps = 1usize;
    let mut io_err: Option<io::Error> = None;

    let params = walk_params(cfg);
    honeycomb::evolve(&mut field, lat, &cfg.family, &params, cfg.steps, |s, f| {
        push_row(&mut csv, s, s as f64 * cfg.epsilon, &observables(f), &cfg.observables);
        if (s % cfg.dump_every == 0 || s == cfg.steps) && io_err.is_none() {
            match snapshot::write_sites(&snap_path(dir, s), code, f) {
                Ok(()) => snaps += 1,
                Err(e) => io_err = Some(e),
            }
        }
    })
    .map_err(CliError::from_walk)?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    fs::write(dir.join("observables.csv"), csv)?;
    Ok((observables(&field).norm, snaps))
}

fn run_edges(cfg: &RunConfig, dir: &Path) -> Result<(f64, usize), CliError> {
    let cells = triangular::cell_grid(cfg.n1, cfg.n2, cfg.epsilon);
    let off0 = triangular::edge_offsets(&cells)[0];
    let sampled = sites_initial(cfg, &cells, off0);
    let mut field = EdgeField::zeros(cells.clone());
    let c = field.cells();
    field.up[..c].copy_from_slice(&sampled.up);
    field.down[..c].copy_from_slice(&sampled.down);
    // Renormalize from the cell measure to the edge measure (a third of the
    // cell area per edge) so the walk starts at unit norm.
    let scale = 1.0 / edge_observables(&field).norm;
    for z in field.up.iter_mut().chain(field.down.iter_mut()) {
        *z *= scale;
    }
    let code = cfg.lattice.code();

    let mut csv = obs_header(&cfg.observables);
    push_row(&mut csv, 0, 0.0, &edge_observables(&field), &cfg.observables);
    snapshot::write_edges(&snap_path(dir, 0), code, &field)?;
    let mut snaps = 1usize;
    let mut io_err: Option<io::Error> = None;

    let params = walk_params(cfg);
    triangular::evolve(&mut field, &cfg.family, &params, cfg.steps, |s, f| {
        push_row(&mut csv, s, s as f64 * cfg.epsilon, &edge_observables(f), &cfg.observables);
        if (s % cfg.dump_every == 0 || s == cfg.steps) && io_err.is_none() {
            match snapshot::write_edges(&snap_path(dir, s), code, f) {
                Ok(()) => snaps += 1,
                Err(e) => io_err = Some(e),
            }
        }
    })
    .map_err(CliError::from_walk)?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    fs::write(dir.join("observables.csv"), csv)?;
    Ok((edge_observables(&field).norm, snaps))
}

#[derive(Serialize)]
struct CoinDump {
    lattice: &'static str,
    n1: usize,
    n2: usize,
    epsilon: f64,
    time: f64,
    mass: f64,
    directions: Vec<[f64; 2]>,
    max_c1_residual: f64,
    max_unitarity_defect: f64,
    sublattices: Vec<SubDump>,
}

#[derive(Serialize)]
struct SubDump {
    offset: [f64; 2],
    max_c1_residual: f64,
    scaled_mass: Vec<f64>,
    coins: Vec<DirDump>,
}

#[derive(Serialize)]
struct DirDump {
    axis: Vec<[f64; 3]>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    gamma: Vec<f64>,
}

fn coin_dump(cfg: &RunConfig, coins: &CoinField) -> CoinDump {
    CoinDump {
        lattice: cfg.lattice.name(),
        n1: coins.grid.n1,
        n2: coins.grid.n2,
        epsilon: coins.epsilon,
        time: coins.time,
        mass: cfg.mass,
        directions: coins.dirs.all().iter().map(|u| [u.x, u.y]).collect(),
        max_c1_residual: coins.max_c1_residual(),
        max_unitarity_defect: coins.max_unitarity_defect(),
        sublattices: coins
            .subs
            .iter()
            .map(|sub| SubDump {
                offset: [sub.offset.x, sub.offset.y],
                max_c1_residual: sub.max_c1_residual,
                scaled_mass: sub.scaled_mass.clone(),
                coins: sub
                    .dir
                    .iter()
                    .map(|d| DirDump {
                        axis: d.n.iter().map(|n| [n.x, n.y, n.z]).collect(),
                        theta: d.theta.clone(),
                        phi: d.phi.clone(),
                        gamma: d.gamma.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn compile(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<(), CliError> {
    let coins = match cell_lattice(cfg.lattice) {
        Some(lat) => {
            let grid = lat.grid(cfg.n1, cfg.n2, cfg.epsilon);
            honeycomb::compile_at(
                lat,
                &cfg.family,
                &grid,
                cfg.epsilon,
                cfg.mass,
                0.0,
                CompileMode::Banded,
            )
        }
        None => {
            let cells = triangular::cell_grid(cfg.n1, cfg.n2, cfg.epsilon);
            triangular::compile_at(
                &cfg.family,
                &cells,
                cfg.epsilon,
                cfg.mass,
                0.0,
                CompileMode::Banded,
            )
        }
    }
    .map_err(CliError::from_coin)?;

    let text = serde_json::to_string_pretty(&coin_dump(cfg, &coins))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(dir.join("coins.json"), text + "\n")?;
    if !quiet {
        println!(
            "compile: {} {}x{}, {} sublattices, max constraint residual {:.3e}, max unitarity defect {:.3e}",
            cfg.lattice.name(),
            coins.grid.n1,
            coins.grid.n2,
            coins.subs.len(),
            coins.max_c1_residual(),
            coins.max_unitarity_defect()
        );
    }
    Ok(())
}

pub fn study(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<(), CliError> {
    let epsilons = cfg
        .study_epsilons
        .as_deref()
        .ok_or_else(|| ConfigError::new("/study", "the study verb needs study.epsilons"))?;
    let packet = match &cfg.initial {
        Initial::Gaussian(p) => p.clone(),
        _ => {
            return Err(
                ConfigError::new("/initial", "the study verb needs a gaussian initial state").into(),
            )
        }
    };
    if cfg.n1 != cfg.n2 {
        return Err(ConfigError::new("/lattice", "the study verb needs n1 == n2").into());
    }
    if cfg.time <= 0.0 {
        return Err(ConfigError::new("/time", "the study verb needs a positive duration").into());
    }
    let lattice = match cfg.lattice {
        LatticeKind::Honeycomb => StudyLattice::Honeycomb,
        LatticeKind::Triangular => StudyLattice::Triangular,
        LatticeKind::Square => StudyLattice::Square,
    };
    let setup = StudySetup {
        lattice,
        family: &cfg.family,
        mass: cfg.mass,
        span: cfg.n1 as f64 * cfg.epsilon,
        time: cfg.time,
        packet,
        mode: CompileMode::Banded,
    };
    let report = convergence_study(&setup, epsilons).map_err(CliError::from_harness)?;
    fs::write(dir.join("study.csv"), report.csv())?;
    fs::write(dir.join("study.json"), report.json())?;
    if !quiet {
        println!(
            "study: {} metric on {}, slope {:.4}, fit residual {:.4}",
            report.metric,
            report.lattice.name(),
            report.slope,
            report.residual
        );
        for (eps, err) in &report.points {
            println!("  eps {eps}: l2 error {}", fmt_f(*err));
        }
    }
    Ok(())
}

pub fn oracle(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<(), CliError> {
    let grid = match cell_lattice(cfg.lattice) {
        Some(lat) => lat.grid(cfg.n1, cfg.n2, cfg.epsilon),
        None => triangular::cell_grid(cfg.n1, cfg.n2, cfg.epsilon),
    };
    let chi0 = sites_initial(cfg, &grid, Vector2::zeros());
    let chi_t = if cfg.time == 0.0 {
        chi0
    } else if matches!(cfg.family, MetricFamily::Flat) {
        flat_evolve(&chi0, cfg.mass, cfg.time)
    } else {
        let gen0 = build_generator(&cfg.family, &grid, cfg.mass, 0.0).map_err(CliError::Metric)?;
        let dt = (0.8 * gen0.cfl_bound()).min(cfg.time);
        evolve_rk4(&chi0, &cfg.family, cfg.mass, cfg.time, dt).map_err(CliError::from_oracle)?
    };
    snapshot::write_sites(&dir.join("snapshot_oracle.cqw"), cfg.lattice.code(), &chi_t)?;
    if !quiet {
        println!(
            "oracle: {} metric to t = {}, final norm {}",
            cfg.family.family_name(),
            cfg.time,
            fmt_f(observables(&chi_t).norm)
        );
    }
    Ok(())
}

pub fn dispersion(cfg: &RunConfig, dir: &Path, quiet: bool) -> Result<(), CliError> {
    let Some(lat) = cell_lattice(cfg.lattice) else {
        return Err(ConfigError::new(
            "/lattice/kind",
            "dispersion supports honeycomb and square lattices",
        )
        .into());
    };
    let uniform = matches!(cfg.family, MetricFamily::Flat)
        || (matches!(cfg.family, MetricFamily::Homogeneous { .. }) && cfg.family.is_static());
    if !uniform {
        return Err(ConfigError::new(
            "/metric",
            "dispersion needs a spatially uniform static metric: flat, or homogeneous with constant entries",
        )
        .into());
    }

    // Uniform coins are site-independent; a token grid is enough.
    let grid = lat.grid(4, 4, cfg.epsilon);
    let coins = honeycomb::compile_at(
        lat,
        &cfg.family,
        &grid,
        cfg.epsilon,
        cfg.mass,
        0.0,
        CompileMode::Sequential,
    )
    .map_err(CliError::from_coin)?;
    let (tetrad, deform) = deformation_of(&cfg.family, SpacetimePoint::new(0.0, 0.0, 0.0))
        .map_err(CliError::Metric)?;
    let mtilde = cfg.mass / tetrad.e_t_0();

    let mut csv = String::from("k_x,k_y,phase_minus,phase_plus,exact_minus,exact_plus\n");
    let mut worst = 0.0f64;
    for j in 0..20 {
        let radius = 0.2 + j as f64 / 19.0;
        let angle = std::f64::consts::TAU * j as f64 / 20.0;
        let k = Vector2::new(radius * angle.cos(), radius * angle.sin());
        let phases = dispersion_extract(&coins, mtilde, cfg.epsilon, k);
        let q1 = k.x * deform.l[(0, 1)] + k.y * deform.l[(1, 1)];
        let q2 = k.x * deform.l[(0, 2)] + k.y * deform.l[(1, 2)];
        let energy = (q1 * q1 + q2 * q2 + mtilde * mtilde).sqrt();
        let exact = [-cfg.epsilon * energy, cfg.epsilon * energy];
        worst = worst
            .max((phases[0] - exact[0]).abs())
            .max((phases[1] - exact[1]).abs());
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f(k.x),
            fmt_f(k.y),
            fmt_f(phases[0]),
            fmt_f(phases[1]),
            fmt_f(exact[0]),
            fmt_f(exact[1])
        ));
    }
    fs::write(dir.join("dispersion.csv"), csv)?;
    if !quiet {
        println!("dispersion: 20 wavevectors, max |phase - exact| = {worst:.3e}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_significant_digits_and_round_trips() {
        for x in [0.0, 1.0, -0.1, std::f64::consts::PI, 1.0 / 3.0, 1e-300] {
            let s = fmt_f(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let mantissa = s.split('e').next().unwrap();
            let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17, "{s}");
        }
    }

    #[test]
    fn header_follows_selected_observables() {
        use Observable::*;
        assert_eq!(obs_header(&[Norm]), "step,time,norm\n");
        assert_eq!(
            obs_header(&[Norm, Mean, Spread]),
            "step,time,norm,mean_x,mean_y,spread\n"
        );
    }

    #[test]
    fn snapshot_names_are_zero_padded() {
        let p = snap_path(Path::new("out"), 37);
        assert_eq!(p, Path::new("out").join("snapshot_000037.cqw"));
    }
}
