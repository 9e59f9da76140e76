//! Observables, error metrics, dispersion extraction, and convergence-order
//! studies tying the walks to the continuum reference solutions.

use crate::coin::CoinField;
use crate::coin::CompileMode;
use crate::error::HarnessError;
use crate::geometry::MetricFamily;
use crate::grid::{wrap, BravaisGrid};
use crate::oracle::{self, build_generator, flat_evolve, PlaneWaveSolution};
use crate::walk::honeycomb::CellLattice;
use crate::walk::triangular::{self, EdgeField};
use crate::walk::{honeycomb, SpinorField, WalkParams};
use crate::{pairwise_sum, Complex64, Mat2};
use nalgebra::Vector2;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// `sqrt(sum |a - b|^2 * cell_area)` over a shared grid.
pub fn l2_distance(a: &SpinorField, b: &SpinorField) -> Result<f64, HarnessError> {
    if a.dims() != b.dims() {
        return Err(HarnessError::ShapeMismatch {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let mut sq = Vec::with_capacity(2 * a.up.len());
    for i in 0..a.up.len() {
        sq.push((a.up[i] - b.up[i]).norm_sqr());
        sq.push((a.down[i] - b.down[i]).norm_sqr());
    }
    Ok((pairwise_sum(&sq) * a.grid.cell_area()).sqrt())
}

/// Gaussian wavepacket specification; sampled as a torus-periodic function by
/// summing the 3x3 nearest torus translates of the envelope.
#[derive(Debug, Clone)]
pub struct Packet {
    pub center: Vector2<f64>,
    pub width: f64,
    pub momentum: Vector2<f64>,
    pub spinor: [Complex64; 2],
}

impl Packet {
    /// Samples at `grid position + offset`, without normalization.
    pub fn sample(&self, grid: &BravaisGrid, offset: Vector2<f64>) -> SpinorField {
        let span1 = grid.basis1 * grid.n1 as f64;
        let span2 = grid.basis2 * grid.n2 as f64;
        let quarter_w2 = 4.0 * self.width * self.width;
        let mut f = SpinorField::zeros(grid.clone());
        for a in 0..grid.n1 {
            for b in 0..grid.n2 {
                let idx = grid.index(a, b);
                let r0 = grid.position(a, b) + offset - self.center;
                let mut amp = Complex64::ZERO;
                // Two image rings keep the periodization smooth even for
                // packets whose width is a sizeable fraction of the torus.
                for i in -2..=2 {
                    for j in -2..=2 {
                        let r = r0 - span1 * i as f64 - span2 * j as f64;
                        let env = (-r.norm_squared() / quarter_w2).exp();
                        amp += Complex64::from_polar(env, self.momentum.dot(&r));
                    }
                }
                f.up[idx] = amp * self.spinor[0];
                f.down[idx] = amp * self.spinor[1];
            }
        }
        f
    }

    /// Samples and rescales to unit norm under the grid's cell measure.
    pub fn normalized_sample(&self, grid: &BravaisGrid, offset: Vector2<f64>) -> SpinorField {
        let mut f = self.sample(grid, offset);
        let n = f.norm();
        f.scale(Complex64::new(1.0 / n, 0.0));
        f
    }
}

/// Unit-norm single-site excitation.
pub fn delta_field(grid: &BravaisGrid, a: usize, b: usize, spinor: [Complex64; 2]) -> SpinorField {
    let mut f = SpinorField::zeros(grid.clone());
    let len = (spinor[0].norm_sqr() + spinor[1].norm_sqr()).sqrt();
    let s = 1.0 / (len * grid.cell_area().sqrt());
    let idx = grid.index(a, b);
    f.up[idx] = spinor[0] * s;
    f.down[idx] = spinor[1] * s;
    f
}

/// Unit-norm eigenmode sample of the flat continuum equation.
pub fn plane_wave_field(
    grid: &BravaisGrid,
    k: Vector2<f64>,
    mass: f64,
    positive: bool,
) -> SpinorField {
    let mut f = PlaneWaveSolution::new(k, mass, positive).sample(grid, 0.0);
    let n = f.norm();
    f.scale(Complex64::new(1.0 / n, 0.0));
    f
}

/// Norm, circular position statistics, and per-component probabilities.
#[derive(Debug, Clone)]
pub struct Observables {
    pub norm: f64,
    pub mean: Vector2<f64>,
    pub spread: f64,
    pub weight_up: f64,
    pub weight_down: f64,
}

struct CircAccum {
    z1: Complex64,
    z2: Complex64,
    total: f64,
    up: f64,
    down: f64,
}

impl CircAccum {
    fn new() -> Self {
        CircAccum {
            z1: Complex64::ZERO,
            z2: Complex64::ZERO,
            total: 0.0,
            up: 0.0,
            down: 0.0,
        }
    }

    fn push(&mut self, frac_a: f64, frac_b: f64, n1: usize, n2: usize, pu: f64, pd: f64) {
        let p = pu + pd;
        self.z1 += Complex64::from_polar(p, TAU * frac_a / n1 as f64);
        self.z2 += Complex64::from_polar(p, TAU * frac_b / n2 as f64);
        self.total += p;
        self.up += pu;
        self.down += pd;
    }

    fn finish(&self, grid: &BravaisGrid, weight: f64) -> Observables {
        let frac = |z: Complex64, n: usize| -> f64 {
            if z.norm() <= 1e-12 * self.total.max(f64::MIN_POSITIVE) {
                return n as f64 / 2.0;
            }
            let turn = z.arg().rem_euclid(TAU) / TAU;
            turn * n as f64
        };
        let mean = grid.position_frac(frac(self.z1, grid.n1), frac(self.z2, grid.n2));
        let sigma = |z: Complex64, basis_len: f64, n: usize| -> f64 {
            if self.total <= 0.0 {
                return 0.0;
            }
            let r = (z.norm() / self.total).clamp(1e-300, 1.0);
            basis_len * n as f64 * (-2.0 * r.ln()).sqrt() / TAU
        };
        let s1 = sigma(self.z1, grid.basis1.norm(), grid.n1);
        let s2 = sigma(self.z2, grid.basis2.norm(), grid.n2);
        Observables {
            norm: (self.total * weight).sqrt(),
            mean,
            spread: (s1 * s1 + s2 * s2).sqrt(),
            weight_up: self.up * weight,
            weight_down: self.down * weight,
        }
    }
}

pub fn observables(field: &SpinorField) -> Observables {
    let grid = &field.grid;
    let mut acc = CircAccum::new();
    for a in 0..grid.n1 {
        for b in 0..grid.n2 {
            let idx = grid.index(a, b);
            acc.push(
                a as f64,
                b as f64,
                grid.n1,
                grid.n2,
                field.up[idx].norm_sqr(),
                field.down[idx].norm_sqr(),
            );
        }
    }
    acc.finish(grid, grid.cell_area())
}

/// Observables over all three edge planes, each weighted by a third of the
/// cell area and positioned at its midpoint.
pub fn edge_observables(field: &EdgeField) -> Observables {
    let grid = &field.grid;
    let fracs = [(0.5, 0.5), (0.0, 0.5), (0.5, 0.0)];
    let cells = field.cells();
    let mut acc = CircAccum::new();
    for (side, (fa, fb)) in fracs.iter().enumerate() {
        for a in 0..grid.n1 {
            for b in 0..grid.n2 {
                let idx = side * cells + grid.index(a, b);
                acc.push(
                    a as f64 + fa,
                    b as f64 + fb,
                    grid.n1,
                    grid.n2,
                    field.up[idx].norm_sqr(),
                    field.down[idx].norm_sqr(),
                );
            }
        }
    }
    acc.finish(grid, grid.cell_area() / 3.0)
}

/// Eigenphases of the one-step Bloch matrix of a spatially constant coin
/// field at wavenumber `k`, sorted ascending. Conditional translations are
/// replaced by the scalar phases `exp(-+ i eps k.u_i)`.
pub fn dispersion_extract(
    coins: &CoinField,
    mtilde: f64,
    epsilon: f64,
    k: Vector2<f64>,
) -> [f64; 2] {
    let mut w = Mat2::identity();
    for i in 0..coins.dirs.count() {
        let u = &coins.subs[0].dir[i].unitary[0];
        let ph = epsilon * k.dot(&coins.dirs.u(i));
        let t = Mat2::new(
            Complex64::from_polar(1.0, -ph),
            Complex64::ZERO,
            Complex64::ZERO,
            Complex64::from_polar(1.0, ph),
        );
        w = u.adjoint() * t * u * w;
    }
    let m = Mat2::new(
        Complex64::from_polar(1.0, -epsilon * mtilde),
        Complex64::ZERO,
        Complex64::ZERO,
        Complex64::from_polar(1.0, epsilon * mtilde),
    );
    w = m * w;
    let half_tr = (w[(0, 0)] + w[(1, 1)]) * 0.5;
    let det = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
    let disc = (half_tr * half_tr - det).sqrt();
    let mut phases = [(half_tr - disc).arg(), (half_tr + disc).arg()];
    phases.sort_by(f64::total_cmp);
    phases
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyLattice {
    Honeycomb,
    Square,
    Triangular,
}

impl StudyLattice {
    pub fn name(self) -> &'static str {
        match self {
            StudyLattice::Honeycomb => "honeycomb",
            StudyLattice::Square => "square",
            StudyLattice::Triangular => "triangular",
        }
    }
}

/// One convergence scenario: a lattice, a metric, and a packet evolved to a
/// fixed physical time at several step sizes.
#[derive(Debug, Clone)]
pub struct StudySetup<'a> {
    pub lattice: StudyLattice,
    pub family: &'a MetricFamily,
    pub mass: f64,
    /// Torus edge length in lattice-axis units; the grid has `span/eps` cells
    /// per axis.
    pub span: f64,
    pub time: f64,
    pub packet: Packet,
    pub mode: CompileMode,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub lattice: StudyLattice,
    pub metric: String,
    pub time: f64,
    pub grids: Vec<usize>,
    /// `(epsilon, l2_error)` per run, in the requested order.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation of the fit in log-log space.
    pub residual: f64,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("epsilon,l2_error\n");
        for (eps, err) in &self.points {
            out.push_str(&format!("{eps:.16e},{err:.16e}\n"));
        }
        out
    }

    pub fn json(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str(&format!("  \"lattice\": \"{}\",\n", self.lattice.name()));
        out.push_str(&format!("  \"metric\": \"{}\",\n", self.metric));
        out.push_str(&format!("  \"time\": {:.16e},\n", self.time));
        let grids: Vec<String> = self.grids.iter().map(|n| n.to_string()).collect();
        out.push_str(&format!("  \"grids\": [{}],\n", grids.join(", ")));
        out.push_str(&format!("  \"slope\": {:.16e},\n", self.slope));
        out.push_str(&format!("  \"intercept\": {:.16e},\n", self.intercept));
        out.push_str(&format!("  \"residual\": {:.16e},\n", self.residual));
        out.push_str("  \"points\": [\n");
        for (i, (eps, err)) in self.points.iter().enumerate() {
            let sep = if i + 1 < self.points.len() { "," } else { "" };
            out.push_str(&format!(
                "    {{\"epsilon\": {eps:.16e}, \"l2_error\": {err:.16e}}}{sep}\n"
            ));
        }
        out.push_str("  ]\n}\n");
        out
    }
}

fn validate_epsilons(epsilons: &[f64]) -> Result<(), HarnessError> {
    let bad = || HarnessError::BadEpsilonList(epsilons.to_vec());
    if epsilons.len() < 3 {
        return Err(bad());
    }
    for pair in epsilons.windows(2) {
        if !(pair[1] > 0.0 && pair[0].is_finite()) || (pair[0] / pair[1] - 2.0).abs() > 1e-9 {
            return Err(bad());
        }
    }
    Ok(())
}

fn log_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..points.len() {
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let mut ss = 0.0;
    for i in 0..points.len() {
        let r = ys[i] - (intercept + slope * xs[i]);
        ss += r * r;
    }
    (slope, intercept, (ss / n).sqrt())
}

/// Copies every `r`-th site, aligning `target[a, b]` with `src[r a, r b]`.
fn subsample_sites(src: &SpinorField, r: usize) -> SpinorField {
    let g = &src.grid;
    let target = BravaisGrid::new(
        g.n1 / r,
        g.n2 / r,
        g.basis1 * r as f64,
        g.basis2 * r as f64,
    );
    let mut out = SpinorField::zeros(target.clone());
    for a in 0..target.n1 {
        for b in 0..target.n2 {
            let sidx = g.index(a * r, b * r);
            let tidx = target.index(a, b);
            out.up[tidx] = src.up[sidx];
            out.down[tidx] = src.down[sidx];
        }
    }
    out
}

/// Reads a fine-grid field at the side-0 edge midpoints of a triangular cell
/// grid whose spacing is `r` fine cells per walk cell spacing unit.
fn subsample_midpoints(src: &SpinorField, cells: &BravaisGrid, r: usize) -> SpinorField {
    let g = &src.grid;
    let mut out = SpinorField::zeros(cells.clone());
    for a in 0..cells.n1 {
        for b in 0..cells.n2 {
            let p = wrap(-(r as isize) * (2 * a as isize + 2 * b as isize + 2), g.n1);
            let q = wrap(-(r as isize) * (2 * b as isize + 1), g.n2);
            let sidx = g.index(p, q);
            let tidx = cells.index(a, b);
            out.up[tidx] = src.up[sidx];
            out.down[tidx] = src.down[sidx];
        }
    }
    out
}

/// Gathers a honeycomb-lattice field at the side-0 midpoints of the matching
/// triangular cell grid (which must tile the same torus at the same spacing,
/// so the honeycomb grid is 2x the cell grid in each axis).
pub fn resample_honeycomb_to_side0(
    hex: &SpinorField,
    cells: &BravaisGrid,
) -> Result<SpinorField, HarnessError> {
    if hex.grid.n1 != 2 * cells.n1 || hex.grid.n2 != 2 * cells.n2 {
        return Err(HarnessError::ShapeMismatch {
            a: hex.dims(),
            b: (cells.n1, cells.n2),
        });
    }
    Ok(subsample_midpoints(hex, cells, 1))
}

struct WalkRun {
    chi0: SpinorField,
    chi_t: SpinorField,
}

fn run_walk(setup: &StudySetup, eps: f64, n: usize, steps: usize) -> Result<WalkRun, HarnessError> {
    let params = WalkParams {
        epsilon: eps,
        mass: setup.mass,
        recompile_every: 1,
        mode: setup.mode,
    };
    // The walk field is compared to the density-normalized solution as is:
    // the step is unitary in the plain lattice l2 norm, so that is the field
    // whose continuum limit the symmetrized equation describes.
    match setup.lattice {
        StudyLattice::Honeycomb | StudyLattice::Square => {
            let lattice = if setup.lattice == StudyLattice::Honeycomb {
                CellLattice::Honeycomb
            } else {
                CellLattice::Square
            };
            let grid = lattice.grid(n, n, eps);
            let chi0 = setup.packet.normalized_sample(&grid, Vector2::zeros());
            let mut chi_t = chi0.clone();
            honeycomb::evolve(&mut chi_t, lattice, setup.family, &params, steps, |_, _| {})?;
            Ok(WalkRun { chi0, chi_t })
        }
        StudyLattice::Triangular => {
            let cells = triangular::cell_grid(n / 2, n / 2, eps);
            let off0 = triangular::edge_offsets(&cells)[0];
            let chi0 = setup.packet.normalized_sample(&cells, off0);
            let mut psi = EdgeField::zeros(cells.clone());
            let c = psi.cells();
            psi.up[..c].copy_from_slice(&chi0.up);
            psi.down[..c].copy_from_slice(&chi0.down);
            triangular::evolve(&mut psi, setup.family, &params, steps, |_, _| {})?;
            let chi_t = triangular::side_fields(&psi)[0].clone();
            Ok(WalkRun { chi0, chi_t })
        }
    }
}

fn oracle_grid_for(setup: &StudySetup, n: usize, eps: f64) -> BravaisGrid {
    match setup.lattice {
        StudyLattice::Square => CellLattice::Square.grid(n, n, eps),
        _ => CellLattice::Honeycomb.grid(n, n, eps),
    }
}

fn rk4_reference(
    setup: &StudySetup,
    n: usize,
    eps: f64,
) -> Result<SpinorField, HarnessError> {
    let grid = oracle_grid_for(setup, n, eps);
    let chi0 = setup.packet.normalized_sample(&grid, Vector2::zeros());
    let field =
        build_generator(setup.family, &grid, setup.mass, 0.0).map_err(HarnessError::Geometry)?;
    let dt = 0.8 * field.cfl_bound();
    Ok(oracle::evolve_rk4(&chi0, setup.family, setup.mass, setup.time, dt)?)
}

/// Runs the walk at every step size, compares against the continuum
/// reference at matched physical time, and fits the error's order in
/// `epsilon`. Flat metrics use the exact momentum-space solution on the
/// walk's own grid; other metrics integrate on a 4x refined grid and must
/// pass a self-convergence check one order below the walk errors.
pub fn convergence_study(
    setup: &StudySetup,
    epsilons: &[f64],
) -> Result<ConvergenceReport, HarnessError> {
    validate_epsilons(epsilons)?;
    let bad = || HarnessError::BadEpsilonList(epsilons.to_vec());
    let mut ns = Vec::with_capacity(epsilons.len());
    let mut step_counts = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let n = (setup.span / eps).round() as usize;
        if n == 0 || ((n as f64) * eps - setup.span).abs() > 1e-9 * setup.span {
            return Err(bad());
        }
        if setup.lattice == StudyLattice::Triangular && n % 2 != 0 {
            return Err(bad());
        }
        let steps = (setup.time / eps).round() as usize;
        if steps == 0 || ((steps as f64) * eps - setup.time).abs() > 1e-9 * setup.time.max(1.0) {
            return Err(bad());
        }
        ns.push(n);
        step_counts.push(steps);
    }

    let runs: Vec<WalkRun> = epsilons
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| run_walk(setup, eps, ns[i], step_counts[i]))
        .collect::<Result<_, _>>()?;

    let errors: Vec<f64> = if matches!(setup.family, MetricFamily::Flat) {
        runs.iter()
            .zip(&step_counts)
            .zip(epsilons)
            .map(|((run, &steps), &eps)| {
                let reference = flat_evolve(&run.chi0, setup.mass, steps as f64 * eps);
                l2_distance(&run.chi_t, &reference)
            })
            .collect::<Result<_, _>>()?
    } else {
        let eps_min = *epsilons.last().unwrap();
        let n_min = *ns.last().unwrap();
        let (fine, half) = rayon::join(
            || rk4_reference(setup, 4 * n_min, eps_min / 4.0),
            || rk4_reference(setup, 2 * n_min, eps_min / 2.0),
        );
        let fine = fine?;
        let half = half?;
        let self_distance = l2_distance(&subsample_sites(&fine, 2), &half)?;
        let mut errors = Vec::with_capacity(runs.len());
        for (i, run) in runs.iter().enumerate() {
            let r = (epsilons[i] / (eps_min / 4.0)).round() as usize;
            let reference = match setup.lattice {
                StudyLattice::Triangular => subsample_midpoints(&fine, &run.chi_t.grid, r),
                _ => subsample_sites(&fine, r),
            };
            errors.push(l2_distance(&run.chi_t, &reference)?);
        }
        let walk_error = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        if self_distance >= 0.1 * walk_error {
            return Err(HarnessError::OracleNotConverged {
                self_distance,
                walk_error,
            });
        }
        errors
    };

    let points: Vec<(f64, f64)> = epsilons.iter().cloned().zip(errors).collect();
    let (slope, intercept, residual) = log_fit(&points);
    Ok(ConvergenceReport {
        lattice: setup.lattice,
        metric: setup.family.family_name().to_string(),
        time: setup.time,
        grids: ns,
        points,
        slope,
        intercept,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::walk::honeycomb::compile_at;
    use approx::assert_relative_eq;

    fn hex_grid(n: usize, eps: f64) -> BravaisGrid {
        CellLattice::Honeycomb.grid(n, n, eps)
    }

    fn flat_coins(lattice: CellLattice, eps: f64) -> CoinField {
        let grid = lattice.grid(4, 4, eps);
        compile_at(
            lattice,
            &MetricFamily::Flat,
            &grid,
            eps,
            0.0,
            0.0,
            CompileMode::Sequential,
        )
        .unwrap()
    }

    fn packet() -> Packet {
        Packet {
            center: Vector2::new(0.0, 0.0),
            width: 1.0,
            momentum: Vector2::new(0.8, 0.5),
            spinor: [Complex64::new(1.0, 0.0), Complex64::new(0.2, -0.4)],
        }
    }

    #[test]
    fn distance_identities() {
        let grid = hex_grid(8, 0.25);
        let mut a = SpinorField::zeros(grid.clone());
        a.up[5] = Complex64::new(1.0, 0.0) / grid.cell_area().sqrt();
        let zero = SpinorField::zeros(grid.clone());
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        assert_relative_eq!(l2_distance(&a, &zero).unwrap(), 1.0, epsilon = 1e-14);
        let mut b = SpinorField::zeros(grid.clone());
        b.down[9] = Complex64::new(0.0, 1.0) / grid.cell_area().sqrt();
        assert_relative_eq!(
            l2_distance(&a, &b).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-14
        );
        let other = SpinorField::zeros(hex_grid(4, 0.25));
        assert!(matches!(
            l2_distance(&a, &other),
            Err(HarnessError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn normalized_packet_has_unit_norm() {
        let grid = hex_grid(32, 0.2);
        let f = packet().normalized_sample(&grid, Vector2::zeros());
        assert_relative_eq!(f.norm(), 1.0, epsilon = 1e-13);
        let ratio = f.down[17] / f.up[17];
        assert!((ratio - Complex64::new(0.2, -0.4)).norm() < 1e-12);
    }

    #[test]
    fn dispersion_flat_identities() {
        for lattice in [CellLattice::Honeycomb, CellLattice::Square] {
            let coins = flat_coins(lattice, 0.1);
            let idle = dispersion_extract(&coins, 0.0, 0.1, Vector2::zeros());
            assert!(idle[0].abs() < 1e-14 && idle[1].abs() < 1e-14);
            let massed = dispersion_extract(&coins, 1.0, 0.1, Vector2::zeros());
            assert_relative_eq!(massed[0], -0.1, epsilon = 1e-13);
            assert_relative_eq!(massed[1], 0.1, epsilon = 1e-13);
        }
    }

    #[test]
    fn dispersion_error_halves_at_first_order() {
        let k = Vector2::new(0.42, 0.56);
        let e = |eps: f64| -> f64 {
            let coins = flat_coins(CellLattice::Honeycomb, eps);
            let phases = dispersion_extract(&coins, 0.0, eps, k);
            let want = eps * k.norm();
            (phases[0] + want).abs().max((phases[1] - want).abs())
        };
        let ratio = e(0.08) / e(0.04);
        assert!(
            (3.3..=4.7).contains(&ratio),
            "halving ratio {ratio} outside the second-order band"
        );
    }

    #[test]
    fn dispersion_group_velocity_follows_the_deformation() {
        let family = MetricFamily::homogeneous_const([[0.8, 0.0], [0.0, 1.0]]);
        let grid = hex_grid(4, 0.05);
        let coins = compile_at(
            CellLattice::Honeycomb,
            &family,
            &grid,
            0.05,
            0.0,
            0.0,
            CompileMode::Sequential,
        )
        .unwrap();
        let eps = 0.05;
        let delta = 0.01;
        let phase_up = |kx: f64| dispersion_extract(&coins, 0.0, eps, Vector2::new(kx, 0.0))[1];
        let v = (phase_up(0.2 + delta) - phase_up(0.2 - delta)) / (2.0 * delta * eps);
        assert!(
            (v - 0.8).abs() / 0.8 < 0.05,
            "group velocity {v} should be within 5% of 0.8"
        );
    }

    #[test]
    fn observable_identities() {
        let grid = hex_grid(16, 0.2);
        let mut uniform = SpinorField::zeros(grid.clone());
        let amp = 1.0 / (grid.len() as f64 * grid.cell_area()).sqrt();
        uniform.up.fill(Complex64::new(amp, 0.0));
        let obs = observables(&uniform);
        assert_relative_eq!(obs.norm, 1.0, epsilon = 1e-13);
        assert_relative_eq!(obs.weight_up, 1.0, epsilon = 1e-13);
        assert!(obs.weight_down.abs() < 1e-15);
        let center = grid.position_frac(8.0, 8.0);
        assert!((obs.mean - center).norm() < 1e-9);

        let delta = delta_field(&grid, 3, 11, [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]);
        let obs = observables(&delta);
        assert_relative_eq!(obs.norm, 1.0, epsilon = 1e-13);
        assert!(obs.spread.abs() < 1e-12);
        assert!((obs.mean - grid.position(3, 11)).norm() < 1e-12);
    }

    #[test]
    fn packet_spread_grows_monotonically() {
        let n = 1024;
        let eps = 0.01;
        let lattice = CellLattice::Honeycomb;
        let grid = lattice.grid(n, n, eps);
        let span1 = grid.basis1 * n as f64;
        let span2 = grid.basis2 * n as f64;
        let center = (span1 + span2) * 0.5;
        let p = Packet {
            center,
            width: 0.4,
            momentum: Vector2::zeros(),
            spinor: [Complex64::new(1.0, 0.0), Complex64::ZERO],
        };
        let mut psi = p.normalized_sample(&grid, Vector2::zeros());
        let params = WalkParams {
            epsilon: eps,
            mass: 0.0,
            recompile_every: 0,
            mode: CompileMode::Banded,
        };
        let mut spreads = vec![observables(&psi).spread];
        honeycomb::evolve(&mut psi, lattice, &MetricFamily::Flat, &params, 200, |_, f| {
            spreads.push(observables(f).spread);
        })
        .unwrap();
        for s in 1..spreads.len() {
            assert!(
                spreads[s] > spreads[s - 1],
                "spread shrank at step {s}: {} -> {}",
                spreads[s - 1],
                spreads[s]
            );
        }
    }

    #[test]
    fn epsilon_list_validation() {
        let setup = StudySetup {
            lattice: StudyLattice::Honeycomb,
            family: &MetricFamily::Flat,
            mass: 0.0,
            span: 6.4,
            time: 1.0,
            packet: packet(),
            mode: CompileMode::Sequential,
        };
        for bad in [&[0.2, 0.1][..], &[0.2, 0.15, 0.05][..], &[0.2, 0.1, 0.06][..]] {
            assert!(matches!(
                convergence_study(&setup, bad),
                Err(HarnessError::BadEpsilonList(_))
            ));
        }
    }

    #[test]
    fn log_fit_recovers_exact_power_laws() {
        let points: Vec<(f64, f64)> = [0.2f64, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e| (e, 3.7 * e.powf(1.35)))
            .collect();
        let (slope, intercept, residual) = log_fit(&points);
        assert_relative_eq!(slope, 1.35, epsilon = 1e-12);
        assert_relative_eq!(intercept.exp(), 3.7, epsilon = 1e-12);
        assert!(residual < 1e-13);
    }

    #[test]
    fn side0_resampling_lands_on_midpoints() {
        let eps = 0.1;
        let nc = 8;
        let cells = triangular::cell_grid(nc, nc, eps);
        let hex = hex_grid(2 * nc, eps);
        let probe = |r: Vector2<f64>| Complex64::new((0.7 * r.x - 0.3 * r.y).sin(), r.y.cos());
        let mut field = SpinorField::zeros(hex.clone());
        for a in 0..hex.n1 {
            for b in 0..hex.n2 {
                field.up[hex.index(a, b)] = probe(hex.position(a, b));
            }
        }
        let out = resample_honeycomb_to_side0(&field, &cells).unwrap();
        let off0 = triangular::edge_offsets(&cells)[0];
        let span1 = hex.basis1 * hex.n1 as f64;
        let span2 = hex.basis2 * hex.n2 as f64;
        for a in 0..nc {
            for b in 0..nc {
                let mid = cells.position(a, b) + off0;
                let mut best = f64::INFINITY;
                for i in -2..=2 {
                    for j in -2..=2 {
                        let v = out.up[cells.index(a, b)]
                            - probe(mid + span1 * i as f64 + span2 * j as f64);
                        best = best.min(v.norm());
                    }
                }
                assert!(best < 1e-12, "cell ({a},{b}) off by {best}");
            }
        }
        let wrong = SpinorField::zeros(hex_grid(nc, eps));
        assert!(resample_honeycomb_to_side0(&wrong, &cells).is_err());
    }

    #[test]
    fn flat_study_fits_first_order() {
        let setup = StudySetup {
            lattice: StudyLattice::Honeycomb,
            family: &MetricFamily::Flat,
            mass: 0.0,
            span: 6.4,
            time: 1.0,
            packet: Packet {
                center: Vector2::new(1.6, 2.0),
                width: 1.0,
                momentum: Vector2::new(0.8, 0.5),
                spinor: [Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.1)],
            },
            mode: CompileMode::Banded,
        };
        let report = convergence_study(&setup, &[0.2, 0.1, 0.05]).unwrap();
        assert_eq!(report.grids, vec![32, 64, 128]);
        assert!(
            (0.8..=1.2).contains(&report.slope),
            "slope {} points {:?}",
            report.slope,
            report.points
        );
        assert!(report.residual < 0.1, "residual {}", report.residual);
        let csv = report.csv();
        assert!(csv.starts_with("epsilon,l2_error\n"));
        assert_eq!(csv.lines().count(), 4);
        let json = report.json();
        assert!(json.contains("\"lattice\": \"honeycomb\""));
        assert!(json.contains("\"slope\""));
    }

    #[test]
    fn conformal_study_converges_against_the_integrator() {
        // Modulation built from the torus's reciprocal vectors so the metric
        // is exactly periodic on the skew span; a seam would put an error
        // floor under the smallest epsilon.
        let g = TAU / 6.4;
        let expr = format!(
            "1 + 0.1*sin({:.16}*x + {:.16}*y)*sin({:.16}*y)",
            g,
            g / 3f64.sqrt(),
            2.0 * g / 3f64.sqrt()
        );
        let family = MetricFamily::conformal(&expr).unwrap();
        let setup = StudySetup {
            lattice: StudyLattice::Honeycomb,
            family: &family,
            mass: 0.2,
            span: 6.4,
            time: 1.2,
            packet: Packet {
                center: Vector2::new(1.6, 2.0),
                width: 1.0,
                momentum: Vector2::new(0.7, 0.4),
                spinor: [Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.1)],
            },
            mode: CompileMode::Banded,
        };
        let report = convergence_study(&setup, &[0.4, 0.2, 0.1]).unwrap();
        assert!(
            (0.8..=1.2).contains(&report.slope),
            "slope {} points {:?}",
            report.slope,
            report.points
        );
        assert!(report.residual < 0.1, "residual {}", report.residual);
    }

    #[test]
    fn homogeneous_study_converges_against_the_integrator() {
        let family = MetricFamily::Homogeneous {
            lambda: [
                [Expr::parse("1 - 0.08*t").unwrap(), Expr::Num(0.0)],
                [Expr::Num(0.0), Expr::parse("1 - 0.05*t").unwrap()],
            ],
        };
        let setup = StudySetup {
            lattice: StudyLattice::Honeycomb,
            family: &family,
            mass: 0.2,
            span: 6.4,
            time: 1.2,
            packet: Packet {
                center: Vector2::new(1.6, 2.0),
                width: 1.0,
                momentum: Vector2::new(0.7, 0.4),
                spinor: [Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.1)],
            },
            mode: CompileMode::Banded,
        };
        let report = convergence_study(&setup, &[0.4, 0.2, 0.1]).unwrap();
        assert!(
            (0.8..=1.2).contains(&report.slope),
            "slope {} points {:?}",
            report.slope,
            report.points
        );
        assert!(report.residual < 0.1, "residual {}", report.residual);
    }
}
