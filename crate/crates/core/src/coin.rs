//! Compiles per-site coin data from a deformation field.
//!
//! For each lattice direction i the compiler finds a real unit vector n^i with
//! `sum_i u_i^j n^i = (L^j_1, L^j_2, 0)` for the spatial rows j of the
//! deformation L. The coin unitary U_i then conjugates `sigma^z` into
//! `n^i . sigma`, and the phase field `gamma_i` compensates the gradient of
//! the azimuth `phi_i` so that the walk's continuum limit keeps only the
//! intended drift terms.

use crate::error::CoinError;
use crate::geometry::{build_tetrad, deformation_at, Deformation, MetricFamily, SpacetimePoint};
use crate::grid::BravaisGrid;
use crate::{Complex64, Mat2};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

/// Unit 3-vector determining a coin through `beta = n . sigma`.
pub type PauliVector = Vector3<f64>;

const SQUARE_ROW_TOL: f64 = 1e-10;
/// Below this separation (relative to the axis scale) two particular points
/// are treated as coincident and the equidistant point degenerates to a line.
const COINCIDENT_TOL: f64 = 1e-13;
/// Slack on the unit circumradius bound before a deformation is rejected.
const CIRCUMRADIUS_TOL: f64 = 1e-9;
/// The two out-of-plane branches differ by O(1); this separates "same branch
/// up to rounding" from "different branch".
const BRANCH_TOL: f64 = 1e-9;
/// Fixed band height so banded compiles do not depend on the thread count.
const BAND_ROWS: usize = 16;

/// The translation directions of a lattice, as unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDirections {
    u: Vec<Vector2<f64>>,
}

impl LatticeDirections {
    /// Three directions with pairwise angles of 120 degrees, summing to zero.
    pub fn honeycomb() -> Self {
        let s = 3f64.sqrt() / 2.0;
        Self {
            u: vec![
                Vector2::new(1.0, 0.0),
                Vector2::new(-0.5, s),
                Vector2::new(-0.5, -s),
            ],
        }
    }

    /// Two orthonormal directions.
    pub fn square() -> Self {
        Self {
            u: vec![Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)],
        }
    }

    pub fn count(&self) -> usize {
        self.u.len()
    }

    pub fn is_square(&self) -> bool {
        self.u.len() == 2
    }

    pub fn u(&self, i: usize) -> Vector2<f64> {
        self.u[i]
    }

    pub fn all(&self) -> &[Vector2<f64>] {
        &self.u
    }
}

/// One unit Pauli vector per lattice direction, plus the residual of the
/// linear constraint it was solved under.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTriple {
    pub n: Vec<PauliVector>,
    pub residual: f64,
}

/// The closed-form solution for the identity deformation on the
/// three-direction set: n^i = (2/3) u_i in the plane plus sqrt(5)/3 out of it.
pub fn flat_taus(dirs: &LatticeDirections) -> BetaTriple {
    assert_eq!(dirs.count(), 3, "flat_taus needs the three-direction set");
    let z = 5f64.sqrt() / 3.0;
    let n = dirs
        .all()
        .iter()
        .map(|u| Vector3::new(2.0 / 3.0 * u.x, 2.0 / 3.0 * u.y, z))
        .collect();
    BetaTriple { n, residual: 0.0 }
}

/// True iff each spatial row of the deformation has unit Euclidean norm
/// (tolerance 1e-10), the exact solvability condition on the square lattice.
pub fn square_feasible(lambda: &Deformation) -> bool {
    let m = lambda.spatial();
    (0..2).all(|j| {
        let norm = (m[(j, 0)].powi(2) + m[(j, 1)].powi(2)).sqrt();
        (norm - 1.0).abs() <= SQUARE_ROW_TOL
    })
}

fn c1_residual(n: &[PauliVector], dirs: &LatticeDirections, lambda: &Deformation) -> f64 {
    let m = lambda.spatial();
    let mut worst = 0.0f64;
    for j in 0..2 {
        let mut sum = Vector3::zeros();
        for (i, u) in dirs.all().iter().enumerate() {
            sum += n[i] * u[j];
        }
        let target = Vector3::new(m[(j, 0)], m[(j, 1)], 0.0);
        worst = worst.max((sum - target).amax());
    }
    worst
}

/// Solves the duality constraints for one deformation value.
///
/// On the three-direction set the solution is closed-form: because the
/// directions sum to zero, the out-of-plane components are forced equal, so
/// the planar parts share one norm; the linear constraint fixes them up to a
/// common shift, and the equal-norm requirement places that shift at the
/// circumcenter of the three particular points. The deformation is solvable
/// exactly when the circumradius is at most 1; `seed` only selects the sign
/// of the out-of-plane branch. On the square set the solution is direct and
/// exists only for unit rows.
pub fn solve_betas(
    lambda: &Deformation,
    dirs: &LatticeDirections,
    seed: &BetaTriple,
) -> Result<BetaTriple, CoinError> {
    let (l0x, _, _) = lambda.row(0);
    let (l0y, _, _) = lambda.row(1);
    if l0x.abs() > 1e-12 || l0y.abs() > 1e-12 {
        return Err(CoinError::Infeasible {
            message: format!(
                "deformation has a nonzero a=0 column ({l0x:.3e}, {l0y:.3e}); only block metrics are supported"
            ),
        });
    }
    let m = lambda.spatial();
    if dirs.is_square() {
        for j in 0..2 {
            let norm = (m[(j, 0)].powi(2) + m[(j, 1)].powi(2)).sqrt();
            if (norm - 1.0).abs() > SQUARE_ROW_TOL {
                return Err(CoinError::Infeasible {
                    message: format!(
                        "square lattice requires unit deformation rows; row {j} has norm {norm:.6}"
                    ),
                });
            }
        }
        let n: Vec<PauliVector> = (0..2)
            .map(|j| {
                let row = Vector3::new(m[(j, 0)], m[(j, 1)], 0.0);
                row / row.norm()
            })
            .collect();
        let residual = c1_residual(&n, dirs, lambda);
        return Ok(BetaTriple { n, residual });
    }

    assert_eq!(dirs.count(), 3, "unsupported direction set");
    // Any particular planar solution of sum_i u_i p_i^T = M, here
    // p0_i = (2/3) M^T u_i (using sum_i u_i u_i^T = (3/2) I), extends to the
    // general one by a common shift c. Equal norms |p0_i + c| = r mean c is
    // equidistant from the negated particular points.
    let base: Vec<Vector2<f64>> = dirs
        .all()
        .iter()
        .map(|u| (m.transpose() * u) * (2.0 / 3.0))
        .collect();
    let c = equidistant_point(&[-base[0], -base[1], -base[2]])?;
    let p: Vec<Vector2<f64>> = base.iter().map(|b| b + c).collect();
    let r = p.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    if r > 1.0 + CIRCUMRADIUS_TOL {
        return Err(CoinError::Infeasible {
            message: format!(
                "deformation needs planar axis norm {r:.6} > 1, beyond the lattice speed bound"
            ),
        });
    }
    let sign = if seed.n.len() == 3 && seed.n.iter().map(|v| v.z).sum::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let n: Vec<PauliVector> = p
        .iter()
        .map(|v| {
            let v = if v.norm() > 1.0 { v / v.norm() } else { *v };
            let z = sign * (1.0 - v.norm_squared()).max(0.0).sqrt();
            Vector3::new(v.x, v.y, z)
        })
        .collect();
    let residual = c1_residual(&n, dirs, lambda);
    Ok(BetaTriple { n, residual })
}

/// The point equidistant from three planar points: the circumcenter when they
/// span a proper triangle, the midpoint of the far pair when two coincide,
/// the point itself when all three do. Distinct collinear points admit none.
fn equidistant_point(q: &[Vector2<f64>; 3]) -> Result<Vector2<f64>, CoinError> {
    let scale = q.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let sep: Vec<f64> = pairs.iter().map(|&(i, j)| (q[i] - q[j]).norm()).collect();
    let far = (0..3).max_by(|&a, &b| sep[a].total_cmp(&sep[b])).unwrap();
    let ctol = COINCIDENT_TOL * scale;
    if sep[far] <= ctol {
        return Ok(q[0]);
    }
    if sep.iter().any(|d| *d <= ctol) {
        let (i, j) = pairs[far];
        return Ok((q[i] + q[j]) / 2.0);
    }
    let e1 = q[1] - q[0];
    let e2 = q[2] - q[0];
    let det = 2.0 * (e1.x * e2.y - e1.y * e2.x);
    if det.abs() <= ctol * scale {
        return Err(CoinError::Infeasible {
            message: "deformation maps the lattice directions to distinct collinear axes; \
                      no common planar norm exists"
                .into(),
        });
    }
    let r1 = q[1].norm_squared() - q[0].norm_squared();
    let r2 = q[2].norm_squared() - q[0].norm_squared();
    Ok(Vector2::new(
        (r1 * e2.y - r2 * e1.y) / det,
        (r2 * e1.x - r1 * e2.x) / det,
    ))
}

/// Polar/azimuth pair describing a unit Pauli vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinAngles {
    pub theta: f64,
    pub phi: f64,
}

/// `theta = arccos n_z`, `phi = atan2(n_y, n_x)`, with `phi = 0` at the poles.
pub fn angles_from_beta(n: &PauliVector) -> CoinAngles {
    let theta = n.z.clamp(-1.0, 1.0).acos();
    let planar = n.x.hypot(n.y);
    let phi = if planar < 1e-12 { 0.0 } else { n.y.atan2(n.x) };
    CoinAngles { theta, phi }
}

/// The closed-form coin unitary; exactly unitary for any angles.
pub fn unitary_from_angles(a: CoinAngles) -> Mat2 {
    let (c, s) = ((a.theta / 2.0).cos(), (a.theta / 2.0).sin());
    let ep = Complex64::from_polar(1.0, a.phi / 2.0);
    let em = ep.conj();
    Mat2::new(ep * c, em * s, -ep * s, em * c)
}

/// `n . sigma` as a 2x2 Hermitian matrix.
pub fn beta_matrix(n: &PauliVector) -> Mat2 {
    Mat2::new(
        Complex64::new(n.z, 0.0),
        Complex64::new(n.x, -n.y),
        Complex64::new(n.x, n.y),
        Complex64::new(-n.z, 0.0),
    )
}

/// Maps an angle difference to its nearest representative in (-pi, pi].
pub fn wrap_angle(d: f64) -> f64 {
    let mut r = d % TAU;
    if r > PI {
        r -= TAU;
    } else if r <= -PI {
        r += TAU;
    }
    r
}

/// Per-site phase `gamma = -(1/2) cos(theta) (u . grad phi)` for one
/// direction's angle fields on a periodic grid.
///
/// The gradient uses central differences along the two lattice axes (with
/// nearest-angle unwrapping of `phi`) mapped to Cartesian components; the
/// physical spacing is carried by the grid basis.
pub fn gamma_field(
    theta: &[f64],
    phi: &[f64],
    u: Vector2<f64>,
    grid: &BravaisGrid,
) -> Vec<f64> {
    assert_eq!(theta.len(), grid.len());
    assert_eq!(phi.len(), grid.len());
    let to_cart = grid.axis_to_cartesian();
    let mut out = vec![0.0; grid.len()];
    for a in 0..grid.n1 {
        for b in 0..grid.n2 {
            let idx = grid.index(a, b);
            let d1 = wrap_angle(
                phi[grid.shifted_index(a, b, 1, 0)] - phi[grid.shifted_index(a, b, -1, 0)],
            ) / 2.0;
            let d2 = wrap_angle(
                phi[grid.shifted_index(a, b, 0, 1)] - phi[grid.shifted_index(a, b, 0, -1)],
            ) / 2.0;
            let grad = to_cart * Vector2::new(d1, d2);
            out[idx] = -0.5 * theta[idx].cos() * u.dot(&grad);
        }
    }
    out
}

/// Compiled coin data for one lattice direction on one sampling sub-lattice.
#[derive(Debug, Clone)]
pub struct DirCoin {
    pub n: Vec<PauliVector>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub unitary: Vec<Mat2>,
}

/// Coin data sampled on one offset copy of the cell grid.
#[derive(Debug, Clone)]
pub struct SubLattice {
    pub offset: Vector2<f64>,
    pub dir: Vec<DirCoin>,
    /// Per-site scaled mass m / e^t_0.
    pub scaled_mass: Vec<f64>,
    pub max_c1_residual: f64,
}

/// A full compiled coin field at one time: all directions on every sampling
/// sub-lattice a walk needs. Immutable once built.
#[derive(Debug, Clone)]
pub struct CoinField {
    pub grid: BravaisGrid,
    pub dirs: LatticeDirections,
    pub epsilon: f64,
    pub time: f64,
    pub subs: Vec<SubLattice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompileMode {
    /// One row-major continuation sweep.
    Sequential,
    /// Fixed-height row bands solved concurrently, each continued from the
    /// flat seed, cross-checked at the seams against the sequential linkage;
    /// falls back to `Sequential` when a band picks a different branch.
    Banded,
}

/// What to compile: a metric family sampled over (possibly offset copies of)
/// a cell grid at one time.
#[derive(Debug, Clone)]
pub struct CompileSpec<'a> {
    pub family: &'a MetricFamily,
    pub grid: &'a BravaisGrid,
    pub dirs: LatticeDirections,
    /// Physical sampling offsets; one sub-lattice is compiled per entry.
    pub offsets: Vec<Vector2<f64>>,
    pub time: f64,
    pub epsilon: f64,
    pub mass: f64,
    pub mode: CompileMode,
}

pub fn compile(spec: &CompileSpec) -> Result<CoinField, CoinError> {
    spec.family.validate()?;
    let mut subs = Vec::with_capacity(spec.offsets.len());
    for &offset in &spec.offsets {
        subs.push(compile_sublattice(spec, offset)?);
    }
    Ok(CoinField {
        grid: spec.grid.clone(),
        dirs: spec.dirs.clone(),
        epsilon: spec.epsilon,
        time: spec.time,
        subs,
    })
}

fn compile_sublattice(spec: &CompileSpec, offset: Vector2<f64>) -> Result<SubLattice, CoinError> {
    let grid = spec.grid;
    let sites = grid.len();
    // Geometry evaluation is independent per site; do it up front.
    let lambdas: Vec<(Deformation, f64)> = (0..sites)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / grid.n2, idx % grid.n2);
            let p = SpacetimePoint::spatial(grid.position(a, b) + offset, spec.time);
            let metric = spec.family.at(p)?;
            let tetrad = build_tetrad(&metric)?;
            Ok((deformation_at(&tetrad), spec.mass / tetrad.e_t_0()))
        })
        .collect::<Result<_, crate::error::GeometryError>>()?;

    let triples = match spec.mode {
        CompileMode::Sequential => sweep_rows(grid, &spec.dirs, &lambdas, 0, grid.n1, None)?,
        CompileMode::Banded => match compile_banded(grid, &spec.dirs, &lambdas) {
            Ok(t) => t,
            Err(BandOutcome::Mismatch) => {
                sweep_rows(grid, &spec.dirs, &lambdas, 0, grid.n1, None)?
            }
            Err(BandOutcome::Failed(e)) => return Err(e),
        },
    };

    let ndirs = spec.dirs.count();
    let mut dir = Vec::with_capacity(ndirs);
    let max_c1 = triples.iter().fold(0.0f64, |m, t| m.max(t.residual));
    for i in 0..ndirs {
        let n: Vec<PauliVector> = triples.iter().map(|t| t.n[i]).collect();
        let mut theta = Vec::with_capacity(sites);
        let mut phi = Vec::with_capacity(sites);
        let mut unitary = Vec::with_capacity(sites);
        for v in &n {
            let a = angles_from_beta(v);
            theta.push(a.theta);
            phi.push(a.phi);
            unitary.push(unitary_from_angles(a));
        }
        let gamma = gamma_field(&theta, &phi, spec.dirs.u(i), grid);
        dir.push(DirCoin { n, theta, phi, gamma, unitary });
    }
    Ok(SubLattice {
        offset,
        dir,
        scaled_mass: lambdas.iter().map(|(_, m)| *m).collect(),
        max_c1_residual: max_c1,
    })
}

enum BandOutcome {
    Mismatch,
    Failed(CoinError),
}

/// Row-major continuation over rows [row0, row1); `seed` overrides the flat
/// seed for the first site. Errors carry the failing site.
fn sweep_rows(
    grid: &BravaisGrid,
    dirs: &LatticeDirections,
    lambdas: &[(Deformation, f64)],
    row0: usize,
    row1: usize,
    seed: Option<&BetaTriple>,
) -> Result<Vec<BetaTriple>, CoinError> {
    let flat = if dirs.is_square() { None } else { Some(flat_taus(dirs)) };
    let mut out: Vec<BetaTriple> = Vec::with_capacity((row1 - row0) * grid.n2);
    for a in row0..row1 {
        for b in 0..grid.n2 {
            let idx = grid.index(a, b);
            let prev = out.last().or(seed).or(flat.as_ref()).cloned();
            let prev = prev.unwrap_or_else(|| BetaTriple { n: vec![], residual: 0.0 });
            let t = solve_betas(&lambdas[idx].0, dirs, &prev).map_err(|source| {
                CoinError::AtSite { a, b, source: Box::new(source) }
            })?;
            out.push(t);
        }
    }
    Ok(out)
}

fn compile_banded(
    grid: &BravaisGrid,
    dirs: &LatticeDirections,
    lambdas: &[(Deformation, f64)],
) -> Result<Vec<BetaTriple>, BandOutcome> {
    let nbands = grid.n1.div_ceil(BAND_ROWS);
    if nbands <= 1 {
        return sweep_rows(grid, dirs, lambdas, 0, grid.n1, None).map_err(BandOutcome::Failed);
    }
    let bands: Vec<Result<Vec<BetaTriple>, CoinError>> = (0..nbands)
        .into_par_iter()
        .map(|band| {
            let row0 = band * BAND_ROWS;
            let row1 = (row0 + BAND_ROWS).min(grid.n1);
            sweep_rows(grid, dirs, lambdas, row0, row1, None)
        })
        .collect();
    let mut joined: Vec<BetaTriple> = Vec::with_capacity(grid.len());
    for band in bands {
        joined.extend(band.map_err(BandOutcome::Failed)?);
    }
    // Seam check: re-solve each band's first row continued from the previous
    // band's last site; agreement means every band stayed on the branch the
    // sequential sweep would have taken.
    for band in 1..nbands {
        let row0 = band * BAND_ROWS;
        let link = joined[grid.index(row0 - 1, grid.n2 - 1)].clone();
        let relinked = sweep_rows(grid, dirs, lambdas, row0, row0 + 1, Some(&link))
            .map_err(BandOutcome::Failed)?;
        for b in 0..grid.n2 {
            let got = &joined[grid.index(row0, b)];
            let want = &relinked[b];
            let diff = got
                .n
                .iter()
                .zip(&want.n)
                .map(|(x, y)| (x - y).amax())
                .fold(0.0f64, f64::max);
            if diff > BRANCH_TOL {
                return Err(BandOutcome::Mismatch);
            }
        }
    }
    Ok(joined)
}

impl CoinField {
    /// The single-sub-lattice accessor used by the cell-centred walks.
    pub fn cell(&self) -> &SubLattice {
        &self.subs[0]
    }

    pub fn max_c1_residual(&self) -> f64 {
        self.subs.iter().fold(0.0, |m, s| m.max(s.max_c1_residual))
    }

    /// Worst deviation of `U_i^dag U_i` from the identity over all sites.
    pub fn max_unitarity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for s in &self.subs {
            for d in &s.dir {
                for u in &d.unitary {
                    let r = u.adjoint() * u - Mat2::identity();
                    worst = worst.max(r.iter().fold(0.0f64, |m, z| m.max(z.norm())));
                }
            }
        }
        worst
    }
}
