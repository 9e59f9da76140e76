//! Edge-centred walk on a lattice of alternating up and down triangles.
//!
//! Each unit cell holds one up-triangle and one down-triangle and owns three
//! edges, indexed by the up-triangle's side k. A step consists of three
//! rotation substeps (one per coin direction) and a mass phase. During a
//! substep every edge gathers the up component from side k-1 of its
//! up-triangle and the down component from side k-1 of its down-triangle, so
//! amplitude started on one side family stays on that family.

use super::{SpinorField, WalkParams};
use crate::coin::{compile, CoinField, CompileSpec, LatticeDirections};
use crate::error::WalkError;
use crate::geometry::MetricFamily;
use crate::grid::{wrap, BravaisGrid};
use crate::{pairwise_sum, Complex64};
use nalgebra::Vector2;

/// Cell grid whose basis vectors span one up/down triangle pair with side
/// length `2 * epsilon`.
pub fn cell_grid(n1: usize, n2: usize, epsilon: f64) -> BravaisGrid {
    let s = 3f64.sqrt();
    BravaisGrid::new(
        n1,
        n2,
        Vector2::new(-2.0 * epsilon, 0.0),
        Vector2::new(-epsilon, -s * epsilon),
    )
}

/// Physical offsets of the three edge midpoints from the cell origin.
pub fn edge_offsets(grid: &BravaisGrid) -> [Vector2<f64>; 3] {
    let b1 = grid.basis1;
    let b2 = grid.basis2;
    [(b1 + b2) * 0.5, b2 * 0.5, b1 * 0.5]
}

/// One 2-spinor per edge, stored in three side planes over the cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub grid: BravaisGrid,
    pub up: Vec<Complex64>,
    pub down: Vec<Complex64>,
}

impl EdgeField {
    pub fn zeros(grid: BravaisGrid) -> Self {
        let n = 3 * grid.len();
        Self {
            grid,
            up: vec![Complex64::ZERO; n],
            down: vec![Complex64::ZERO; n],
        }
    }

    pub fn cells(&self) -> usize {
        self.grid.len()
    }

    pub fn index(&self, side: usize, cell: usize) -> usize {
        side * self.grid.len() + cell
    }

    /// Squared norm with one third of the cell area per edge, so the three
    /// planes together sample the plane at the cell measure.
    pub fn norm_sq(&self) -> f64 {
        let mags: Vec<f64> = self
            .up
            .iter()
            .chain(self.down.iter())
            .map(|z| z.norm_sqr())
            .collect();
        pairwise_sum(&mags) * self.grid.cell_area() / 3.0
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// Adjacency between up- and down-triangles across shared sides.
#[derive(Debug, Clone)]
pub struct NeighborMap {
    pub n1: usize,
    pub n2: usize,
    down: Vec<[u32; 3]>,
    up: Vec<[u32; 3]>,
    dsrc: Vec<[u32; 3]>,
}

pub fn build_neighbor_map(n1: usize, n2: usize) -> NeighborMap {
    assert!(n1 >= 2 && n2 >= 2, "need at least 2x2 cells");
    let cells = n1 * n2;
    let idx = |a: isize, b: isize| (wrap(a, n1) * n2 + wrap(b, n2)) as u32;
    let mut down = vec![[0u32; 3]; cells];
    let mut up = vec![[0u32; 3]; cells];
    for a in 0..n1 as isize {
        for b in 0..n2 as isize {
            let c = (a as usize) * n2 + b as usize;
            down[c] = [idx(a, b), idx(a - 1, b), idx(a, b - 1)];
            up[c] = [idx(a, b), idx(a + 1, b), idx(a, b + 1)];
        }
    }
    let mut dsrc = vec![[0u32; 3]; cells];
    for c in 0..cells {
        for k in 0..3 {
            let d = down[c][k] as usize;
            dsrc[c][k] = up[d][(k + 2) % 3];
        }
    }
    NeighborMap { n1, n2, down, up, dsrc }
}

impl NeighborMap {
    pub fn cells(&self) -> usize {
        self.n1 * self.n2
    }

    /// Down-triangle adjacent to up-triangle `cell` across side `k`.
    pub fn down_neighbor(&self, cell: usize, k: usize) -> usize {
        self.down[cell][k] as usize
    }

    /// Up-triangle adjacent to down-triangle `cell` across side `k`; also the
    /// canonical owner of that edge.
    pub fn up_neighbor(&self, cell: usize, k: usize) -> usize {
        self.up[cell][k] as usize
    }

    /// Owner cell of side k-1 of the down-triangle bordering edge (cell, k):
    /// where the down component entering edge (cell, k) comes from.
    pub fn down_source(&self, cell: usize, k: usize) -> usize {
        self.dsrc[cell][k] as usize
    }
}

/// Compiles coins at the three edge midpoints for one time.
pub fn compile_at(
    family: &MetricFamily,
    grid: &BravaisGrid,
    epsilon: f64,
    mass: f64,
    time: f64,
    mode: crate::coin::CompileMode,
) -> Result<CoinField, crate::error::CoinError> {
    compile(&CompileSpec {
        family,
        grid,
        dirs: LatticeDirections::honeycomb(),
        offsets: edge_offsets(grid).to_vec(),
        time,
        epsilon,
        mass,
        mode,
    })
}

/// One rotation substep with coin direction `i`: every edge (cell, k) gathers
/// the rotated up component from edge (cell, k-1) and the rotated down
/// component from side k-1 of its adjacent down-triangle, then undoes the
/// rotation with the coin at the destination edge.
pub fn substep(
    src: &EdgeField,
    i: usize,
    coins: &CoinField,
    map: &NeighborMap,
    dst: &mut EdgeField,
) {
    let cells = src.cells();
    let eps = coins.epsilon;
    for k in 0..3 {
        let kprev = (k + 2) % 3;
        let from = &coins.subs[kprev].dir[i];
        let to = &coins.subs[k].dir[i];
        for c in 0..cells {
            let cd = map.down_source(c, k);
            let up_amp = {
                let s = kprev * cells + c;
                let ph = Complex64::from_polar(1.0, -eps * from.gamma[c]);
                let u = &from.unitary[c];
                u[(0, 0)] * (src.up[s] * ph) + u[(0, 1)] * (src.down[s] * ph)
            };
            let dn_amp = {
                let s = kprev * cells + cd;
                let ph = Complex64::from_polar(1.0, -eps * from.gamma[cd]);
                let u = &from.unitary[cd];
                u[(1, 0)] * (src.up[s] * ph) + u[(1, 1)] * (src.down[s] * ph)
            };
            let u = &to.unitary[c];
            let d = k * cells + c;
            dst.up[d] = u[(0, 0)].conj() * up_amp + u[(1, 0)].conj() * dn_amp;
            dst.down[d] = u[(0, 1)].conj() * up_amp + u[(1, 1)].conj() * dn_amp;
        }
    }
}

fn check_dims(psi: &EdgeField, coins: &CoinField, map: &NeighborMap) -> Result<(), WalkError> {
    let field = (psi.grid.n1, psi.grid.n2);
    let cdims = (coins.grid.n1, coins.grid.n2);
    if field != cdims || coins.subs.len() != 3 || (map.n1, map.n2) != field {
        return Err(WalkError::DimensionMismatch {
            field,
            coins: cdims,
        });
    }
    Ok(())
}

/// One full step: the three substeps in order, then the mass phase at each
/// edge midpoint.
pub fn step(psi: &mut EdgeField, coins: &CoinField, map: &NeighborMap) -> Result<(), WalkError> {
    check_dims(psi, coins, map)?;
    let cells = psi.cells();
    let mut tmp = EdgeField::zeros(psi.grid.clone());
    substep(psi, 0, coins, map, &mut tmp);
    substep(&tmp, 1, coins, map, psi);
    substep(psi, 2, coins, map, &mut tmp);
    let eps = coins.epsilon;
    for k in 0..3 {
        let masses = &coins.subs[k].scaled_mass;
        for c in 0..cells {
            let idx = k * cells + c;
            let phase = Complex64::from_polar(1.0, -eps * masses[c]);
            tmp.up[idx] *= phase;
            tmp.down[idx] *= phase.conj();
        }
    }
    std::mem::swap(psi, &mut tmp);
    Ok(())
}

/// Runs `steps` walk steps from time 0, recompiling coins as configured, and
/// calls `observer` with the completed step count after each step.
pub fn evolve(
    psi: &mut EdgeField,
    family: &MetricFamily,
    params: &WalkParams,
    steps: usize,
    mut observer: impl FnMut(usize, &EdgeField),
) -> Result<(), WalkError> {
    let grid = psi.grid.clone();
    let map = build_neighbor_map(grid.n1, grid.n2);
    let mut coins = compile_at(family, &grid, params.epsilon, params.mass, 0.0, params.mode)?;
    let fixed = family.is_static() || params.recompile_every == 0;
    for s in 0..steps {
        if !fixed && s > 0 && s % params.recompile_every == 0 {
            coins = compile_at(
                family,
                &grid,
                params.epsilon,
                params.mass,
                s as f64 * params.epsilon,
                params.mode,
            )?;
        }
        step(psi, &coins, &map)?;
        observer(s + 1, psi);
    }
    Ok(())
}

/// Resamples the three edge planes onto per-cell spinor fields, one per side,
/// for snapshot output.
pub fn side_fields(psi: &EdgeField) -> [SpinorField; 3] {
    let cells = psi.cells();
    std::array::from_fn(|k| {
        let mut f = SpinorField::zeros(psi.grid.clone());
        f.up.copy_from_slice(&psi.up[k * cells..(k + 1) * cells]);
        f.down.copy_from_slice(&psi.down[k * cells..(k + 1) * cells]);
        f
    })
}

/// Graph distance on the cell grid with the substep move set
/// {(0,1), (-1,0), (1,-1)} and negatives, minimized over torus wraps.
pub fn torus_distance(da: isize, db: isize, n1: usize, n2: usize) -> usize {
    let mut best = usize::MAX;
    for wa in [-1isize, 0, 1] {
        for wb in [-1isize, 0, 1] {
            let a = da + wa * n1 as isize;
            let b = db + wb * n2 as isize;
            let d = if a * b <= 0 {
                a.unsigned_abs().max(b.unsigned_abs())
            } else {
                a.unsigned_abs() + b.unsigned_abs()
            };
            best = best.min(d);
        }
    }
    best
}
