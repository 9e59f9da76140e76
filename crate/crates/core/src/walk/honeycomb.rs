//! Cell-centred walk: three (or two) conditional translations per step, each
//! conjugated by its compiled coin, followed by a mass phase.

use super::{SpinorField, WalkParams};
use crate::coin::{compile, CoinField, CompileMode, CompileSpec, LatticeDirections};
use crate::error::WalkError;
use crate::geometry::MetricFamily;
use crate::grid::BravaisGrid;
use crate::Complex64;
use nalgebra::Vector2;

/// Which cell-centred lattice a walk runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLattice {
    /// Three translation directions at 120 degrees on a rhombic grid.
    Honeycomb,
    /// Two orthogonal directions on a rectangular grid.
    Square,
}

impl CellLattice {
    pub fn directions(self) -> LatticeDirections {
        match self {
            CellLattice::Honeycomb => LatticeDirections::honeycomb(),
            CellLattice::Square => LatticeDirections::square(),
        }
    }

    /// Site (a, b) sits at `epsilon * (a u_0 + b u_1)`.
    pub fn grid(self, n1: usize, n2: usize, epsilon: f64) -> BravaisGrid {
        let dirs = self.directions();
        BravaisGrid::new(n1, n2, dirs.u(0) * epsilon, dirs.u(1) * epsilon)
    }

    /// Lattice displacement of one step along each direction. The third
    /// honeycomb direction is the composite (-1, -1) since u_2 = -u_0 - u_1.
    pub fn displacements(self) -> &'static [(isize, isize)] {
        match self {
            CellLattice::Honeycomb => &[(1, 0), (0, 1), (-1, -1)],
            CellLattice::Square => &[(1, 0), (0, 1)],
        }
    }
}

/// Compiles the coin field this walk needs at one time.
pub fn compile_at(
    lattice: CellLattice,
    family: &MetricFamily,
    grid: &BravaisGrid,
    epsilon: f64,
    mass: f64,
    time: f64,
    mode: CompileMode,
) -> Result<CoinField, crate::error::CoinError> {
    compile(&CompileSpec {
        family,
        grid,
        dirs: lattice.directions(),
        offsets: vec![Vector2::zeros()],
        time,
        epsilon,
        mass,
        mode,
    })
}

fn shift_planes(psi: &mut SpinorField, da: isize, db: isize) {
    let grid = psi.grid.clone();
    let n = grid.len();
    let mut scratch = vec![Complex64::ZERO; n];
    // Up components move forward along the direction, so each site pulls
    // from one step backward; down components pull from one step forward.
    for a in 0..grid.n1 {
        for b in 0..grid.n2 {
            scratch[grid.index(a, b)] = psi.up[grid.shifted_index(a, b, -da, -db)];
        }
    }
    std::mem::swap(&mut psi.up, &mut scratch);
    for a in 0..grid.n1 {
        for b in 0..grid.n2 {
            scratch[grid.index(a, b)] = psi.down[grid.shifted_index(a, b, da, db)];
        }
    }
    std::mem::swap(&mut psi.down, &mut scratch);
}

/// One conditional translation along direction `i` of `lattice`.
pub fn translate(psi: &mut SpinorField, lattice: CellLattice, i: usize) {
    let (da, db) = lattice.displacements()[i];
    shift_planes(psi, da, db);
}

fn check_dims(psi: &SpinorField, coins: &CoinField) -> Result<(), WalkError> {
    let field = psi.dims();
    let cdims = (coins.grid.n1, coins.grid.n2);
    if field != cdims {
        return Err(WalkError::DimensionMismatch {
            field,
            coins: cdims,
        });
    }
    Ok(())
}

/// One full walk step with coins compiled for the step's start time.
pub fn step(psi: &mut SpinorField, coins: &CoinField) -> Result<(), WalkError> {
    check_dims(psi, coins)?;
    let lattice = if coins.dirs.is_square() {
        CellLattice::Square
    } else {
        CellLattice::Honeycomb
    };
    let eps = coins.epsilon;
    let sub = coins.cell();
    let n = psi.up.len();
    for (i, dc) in sub.dir.iter().enumerate() {
        for idx in 0..n {
            let phase = Complex64::from_polar(1.0, -eps * dc.gamma[idx]);
            let u = &dc.unitary[idx];
            let a = psi.up[idx] * phase;
            let b = psi.down[idx] * phase;
            psi.up[idx] = u[(0, 0)] * a + u[(0, 1)] * b;
            psi.down[idx] = u[(1, 0)] * a + u[(1, 1)] * b;
        }
        translate(psi, lattice, i);
        for idx in 0..n {
            let u = &dc.unitary[idx];
            let a = psi.up[idx];
            let b = psi.down[idx];
            psi.up[idx] = u[(0, 0)].conj() * a + u[(1, 0)].conj() * b;
            psi.down[idx] = u[(0, 1)].conj() * a + u[(1, 1)].conj() * b;
        }
    }
    for idx in 0..n {
        let phase = Complex64::from_polar(1.0, -eps * sub.scaled_mass[idx]);
        psi.up[idx] *= phase;
        psi.down[idx] *= phase.conj();
    }
    Ok(())
}

/// Runs `steps` walk steps from time 0, recompiling coins as configured, and
/// calls `observer` with the completed step count after each step.
pub fn evolve(
    psi: &mut SpinorField,
    lattice: CellLattice,
    family: &MetricFamily,
    params: &WalkParams,
    steps: usize,
    mut observer: impl FnMut(usize, &SpinorField),
) -> Result<(), WalkError> {
    let grid = psi.grid.clone();
    let mut coins = compile_at(
        lattice,
        family,
        &grid,
        params.epsilon,
        params.mass,
        0.0,
        params.mode,
    )?;
    let fixed = family.is_static() || params.recompile_every == 0;
    for s in 0..steps {
        if !fixed && s > 0 && s % params.recompile_every == 0 {
            coins = compile_at(
                lattice,
                family,
                &grid,
                params.epsilon,
                params.mass,
                s as f64 * params.epsilon,
                params.mode,
            )?;
        }
        step(psi, &coins)?;
        observer(s + 1, psi);
    }
    Ok(())
}

/// Graph distance on the cell grid with the honeycomb move set
/// {(1,0), (0,1), (1,1)} and negatives, minimized over torus wraps.
pub fn torus_distance(da: isize, db: isize, n1: usize, n2: usize) -> usize {
    let mut best = usize::MAX;
    for wa in [-1isize, 0, 1] {
        for wb in [-1isize, 0, 1] {
            let a = da + wa * n1 as isize;
            let b = db + wb * n2 as isize;
            let d = if a * b >= 0 {
                a.unsigned_abs().max(b.unsigned_abs())
            } else {
                a.unsigned_abs() + b.unsigned_abs()
            };
            best = best.min(d);
        }
    }
    best
}
