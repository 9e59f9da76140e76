//! Discrete-time walks on periodic lattices.
//!
//! `honeycomb` holds the cell-centred walk on the rhombic grid (with the
//! square lattice as a two-direction special case); `triangular` holds the
//! edge-centred walk with three rotation substeps per time step.

pub mod honeycomb;
pub mod triangular;

use crate::coin::CompileMode;
use crate::grid::BravaisGrid;
use crate::{pairwise_sum, Complex64};

/// Evolution controls shared by the walks.
#[derive(Debug, Clone, Copy)]
pub struct WalkParams {
    pub epsilon: f64,
    pub mass: f64,
    /// Recompile the coins every this many steps for time-dependent metrics;
    /// 0 means compile once at the start. Static metrics always compile once.
    pub recompile_every: usize,
    pub mode: CompileMode,
}

/// A two-component complex field with one spinor per grid site.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub grid: BravaisGrid,
    pub up: Vec<Complex64>,
    pub down: Vec<Complex64>,
}

impl SpinorField {
    pub fn zeros(grid: BravaisGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            up: vec![Complex64::ZERO; n],
            down: vec![Complex64::ZERO; n],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.grid.n1, self.grid.n2)
    }

    /// Squared norm with the grid's cell area as the integration measure.
    pub fn norm_sq(&self) -> f64 {
        let mags: Vec<f64> = self
            .up
            .iter()
            .chain(self.down.iter())
            .map(|z| z.norm_sqr())
            .collect();
        pairwise_sum(&mags) * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&mut self, s: Complex64) {
        for z in self.up.iter_mut().chain(self.down.iter_mut()) {
            *z *= s;
        }
    }
}
