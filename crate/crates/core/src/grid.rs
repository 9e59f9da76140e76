//! Periodic Bravais grids shared by the walks and the continuum solver.

use nalgebra::{Matrix2, Vector2};

/// A periodic grid of `n1 x n2` cells spanned by two basis vectors.
///
/// Cell `(a, b)` sits at `a * basis1 + b * basis2`; all index arithmetic is
/// modular, so the grid is a torus of physical extent `n1 * basis1` by
/// `n2 * basis2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BravaisGrid {
    pub n1: usize,
    pub n2: usize,
    pub basis1: Vector2<f64>,
    pub basis2: Vector2<f64>,
}

impl BravaisGrid {
    pub fn new(n1: usize, n2: usize, basis1: Vector2<f64>, basis2: Vector2<f64>) -> Self {
        assert!(n1 > 0 && n2 > 0, "grid dims must be positive");
        let det = basis1.x * basis2.y - basis1.y * basis2.x;
        assert!(det.abs() > 1e-300, "basis vectors must be independent");
        Self { n1, n2, basis1, basis2 }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < self.n1 && b < self.n2);
        a * self.n2 + b
    }

    /// Index of the cell displaced by `(da, db)` from `(a, b)`, wrapping.
    #[inline]
    pub fn shifted_index(&self, a: usize, b: usize, da: isize, db: isize) -> usize {
        let aa = wrap(a as isize + da, self.n1);
        let bb = wrap(b as isize + db, self.n2);
        self.index(aa, bb)
    }

    pub fn position(&self, a: usize, b: usize) -> Vector2<f64> {
        self.basis1 * a as f64 + self.basis2 * b as f64
    }

    /// Physical position of a point with fractional cell coordinates.
    pub fn position_frac(&self, a: f64, b: f64) -> Vector2<f64> {
        self.basis1 * a + self.basis2 * b
    }

    /// Area of one cell.
    pub fn cell_area(&self) -> f64 {
        (self.basis1.x * self.basis2.y - self.basis1.y * self.basis2.x).abs()
    }

    /// Matrix mapping lattice-axis directional derivatives to Cartesian ones:
    /// `grad f = axis_to_cartesian * [d/ds1; d/ds2]` where `s_i` counts cells
    /// along `basis_i`.
    pub fn axis_to_cartesian(&self) -> Matrix2<f64> {
        // [d/ds1; d/ds2] = B^T grad with B = [basis1 basis2], so grad = B^{-T} [..].
        let bt = Matrix2::new(
            self.basis1.x, self.basis1.y,
            self.basis2.x, self.basis2.y,
        );
        bt.try_inverse().expect("independent basis vectors")
    }

    /// Reciprocal basis `g1, g2` with `g_i . basis_j = 2 pi delta_ij`.
    pub fn reciprocal(&self) -> (Vector2<f64>, Vector2<f64>) {
        let det = self.basis1.x * self.basis2.y - self.basis1.y * self.basis2.x;
        let f = 2.0 * std::f64::consts::PI / det;
        (
            Vector2::new(self.basis2.y * f, -self.basis2.x * f),
            Vector2::new(-self.basis1.y * f, self.basis1.x * f),
        )
    }

    /// Wavevector of the FFT mode `(m, n)`, folded to the symmetric window.
    pub fn mode_wavevector(&self, m: usize, n: usize) -> Vector2<f64> {
        let (g1, g2) = self.reciprocal();
        let mm = fold(m, self.n1) / self.n1 as f64;
        let nn = fold(n, self.n2) / self.n2 as f64;
        g1 * mm + g2 * nn
    }

    /// Torus period vectors.
    pub fn periods(&self) -> (Vector2<f64>, Vector2<f64>) {
        (self.basis1 * self.n1 as f64, self.basis2 * self.n2 as f64)
    }
}

#[inline]
pub fn wrap(i: isize, n: usize) -> usize {
    let n = n as isize;
    (((i % n) + n) % n) as usize
}

fn fold(m: usize, n: usize) -> f64 {
    let m = m as isize;
    let n = n as isize;
    if m <= n / 2 { m as f64 } else { (m - n) as f64 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_handles_negatives() {
        assert_eq!(wrap(-1, 8), 7);
        assert_eq!(wrap(8, 8), 0);
        assert_eq!(wrap(-9, 8), 7);
        assert_eq!(wrap(3, 8), 3);
    }

    #[test]
    fn reciprocal_is_dual_to_basis() {
        let g = BravaisGrid::new(
            4,
            4,
            Vector2::new(0.1, 0.0),
            Vector2::new(-0.05, 0.2),
        );
        let (g1, g2) = g.reciprocal();
        let tau = 2.0 * std::f64::consts::PI;
        assert_relative_eq!(g1.dot(&g.basis1), tau, epsilon = 1e-12);
        assert_relative_eq!(g1.dot(&g.basis2), 0.0, epsilon = 1e-12);
        assert_relative_eq!(g2.dot(&g.basis1), 0.0, epsilon = 1e-12);
        assert_relative_eq!(g2.dot(&g.basis2), tau, epsilon = 1e-12);
    }

    #[test]
    fn axis_to_cartesian_inverts_directional_derivatives() {
        let g = BravaisGrid::new(2, 2, Vector2::new(1.0, 0.0), Vector2::new(-0.5, 0.75));
        let m = g.axis_to_cartesian();
        // For f(x, y) = x: d/ds1 = basis1.x, d/ds2 = basis2.x; gradient must be (1, 0).
        let gx = m * Vector2::new(g.basis1.x, g.basis2.x);
        let gy = m * Vector2::new(g.basis1.y, g.basis2.y);
        assert_relative_eq!(gx.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(gx.y, 0.0, epsilon = 1e-12);
        assert_relative_eq!(gy.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(gy.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mode_wavevector_folds_to_symmetric_window() {
        let g = BravaisGrid::new(8, 8, Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0));
        let k = g.mode_wavevector(7, 0);
        assert_relative_eq!(k.x, -2.0 * std::f64::consts::PI / 8.0, epsilon = 1e-12);
    }
}
