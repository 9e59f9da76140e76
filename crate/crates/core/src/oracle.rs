//! Reference solutions for the continuum equation the walks approximate.
//!
//! Flat space is solved exactly per Fourier mode. Curved metrics use the
//! Hermitian generator `H = -(i/2)(C^a D_a + D_a C^a) + m~ sigma^z` with
//! 4th-order periodic central differences `D_a` along the grid axes and a
//! classic Runge-Kutta integrator, guarded by a step-size bound and a norm
//! drift budget.

use crate::coin::beta_matrix;
use crate::error::{GeometryError, OracleError};
use crate::geometry::{build_tetrad, deformation_at, density_factor, MetricFamily, SpacetimePoint};
use crate::grid::{wrap, BravaisGrid};
use crate::walk::SpinorField;
use crate::{Complex64, Mat2};
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use rustfft::FftPlanner;

const NORM_DRIFT_BUDGET: f64 = 1e-8;

/// `k_x sigma^x + k_y sigma^y + m sigma^z`.
pub fn dirac_symbol(k: Vector2<f64>, mass: f64) -> Mat2 {
    Mat2::new(
        Complex64::new(mass, 0.0),
        Complex64::new(k.x, -k.y),
        Complex64::new(k.x, k.y),
        Complex64::new(-mass, 0.0),
    )
}

/// One energy-momentum eigenmode of the flat equation.
#[derive(Debug, Clone)]
pub struct PlaneWaveSolution {
    pub k: Vector2<f64>,
    pub mass: f64,
    pub energy: f64,
    pub spinor: [Complex64; 2],
}

impl PlaneWaveSolution {
    pub fn new(k: Vector2<f64>, mass: f64, positive: bool) -> Self {
        let e = (k.norm_squared() + mass * mass).sqrt();
        let energy = if positive { e } else { -e };
        // (k_x - i k_y, E - m) solves the eigenproblem for either branch;
        // it degenerates only at the rest-frame point, where the spin basis
        // vectors are themselves the eigenvectors.
        let mut v = [
            Complex64::new(k.x, -k.y),
            Complex64::new(energy - mass, 0.0),
        ];
        let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if norm < 1e-12 {
            v = if positive {
                [Complex64::new(1.0, 0.0), Complex64::ZERO]
            } else {
                [Complex64::ZERO, Complex64::new(1.0, 0.0)]
            };
        } else {
            v[0] /= norm;
            v[1] /= norm;
        }
        Self { k, mass, energy, spinor: v }
    }

    /// Worst component of `H_D(k) v - E v`.
    pub fn residual(&self) -> f64 {
        let h = dirac_symbol(self.k, self.mass);
        let hv0 = h[(0, 0)] * self.spinor[0] + h[(0, 1)] * self.spinor[1];
        let hv1 = h[(1, 0)] * self.spinor[0] + h[(1, 1)] * self.spinor[1];
        (hv0 - self.spinor[0] * self.energy)
            .norm()
            .max((hv1 - self.spinor[1] * self.energy).norm())
    }

    /// Samples `e^{i(k.x - E t)} v` on a grid.
    pub fn sample(&self, grid: &BravaisGrid, t: f64) -> SpinorField {
        let mut f = SpinorField::zeros(grid.clone());
        for a in 0..grid.n1 {
            for b in 0..grid.n2 {
                let idx = grid.index(a, b);
                let phase =
                    Complex64::from_polar(1.0, self.k.dot(&grid.position(a, b)) - self.energy * t);
                f.up[idx] = phase * self.spinor[0];
                f.down[idx] = phase * self.spinor[1];
            }
        }
        f
    }
}

fn fft2(plane: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(n2), planner.plan_fft_inverse(n1))
    } else {
        (planner.plan_fft_forward(n2), planner.plan_fft_forward(n1))
    };
    row.process(plane);
    let mut t = vec![Complex64::ZERO; plane.len()];
    for a in 0..n1 {
        for b in 0..n2 {
            t[b * n1 + a] = plane[a * n2 + b];
        }
    }
    col.process(&mut t);
    for b in 0..n2 {
        for a in 0..n1 {
            plane[a * n2 + b] = t[b * n1 + a];
        }
    }
}

/// Exact flat evolution: every Fourier mode is rotated by the closed-form
/// exponential of its 2x2 symbol.
pub fn flat_evolve(chi0: &SpinorField, mass: f64, t: f64) -> SpinorField {
    let grid = chi0.grid.clone();
    let (n1, n2) = (grid.n1, grid.n2);
    let mut up = chi0.up.clone();
    let mut down = chi0.down.clone();
    fft2(&mut up, n1, n2, false);
    fft2(&mut down, n1, n2, false);
    for m1 in 0..n1 {
        for m2 in 0..n2 {
            let idx = m1 * n2 + m2;
            let k = grid.mode_wavevector(m1, m2);
            let e = (k.norm_squared() + mass * mass).sqrt();
            // exp(-itH) = cos(tE) - i sin(tE) H / E since H^2 = E^2.
            let (c, s_over_e) = if e > 0.0 {
                ((t * e).cos(), (t * e).sin() / e)
            } else {
                (1.0, 0.0)
            };
            let h = dirac_symbol(k, mass);
            let i_s = Complex64::new(0.0, -s_over_e);
            let u = up[idx];
            let d = down[idx];
            up[idx] = u * c + i_s * (h[(0, 0)] * u + h[(0, 1)] * d);
            down[idx] = d * c + i_s * (h[(1, 0)] * u + h[(1, 1)] * d);
        }
    }
    fft2(&mut up, n1, n2, true);
    fft2(&mut down, n1, n2, true);
    let scale = 1.0 / (n1 * n2) as f64;
    for z in up.iter_mut().chain(down.iter_mut()) {
        *z *= scale;
    }
    SpinorField { grid, up, down }
}

/// The discretized curved generator at one time, with per-site coefficient
/// matrices stored as Pauli triples (they are traceless Hermitian).
#[derive(Debug, Clone)]
pub struct HamiltonianField {
    pub grid: BravaisGrid,
    bx: Vec<Vector3<f64>>,
    by: Vec<Vector3<f64>>,
    c1: Vec<Vector3<f64>>,
    c2: Vec<Vector3<f64>>,
    mtilde: Vec<f64>,
    bmax: f64,
}

/// Assembles the generator coefficients from the metric's deformation at
/// every grid point.
pub fn build_generator(
    family: &MetricFamily,
    grid: &BravaisGrid,
    mass: f64,
    time: f64,
) -> Result<HamiltonianField, GeometryError> {
    family.validate()?;
    let n = grid.len();
    let rows: Vec<(Vector3<f64>, Vector3<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / grid.n2, idx % grid.n2);
            let p = SpacetimePoint::spatial(grid.position(a, b), time);
            let metric = family.at(p)?;
            let tetrad = build_tetrad(&metric)?;
            let l = deformation_at(&tetrad).spatial();
            Ok((
                Vector3::new(l[(0, 0)], l[(0, 1)], 0.0),
                Vector3::new(l[(1, 0)], l[(1, 1)], 0.0),
                mass / tetrad.e_t_0(),
            ))
        })
        .collect::<Result<_, GeometryError>>()?;
    let m = grid.axis_to_cartesian();
    let mut bx = Vec::with_capacity(n);
    let mut by = Vec::with_capacity(n);
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    let mut mtilde = Vec::with_capacity(n);
    let mut bmax = 0.0f64;
    for (vx, vy, mt) in rows {
        bmax = bmax.max(vx.norm()).max(vy.norm());
        c1.push(vx * m[(0, 0)] + vy * m[(1, 0)]);
        c2.push(vx * m[(0, 1)] + vy * m[(1, 1)]);
        bx.push(vx);
        by.push(vy);
        mtilde.push(mt);
    }
    Ok(HamiltonianField {
        grid: grid.clone(),
        bx,
        by,
        c1,
        c2,
        mtilde,
        bmax,
    })
}

#[inline]
fn pauli_apply(v: &Vector3<f64>, u: Complex64, d: Complex64) -> (Complex64, Complex64) {
    (
        u * v.z + Complex64::new(v.x, -v.y) * d,
        Complex64::new(v.x, v.y) * u - d * v.z,
    )
}

#[inline]
fn stencil(p1: Complex64, m1: Complex64, p2: Complex64, m2: Complex64) -> Complex64 {
    ((p1 - m1) * 8.0 - (p2 - m2)) / 12.0
}

impl HamiltonianField {
    /// Largest spectral norm of the Cartesian coefficient matrices.
    pub fn bmax(&self) -> f64 {
        self.bmax
    }

    /// Step-size bound `0.5 h / max ||B||` used by the integrator.
    pub fn cfl_bound(&self) -> f64 {
        let h = self.grid.basis1.norm().min(self.grid.basis2.norm());
        if self.bmax > 1e-300 {
            0.5 * h / self.bmax
        } else {
            f64::INFINITY
        }
    }

    pub fn b_x(&self, idx: usize) -> Mat2 {
        beta_matrix(&self.bx[idx])
    }

    pub fn b_y(&self, idx: usize) -> Mat2 {
        beta_matrix(&self.by[idx])
    }

    pub fn scaled_mass(&self, idx: usize) -> f64 {
        self.mtilde[idx]
    }

    pub fn apply(&self, chi: &SpinorField) -> SpinorField {
        let mut t1 = SpinorField::zeros(self.grid.clone());
        let mut t2 = SpinorField::zeros(self.grid.clone());
        let mut out = SpinorField::zeros(self.grid.clone());
        self.apply_into(chi, &mut t1, &mut t2, &mut out);
        out
    }

    /// `out = H chi` using `t1`, `t2` as scratch for the products `C^a chi`.
    pub fn apply_into(
        &self,
        chi: &SpinorField,
        t1: &mut SpinorField,
        t2: &mut SpinorField,
        out: &mut SpinorField,
    ) {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        for idx in 0..n1 * n2 {
            let (a, b) = pauli_apply(&self.c1[idx], chi.up[idx], chi.down[idx]);
            t1.up[idx] = a;
            t1.down[idx] = b;
            let (a, b) = pauli_apply(&self.c2[idx], chi.up[idx], chi.down[idx]);
            t2.up[idx] = a;
            t2.down[idx] = b;
        }
        let bp1: Vec<usize> = (0..n2).map(|b| wrap(b as isize + 1, n2)).collect();
        let bm1: Vec<usize> = (0..n2).map(|b| wrap(b as isize - 1, n2)).collect();
        let bp2: Vec<usize> = (0..n2).map(|b| wrap(b as isize + 2, n2)).collect();
        let bm2: Vec<usize> = (0..n2).map(|b| wrap(b as isize - 2, n2)).collect();
        let chi_ref = &*chi;
        let t1_ref = &*t1;
        let t2_ref = &*t2;
        out.up
            .par_chunks_mut(n2)
            .zip(out.down.par_chunks_mut(n2))
            .enumerate()
            .for_each(|(a, (ou, od))| {
                let r0 = a * n2;
                let rp1 = wrap(a as isize + 1, n1) * n2;
                let rm1 = wrap(a as isize - 1, n1) * n2;
                let rp2 = wrap(a as isize + 2, n1) * n2;
                let rm2 = wrap(a as isize - 2, n1) * n2;
                for b in 0..n2 {
                    let idx = r0 + b;
                    let d1u = stencil(
                        chi_ref.up[rp1 + b],
                        chi_ref.up[rm1 + b],
                        chi_ref.up[rp2 + b],
                        chi_ref.up[rm2 + b],
                    );
                    let d1d = stencil(
                        chi_ref.down[rp1 + b],
                        chi_ref.down[rm1 + b],
                        chi_ref.down[rp2 + b],
                        chi_ref.down[rm2 + b],
                    );
                    let d2u = stencil(
                        chi_ref.up[r0 + bp1[b]],
                        chi_ref.up[r0 + bm1[b]],
                        chi_ref.up[r0 + bp2[b]],
                        chi_ref.up[r0 + bm2[b]],
                    );
                    let d2d = stencil(
                        chi_ref.down[r0 + bp1[b]],
                        chi_ref.down[r0 + bm1[b]],
                        chi_ref.down[r0 + bp2[b]],
                        chi_ref.down[r0 + bm2[b]],
                    );
                    let e1u = stencil(
                        t1_ref.up[rp1 + b],
                        t1_ref.up[rm1 + b],
                        t1_ref.up[rp2 + b],
                        t1_ref.up[rm2 + b],
                    );
                    let e1d = stencil(
                        t1_ref.down[rp1 + b],
                        t1_ref.down[rm1 + b],
                        t1_ref.down[rp2 + b],
                        t1_ref.down[rm2 + b],
                    );
                    let e2u = stencil(
                        t2_ref.up[r0 + bp1[b]],
                        t2_ref.up[r0 + bm1[b]],
                        t2_ref.up[r0 + bp2[b]],
                        t2_ref.up[r0 + bm2[b]],
                    );
                    let e2d = stencil(
                        t2_ref.down[r0 + bp1[b]],
                        t2_ref.down[r0 + bm1[b]],
                        t2_ref.down[r0 + bp2[b]],
                        t2_ref.down[r0 + bm2[b]],
                    );
                    let (p1u, p1d) = pauli_apply(&self.c1[idx], d1u, d1d);
                    let (p2u, p2d) = pauli_apply(&self.c2[idx], d2u, d2d);
                    let half_i = Complex64::new(0.0, -0.5);
                    let m = self.mtilde[idx];
                    ou[b] = half_i * (p1u + e1u + p2u + e2u) + chi_ref.up[idx] * m;
                    od[b] = half_i * (p1d + e1d + p2d + e2d) - chi_ref.down[idx] * m;
                }
            });
    }
}

fn axpy(dst: &mut SpinorField, coeff: Complex64, src: &SpinorField) {
    for (d, s) in dst.up.iter_mut().zip(&src.up) {
        *d += coeff * s;
    }
    for (d, s) in dst.down.iter_mut().zip(&src.down) {
        *d += coeff * s;
    }
}

fn copy_scaled(dst: &mut SpinorField, base: &SpinorField, coeff: Complex64, k: &SpinorField) {
    for i in 0..dst.up.len() {
        dst.up[i] = base.up[i] + coeff * k.up[i];
        dst.down[i] = base.down[i] + coeff * k.down[i];
    }
}

/// Integrates `d chi/dt = -i H(t) chi` with classic Runge-Kutta, enforcing
/// the step bound and a relative norm-drift budget. Static metrics reuse one
/// generator; time-dependent ones rebuild it at each stage time.
pub fn evolve_rk4(
    chi0: &SpinorField,
    family: &MetricFamily,
    mass: f64,
    t_final: f64,
    dt: f64,
) -> Result<SpinorField, OracleError> {
    if family.is_static() {
        let field = build_generator(family, &chi0.grid, mass, 0.0)?;
        return evolve_rk4_with(chi0, &field, t_final, dt);
    }
    if t_final == 0.0 {
        return Ok(chi0.clone());
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let h = t_final / steps as f64;
    let norm0 = chi0.norm();
    let mut chi = chi0.clone();
    let grid = chi0.grid.clone();
    let mut k = SpinorField::zeros(grid.clone());
    let mut stage = SpinorField::zeros(grid.clone());
    let mut acc = SpinorField::zeros(grid.clone());
    let mut t1 = SpinorField::zeros(grid.clone());
    let mut t2 = SpinorField::zeros(grid.clone());
    let mi = |x: f64| Complex64::new(0.0, -x);
    let mut start = build_generator(family, &grid, mass, 0.0)?;
    for j in 0..steps {
        let t = j as f64 * h;
        let mid = build_generator(family, &grid, mass, t + 0.5 * h)?;
        let end = build_generator(family, &grid, mass, t + h)?;
        for f in [&start, &mid, &end] {
            let bound = f.cfl_bound();
            if dt > bound {
                return Err(OracleError::CflViolation { dt, bound });
            }
        }
        start.apply_into(&chi, &mut t1, &mut t2, &mut k);
        acc.up.copy_from_slice(&chi.up);
        acc.down.copy_from_slice(&chi.down);
        axpy(&mut acc, mi(h / 6.0), &k);
        copy_scaled(&mut stage, &chi, mi(h / 2.0), &k);
        mid.apply_into(&stage, &mut t1, &mut t2, &mut k);
        axpy(&mut acc, mi(h / 3.0), &k);
        copy_scaled(&mut stage, &chi, mi(h / 2.0), &k);
        mid.apply_into(&stage, &mut t1, &mut t2, &mut k);
        axpy(&mut acc, mi(h / 3.0), &k);
        copy_scaled(&mut stage, &chi, mi(h), &k);
        end.apply_into(&stage, &mut t1, &mut t2, &mut k);
        axpy(&mut acc, mi(h / 6.0), &k);
        std::mem::swap(&mut chi, &mut acc);
        start = end;
        let drift = (chi.norm() - norm0).abs() / norm0;
        if drift > NORM_DRIFT_BUDGET {
            return Err(OracleError::NormDrift {
                drift,
                budget: NORM_DRIFT_BUDGET,
            });
        }
    }
    Ok(chi)
}

pub fn evolve_rk4_with(
    chi0: &SpinorField,
    field: &HamiltonianField,
    t_final: f64,
    dt: f64,
) -> Result<SpinorField, OracleError> {
    let bound = field.cfl_bound();
    if dt > bound {
        return Err(OracleError::CflViolation { dt, bound });
    }
    if t_final == 0.0 {
        return Ok(chi0.clone());
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let h = t_final / steps as f64;
    let norm0 = chi0.norm();
    let mut chi = chi0.clone();
    let grid = chi0.grid.clone();
    let mut k = SpinorField::zeros(grid.clone());
    let mut stage = SpinorField::zeros(grid.clone());
    let mut acc = SpinorField::zeros(grid.clone());
    let mut t1 = SpinorField::zeros(grid.clone());
    let mut t2 = SpinorField::zeros(grid);
    let mi = |x: f64| Complex64::new(0.0, -x);
    for _ in 0..steps {
        field.apply_into(&chi, &mut t1, &mut t2, &mut k);
        acc.up.copy_from_slice(&chi.up);
        acc.down.copy_from_slice(&chi.down);
        axpy(&mut acc, mi(h / 6.0), &k);
        copy_scaled(&mut stage, &chi, mi(h / 2.0), &k);
        field.apply_into(&stage, &mut t1, &mut t2, &mut k);
        axpy(&mut acc, mi(h / 3.0), &k);
        copy_scaled(&mut stage, &chi, mi(h / 2.0), &k);
        field.apply_into(&stage, &mut t1, &mut t2, &mut k);
        axpy(&mut acc, mi(h / 3.0), &k);
        copy_scaled(&mut stage, &chi, mi(h), &k);
        field.apply_into(&stage, &mut t1, &mut t2, &mut k);
        axpy(&mut acc, mi(h / 6.0), &k);
        std::mem::swap(&mut chi, &mut acc);
        let drift = (chi.norm() - norm0).abs() / norm0;
        if drift > NORM_DRIFT_BUDGET {
            return Err(OracleError::NormDrift {
                drift,
                budget: NORM_DRIFT_BUDGET,
            });
        }
    }
    Ok(chi)
}

/// Pointwise rescaling `chi = |g|^{1/4} (e^t_0)^{1/2} psi` between the
/// physical spinor and the density-normalized field that both the walks and
/// the integrator evolve.
pub fn chi_from_psi(
    psi: &SpinorField,
    family: &MetricFamily,
    time: f64,
) -> Result<SpinorField, GeometryError> {
    convert(psi, family, time, false)
}

pub fn psi_from_chi(
    chi: &SpinorField,
    family: &MetricFamily,
    time: f64,
) -> Result<SpinorField, GeometryError> {
    convert(chi, family, time, true)
}

fn convert(
    f: &SpinorField,
    family: &MetricFamily,
    time: f64,
    invert: bool,
) -> Result<SpinorField, GeometryError> {
    let grid = f.grid.clone();
    let mut out = f.clone();
    for a in 0..grid.n1 {
        for b in 0..grid.n2 {
            let idx = grid.index(a, b);
            let p = SpacetimePoint::spatial(grid.position(a, b), time);
            let metric = family.at(p)?;
            let tetrad = build_tetrad(&metric)?;
            let mut s = density_factor(&metric, &tetrad);
            if invert {
                s = 1.0 / s;
            }
            out.up[idx] *= s;
            out.down[idx] *= s;
        }
    }
    Ok(out)
}
