//! Metrics on (2+1)-dimensional spacetime and the tetrads they induce.
//!
//! Metrics are restricted to block form (no shift: `g_tx = g_ty = 0`) with
//! `g_tt > 0` and a negative-definite spatial block, signature `(+, -, -)`.
//! A tetrad here is the inverse vierbein `e^mu_a` satisfying
//! `g_{mu nu} e^mu_a e^nu_b = eta_{ab}` with `eta = diag(1, -1, -1)`.
//! The local-frame freedom is fixed deterministically: `e^t_1 = e^t_2 = 0`,
//! `e^t_0 = 1/sqrt(g_tt)`, and the spatial 2x2 block is the lower-triangular
//! Cholesky factor of the inverse of `-g_spatial` (positive diagonal), which
//! varies smoothly with the metric.

use crate::error::GeometryError;
use crate::expr::{Expr, Var};
use nalgebra::{Cholesky, Matrix2, Matrix2x3, Matrix3, Vector2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl SpacetimePoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    pub fn spatial(xy: Vector2<f64>, t: f64) -> Self {
        Self { t, x: xy.x, y: xy.y }
    }
}

/// Analytic description of a metric field; evaluates to a [`Metric`] at a point.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricFamily {
    /// Minkowski.
    Flat,
    /// Metric whose tetrad is a spatially constant linear deformation of the
    /// flat one, entered directly as the 2x2 `lambda` matrix. Entries may
    /// depend on `t` only.
    Homogeneous { lambda: [[Expr; 2]; 2] },
    /// `diag(1, -f^2, -f^2)` for an expression `f(t, x, y)`.
    Conformal { f: Expr },
    /// `diag(g_tt, g_xx, g_yy)` with expression entries.
    CustomDiagonal { g_tt: Expr, g_xx: Expr, g_yy: Expr },
}

impl MetricFamily {
    pub fn conformal(f: &str) -> Result<Self, GeometryError> {
        Ok(MetricFamily::Conformal { f: Expr::parse(f)? })
    }

    pub fn homogeneous_const(l: [[f64; 2]; 2]) -> Self {
        MetricFamily::Homogeneous {
            lambda: l.map(|row| row.map(Expr::Num)),
        }
    }

    pub fn custom_diagonal(g_tt: &str, g_xx: &str, g_yy: &str) -> Result<Self, GeometryError> {
        Ok(MetricFamily::CustomDiagonal {
            g_tt: Expr::parse(g_tt)?,
            g_xx: Expr::parse(g_xx)?,
            g_yy: Expr::parse(g_yy)?,
        })
    }

    /// True when the metric does not depend on coordinate time.
    pub fn family_name(&self) -> &'static str {
        match self {
            MetricFamily::Flat => "flat",
            MetricFamily::Homogeneous { .. } => "homogeneous",
            MetricFamily::Conformal { .. } => "conformal",
            MetricFamily::CustomDiagonal { .. } => "custom-diagonal",
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            MetricFamily::Flat => true,
            MetricFamily::Homogeneous { lambda } => lambda
                .iter()
                .flatten()
                .all(|e| !e.depends_on(Var::T)),
            MetricFamily::Conformal { f } => !f.depends_on(Var::T),
            MetricFamily::CustomDiagonal { g_tt, g_xx, g_yy } => {
                !g_tt.depends_on(Var::T) && !g_xx.depends_on(Var::T) && !g_yy.depends_on(Var::T)
            }
        }
    }

    /// Validates that homogeneous entries depend on `t` at most.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let MetricFamily::Homogeneous { lambda } = self {
            for e in lambda.iter().flatten() {
                if e.depends_on(Var::X) || e.depends_on(Var::Y) {
                    return Err(GeometryError::Invalid {
                        context: "homogeneous family".into(),
                        message: format!("entry `{e}` depends on x or y"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, p: SpacetimePoint) -> Result<Metric, GeometryError> {
        let g = match self {
            MetricFamily::Flat => Matrix3::from_diagonal(&[1.0, -1.0, -1.0].into()),
            MetricFamily::Homogeneous { lambda } => {
                let v = Matrix2::new(
                    lambda[0][0].eval(p.t, p.x, p.y),
                    lambda[0][1].eval(p.t, p.x, p.y),
                    lambda[1][0].eval(p.t, p.x, p.y),
                    lambda[1][1].eval(p.t, p.x, p.y),
                );
                let vvt = v * v.transpose();
                let spatial = -vvt.try_inverse().ok_or(GeometryError::Invalid {
                    context: "homogeneous family".into(),
                    message: format!("lambda matrix {v:?} is singular"),
                })?;
                block_metric(1.0, spatial)
            }
            MetricFamily::Conformal { f } => {
                let fv = f.eval(p.t, p.x, p.y);
                block_metric(1.0, Matrix2::from_diagonal(&[-fv * fv, -fv * fv].into()))
            }
            MetricFamily::CustomDiagonal { g_tt, g_xx, g_yy } => block_metric(
                g_tt.eval(p.t, p.x, p.y),
                Matrix2::from_diagonal(&[
                    g_xx.eval(p.t, p.x, p.y),
                    g_yy.eval(p.t, p.x, p.y),
                ]
                .into()),
            ),
        };
        Metric::new(g, p)
    }
}

fn block_metric(g_tt: f64, spatial: Matrix2<f64>) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    g[(0, 0)] = g_tt;
    g[(1, 1)] = spatial[(0, 0)];
    g[(1, 2)] = spatial[(0, 1)];
    g[(2, 1)] = spatial[(1, 0)];
    g[(2, 2)] = spatial[(1, 1)];
    g
}

/// A metric tensor evaluated at one spacetime point.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    g: Matrix3<f64>,
    point: SpacetimePoint,
}

impl Metric {
    pub fn new(g: Matrix3<f64>, point: SpacetimePoint) -> Result<Self, GeometryError> {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFiniteEntry {
                t: point.t,
                x: point.x,
                y: point.y,
            });
        }
        if g[(0, 0)] <= 0.0 {
            return Err(GeometryError::NonPositiveGtt {
                value: g[(0, 0)],
                t: point.t,
                x: point.x,
                y: point.y,
            });
        }
        // Negative definite spatial block <=> -g_sp has positive leading minors.
        let a11 = -g[(1, 1)];
        let det = g[(1, 1)] * g[(2, 2)] - g[(1, 2)] * g[(2, 1)];
        if a11 <= 0.0 || det <= 0.0 {
            return Err(GeometryError::SpatialNotNegativeDefinite {
                t: point.t,
                x: point.x,
                y: point.y,
            });
        }
        Ok(Self { g, point })
    }

    pub fn tensor(&self) -> &Matrix3<f64> {
        &self.g
    }

    pub fn point(&self) -> SpacetimePoint {
        self.point
    }

    pub fn spatial(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.g[(1, 1)], self.g[(1, 2)],
            self.g[(2, 1)], self.g[(2, 2)],
        )
    }

    /// |det g|, used for the curved-space density weight.
    pub fn abs_det(&self) -> f64 {
        self.g.determinant().abs()
    }
}

/// Inverse vierbein `e^mu_a` (rows mu = t,x,y; columns a = 0,1,2) together
/// with its matrix inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Tetrad {
    e: Matrix3<f64>,
    forward: Matrix3<f64>,
}

impl Tetrad {
    /// `e^mu_a`.
    pub fn inverse_vierbein(&self) -> &Matrix3<f64> {
        &self.e
    }

    /// Matrix inverse of `e^mu_a`; entry `[a, mu]` is the forward vierbein
    /// `e_mu^a`.
    pub fn forward(&self) -> &Matrix3<f64> {
        &self.forward
    }

    pub fn e_t_0(&self) -> f64 {
        self.e[(0, 0)]
    }

    /// `eta_{ab} - g_{mu nu} e^mu_a e^nu_b`, max-abs residual.
    pub fn orthonormality_residual(&self, metric: &Metric) -> f64 {
        let eta = Matrix3::from_diagonal(&[1.0, -1.0, -1.0].into());
        let r = self.e.transpose() * metric.tensor() * self.e - eta;
        r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Builds the gauge-fixed tetrad of a block-form metric.
pub fn build_tetrad(metric: &Metric) -> Result<Tetrad, GeometryError> {
    let p = metric.point();
    let a = -metric.spatial();
    let a_inv = a.try_inverse().ok_or(GeometryError::SpatialNotNegativeDefinite {
        t: p.t,
        x: p.x,
        y: p.y,
    })?;
    let chol = Cholesky::new(a_inv).ok_or(GeometryError::SpatialNotNegativeDefinite {
        t: p.t,
        x: p.x,
        y: p.y,
    })?;
    let s = chol.l();
    let mut e = Matrix3::zeros();
    e[(0, 0)] = 1.0 / metric.tensor()[(0, 0)].sqrt();
    e[(1, 1)] = s[(0, 0)];
    e[(1, 2)] = s[(0, 1)];
    e[(2, 1)] = s[(1, 0)];
    e[(2, 2)] = s[(1, 1)];
    let forward = e.try_inverse().ok_or(GeometryError::Invalid {
        context: "build_tetrad".into(),
        message: "tetrad not invertible".into(),
    })?;
    Ok(Tetrad { e, forward })
}

/// Restores the canonical gauge of a valid (possibly transformed) tetrad by
/// rotating its spatial block back to lower-triangular positive-diagonal form.
pub fn regauge(tetrad: &Tetrad) -> Result<Tetrad, GeometryError> {
    let e = tetrad.inverse_vierbein();
    let s = Matrix2::new(e[(1, 1)], e[(1, 2)], e[(2, 1)], e[(2, 2)]);
    let sst = s * s.transpose();
    let chol = Cholesky::new(sst).ok_or(GeometryError::Invalid {
        context: "regauge".into(),
        message: "spatial block is singular".into(),
    })?;
    let k = chol.l();
    let mut out = Matrix3::zeros();
    out[(0, 0)] = e[(0, 0)];
    out[(1, 1)] = k[(0, 0)];
    out[(1, 2)] = k[(0, 1)];
    out[(2, 1)] = k[(1, 0)];
    out[(2, 2)] = k[(1, 1)];
    let forward = out.try_inverse().ok_or(GeometryError::Invalid {
        context: "regauge".into(),
        message: "tetrad not invertible".into(),
    })?;
    Ok(Tetrad { e: out, forward })
}

/// The deformation `L^s_a = e^s_a / e^t_0` (rows s = x,y; columns a = 0,1,2)
/// entering the walk's drift matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deformation {
    pub l: Matrix2x3<f64>,
}

impl Deformation {
    pub fn identity() -> Self {
        let mut l = Matrix2x3::zeros();
        l[(0, 1)] = 1.0;
        l[(1, 2)] = 1.0;
        Self { l }
    }

    /// Direct construction from the spatial 2x2 block (columns a = 1, 2),
    /// with `L^s_0 = 0`.
    pub fn from_spatial(m: Matrix2<f64>) -> Self {
        let mut l = Matrix2x3::zeros();
        l[(0, 1)] = m[(0, 0)];
        l[(0, 2)] = m[(0, 1)];
        l[(1, 1)] = m[(1, 0)];
        l[(1, 2)] = m[(1, 1)];
        Self { l }
    }

    /// Columns a = 1, 2 as a 2x2 matrix.
    pub fn spatial(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.l[(0, 1)], self.l[(0, 2)],
            self.l[(1, 1)], self.l[(1, 2)],
        )
    }

    pub fn row(&self, s: usize) -> (f64, f64, f64) {
        (self.l[(s, 0)], self.l[(s, 1)], self.l[(s, 2)])
    }
}

/// Reads the deformation off a tetrad.
pub fn deformation_at(tetrad: &Tetrad) -> Deformation {
    let e = tetrad.inverse_vierbein();
    let et0 = tetrad.e_t_0();
    let mut l = Matrix2x3::zeros();
    for s in 0..2 {
        for a in 0..3 {
            l[(s, a)] = e[(s + 1, a)] / et0;
        }
    }
    Deformation { l }
}

/// Time-preserving linear coordinate change `(t, x) -> (t, Lambda x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateTransform {
    pub spatial: Matrix2<f64>,
}

impl CoordinateTransform {
    pub fn new(spatial: Matrix2<f64>) -> Self {
        Self { spatial }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let mut m = Matrix3::identity();
        m[(1, 1)] = self.spatial[(0, 0)];
        m[(1, 2)] = self.spatial[(0, 1)];
        m[(2, 1)] = self.spatial[(1, 0)];
        m[(2, 2)] = self.spatial[(1, 1)];
        m
    }
}

/// Pushes a metric and its tetrad through a coordinate transform:
/// `g -> Gamma^{-T} g Gamma^{-1}`, `e -> Gamma e`. The returned tetrad is the
/// transformed one, not re-gauged.
pub fn transform_metric(
    gamma: &CoordinateTransform,
    metric: &Metric,
    tetrad: &Tetrad,
) -> Result<(Metric, Tetrad), GeometryError> {
    let m = gamma.matrix();
    let det = m.determinant();
    let m_inv = m.try_inverse().ok_or(GeometryError::SingularTransform { det })?;
    if det.abs() < 1e-12 {
        return Err(GeometryError::SingularTransform { det });
    }
    let g_new = m_inv.transpose() * metric.tensor() * m_inv;
    let metric_new = Metric::new(g_new, metric.point())?;
    let e_new = m * tetrad.inverse_vierbein();
    let forward_new = e_new.try_inverse().ok_or(GeometryError::SingularTransform { det })?;
    Ok((
        metric_new,
        Tetrad { e: e_new, forward: forward_new },
    ))
}

/// Convenience: tetrad and deformation of a family at a point.
pub fn deformation_of(
    family: &MetricFamily,
    p: SpacetimePoint,
) -> Result<(Tetrad, Deformation), GeometryError> {
    let metric = family.at(p)?;
    let tetrad = build_tetrad(&metric)?;
    let d = deformation_at(&tetrad);
    Ok((tetrad, d))
}

/// Scale factor `|det g|^{1/4} (e^t_0)^{1/2}` relating the walk field to the
/// continuum-normalized one.
pub fn density_factor(metric: &Metric, tetrad: &Tetrad) -> f64 {
    metric.abs_det().powf(0.25) * tetrad.e_t_0().sqrt()
}
