//! Poincaré sections: the plane through `c0 + e3` (M') and the surface of
//! Casimir maxima `<phi0(y), y> = 0` (M''), with charts, the leaf quotient
//! and the symmetry `P`.
//!
//! On M'' a leaf `{|y|^2 = r}` restricted to one component is an arc of the
//! ellipse `A (y3 - y3c)^2 + y2^2 = R^2` in the `(y3, y2)` plane; the chart
//! coordinate `v` is arclength along that arc measured from `y2 = 0`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_integrator::{first_crossing_field, EventSurface, IntegratorConfig};
use crate::quadrature::gauss_legendre;
use crate::vector_fields::{phi0, LorenzField, LorenzParams, State3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    PlanarSquare,
    CasimirSurface,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Lower leaf bound: 0.99 times the smallest squared radius in the census.
    pub r_star: f64,
    /// Squared radius of the leaf through `c0`.
    pub r_top: f64,
    pub census_returns: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Polynomial coefficients of the transversal `v = v_c(u)`, lowest order first.
    pub transversal: Vec<f64>,
    pub band_half_width: f64,
    pub leaf_grid: Vec<[f64; 2]>,
    /// Fraction of census points outside the square `|(O^t y)_{1,2}| <= half_width`.
    pub clipped_fraction: f64,
}

impl Calibration {
    pub fn transversal_v(&self, u: f64) -> f64 {
        self.transversal.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub start: State3,
    pub transient_returns: usize,
    pub census_returns: usize,
    pub transversal_degree: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            start: State3::new(1.0, 1.0, -18.0),
            transient_returns: 50,
            census_returns: 2000,
            transversal_degree: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub kind: SectionKind,
    pub params: LorenzParams,
    pub rotation_o: Matrix3<f64>,
    pub half_width: f64,
    pub calibration: Option<Calibration>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub u: f64,
    pub v: f64,
    pub ambient: State3,
    /// 1 or 2 on M'' (sign of y1); `None` on M'.
    pub component: Option<u8>,
}

pub fn symmetry_apply(y: &State3) -> State3 {
    State3::new(-y[0], -y[1], y[2])
}

/// Orthonormal basis that triangularizes the Jacobian at `c0`:
/// columns are the left-unstable direction, the strong-stable eigenvector and `e3`.
fn schur_rotation(p: &LorenzParams) -> Result<(Matrix3<f64>, f64, f64)> {
    let j = Matrix2::new(-p.zeta, p.zeta, p.gamma, -1.0);
    let tr = j.trace();
    let det = j.determinant();
    let disc = tr * tr - 4.0 * det;
    if !(disc > 0.0) || !(det < 0.0) {
        return Err(Error::DegenerateEquilibrium(format!("c0 is not a saddle (det {det}, discriminant {disc})")));
    }
    let lu = 0.5 * (tr + disc.sqrt());
    let ls = 0.5 * (tr - disc.sqrt());
    // (J - ls I) v = 0 from the first row: -zeta - ls, zeta
    let mut vs = Vector2::new(p.zeta, p.zeta + ls);
    vs /= vs.norm();
    let mut w = Vector2::new(vs[1], -vs[0]);
    if w[0] < 0.0 {
        w = -w;
    }
    if vs[1] < 0.0 {
        vs = -vs;
    }
    let o = Matrix3::new(
        w[0], vs[0], 0.0, //
        w[1], vs[1], 0.0, //
        0.0, 0.0, 1.0,
    );
    Ok((o, lu, ls))
}

struct Leaf {
    rr: f64,
    a: f64,
    y3c: f64,
}

impl SectionSpec {
    pub fn equilibrium(&self) -> State3 {
        self.params.equilibrium()
    }

    fn plane_level(&self) -> f64 {
        1.0 - (self.params.gamma + self.params.zeta)
    }

    /// Event function: positive before a downward crossing, negative after.
    pub fn signed_distance(&self, y: &State3) -> f64 {
        match self.kind {
            SectionKind::PlanarSquare => (self.rotation_o.transpose() * y)[2] - self.plane_level(),
            SectionKind::CasimirSurface => 2.0 * phi0(&self.params, y).dot(y),
        }
    }

    pub fn distance_gradient(&self, y: &State3) -> State3 {
        match self.kind {
            SectionKind::PlanarSquare => self.rotation_o.column(2).into_owned(),
            SectionKind::CasimirSurface => {
                let p = &self.params;
                State3::new(-4.0 * p.zeta * y[0], -4.0 * y[1], -4.0 * p.beta * y[2] - 2.0 * p.beta * (p.gamma + p.zeta))
            }
        }
    }

    /// Second condition of M'': the Casimir has a maximum (not a minimum) along the flow.
    pub fn gate(&self, y: &State3) -> f64 {
        match self.kind {
            SectionKind::PlanarSquare => 0.0,
            SectionKind::CasimirSurface => phi0(&self.params, y).dot(&self.distance_gradient(y)),
        }
    }

    /// Signed Euclidean distance to the supporting surface (first order on M'') and its gradient.
    pub fn surface_distance(&self, y: &State3) -> (f64, State3) {
        match self.kind {
            SectionKind::PlanarSquare => (self.signed_distance(y), self.distance_gradient(y)),
            SectionKind::CasimirSurface => {
                let p = &self.params;
                let g = self.signed_distance(y);
                let dg = self.distance_gradient(y);
                let n = dg.norm().max(1e-300);
                let hess = State3::new(-4.0 * p.zeta, -4.0, -4.0 * p.beta);
                let hdg = hess.component_mul(&dg);
                (g / n, dg / n - hdg * (g / (n * n * n)))
            }
        }
    }

    /// Coordinates in the rotated frame `O^t y`.
    pub fn rotated(&self, y: &State3) -> State3 {
        self.rotation_o.transpose() * y
    }

    /// Outside the square `|(O^t y)_1|, |(O^t y)_2| <= half_width`.
    pub fn clipped(&self, y: &State3) -> bool {
        let z = self.rotated(y);
        z[0].abs() > self.half_width || z[1].abs() > self.half_width
    }

    pub fn contains(&self, y: &State3, tol: f64) -> bool {
        if self.signed_distance(y).abs() > tol {
            return false;
        }
        match self.kind {
            SectionKind::PlanarSquare => !self.clipped(y),
            SectionKind::CasimirSurface => self.gate(y) <= 0.0,
        }
    }

    fn calibration(&self) -> Result<&Calibration> {
        self.calibration.as_ref().ok_or(Error::Uncalibrated)
    }

    fn leaf(&self, r: f64) -> Leaf {
        let p = &self.params;
        let a_coef = (p.zeta - p.beta) / (p.zeta - 1.0);
        let b_coef = p.beta * (p.gamma + p.zeta) / (p.zeta - 1.0);
        let y3c = b_coef / (2.0 * a_coef);
        let r2 = r * p.zeta / (p.zeta - 1.0) + b_coef * b_coef / (4.0 * a_coef);
        let rr = r2.max(0.0).sqrt();
        Leaf { rr, a: rr / a_coef.sqrt(), y3c }
    }

    fn arclength(leaf: &Leaf, phi: f64) -> f64 {
        let (x, w) = gl8();
        let panels = ((phi.abs() / 0.2).ceil() as usize).max(1);
        let h = phi / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let c = (k as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(w.iter()) {
                let t = c + 0.5 * h * xi;
                s += wi * Self::speed(leaf, t);
            }
        }
        s * 0.5 * h
    }

    fn speed(leaf: &Leaf, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        (leaf.a * leaf.a * s * s + leaf.rr * leaf.rr * c * c).sqrt()
    }

    fn inverse_arclength(leaf: &Leaf, v: f64) -> f64 {
        let mut phi = v / leaf.rr.max(1e-300);
        for _ in 0..50 {
            let d = (Self::arclength(leaf, phi) - v) / Self::speed(leaf, phi);
            phi -= d;
            if d.abs() < 1e-15 * phi.abs().max(1.0) {
                break;
            }
        }
        phi
    }

    fn u_from_r(&self, r: f64) -> Result<f64> {
        let c = self.calibration()?;
        Ok((r - c.r_star) / (c.r_top - c.r_star))
    }

    fn r_from_u(&self, u: f64) -> Result<f64> {
        let c = self.calibration()?;
        Ok(c.r_star + u * (c.r_top - c.r_star))
    }

    /// Chart coordinates of a point on the section (no tolerance check).
    pub fn chart_of(&self, y: &State3) -> Result<SectionPoint> {
        match self.kind {
            SectionKind::PlanarSquare => {
                let z = self.rotated(y);
                Ok(SectionPoint { u: z[0], v: z[1], ambient: *y, component: None })
            }
            SectionKind::CasimirSurface => {
                let comp = if y[0] < 0.0 { 2 } else { 1 };
                let yr = if comp == 2 { symmetry_apply(y) } else { *y };
                let r = yr.norm_squared();
                let leaf = self.leaf(r);
                let phi = (yr[1] / leaf.rr).atan2((leaf.y3c - yr[2]) / leaf.a);
                let v = Self::arclength(&leaf, phi);
                Ok(SectionPoint { u: self.u_from_r(r)?, v, ambient: *y, component: Some(comp) })
            }
        }
    }

    /// `to_chart`: requires the point to be within `tol` of the section.
    pub fn to_chart(&self, y: &State3, tol: f64) -> Result<SectionPoint> {
        let residual = self.signed_distance(y);
        if !(residual.abs() <= tol) {
            return Err(Error::NotOnSection { residual });
        }
        self.chart_of(y)
    }

    /// `to_ambient`: the point of the section with chart `(u, v)` on `component`.
    pub fn to_ambient(&self, u: f64, v: f64, component: Option<u8>) -> Result<State3> {
        match self.kind {
            SectionKind::PlanarSquare => Ok(self.rotation_o * State3::new(u, v, self.plane_level())),
            SectionKind::CasimirSurface => {
                let r = self.r_from_u(u)?;
                let leaf = self.leaf(r);
                let phi = Self::inverse_arclength(&leaf, v);
                let y3 = leaf.y3c - leaf.a * phi.cos();
                let y2 = leaf.rr * phi.sin();
                let y1sq = r - y2 * y2 - y3 * y3;
                if y1sq < -1e-9 * r.max(1.0) {
                    return Err(Error::InvalidState(format!("chart point (u={u}, v={v}) is off the leaf")));
                }
                let y = State3::new(y1sq.max(0.0).sqrt(), y2, y3);
                Ok(if component == Some(2) { symmetry_apply(&y) } else { y })
            }
        }
    }

    pub fn point(&self, u: f64, v: f64, component: Option<u8>) -> Result<SectionPoint> {
        let ambient = self.to_ambient(u, v, component)?;
        let component = match self.kind {
            SectionKind::PlanarSquare => None,
            SectionKind::CasimirSurface => Some(if component == Some(2) { 2 } else { 1 }),
        };
        Ok(SectionPoint { u, v, ambient, component })
    }

    /// Unsigned leaf coordinate in `[0, 1]` (M'') or `[-1/2, 1/2]` (M').
    pub fn leaf_coordinate(&self, x: &SectionPoint) -> Result<f64> {
        match self.kind {
            SectionKind::PlanarSquare => {
                if x.u.abs() > self.half_width * (1.0 + 1e-12) {
                    return Err(Error::OutOfFoliation { u: x.u });
                }
                Ok(x.u * 0.5 / self.half_width)
            }
            SectionKind::CasimirSurface => {
                let u = self.u_from_r(x.ambient.norm_squared())?;
                if !(-1e-9..=1.0 + 1e-9).contains(&u) {
                    return Err(Error::OutOfFoliation { u });
                }
                Ok(u.clamp(0.0, 1.0))
            }
        }
    }

    /// The quotient `q`: on M'' the leaf coordinate signed by component.
    pub fn quotient_project(&self, x: &SectionPoint) -> Result<f64> {
        let u = self.leaf_coordinate(x)?;
        Ok(match (self.kind, x.component) {
            (SectionKind::CasimirSurface, Some(2)) => -u,
            _ => u,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn gl8() -> (&'static [f64], &'static [f64]) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let r = RULE.get_or_init(|| gauss_legendre(8));
    (&r.0, &r.1)
}

impl EventSurface for SectionSpec {
    fn value(&self, y: &State3) -> f64 {
        self.signed_distance(y)
    }
    fn gradient(&self, y: &State3) -> State3 {
        self.distance_gradient(y)
    }
    fn accepts(&self, y: &State3) -> bool {
        match self.kind {
            SectionKind::PlanarSquare => !self.clipped(y),
            SectionKind::CasimirSurface => self.gate(y) <= 0.0,
        }
    }
}

/// Section geometry without the M'' census calibration.
pub fn build_section_uncalibrated(kind: SectionKind, params: LorenzParams) -> Result<SectionSpec> {
    params.validate()?;
    let (rotation_o, _, _) = schur_rotation(&params)?;
    if kind == SectionKind::CasimirSurface && !(params.zeta > 1.0 && params.zeta > params.beta) {
        return Err(Error::DegenerateEquilibrium("leaf ellipses need zeta > max(1, beta)".into()));
    }
    Ok(SectionSpec { kind, params, rotation_o, half_width: 0.5, calibration: None })
}

pub fn build_section(kind: SectionKind, params: LorenzParams) -> Result<SectionSpec> {
    build_section_with(kind, params, &CalibrationOptions::default(), &IntegratorConfig::default())
}

pub fn build_section_with(
    kind: SectionKind,
    params: LorenzParams,
    opts: &CalibrationOptions,
    cfg: &IntegratorConfig,
) -> Result<SectionSpec> {
    let mut s = build_section_uncalibrated(kind, params)?;
    if kind == SectionKind::CasimirSurface {
        s.calibration = Some(calibrate(&s, opts, cfg)?);
    }
    Ok(s)
}

/// Unperturbed census of M'' returns.
pub fn census(
    section: &SectionSpec,
    start: &State3,
    transient: usize,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<State3>> {
    let f = LorenzField::unperturbed(section.params);
    let mut y = *start;
    let mut out = Vec::with_capacity(n);
    for k in 0..transient + n {
        let ev = first_crossing_field(&f, section, &y, cfg)?;
        y = ev.point;
        if k >= transient {
            out.push(y);
        }
    }
    Ok(out)
}

fn calibrate(section: &SectionSpec, opts: &CalibrationOptions, cfg: &IntegratorConfig) -> Result<Calibration> {
    let pts = census(section, &opts.start, opts.transient_returns, opts.census_returns, cfg)?;
    let r_min = pts.iter().map(|y| y.norm_squared()).fold(f64::INFINITY, f64::min);
    let r_top = section.params.equilibrium().norm_squared();
    let r_star = 0.99 * r_min;
    let clipped = pts.iter().filter(|y| section.clipped(y)).count();
    let mut tmp = section.clone();
    tmp.calibration = Some(Calibration {
        r_star,
        r_top,
        census_returns: pts.len(),
        u_min: 0.0,
        u_max: 1.0,
        transversal: vec![0.0],
        band_half_width: 0.0,
        leaf_grid: vec![],
        clipped_fraction: 0.0,
    });
    let charts: Vec<(f64, f64)> = pts.iter().map(|y| tmp.chart_of(y).map(|c| (c.u, c.v))).collect::<Result<_>>()?;
    let u_min = charts.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let u_max = charts.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let deg = opts.transversal_degree;
    let mut a = DMatrix::<f64>::zeros(charts.len(), deg + 1);
    let mut b = DVector::<f64>::zeros(charts.len());
    for (i, (u, v)) in charts.iter().enumerate() {
        let mut p = 1.0;
        for k in 0..=deg {
            a[(i, k)] = p;
            p *= u;
        }
        b[i] = *v;
    }
    let coef =
        a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::InvalidState(format!("transversal fit failed: {e}")))?;
    let mut cal = tmp.calibration.take().unwrap();
    cal.transversal = coef.iter().copied().collect();
    cal.band_half_width = charts.iter().map(|(u, v)| (v - cal.transversal_v(*u)).abs()).fold(0.0, f64::max);
    cal.u_min = u_min;
    cal.u_max = u_max;
    cal.leaf_grid = (0..=100)
        .map(|i| {
            let u = u_min + (u_max - u_min) * i as f64 / 100.0;
            [u, cal.transversal_v(u)]
        })
        .collect();
    cal.clipped_fraction = clipped as f64 / pts.len() as f64;
    Ok(cal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector_fields::jacobian;
    use crate::vector_fields::Perturbation;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn msec() -> &'static SectionSpec {
        static S: OnceLock<SectionSpec> = OnceLock::new();
        S.get_or_init(|| build_section(SectionKind::CasimirSurface, LorenzParams::default()).unwrap())
    }

    #[test]
    fn rotation_is_orthogonal_and_triangularizes() {
        let p = LorenzParams::default();
        let s = build_section_uncalibrated(SectionKind::PlanarSquare, p).unwrap();
        let o = s.rotation_o;
        assert!((o.transpose() * o - Matrix3::identity()).abs().max() < 1e-12);
        let j = jacobian(&p, &Perturbation::none(), &p.equilibrium(), None).unwrap();
        let t = o.transpose() * j * o;
        let disc: f64 = 121.0 + 4.0 * 270.0;
        let lu = 0.5 * (-11.0 + disc.sqrt());
        let ls = 0.5 * (-11.0 - disc.sqrt());
        assert!((t[(0, 0)] - lu).abs() < 1e-8);
        assert!((t[(1, 1)] - ls).abs() < 1e-8);
        assert!((t[(2, 2)] + p.beta).abs() < 1e-12);
        // upper block vanishes: the basis is a real Schur form of J(c0)
        for (r, c) in [(0, 1), (0, 2), (1, 2), (2, 0), (2, 1)] {
            assert!(t[(r, c)].abs() < 1e-8, "({r},{c}) = {}", t[(r, c)]);
        }
        for k in 0..3 {
            assert!((o.column(k).norm() - 1.0).abs() < 1e-12);
        }
        // the second column is an eigenvector
        let v = o.column(1).into_owned();
        assert!((j * v - v * ls).norm() < 1e-10);
    }

    #[test]
    fn non_saddle_is_degenerate() {
        let p = LorenzParams { gamma: 0.5, ..Default::default() };
        assert!(matches!(
            build_section_uncalibrated(SectionKind::PlanarSquare, p),
            Err(Error::DegenerateEquilibrium(_))
        ));
    }

    #[test]
    fn plane_geometry() {
        let p = LorenzParams::default();
        let s = build_section_uncalibrated(SectionKind::PlanarSquare, p).unwrap();
        let y = s.to_ambient(0.1, -0.2, None).unwrap();
        assert!(s.signed_distance(&y).abs() < 1e-12);
        assert!((y[2] + 37.0).abs() < 1e-12);
        let out = s.to_ambient(0.6, 0.0, None).unwrap();
        assert!(!s.contains(&out, 1e-9));
        assert!(s.contains(&y, 1e-9));
        let c = s.to_chart(&y, 1e-9).unwrap();
        assert!((c.u - 0.1).abs() < 1e-14 && (c.v + 0.2).abs() < 1e-14);
        assert!((s.quotient_project(&c).unwrap() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn off_section_rejected() {
        let s = build_section_uncalibrated(SectionKind::PlanarSquare, LorenzParams::default()).unwrap();
        assert!(matches!(s.to_chart(&State3::new(0.0, 0.0, 0.0), 1e-9), Err(Error::NotOnSection { .. })));
    }

    #[test]
    fn equilibrium_on_casimir_surface() {
        let s = msec();
        let c0 = s.equilibrium();
        assert_eq!(s.signed_distance(&c0), 0.0);
        assert_eq!(symmetry_apply(&c0), c0);
        let cal = s.calibration.as_ref().unwrap();
        assert_eq!(cal.r_top, 1444.0);
        // the leaf through c0 is the top of the interval
        let x = SectionPoint { u: 1.0, v: 0.0, ambient: c0, component: Some(1) };
        assert!((s.leaf_coordinate(&x).unwrap() - 1.0).abs() < 1e-12);
        let y = s.to_ambient(1.0, 0.0, Some(1)).unwrap();
        assert!((y - c0).norm() < 1e-6, "{y}");
    }

    #[test]
    fn gradient_matches_fd() {
        let s = msec();
        let h = 1e-6;
        for y in [State3::new(3.0, 8.0, -20.0), State3::new(-7.0, 2.0, -30.0)] {
            let mut fd = State3::zeros();
            for k in 0..3 {
                let mut e = State3::zeros();
                e[k] = h;
                fd[k] = (s.signed_distance(&(y + e)) - s.signed_distance(&(y - e))) / (2.0 * h);
            }
            let g = s.distance_gradient(&y);
            assert!((fd - g).norm() <= 1e-6 * g.norm());
        }
    }

    #[test]
    fn surface_distance_gradient_matches_fd() {
        let s = msec();
        let y = State3::new(6.0, 12.0, -25.0);
        let h = 1e-6;
        let mut fd = State3::zeros();
        for k in 0..3 {
            let mut e = State3::zeros();
            e[k] = h;
            fd[k] = (s.surface_distance(&(y + e)).0 - s.surface_distance(&(y - e)).0) / (2.0 * h);
        }
        assert!((fd - s.surface_distance(&y).1).norm() < 1e-6);
    }

    #[test]
    fn calibration_census_shape() {
        let cal = msec().calibration.as_ref().unwrap();
        assert!(cal.r_star > 0.0 && cal.r_star < cal.r_top);
        assert!(cal.u_min > 0.0 && cal.u_max < 1.0);
        assert!(cal.band_half_width < 0.1, "band {}", cal.band_half_width);
        let back: SectionSpec = SectionSpec::from_json(&msec().to_json().unwrap()).unwrap();
        assert_eq!(&back, msec());
    }

    #[test]
    fn attractor_does_not_reach_the_plane() {
        let p = LorenzParams::default();
        let s = build_section_uncalibrated(SectionKind::PlanarSquare, p).unwrap();
        let f = LorenzField::unperturbed(p);
        let cfg = IntegratorConfig { max_time: 200.0, ..Default::default() };
        let r = first_crossing_field(&f, &s, &State3::new(1.0, 1.0, -18.0), &cfg);
        assert!(matches!(r, Err(Error::OrbitCaptured { .. })));
    }

    proptest! {
        #[test]
        fn chart_round_trip(u in 0.02..0.98f64, t in -1.0..1.0f64, comp in 1u8..=2) {
            let s = msec();
            let leaf = s.leaf(s.r_from_u(u).unwrap());
            // stay inside the arc where y1^2 >= 0
            let mut hi = 0.0;
            for k in 1..400 {
                let phi = k as f64 * 0.004;
                let y3 = leaf.y3c - leaf.a * phi.cos();
                let y2 = leaf.rr * phi.sin();
                if s.r_from_u(u).unwrap() - y2 * y2 - y3 * y3 < 0.0 { break; }
                hi = phi;
            }
            let v = SectionSpec::arclength(&leaf, 0.95 * hi * t);
            let x = s.point(u, v, Some(comp)).unwrap();
            prop_assert!(s.signed_distance(&x.ambient).abs() < 1e-9);
            let c = s.to_chart(&x.ambient, 1e-9).unwrap();
            prop_assert!((c.u - u).abs() < 1e-9 && (c.v - v).abs() < 1e-9);
            prop_assert_eq!(c.component, Some(comp));
            let back = s.to_ambient(c.u, c.v, c.component).unwrap();
            prop_assert!((back - x.ambient).norm() < 1e-9);
        }

        #[test]
        fn leaf_is_level_set_of_q(u in 0.05..0.95f64, v1 in -1.0..1.0f64, v2 in -1.0..1.0f64) {
            let s = msec();
            let a = s.point(u, v1, Some(1));
            let b = s.point(u, v2, Some(1));
            if let (Ok(a), Ok(b)) = (a, b) {
                let qa = s.quotient_project(&s.chart_of(&a.ambient).unwrap()).unwrap();
                let qb = s.quotient_project(&s.chart_of(&b.ambient).unwrap()).unwrap();
                prop_assert!((qa - qb).abs() < 1e-9);
                let pa = s.chart_of(&symmetry_apply(&a.ambient)).unwrap();
                prop_assert!((s.leaf_coordinate(&pa).unwrap() - qa).abs() < 1e-12);
                prop_assert!((s.quotient_project(&pa).unwrap() + qa).abs() < 1e-12);
            }
        }

        #[test]
        fn symmetry_is_involution_and_equivariant(a in -40.0..40.0f64, b in -40.0..40.0f64, c in -60.0..10.0f64) {
            let p = LorenzParams::default();
            let y = State3::new(a, b, c);
            prop_assert_eq!(symmetry_apply(&symmetry_apply(&y)), y);
            prop_assert_eq!(phi0(&p, &symmetry_apply(&y)), symmetry_apply(&phi0(&p, &y)));
        }
    }
}
