//! Dormand-Prince 5(4) integration with dense output and section crossing
//! detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sections::{SectionPoint, SectionSpec};
use crate::vector_fields::{LorenzField, LorenzParams, Perturbation, State3, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Orbits that do not cross the section within this time count as captured.
    pub max_time: f64,
    pub crossing_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-9, abs_tol: 1e-11, max_step: 0.05, max_time: 50.0, crossing_tol: 1e-9 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("max_time", self.max_time),
            ("crossing_tol", self.crossing_tol),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.crossing_tol > self.abs_tol * 1e3 {
            return Err(Error::InvalidParams("crossing_tol must not exceed 1e3 * abs_tol".into()));
        }
        Ok(())
    }

    /// Both tolerances scaled by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        IntegratorConfig { rel_tol: self.rel_tol * f, abs_tol: self.abs_tol * f, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub time: f64,
    pub point: State3,
    /// Sign of the flux through the oriented normal; -1 for every accepted crossing.
    pub direction: f64,
    pub flux: f64,
}

/// A smooth event function whose downward zero crossings are reported.
pub trait EventSurface: Sync {
    fn value(&self, y: &State3) -> f64;
    fn gradient(&self, y: &State3) -> State3;
    /// Extra membership condition; rejected crossings are skipped.
    fn accepts(&self, _y: &State3) -> bool {
        true
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension of one accepted step.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [State3; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> State3 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.r;
        r[0] + (r[1] + (r[2] + (r[3] + r[4] * th1) * th) * th1) * th
    }
}

/// A sequence of dense steps covering `[0, t_end]`.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub steps: Vec<DenseStep>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.steps.last().map(|s| s.t1()).unwrap_or(0.0)
    }

    pub fn eval(&self, t: f64) -> State3 {
        let i = self.steps.partition_point(|s| s.t1() < t).min(self.steps.len() - 1);
        self.steps[i].eval(t)
    }
}

pub struct Stepper<'a, F: VectorField + ?Sized> {
    f: &'a F,
    cfg: IntegratorConfig,
    pub t: f64,
    pub y: State3,
    k1: State3,
    h: f64,
}

fn err_norm(e: &State3, y0: &State3, y1: &State3, cfg: &IntegratorConfig) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
        s += (e[i] / sc).powi(2);
    }
    (s / 3.0).sqrt()
}

fn finite(y: &State3) -> bool {
    y.iter().all(|v| v.is_finite())
}

impl<'a, F: VectorField + ?Sized> Stepper<'a, F> {
    pub fn new(f: &'a F, y0: State3, cfg: &IntegratorConfig) -> Result<Self> {
        if !finite(&y0) {
            return Err(Error::InvalidState(format!("non-finite start {:?}", y0.as_slice())));
        }
        let k1 = f.eval(&y0);
        if !finite(&k1) {
            return Err(Error::Divergence { t: 0.0 });
        }
        let sc = |v: &State3, y: &State3| {
            let mut s = 0.0;
            for i in 0..3 {
                s += (v[i] / (cfg.abs_tol + cfg.rel_tol * y[i].abs())).powi(2);
            }
            (s / 3.0).sqrt()
        };
        let d0 = sc(&y0, &y0);
        let d1 = sc(&k1, &y0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(cfg.max_step);
        let y1 = y0 + k1 * h0;
        let k2 = f.eval(&y1);
        let d2 = sc(&(k2 - k1), &y0) / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        let h = (100.0 * h0).min(h1).min(cfg.max_step);
        Ok(Stepper { f, cfg: *cfg, t: 0.0, y: y0, k1, h })
    }

    /// Takes one accepted step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<DenseStep> {
        let f = self.f;
        let mut rejected = false;
        loop {
            let mut h = self.h.min(self.cfg.max_step);
            let last = self.t + h >= t_limit;
            if last {
                h = t_limit - self.t;
            }
            if h <= 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Stiffness { t: self.t });
            }
            let y = self.y;
            let k1 = self.k1;
            let k2 = f.eval(&(y + k1 * (h * A21)));
            let k3 = f.eval(&(y + (k1 * A31 + k2 * A32) * h));
            let k4 = f.eval(&(y + (k1 * A41 + k2 * A42 + k3 * A43) * h));
            let k5 = f.eval(&(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h));
            let k6 = f.eval(&(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h));
            let y1 = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h;
            let k7 = f.eval(&y1);
            let err = if finite(&y1) && finite(&k7) {
                let e = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
                err_norm(&e, &y, &y1, &self.cfg)
            } else {
                f64::INFINITY
            };
            if err <= 1.0 {
                let ydiff = y1 - y;
                let bspl = k1 * h - ydiff;
                let r = [
                    y,
                    ydiff,
                    bspl,
                    ydiff - k7 * h - bspl,
                    (k1 * D1 + k3 * D3 + k4 * D4 + k5 * D5 + k6 * D6 + k7 * D7) * h,
                ];
                let t0 = self.t;
                self.t = if last { t_limit } else { t0 + h };
                self.y = y1;
                self.k1 = k7;
                let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                if rejected {
                    fac = fac.min(1.0);
                }
                if !last {
                    self.h = h * fac;
                }
                return Ok(DenseStep { t0, h, r });
            }
            if !err.is_finite() && h <= 1e-12 * self.t.abs().max(1.0) {
                return Err(Error::Divergence { t: self.t });
            }
            rejected = true;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
            self.h = h * fac;
        }
    }
}

/// `Phi^t(y0)` for a generic field.
pub fn integrate_field<F: VectorField + ?Sized>(f: &F, y0: &State3, t: f64, cfg: &IntegratorConfig) -> Result<State3> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(*y0);
    }
    let mut st = Stepper::new(f, *y0, cfg)?;
    while st.t < t {
        st.step(t)?;
    }
    Ok(st.y)
}

/// Dense trajectory on `[0, t]`.
pub fn integrate_dense<F: VectorField + ?Sized>(
    f: &F,
    y0: &State3,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    if t <= 0.0 {
        return Ok(traj);
    }
    let mut st = Stepper::new(f, *y0, cfg)?;
    while st.t < t {
        traj.steps.push(st.step(t)?);
    }
    Ok(traj)
}

pub fn integrate(
    params: &LorenzParams,
    pert: &Perturbation,
    y0: &State3,
    t: f64,
    cfg: &IntegratorConfig,
    section: Option<&SectionSpec>,
) -> Result<State3> {
    let f = LorenzField::new(*params, pert, section)?;
    integrate_field(&f, y0, t, cfg)
}

fn refine<S: EventSurface + ?Sized>(
    d: &DenseStep,
    s: &S,
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    mut gb: f64,
    tol: f64,
) -> (f64, State3, f64) {
    let g = |t: f64| {
        let y = d.eval(t);
        (s.value(&y), y)
    };
    for _ in 0..200 {
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
        let m = 0.5 * (a + b);
        let (gm, _) = g(m);
        if gm > 0.0 {
            a = m;
            ga = gm;
        } else {
            b = m;
            gb = gm;
        }
        if gb.abs() <= 1e-3 * tol {
            break;
        }
    }
    let (mut tb, mut yb) = (b, d.eval(b));
    let mut best = s.value(&yb);
    if ga > 0.0 && gb < 0.0 {
        let ts = b - gb * (b - a) / (gb - ga);
        if ts > a && ts < b {
            let (gs, ys) = g(ts);
            if gs.abs() < best.abs() {
                tb = ts;
                yb = ys;
                best = gs;
            }
        }
    }
    if ga.abs() < best.abs() {
        let ya = d.eval(a);
        let gaa = s.value(&ya);
        if gaa.abs() < best.abs() {
            return (a, ya, gaa);
        }
    }
    (tb, yb, best)
}

/// Earliest downward crossing of `surface` after leaving its `crossing_tol` neighbourhood.
pub fn first_crossing_field<F, S>(f: &F, surface: &S, y0: &State3, cfg: &IntegratorConfig) -> Result<CrossingEvent>
where
    F: VectorField + ?Sized,
    S: EventSurface + ?Sized,
{
    let mut st = Stepper::new(f, *y0, cfg)?;
    let g0 = surface.value(y0);
    let mut armed = g0.abs() > cfg.crossing_tol;
    let mut g_prev = g0;
    let res = cfg.max_step / 4.0;
    while st.t < cfg.max_time {
        let d = st.step(cfg.max_time)?;
        let n_sub = ((d.h / res).ceil() as usize).max(1);
        let (mut ta, mut ga) = (d.t0, g_prev);
        for i in 1..=n_sub {
            let (tb, yb) = if i == n_sub {
                (d.t1(), st.y)
            } else {
                let tb = d.t0 + d.h * i as f64 / n_sub as f64;
                (tb, d.eval(tb))
            };
            let gb = surface.value(&yb);
            if armed && ga > 0.0 && gb <= 0.0 {
                let (t, point, _) =
                    if gb == 0.0 { (tb, yb, 0.0) } else { refine(&d, surface, ta, tb, ga, gb, cfg.crossing_tol) };
                let flux = f.eval(&point).dot(&surface.gradient(&point));
                if !surface.accepts(&point) {
                    ta = tb;
                    ga = gb;
                    continue;
                }
                return Ok(CrossingEvent { time: t, point, direction: flux.signum(), flux });
            }
            if gb.abs() > cfg.crossing_tol {
                armed = true;
            }
            ta = tb;
            ga = gb;
        }
        g_prev = ga;
    }
    Err(Error::OrbitCaptured { max_time: cfg.max_time })
}

pub fn first_crossing(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    y0: &State3,
    cfg: &IntegratorConfig,
) -> Result<CrossingEvent> {
    let f = LorenzField::new(*params, pert, Some(section))?;
    first_crossing_field(&f, section, y0, cfg)
}

/// First return of a section point to the same section: `(tau_eta(x), R_eta(x))`.
pub fn return_map(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    x: &SectionPoint,
    cfg: &IntegratorConfig,
) -> Result<CrossingEvent> {
    let residual = section.signed_distance(&x.ambient);
    if residual.abs() > cfg.crossing_tol {
        return Err(Error::NotOnSection { residual });
    }
    first_crossing(params, pert, section, &x.ambient, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    struct Plane {
        n: State3,
        c: f64,
    }

    impl EventSurface for Plane {
        fn value(&self, y: &State3) -> f64 {
            self.n.dot(y) - self.c
        }
        fn gradient(&self, _y: &State3) -> State3 {
            self.n
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let y0 = State3::new(1.0, 2.0, 3.0);
        let f = |y: &State3| -y;
        assert_eq!(integrate_field(&f, &y0, 0.0, &IntegratorConfig::default()).unwrap(), y0);
    }

    #[test]
    fn diagonal_linear_system() {
        let y0 = State3::new(1.0, -2.0, 0.5);
        let f = |y: &State3| State3::new(-y[0], -2.0 * y[1], -3.0 * y[2]);
        let y = integrate_field(&f, &y0, 1.0, &IntegratorConfig::default()).unwrap();
        let exact = State3::new((-1f64).exp(), -2.0 * (-2f64).exp(), 0.5 * (-3f64).exp());
        assert!((y - exact).abs().max() < 1e-8);
    }

    #[test]
    fn reversibility_on_short_arc() {
        let p = LorenzParams::default();
        let fwd = LorenzField::unperturbed(p);
        let bwd = |y: &State3| -fwd.eval(y);
        let cfg = IntegratorConfig::default();
        let y0 = State3::new(1.0, 2.0, -20.0);
        let y1 = integrate_field(&fwd, &y0, 0.5, &cfg).unwrap();
        let back = integrate_field(&bwd, &y1, 0.5, &cfg).unwrap();
        assert!((back - y0).norm() < 1e-6);
    }

    #[test]
    fn dense_output_close_to_half_steps() {
        let p = LorenzParams::default();
        let f = LorenzField::unperturbed(p);
        let cfg = IntegratorConfig { rel_tol: 1e-7, abs_tol: 1e-9, ..Default::default() };
        let y0 = State3::new(1.0, 2.0, -20.0);
        let traj = integrate_dense(&f, &y0, 2.0, &cfg).unwrap();
        let fine = cfg.scaled(1e-4);
        for s in traj.steps.iter().step_by(7) {
            let tm = s.t0 + 0.5 * s.h;
            let reference = integrate_field(&f, &s.eval(s.t0), 0.5 * s.h, &fine).unwrap();
            let err = (s.eval(tm) - reference).norm();
            let scale = cfg.abs_tol + cfg.rel_tol * reference.norm();
            assert!(err <= 10.0 * scale, "err {err} scale {scale}");
        }
    }

    #[test]
    fn rotating_decay_matches_exponential() {
        let a = Matrix3::new(-0.1, 1.0, 0.0, -1.0, -0.1, 0.0, 0.0, 0.0, -0.5);
        let f = move |y: &State3| a * y;
        let y0 = State3::new(1.0, 0.0, 2.0);
        let cfg = IntegratorConfig::default();
        for t in [0.5, 2.0, 5.0] {
            let y = integrate_field(&f, &y0, t, &cfg).unwrap();
            let e = (-0.1 * t).exp();
            let exact = State3::new(e * t.cos(), -e * t.sin(), 2.0 * (-0.5 * t).exp());
            assert!((y - exact).abs().max() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn uniform_motion_crossing() {
        let f = |_: &State3| State3::new(0.0, 0.0, -1.0);
        let plane = Plane { n: State3::z(), c: 0.0 };
        let ev = first_crossing_field(&f, &plane, &State3::new(0.0, 0.0, 5.0), &IntegratorConfig::default()).unwrap();
        assert!((ev.time - 5.0).abs() < 1e-9);
        assert!(ev.point.norm() < 1e-9);
        assert_eq!(ev.direction, -1.0);
    }

    #[test]
    fn start_on_surface_skips_itself() {
        // Circular motion crosses the plane x = 0 downward once per period.
        let f = |y: &State3| State3::new(y[1], -y[0], 0.0);
        let plane = Plane { n: State3::x(), c: 0.0 };
        let cfg = IntegratorConfig::default();
        let ev = first_crossing_field(&f, &plane, &State3::new(0.0, -1.0, 0.0), &cfg).unwrap();
        assert!((ev.time - 2.0 * std::f64::consts::PI).abs() < 1e-7, "{}", ev.time);
        assert!(plane.value(&ev.point).abs() <= cfg.crossing_tol);
    }

    #[test]
    fn captured_orbit() {
        let f = |y: &State3| -y;
        let plane = Plane { n: State3::z(), c: -1.0 };
        let cfg = IntegratorConfig { max_time: 5.0, ..Default::default() };
        let r = first_crossing_field(&f, &plane, &State3::new(0.0, 0.0, 1.0), &cfg);
        assert!(matches!(r, Err(Error::OrbitCaptured { .. })));
    }

    #[test]
    fn config_invariant() {
        let cfg = IntegratorConfig { crossing_tol: 1e-6, abs_tol: 1e-11, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(IntegratorConfig::default().validate().is_ok());
    }

    #[test]
    fn tolerance_halving_is_consistent() {
        let p = LorenzParams::default();
        let f = LorenzField::unperturbed(p);
        let cfg = IntegratorConfig { rel_tol: 1e-8, abs_tol: 1e-10, ..Default::default() };
        for y0 in [State3::new(1.0, 2.0, -20.0), State3::new(-5.0, -3.0, -10.0)] {
            let a = integrate_field(&f, &y0, 0.3, &cfg).unwrap();
            let b = integrate_field(&f, &y0, 0.3, &cfg.scaled(0.5)).unwrap();
            assert!((a - b).norm() < 1e-8 * a.norm().max(1.0) * 10.0);
        }
    }

    #[test]
    fn divergent_field_reports() {
        let f = |y: &State3| State3::new(y[0] * y[0], 0.0, 0.0);
        let r = integrate_field(&f, &State3::new(1.0, 0.0, 0.0), 2.0, &IntegratorConfig::default());
        assert!(matches!(r, Err(Error::Stiffness { .. }) | Err(Error::Divergence { .. })));
    }
}
