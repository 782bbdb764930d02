//! The impulsively forced process: the embedded chain on the section, renewal
//! times, the semi-Markov evolution `u_t` and its time averages, and the
//! renewal-formula estimate of the stationary measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_integrator::{first_crossing_field, integrate_dense, return_map, IntegratorConfig};
use crate::noise_driver::{NoiseSource, NoiseStream};
use crate::quadrature::simpson;
use crate::sections::{SectionPoint, SectionSpec};
use crate::vector_fields::{casimir, LorenzField, LorenzParams, Perturbation, State3};

/// Bounded observables on the phase space.
pub type Observable<'a> = &'a (dyn Fn(&State3) -> f64 + Sync);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinObservable {
    One,
    Y1,
    Y2,
    Y3,
    Casimir,
}

impl BuiltinObservable {
    pub fn eval(&self, y: &State3) -> f64 {
        match self {
            BuiltinObservable::One => 1.0,
            BuiltinObservable::Y1 => y[0],
            BuiltinObservable::Y2 => y[1],
            BuiltinObservable::Y3 => y[2],
            BuiltinObservable::Casimir => casimir(y),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinObservable::One => "one",
            BuiltinObservable::Y1 => "y1",
            BuiltinObservable::Y2 => "y2",
            BuiltinObservable::Y3 => "y3",
            BuiltinObservable::Casimir => "casimir",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// One deterministic piece of the path, flown with a fixed noise value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub eta: f64,
    pub start_time: f64,
    pub duration: f64,
    pub entry_point: State3,
    pub exit_point: State3,
    /// False for the last segment when the horizon cuts it short.
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdmpPath {
    pub params: LorenzParams,
    pub perturbation: Perturbation,
    pub horizon: f64,
    /// True when the path starts off the section.
    pub delayed: bool,
    pub segments: Vec<Segment>,
    pub section_hits: Vec<SectionPoint>,
    pub return_times: Vec<f64>,
}

impl PdmpPath {
    /// `N_T`: section crossings in `(0, T]`.
    pub fn crossings(&self) -> usize {
        self.section_hits.len()
    }

    pub fn mean_return(&self) -> f64 {
        mean(&self.return_times)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalStats {
    pub chain_points: Vec<SectionPoint>,
    pub return_time_samples: Vec<f64>,
    pub mean_return: f64,
    /// Noise values that drove each step.
    pub etas: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn section_point(section: &SectionSpec, y: &State3) -> Result<SectionPoint> {
    section.chart_of(y)
}

/// `(R_eta(x), tau_eta(x))`.
pub fn step_chain(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    x: &SectionPoint,
    eta: f64,
    cfg: &IntegratorConfig,
) -> Result<(SectionPoint, f64)> {
    let ev = return_map(params, &pert.with_eta(eta), section, x, cfg)?;
    Ok((section_point(section, &ev.point)?, ev.time))
}

/// `n` steps of the embedded chain from `x`, driven by the coordinates of `stream`.
pub fn run_chain(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    x: &SectionPoint,
    stream: &NoiseStream,
    burn_in: usize,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<RenewalStats> {
    let mut x = *x;
    let mut pts = Vec::with_capacity(n);
    let mut taus = Vec::with_capacity(n);
    let mut etas = Vec::with_capacity(n);
    for k in 0..burn_in + n {
        let eta = stream.coord(k as u64);
        let (nx, tau) = step_chain(params, pert, section, &x, eta, cfg)?;
        if k >= burn_in {
            pts.push(x);
            taus.push(tau);
            etas.push(eta);
        }
        x = nx;
    }
    Ok(RenewalStats { mean_return: mean(&taus), chain_points: pts, return_time_samples: taus, etas })
}

/// Concatenate flow segments, switching the field at every section crossing, up to time `horizon`.
pub fn simulate_pdmp(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    y0: &State3,
    stream: &NoiseStream,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<PdmpPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let delayed = !(section.signed_distance(y0).abs() <= cfg.crossing_tol && section.contains(y0, cfg.crossing_tol));
    let mut segments = Vec::new();
    let mut hits = Vec::new();
    let mut returns = Vec::new();
    let mut t = 0.0;
    let mut y = *y0;
    let mut k = 0u64;
    while t < horizon {
        let eta = stream.coord(k);
        let p = pert.with_eta(eta);
        let f = LorenzField::new(*params, &p, Some(section))?;
        let remaining = horizon - t;
        let seg_cfg = IntegratorConfig { max_time: cfg.max_time.min(remaining), ..*cfg };
        match first_crossing_field(&f, section, &y, &seg_cfg) {
            Ok(ev) if ev.time < remaining => {
                segments.push(Segment {
                    eta,
                    start_time: t,
                    duration: ev.time,
                    entry_point: y,
                    exit_point: ev.point,
                    complete: true,
                });
                if !(delayed && k == 0) {
                    returns.push(ev.time);
                }
                hits.push(section_point(section, &ev.point)?);
                t += ev.time;
                y = ev.point;
                k += 1;
            }
            Ok(_) | Err(Error::OrbitCaptured { .. }) if remaining <= cfg.max_time => {
                let traj = integrate_dense(&f, &y, remaining, cfg)?;
                let end = traj.eval(remaining);
                segments.push(Segment {
                    eta,
                    start_time: t,
                    duration: remaining,
                    entry_point: y,
                    exit_point: end,
                    complete: false,
                });
                t = horizon;
            }
            Ok(_) => unreachable!(),
            Err(e) => return Err(e),
        }
    }
    Ok(PdmpPath {
        params: *params,
        perturbation: *pert,
        horizon,
        delayed,
        segments,
        section_hits: hits,
        return_times: returns,
    })
}

pub(crate) fn segment_integral(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    seg: &Segment,
    f: Observable,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let p = pert.with_eta(seg.eta);
    let field = LorenzField::new(*params, &p, Some(section))?;
    let traj = integrate_dense(&field, &seg.entry_point, seg.duration, cfg)?;
    let h = dt.min(seg.duration / 4.0);
    Ok(simpson(&mut |s| f(&traj.eval(s)), 0.0, seg.duration, h))
}

/// `(1/T) int_0^T f(u_s) ds` with a batch-means standard error over consecutive segments.
pub fn time_average(
    path: &PdmpPath,
    section: &SectionSpec,
    f: Observable,
    quadrature_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Estimate> {
    if path.segments.is_empty() {
        return Err(Error::InvalidParams("empty path".into()));
    }
    let ints: Vec<f64> = path
        .segments
        .par_iter()
        .map(|s| segment_integral(&path.params, &path.perturbation, section, s, f, quadrature_dt, cfg))
        .collect::<Result<_>>()?;
    let total: f64 = path.segments.iter().map(|s| s.duration).sum();
    let value = ints.iter().sum::<f64>() / total;
    let durs: Vec<f64> = path.segments.iter().map(|s| s.duration).collect();
    Ok(Estimate { value, se: batch_ratio_se(&ints, &durs, 32) })
}

/// Standard error of `sum a / sum b` from the spread of per-batch ratios.
pub(crate) fn batch_ratio_se(a: &[f64], b: &[f64], batches: usize) -> f64 {
    let n = a.len();
    if n < 2 * batches {
        return ratio_se(a, b);
    }
    let size = n / batches;
    let ratios: Vec<f64> = (0..batches)
        .map(|k| {
            let r = k * size..(k + 1) * size;
            a[r.clone()].iter().sum::<f64>() / b[r].iter().sum::<f64>()
        })
        .collect();
    let m = mean(&ratios);
    let var = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Delta-method standard error of a ratio of means from independent pairs.
fn ratio_se(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return f64::INFINITY;
    }
    let mb = mean(b);
    let r = a.iter().sum::<f64>() / b.iter().sum::<f64>();
    let var = a.iter().zip(b).map(|(x, y)| (x - r * y).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt() / mb
}

/// Right-continuous empirical CDF of return times.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.sorted.len() as f64
    }

    /// `int_0^inf (1 - F(s)) ds` computed from the steps.
    pub fn survival_integral(&self) -> f64 {
        let n = self.sorted.len() as f64;
        let mut prev = 0.0;
        let mut s = 0.0;
        for (i, x) in self.sorted.iter().enumerate() {
            s += (x - prev) * (1.0 - i as f64 / n);
            prev = *x;
        }
        s
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

pub fn empirical_return_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    if samples.is_empty() {
        return Err(Error::InvalidParams("no return time samples".into()));
    }
    if samples.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidParams("return times must be nonnegative".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(EmpiricalCdf { sorted })
}

/// Monte Carlo renewal-ratio estimate of `mu_eps(f)`: draw `i` takes every
/// `len / n_mc`-th chain point and noise coordinate `i` of `stream`.
pub fn renewal_stationary(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    stats: &RenewalStats,
    f: Observable,
    stream: &NoiseStream,
    n_mc: usize,
    quadrature_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Estimate> {
    let m = stats.chain_points.len();
    if m == 0 || n_mc == 0 {
        return Err(Error::InvalidParams("renewal estimate needs chain points and draws".into()));
    }
    let pairs: Vec<(f64, f64)> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let x = &stats.chain_points[i * m / n_mc];
            let eta = stream.coord(i as u64);
            let p = pert.with_eta(eta);
            let field = LorenzField::new(*params, &p, Some(section))?;
            let ev = first_crossing_field(&field, section, &x.ambient, cfg)?;
            let seg = Segment {
                eta,
                start_time: 0.0,
                duration: ev.time,
                entry_point: x.ambient,
                exit_point: ev.point,
                complete: true,
            };
            Ok((segment_integral(params, pert, section, &seg, f, quadrature_dt, cfg)?, ev.time))
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(Estimate { value: a.iter().sum::<f64>() / b.iter().sum::<f64>(), se: ratio_se(&a, &b) })
}

pub fn write_path_csv<W: std::io::Write>(path: &PdmpPath, section: &SectionSpec, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["segment_index", "eta", "t_start", "duration", "u", "v"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for (i, s) in path.segments.iter().enumerate() {
        let c = section.chart_of(&s.entry_point)?;
        out.serialize((i, s.eta, s.start_time, s.duration, c.u, c.v)).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub mean_return: f64,
    pub n_t: usize,
    pub horizon: f64,
    pub averages: Vec<(String, Estimate)>,
}
