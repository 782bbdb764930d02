//! Reading a one-dimensional map off the simulated return map: leaf
//! representatives on a transversal are returned once and projected by `q`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmpiricalBranch, EmpiricalMap, IntervalMap};
use crate::error::{Error, Result};
use crate::flow_integrator::{return_map, IntegratorConfig};
use crate::sections::{SectionKind, SectionPoint, SectionSpec};
use crate::vector_fields::{LorenzParams, Perturbation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuotientFitOptions {
    pub transversal_n: usize,
    /// Leaves between knots used for the semi-conjugacy residual.
    pub held_out: usize,
    /// Points per held-out leaf, spread over the calibrated band.
    pub leaf_points: usize,
    pub bisection_steps: usize,
}

impl Default for QuotientFitOptions {
    fn default() -> Self {
        QuotientFitOptions { transversal_n: 400, held_out: 40, leaf_points: 9, bisection_steps: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientFit {
    /// Unsigned leaf coordinates of the returns, one branch per side of the jump.
    pub map: EmpiricalMap,
    /// Where the return switches component.
    pub u_hat0: Option<f64>,
    pub dropped: usize,
    pub total: usize,
    /// `max |q(R(x)) - T_fit(q(x))|` over held-out leaf points.
    pub residual: f64,
    /// Largest spread of `q(R(x))` over one held-out leaf after one return.
    pub contraction_scale: f64,
    /// `(u, signed q(R(x)))` on the transversal.
    pub samples: Vec<[f64; 2]>,
}

struct Ctx<'a> {
    params: &'a LorenzParams,
    pert: &'a Perturbation,
    section: &'a SectionSpec,
    cfg: &'a IntegratorConfig,
}

impl Ctx<'_> {
    fn leaf_point(&self, u: f64, offset: f64) -> Result<SectionPoint> {
        match self.section.kind {
            SectionKind::PlanarSquare => {
                let hw = self.section.half_width;
                self.section.point(u * 2.0 * hw, offset * hw, None)
            }
            SectionKind::CasimirSurface => {
                let cal = self.section.calibration.as_ref().ok_or(Error::Uncalibrated)?;
                let v = cal.transversal_v(u) + offset * cal.band_half_width;
                self.section.point(u, v, Some(1))
            }
        }
    }

    fn range(&self) -> Result<(f64, f64)> {
        Ok(match self.section.kind {
            SectionKind::PlanarSquare => (-0.5, 0.5),
            SectionKind::CasimirSurface => {
                let cal = self.section.calibration.as_ref().ok_or(Error::Uncalibrated)?;
                (cal.u_min, cal.u_max)
            }
        })
    }

    /// Signed `q(R(x))` for `x` on the leaf `u`.
    fn image(&self, u: f64, offset: f64) -> Result<f64> {
        let x = self.leaf_point(u, offset)?;
        let ev = return_map(self.params, self.pert, self.section, &x, self.cfg)?;
        let y = self.section.chart_of(&ev.point)?;
        self.section.quotient_project(&y)
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    if xs.is_empty() {
        0.0
    } else {
        xs[xs.len() / 2]
    }
}

pub fn fit_empirical_quotient(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    opts: &QuotientFitOptions,
    cfg: &IntegratorConfig,
) -> Result<QuotientFit> {
    let ctx = Ctx { params, pert, section, cfg };
    let (lo, hi) = ctx.range()?;
    let n = opts.transversal_n.max(8);
    let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64).collect();
    let raw: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&u| match ctx.image(u, 0.0) {
            Ok(v) => Ok(Some(v)),
            Err(Error::OrbitCaptured { .. } | Error::OutOfFoliation { .. } | Error::InvalidState(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let dropped = raw.iter().filter(|v| v.is_none()).count();
    if dropped * 10 > n {
        return Err(Error::UnreliableFit { dropped, total: n });
    }
    let samples: Vec<[f64; 2]> = grid.iter().zip(&raw).filter_map(|(u, v)| v.map(|v| [*u, v])).collect();

    // cut at component switches, jumps and monotonicity reversals
    let incs: Vec<f64> = samples.windows(2).map(|w| (w[1][1].abs() - w[0][1].abs()).abs()).collect();
    let mut cuts: Vec<(usize, bool)> = Vec::new();
    for k in 0..samples.len() - 1 {
        let (a, b) = (samples[k][1], samples[k + 1][1]);
        let switch = (a >= 0.0) != (b >= 0.0);
        let local = median(incs[k.saturating_sub(10)..(k + 11).min(incs.len())].to_vec());
        let jump = incs[k] > 10.0 * local;
        let reversal = k > 0 && !cuts.last().is_some_and(|c| c.0 + 1 == k) && {
            let d0 = samples[k][1].abs() - samples[k - 1][1].abs();
            let d1 = b.abs() - a.abs();
            d0 * d1 < 0.0
        };
        if switch || jump || reversal {
            cuts.push((k, switch));
        }
    }

    let mut u_hat0 = None;
    let mut breaks = Vec::new();
    for &(k, switch) in &cuts {
        let (mut a, mut b) = (samples[k][0], samples[k + 1][0]);
        if switch && u_hat0.is_none() {
            let sa = samples[k][1] >= 0.0;
            for _ in 0..opts.bisection_steps {
                let m = 0.5 * (a + b);
                match ctx.image(m, 0.0) {
                    Ok(v) if (v >= 0.0) == sa => a = m,
                    Ok(_) => b = m,
                    Err(_) => break,
                }
            }
            u_hat0 = Some(0.5 * (a + b));
            breaks.push(0.5 * (a + b));
        } else {
            breaks.push(0.5 * (a + b));
        }
    }
    let mut branches = Vec::new();
    let mut start = 0;
    let mut kept_breaks = Vec::new();
    for (i, &(k, _)) in cuts.iter().chain(std::iter::once(&(samples.len() - 1, false))).enumerate() {
        let knots: Vec<[f64; 2]> = samples[start..=k].iter().map(|s| [s[0], s[1].abs()]).collect();
        if knots.len() >= 2 {
            if !branches.is_empty() {
                kept_breaks.push(breaks[i - 1]);
            }
            branches.push(EmpiricalBranch { knots });
        }
        start = k + 1;
    }
    let map = EmpiricalMap { domain: (lo, hi), breaks: kept_breaks, branches }.validated()?;

    // held-out leaves between knots, away from the breaks
    let spacing = (hi - lo) / n as f64;
    let held: Vec<f64> = (0..opts.held_out)
        .map(|j| lo + (hi - lo) * (j as f64 + 0.5) / opts.held_out as f64)
        .map(|u| u + 0.5 * spacing)
        .filter(|u| *u < hi && map.breaks.iter().all(|b| (u - b).abs() > 2.0 * spacing))
        .collect();
    let m = opts.leaf_points.max(2);
    let per_leaf: Vec<Option<(f64, f64)>> = held
        .par_iter()
        .map(|&u| {
            let fit = map.value(u).ok()?;
            let mut vals = Vec::with_capacity(m);
            for i in 0..m {
                let t = -1.0 + 2.0 * i as f64 / (m - 1) as f64;
                vals.push(ctx.image(u, t).ok()?.abs());
            }
            let res = vals.iter().map(|v| (v - fit).abs()).fold(0.0, f64::max);
            let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - vals.iter().cloned().fold(f64::INFINITY, f64::min);
            Some((res, spread))
        })
        .collect();
    let ok: Vec<(f64, f64)> = per_leaf.into_iter().flatten().collect();
    let residual = ok.iter().map(|p| p.0).fold(0.0, f64::max);
    let contraction_scale = ok.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(QuotientFit { map, u_hat0, dropped, total: n, residual, contraction_scale, samples })
}

/// Ambient diameters of `R^n` applied to a piece of the leaf `u` (`n = 0..=n_iter`),
/// the piece being `leaf_points` points across the calibrated band.
pub fn leaf_diameters(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    u: f64,
    leaf_points: usize,
    n_iter: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let ctx = Ctx { params, pert, section, cfg };
    let m = leaf_points.max(2);
    let mut pts: Vec<SectionPoint> =
        (0..m).map(|i| ctx.leaf_point(u, -1.0 + 2.0 * i as f64 / (m - 1) as f64)).collect::<Result<_>>()?;
    let diam = |p: &[SectionPoint]| {
        let mut d: f64 = 0.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                d = d.max((p[i].ambient - p[j].ambient).norm());
            }
        }
        d
    };
    let mut out = vec![diam(&pts)];
    for _ in 0..n_iter {
        pts = pts
            .par_iter()
            .map(|x| {
                let ev = return_map(params, pert, section, x, cfg)?;
                section.chart_of(&ev.point)
            })
            .collect::<Result<_>>()?;
        out.push(diam(&pts));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_maps::check_monotone;
    use crate::sections::{build_section, build_section_uncalibrated};

    #[test]
    fn plane_section_is_unreachable() {
        let p = LorenzParams::default();
        let s = build_section_uncalibrated(SectionKind::PlanarSquare, p).unwrap();
        let cfg = IntegratorConfig { max_time: 20.0, ..Default::default() };
        let opts = QuotientFitOptions { transversal_n: 20, ..Default::default() };
        let r = fit_empirical_quotient(&p, &Perturbation::none(), &s, &opts, &cfg);
        assert!(matches!(r, Err(Error::UnreliableFit { .. })), "{r:?}");
    }

    #[test]
    fn casimir_section_gives_cusp_shape() {
        let p = LorenzParams::default();
        let s = build_section(SectionKind::CasimirSurface, p).unwrap();
        let cfg = IntegratorConfig::default();
        let opts = QuotientFitOptions { transversal_n: 120, held_out: 8, leaf_points: 5, ..Default::default() };
        let fit = fit_empirical_quotient(&p, &Perturbation::none(), &s, &opts, &cfg).unwrap();
        assert_eq!(fit.dropped, 0);
        let u0 = fit.u_hat0.expect("component switch");
        assert!(fit.map.branches.len() >= 2);
        check_monotone(&fit.map, 500).unwrap();
        // the largest value sits next to the switch and is near the top leaf
        let top = fit.samples.iter().max_by(|a, b| a[1].abs().total_cmp(&b[1].abs())).unwrap();
        assert!((top[0] - u0).abs() < 0.02, "max at {} vs switch {u0}", top[0]);
        let pert = Perturbation::none();
        let ctx = Ctx { params: &p, pert: &pert, section: &s, cfg: &cfg };
        let left = ctx.image(u0 - 1e-6, 0.0).unwrap();
        let right = ctx.image(u0 + 1e-6, 0.0).unwrap();
        assert!(left > 0.9 && right < -0.9, "{left} {right}");
        assert!(fit.residual <= 2.0 * fit.contraction_scale);
    }
}
