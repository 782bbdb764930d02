use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::IntervalMap;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    /// Max over images `z` of `|T_j^-1(z) - T_{j,eta}^-1(z)|`.
    pub horizontal_gap: f64,
    /// Same for the inverse-branch derivatives `1/T'`.
    pub horizontal_derivative_gap: f64,
    /// Max of `|T'(x) - T_eta'(x)|` outside the ball around the critical points.
    pub vertical_gap: f64,
    /// Radius of that ball: twice the largest critical-point displacement.
    pub ball_radius: f64,
    pub branch_crossing: bool,
    pub holder_constant: f64,
    pub holder_exponent: f64,
}

fn invert(map: &dyn IntervalMap, a: f64, b: f64, z: f64) -> Result<f64> {
    let (mut lo, mut hi) = (a, b);
    let inc = map.value(hi)? > map.value(lo)?;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        let v = map.value(m)?;
        if (v < z) == inc {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn inner(a: f64, b: f64) -> (f64, f64) {
    let d = 1e-9 * (b - a);
    (a + d, b - d)
}

pub fn closeness_report(base: &dyn IntervalMap, perturbed: &dyn IntervalMap, grid_n: usize) -> Result<ClosenessReport> {
    let bb = base.branches();
    let pb = perturbed.branches();
    if bb.len() != pb.len() {
        return Err(Error::PartitionMismatch(format!("{} vs {} branches", bb.len(), pb.len())));
    }
    let n = grid_n.max(2);
    let shift = base.breakpoints().iter().zip(perturbed.breakpoints()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let radius = 2.0 * shift;

    let mut hgap: f64 = 0.0;
    let mut hdgap: f64 = 0.0;
    for (&(a, b), &(c, d)) in bb.iter().zip(&pb) {
        let (a, b) = inner(a, b);
        let (c, d) = inner(c, d);
        let (ya, yb) = (base.value(a)?, base.value(b)?);
        let (yc, yd) = (perturbed.value(c)?, perturbed.value(d)?);
        let lo = ya.min(yb).max(yc.min(yd));
        let hi = ya.max(yb).min(yc.max(yd));
        if !(hi > lo) {
            continue;
        }
        for k in 0..n {
            let z = lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
            let x = invert(base, a, b, z)?;
            let y = invert(perturbed, c, d, z)?;
            hgap = hgap.max((x - y).abs());
            let (dx, dy) = (base.eval(x)?.1, perturbed.eval(y)?.1);
            hdgap = hdgap.max((1.0 / dx - 1.0 / dy).abs());
        }
    }

    let crit: Vec<f64> = base.breakpoints();
    let (lo, hi) = base.domain();
    let mut vgap: f64 = 0.0;
    let mut crossing = false;
    for &(a, b) in &bb {
        let mut prev_sign = 0.0;
        for k in 0..n {
            let x = a + (b - a) * (k as f64 + 0.5) / n as f64;
            if crit.iter().any(|c| (x - c).abs() <= radius) || !(x > lo && x < hi) {
                continue;
            }
            let same_branch = perturbed.branches().iter().position(|&(c, d)| x > c && x < d)
                == bb.iter().position(|&(c, d)| x > c && x < d);
            if !same_branch {
                continue;
            }
            let (v, dv) = base.eval(x)?;
            let (w, dw) = perturbed.eval(x)?;
            vgap = vgap.max((dv - dw).abs());
            let diff = v - w;
            let away = v.abs() > 1e-6 && 1.0 - v.abs() > 1e-6;
            if diff.abs() > 1e-12 && away {
                let s = diff.signum();
                if prev_sign != 0.0 && s != prev_sign {
                    crossing = true;
                }
                prev_sign = s;
            }
        }
    }

    let (ch, iota) = holder_fit(perturbed, n.max(2000))?;
    Ok(ClosenessReport {
        horizontal_gap: hgap,
        horizontal_derivative_gap: hdgap,
        vertical_gap: vgap,
        ball_radius: radius,
        branch_crossing: crossing,
        holder_constant: ch,
        holder_exponent: iota,
    })
}

/// Fit `|1/T'(x) - 1/T'(y)| <= C_h |x - y|^iota` on each branch, taking
/// `1/T' = 0` at critical points. `iota` is the slope of the log modulus of
/// continuity over the finest dyadic scales.
pub fn holder_fit(map: &dyn IntervalMap, n: usize) -> Result<(f64, f64)> {
    let branches = map.branches();
    let mut series: Vec<Vec<(f64, f64)>> = Vec::new();
    for &(a, b) in &branches {
        let mut pts = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let x = a + (b - a) * k as f64 / n as f64;
            let g = match map.eval(x) {
                Ok((_, d)) => 1.0 / d.abs(),
                Err(Error::CriticalPoint(_)) => 0.0,
                Err(e) => return Err(e),
            };
            pts.push((x, if g.is_finite() { g } else { 0.0 }));
        }
        series.push(pts);
    }
    let h = branches.iter().map(|(a, b)| (b - a) / n as f64).fold(0.0, f64::max);
    let mut deltas = Vec::new();
    let mut d = 4.0 * h;
    while d < 0.5 * (map.domain().1 - map.domain().0) && deltas.len() < 12 {
        deltas.push(d);
        d *= 2.0;
    }
    let omegas: Vec<f64> = deltas.iter().map(|&d| series.iter().map(|s| modulus(s, d)).fold(0.0, f64::max)).collect();
    let fit: Vec<(f64, f64)> =
        deltas.iter().zip(&omegas).take(6).filter(|(_, w)| **w > 0.0).map(|(d, w)| (d.ln(), w.ln())).collect();
    if fit.len() < 2 {
        return Ok((0.0, 1.0));
    }
    let iota = slope(&fit).clamp(1e-6, 1.0);
    let ch = deltas.iter().zip(&omegas).map(|(d, w)| w / d.powf(iota)).fold(0.0, f64::max) * (1.0 + 1e-6);
    Ok((ch, iota))
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Largest oscillation of `g` over windows of width `d` (sliding max and min).
fn modulus(s: &[(f64, f64)], d: f64) -> f64 {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut start = 0;
    let mut best: f64 = 0.0;
    for j in 0..s.len() {
        while maxq.back().is_some_and(|&i| s[i].1 <= s[j].1) {
            maxq.pop_back();
        }
        maxq.push_back(j);
        while minq.back().is_some_and(|&i| s[i].1 >= s[j].1) {
            minq.pop_back();
        }
        minq.push_back(j);
        while s[j].0 - s[start].0 > d {
            start += 1;
        }
        while maxq.front().is_some_and(|&i| i < start) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&i| i < start) {
            minq.pop_front();
        }
        best = best.max(s[maxq[0]].1 - s[minq[0]].1);
    }
    best
}
