//! Distances between measures, suspension averages and noise-amplitude sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_integrator::IntegratorConfig;
use crate::interval_maps::IntervalMapSpec;
use crate::noise_driver::{NoiseSpec, NoiseStream};
use crate::pdmp::{batch_ratio_se, run_chain, segment_integral, Estimate, Observable, RenewalStats, Segment};
use crate::quadrature::simpson;
use crate::sections::{SectionPoint, SectionSpec};
use crate::transfer_operators::{stationary_density, vertical_random_operator, DensityVector};
use crate::vector_fields::{LorenzParams, Perturbation, State3};

pub fn l1_density_distance(h1: &DensityVector, h2: &DensityVector) -> Result<f64> {
    if h1.n_bins() != h2.n_bins() || h1.domain != h2.domain {
        return Err(Error::PartitionMismatch(format!(
            "{} bins on {:?} vs {} bins on {:?}",
            h1.n_bins(),
            h1.domain,
            h2.n_bins(),
            h2.domain
        )));
    }
    Ok(h1.values.iter().zip(&h2.values).map(|(a, b)| (a - b).abs()).sum::<f64>() * h1.bin_width)
}

/// Weighted point cloud in one or two dimensions (1-D points keep `y = 0`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub dim: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn one_d(xs: &[f64]) -> Self {
        Self::equal(1, xs.iter().map(|&x| [x, 0.0]).collect())
    }

    pub fn two_d(points: Vec<[f64; 2]>) -> Self {
        Self::equal(2, points)
    }

    fn equal(dim: usize, points: Vec<[f64; 2]>) -> Self {
        let w = 1.0 / points.len().max(1) as f64;
        EmpiricalMeasure { dim, weights: vec![w; points.len()], points }
    }

    pub fn weighted(dim: usize, points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if !(dim == 1 || dim == 2) || points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidParams("measure needs dim 1 or 2 and one weight per point".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("weights must be nonnegative and sum to 1, got {total}")));
        }
        Ok(EmpiricalMeasure { dim, points, weights })
    }

    /// Occupation measure of chain points in `(signed q, v)`, component 2 mapped to negative `u`.
    pub fn occupation(points: &[SectionPoint]) -> Self {
        Self::two_d(points.iter().map(|p| [if p.component == Some(2) { -p.u } else { p.u }, p.v]).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpOptions {
    /// Anchor coordinates per axis, taken as quantiles of the pooled support.
    pub anchors_1d: usize,
    pub anchors_2d: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { anchors_1d: 256, anchors_2d: 24 }
    }
}

fn below(x: f64) -> f64 {
    if x == 0.0 {
        -f64::from_bits(1)
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

fn anchors(values: Vec<f64>, k: usize) -> Vec<f64> {
    let mut v = values;
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    if v.len() <= k {
        return v;
    }
    let mut out: Vec<f64> = (0..k).map(|i| v[i * (v.len() - 1) / (k - 1)]).collect();
    out.dedup();
    out
}

/// Weight of points in `x <= X_i, y <= Y_j` for sorted cut lists.
struct Dominance {
    xs: Vec<f64>,
    ys: Vec<f64>,
    cum: Vec<f64>,
}

impl Dominance {
    fn new(m: &EmpiricalMeasure, mut xs: Vec<f64>, mut ys: Vec<f64>) -> Self {
        xs.sort_by(|a, b| a.total_cmp(b));
        xs.dedup();
        ys.sort_by(|a, b| a.total_cmp(b));
        ys.dedup();
        let (nx, ny) = (xs.len(), ys.len());
        let mut cum = vec![0.0; nx * ny];
        for (p, w) in m.points.iter().zip(&m.weights) {
            let i = xs.partition_point(|&c| c < p[0]);
            let j = ys.partition_point(|&c| c < p[1]);
            if i < nx && j < ny {
                cum[i * ny + j] += w;
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                let mut s = cum[i * ny + j];
                if i > 0 {
                    s += cum[(i - 1) * ny + j];
                }
                if j > 0 {
                    s += cum[i * ny + j - 1];
                }
                if i > 0 && j > 0 {
                    s -= cum[(i - 1) * ny + j - 1];
                }
                cum[i * ny + j] = s;
            }
        }
        Dominance { xs, ys, cum }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let i = self.xs.partition_point(|&c| c <= x);
        let j = self.ys.partition_point(|&c| c <= y);
        if i == 0 || j == 0 {
            return 0.0;
        }
        // cuts contain every queried value, so `i - 1` indexes `x` itself
        self.cum[(i - 1) * self.ys.len() + j - 1]
    }

    /// Weight of the closed box.
    fn boxed(&self, a: f64, b: f64, c: f64, d: f64) -> f64 {
        let (a, c) = (below(a), below(c));
        self.at(b, d) - self.at(a, d) - self.at(b, c) + self.at(a, c)
    }
}

fn lp_holds(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure, ax: &[f64], ay: &[f64], eps: f64) -> bool {
    let cuts = |a: &[f64]| -> Vec<f64> { a.iter().flat_map(|&v| [v, below(v), v + eps, below(v - eps)]).collect() };
    let (cx, cy) = (cuts(ax), cuts(ay));
    let d1 = Dominance::new(m1, cx.clone(), cy.clone());
    let d2 = Dominance::new(m2, cx, cy);
    for (i, &a) in ax.iter().enumerate() {
        for &b in &ax[i..] {
            for (k, &c) in ay.iter().enumerate() {
                for &d in &ay[k..] {
                    let (p1, p2) = (d1.boxed(a, b, c, d), d2.boxed(a, b, c, d));
                    let (q1, q2) =
                        (d1.boxed(a - eps, b + eps, c - eps, d + eps), d2.boxed(a - eps, b + eps, c - eps, d + eps));
                    if p1 > q2 + eps + 1e-12 || p2 > q1 + eps + 1e-12 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Smallest grid value passing the LP test over boxes anchored at support
/// points (sup-norm neighbourhoods). Returns 1 when no grid value passes.
pub fn levy_prokhorov_distance(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure, grid_eps: &[f64]) -> Result<f64> {
    levy_prokhorov_with(m1, m2, grid_eps, &LpOptions::default())
}

pub fn levy_prokhorov_with(
    m1: &EmpiricalMeasure,
    m2: &EmpiricalMeasure,
    grid_eps: &[f64],
    opts: &LpOptions,
) -> Result<f64> {
    if m1.dim != m2.dim {
        return Err(Error::InvalidParams(format!("dimension {} vs {}", m1.dim, m2.dim)));
    }
    let mut grid: Vec<f64> = grid_eps.iter().copied().filter(|e| *e > 0.0).collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    let k = if m1.dim == 1 { opts.anchors_1d } else { opts.anchors_2d }.max(2);
    let pooled = || m1.points.iter().chain(&m2.points);
    let ax = anchors(pooled().map(|p| p[0]).collect(), k);
    let ay = if m1.dim == 1 { vec![0.0] } else { anchors(pooled().map(|p| p[1]).collect(), k) };
    // the test is monotone in eps, so bisect the grid
    let (mut lo, mut hi) = (0usize, grid.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if lp_holds(m1, m2, &ax, &ay, grid[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(grid.get(lo).copied().unwrap_or(1.0).min(1.0))
}

/// `n` geometric steps from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1).max(1) as f64)).collect()
}

/// Wasserstein-1 distance of two equal-weight 1-D samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let mut events: Vec<(f64, f64)> = a.iter().map(|&x| (x, 1.0 / a.len() as f64)).collect();
    events.extend(b.iter().map(|&x| (x, -1.0 / b.len() as f64)));
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for w in events.windows(2) {
        diff += w[0].1;
        total += diff.abs() * (w[1].0 - w[0].0);
    }
    total
}

/// `sum_k int_0^tau_k f(x_k, s) ds / sum_k tau_k` from per-sample integrals.
pub fn suspension_average_from_integrals(integrals: &[f64], taus: &[f64]) -> Result<Estimate> {
    if integrals.is_empty() || integrals.len() != taus.len() {
        return Err(Error::InvalidParams("need one integral per return time".into()));
    }
    let value = integrals.iter().sum::<f64>() / taus.iter().sum::<f64>();
    Ok(Estimate { value, se: batch_ratio_se(integrals, taus, 32) })
}

/// Suspension average of `f(x, s)` over chain samples, Simpson in `s`.
pub fn suspension_average(
    points: &[SectionPoint],
    taus: &[f64],
    f: &(dyn Fn(&SectionPoint, f64) -> f64 + Sync),
    dt: f64,
) -> Result<Estimate> {
    if points.len() != taus.len() {
        return Err(Error::InvalidParams("need one return time per point".into()));
    }
    let ints: Vec<f64> =
        points.par_iter().zip(taus).map(|(x, &tau)| simpson(&mut |s| f(x, s), 0.0, tau, dt.min(tau / 4.0))).collect();
    suspension_average_from_integrals(&ints, taus)
}

/// Suspension average of `F(Phi^s(x))`, flowing each sample with the noise that drove it.
pub fn lifted_suspension_average(
    params: &LorenzParams,
    pert: &Perturbation,
    section: &SectionSpec,
    stats: &RenewalStats,
    f: Observable,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Estimate> {
    let ints: Vec<f64> = (0..stats.chain_points.len())
        .into_par_iter()
        .map(|k| {
            let seg = Segment {
                eta: stats.etas[k],
                start_time: 0.0,
                duration: stats.return_time_samples[k],
                entry_point: stats.chain_points[k].ambient,
                exit_point: State3::zeros(),
                complete: true,
            };
            segment_integral(params, pert, section, &seg, f, dt, cfg)
        })
        .collect::<Result<_>>()?;
    suspension_average_from_integrals(&ints, &stats.return_time_samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub seed: u64,
    pub chain_length: usize,
    pub burn_in: usize,
    pub n_bins: usize,
    pub samples_per_bin: usize,
    pub n_quadrature: usize,
    pub map: IntervalMapSpec,
    pub lp_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            epsilons: vec![0.1, 0.05, 0.02, 0.01],
            seed: 1,
            chain_length: 10_000,
            burn_in: 100,
            n_bins: 2048,
            samples_per_bin: 512,
            n_quadrature: 16,
            map: IntervalMapSpec::default_conjugated(),
            lp_grid: geometric_grid(1e-3, 1.0, 160),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() || self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidParams("epsilons must be nonempty and strictly decreasing".into()));
        }
        if self.epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidParams("epsilons must lie in [0, 1]".into()));
        }
        if self.lp_grid.is_empty() {
            return Err(Error::InvalidParams("empty LP grid".into()));
        }
        Ok(())
    }
}

/// Where the chain runs; `None` skips the section route.
pub struct ChainSetup<'a> {
    pub params: LorenzParams,
    pub perturbation: Perturbation,
    pub section: &'a SectionSpec,
    pub start: SectionPoint,
    pub cfg: IntegratorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySweep {
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub l1_distances: Vec<f64>,
    pub lp_distances: Vec<f64>,
    pub mean_returns: Vec<f64>,
    /// L1 distance of two zero-noise densities with different sampling seeds.
    pub noise_floor: f64,
    /// LP distance of two disjoint zero-noise chain runs.
    pub lp_noise_floor: f64,
    pub failures: Vec<Option<String>>,
}

impl StabilitySweep {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epsilon", "seed", "l1", "lp", "mean_return", "noise_floor", "lp_noise_floor"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for k in 0..self.epsilons.len() {
            out.serialize((
                self.epsilons[k],
                self.seeds[k],
                self.l1_distances[k],
                self.lp_distances[k],
                self.mean_returns[k],
                self.noise_floor,
                self.lp_noise_floor,
            ))
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Entry {
    l1: f64,
    lp: f64,
    mean_return: f64,
    failure: Option<String>,
}

/// L1 route on the map family and LP route on the section chain, one entry per epsilon.
/// All entries share the seed, so the noise sequences are coupled across epsilon.
pub fn stability_sweep(config: &SweepConfig, chain: Option<&ChainSetup>) -> Result<StabilitySweep> {
    config.validate()?;
    let density = |eps: f64, seed: u64| -> Result<DensityVector> {
        let noise = NoiseSpec::uniform(eps, seed);
        let op =
            vertical_random_operator(&config.map, &noise, config.n_bins, config.samples_per_bin, config.n_quadrature)?;
        stationary_density(&op, 1e-12, 100_000)
    };
    let h0 = density(0.0, config.seed)?;
    let noise_floor = l1_density_distance(&h0, &density(0.0, config.seed.wrapping_add(1))?)?;

    let run = |eps: f64, start: &SectionPoint, c: &ChainSetup| -> Result<RenewalStats> {
        let stream = NoiseStream::new(NoiseSpec::uniform(eps, config.seed));
        run_chain(&c.params, &c.perturbation, c.section, start, &stream, config.burn_in, config.chain_length, &c.cfg)
    };
    let (reference, lp_noise_floor) = match chain {
        Some(c) => {
            let r = run(0.0, &c.start, c)?;
            let last = *r.chain_points.last().ok_or_else(|| Error::InvalidParams("empty chain".into()))?;
            let again = run(0.0, &last, c)?;
            let m0 = EmpiricalMeasure::occupation(&r.chain_points);
            let floor =
                levy_prokhorov_distance(&m0, &EmpiricalMeasure::occupation(&again.chain_points), &config.lp_grid)?;
            (Some(m0), floor)
        }
        None => (None, f64::NAN),
    };

    let entries: Vec<Entry> = config
        .epsilons
        .par_iter()
        .map(|&eps| {
            let attempt = || -> Result<(f64, f64, f64)> {
                let l1 = l1_density_distance(&density(eps, config.seed)?, &h0)?;
                let (lp, mr) = match (chain, &reference) {
                    (Some(c), Some(m0)) => {
                        let s = run(eps, &c.start, c)?;
                        let m = EmpiricalMeasure::occupation(&s.chain_points);
                        (levy_prokhorov_distance(&m, m0, &config.lp_grid)?, s.mean_return)
                    }
                    _ => (f64::NAN, f64::NAN),
                };
                Ok((l1, lp, mr))
            };
            match attempt() {
                Ok((l1, lp, mean_return)) => Entry { l1, lp, mean_return, failure: None },
                Err(e) => Entry { l1: f64::NAN, lp: f64::NAN, mean_return: f64::NAN, failure: Some(e.to_string()) },
            }
        })
        .collect();

    Ok(StabilitySweep {
        epsilons: config.epsilons.clone(),
        seeds: vec![config.seed; config.epsilons.len()],
        l1_distances: entries.iter().map(|e| e.l1).collect(),
        lp_distances: entries.iter().map(|e| e.lp).collect(),
        mean_returns: entries.iter().map(|e| e.mean_return).collect(),
        noise_floor,
        lp_noise_floor,
        failures: entries.into_iter().map(|e| e.failure).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_maps::ReferenceMap;
    use crate::pdmp::{simulate_pdmp, time_average, BuiltinObservable};
    use crate::sections::{build_section, SectionKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dens(values: Vec<f64>) -> DensityVector {
        let w = 1.0 / values.len() as f64;
        DensityVector { values, bin_width: w, domain: (0.0, 1.0) }
    }

    #[test]
    fn l1_examples() {
        let h = dens(vec![1.0, 1.0]);
        assert_eq!(l1_density_distance(&h, &h).unwrap(), 0.0);
        assert_eq!(l1_density_distance(&h, &dens(vec![2.0, 0.0])).unwrap(), 1.0);
        assert!(matches!(l1_density_distance(&h, &dens(vec![1.0; 3])), Err(Error::PartitionMismatch(_))));
    }

    #[test]
    fn lp_identical_and_two_point() {
        let grid = geometric_grid(1e-3, 1.0, 200);
        let m = EmpiricalMeasure::one_d(&[0.1, 0.4, 0.45, 0.9]);
        assert_eq!(levy_prokhorov_distance(&m, &m, &grid).unwrap(), grid[0]);
        for d in [0.05, 0.3, 0.7, 2.0] {
            let lp = levy_prokhorov_distance(&EmpiricalMeasure::one_d(&[0.0]), &EmpiricalMeasure::one_d(&[d]), &grid)
                .unwrap();
            let step = d.min(1.0) * ((1.0f64 / 1e-3).ln() / 199.0).exp();
            assert!(lp >= d.min(1.0) * (1.0 - 1e-12) && lp <= step, "d {d}: {lp}");
        }
        let m2 = EmpiricalMeasure::two_d(vec![[0.0, 0.0]]);
        let m3 = EmpiricalMeasure::two_d(vec![[0.0, 0.2]]);
        let lp = levy_prokhorov_distance(&m2, &m3, &grid).unwrap();
        assert!((0.2..0.21).contains(&lp), "{lp}");
        assert!(levy_prokhorov_distance(&m, &m2, &grid).is_err());
    }

    #[test]
    fn lp_is_symmetric() {
        let grid = geometric_grid(1e-3, 1.0, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<[f64; 2]> = (0..300).map(|_| [rng.gen(), rng.gen()]).collect();
        let b: Vec<[f64; 2]> = (0..200).map(|_| [rng.gen::<f64>() * 0.8, rng.gen()]).collect();
        let (ma, mb) = (EmpiricalMeasure::two_d(a), EmpiricalMeasure::two_d(b));
        assert_eq!(
            levy_prokhorov_distance(&ma, &mb, &grid).unwrap(),
            levy_prokhorov_distance(&mb, &ma, &grid).unwrap()
        );
    }

    #[test]
    fn wasserstein_examples() {
        assert!((wasserstein1(&[0.0], &[0.3]) - 0.3).abs() < 1e-15);
        assert!((wasserstein1(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(wasserstein1(&[0.2, 0.7], &[0.7, 0.2]), 0.0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(EmpiricalMeasure::weighted(1, vec![[0.0, 0.0], [1.0, 0.0]], vec![0.5, 0.6]).is_err());
        assert!(EmpiricalMeasure::weighted(1, vec![[0.0, 0.0], [1.0, 0.0]], vec![0.25, 0.75]).is_ok());
    }

    fn fake_chain(n: usize) -> (Vec<SectionPoint>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = (0..n)
            .map(|_| SectionPoint { u: rng.gen(), v: 0.0, ambient: State3::zeros(), component: Some(1) })
            .collect();
        let taus = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
        (pts, taus)
    }

    #[test]
    fn suspension_of_one_is_one() {
        let (pts, taus) = fake_chain(500);
        let e = suspension_average(&pts, &taus, &|_, _| 1.0, 0.01).unwrap();
        assert!((e.value - 1.0).abs() < 1e-14, "{}", e.value);
    }

    #[test]
    fn suspension_of_indicator_is_truncated_mean() {
        let (pts, taus) = fake_chain(500);
        let c = 0.8;
        let e = suspension_average(&pts, &taus, &|_, s| if s < c { 1.0 } else { 0.0 }, 1e-4).unwrap();
        let direct = taus.iter().map(|t| t.min(c)).sum::<f64>() / taus.iter().sum::<f64>();
        assert!((e.value - direct).abs() < 1e-4, "{} vs {direct}", e.value);
        let ints: Vec<f64> = taus.iter().map(|t| t.min(c)).collect();
        assert_eq!(suspension_average_from_integrals(&ints, &taus).unwrap().value, direct);
    }

    #[test]
    fn suspension_matches_time_average_without_noise() {
        let p = LorenzParams::default();
        let s = build_section(SectionKind::CasimirSurface, p).unwrap();
        let cfg = IntegratorConfig::default();
        let pert = Perturbation::constant(0.0, State3::new(0.0, 0.0, 1.0));
        let stream = NoiseStream::new(NoiseSpec::uniform(0.0, 1));
        let y0 = State3::new(1.0, 1.0, -18.0);
        let path = simulate_pdmp(&p, &pert, &s, &y0, &stream, 300.0, &cfg).unwrap();
        let f = |y: &State3| BuiltinObservable::Y3.eval(y);
        let ta = time_average(&path, &s, &f, 0.01, &cfg).unwrap();
        let start = s.chart_of(&path.segments[1].entry_point).unwrap();
        let stats = run_chain(&p, &pert, &s, &start, &stream, 0, 300, &cfg).unwrap();
        let sa = lifted_suspension_average(&p, &pert, &s, &stats, &f, 0.01, &cfg).unwrap();
        let se = (ta.se.powi(2) + sa.se.powi(2)).sqrt();
        assert!((ta.value - sa.value).abs() <= 3.0 * se, "{ta:?} vs {sa:?}");
    }

    #[test]
    fn zero_only_sweep_sits_at_the_floor() {
        let cfg = SweepConfig {
            epsilons: vec![0.0],
            n_bins: 256,
            samples_per_bin: 64,
            map: IntervalMapSpec::Reference { map: ReferenceMap::Tent },
            ..Default::default()
        };
        let s = stability_sweep(&cfg, None).unwrap();
        assert_eq!(s.l1_distances, vec![0.0]);
        assert!(s.noise_floor < 0.05);
        assert!(s.failures[0].is_none());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epsilon,seed,l1,lp,mean_return,noise_floor,lp_noise_floor\n0.0,1,0.0,"));
    }

    #[test]
    fn cusp_sweep_is_strictly_decreasing() {
        let cfg = SweepConfig { n_bins: 1024, samples_per_bin: 128, ..Default::default() };
        let s = stability_sweep(&cfg, None).unwrap();
        assert!(s.l1_distances.windows(2).all(|w| w[1] < w[0]), "{:?}", s.l1_distances);
    }

    #[test]
    fn sweep_rejects_unsorted_epsilons() {
        let cfg = SweepConfig { epsilons: vec![0.01, 0.1], ..Default::default() };
        assert!(stability_sweep(&cfg, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn l1_triangle(a in prop::collection::vec(0.0f64..5.0, 8), b in prop::collection::vec(0.0f64..5.0, 8), c in prop::collection::vec(0.0f64..5.0, 8)) {
            let (a, b, c) = (dens(a), dens(b), dens(c));
            let ab = l1_density_distance(&a, &b).unwrap();
            let bc = l1_density_distance(&b, &c).unwrap();
            let ac = l1_density_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab, l1_density_distance(&b, &a).unwrap());
        }

        #[test]
        fn lp_squared_below_w1(xs in prop::collection::vec(0.0f64..1.0, 5..40), ys in prop::collection::vec(0.0f64..1.0, 5..40)) {
            let grid: Vec<f64> = (1..=1000).map(|k| k as f64 * 1e-3).collect();
            let lp = levy_prokhorov_distance(&EmpiricalMeasure::one_d(&xs), &EmpiricalMeasure::one_d(&ys), &grid).unwrap();
            let w1 = wasserstein1(&xs, &ys);
            prop_assert!((lp - 1e-3).max(0.0).powi(2) <= w1 + 1e-12, "lp {} w1 {}", lp, w1);
        }
    }
}
