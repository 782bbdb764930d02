//! Ulam discretizations of deterministic and averaged transfer operators.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Normal};

use crate::error::{Error, Result};
use crate::interval_maps::{IntervalMap, IntervalMapSpec};
use crate::noise_driver::{NoiseFamily, NoiseSpec};
use crate::quadrature::gauss_legendre;

const MAGIC: &[u8; 4] = b"ULAM";

/// Row-stochastic matrix on a uniform partition, stored as compressed rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlamOperator {
    pub n_bins: usize,
    pub domain: (f64, f64),
    pub row_offsets: Vec<usize>,
    pub columns: Vec<u32>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityVector {
    pub values: Vec<f64>,
    pub bin_width: f64,
    pub domain: (f64, f64),
}

impl DensityVector {
    pub fn uniform(n: usize, domain: (f64, f64)) -> Self {
        let w = (domain.1 - domain.0) / n as f64;
        DensityVector { values: vec![1.0 / (domain.1 - domain.0); n], bin_width: w, domain }
    }

    /// Bin averages of `f`, estimated at `k` midpoints per bin, then normalized.
    pub fn from_fn(n: usize, domain: (f64, f64), k: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let w = (domain.1 - domain.0) / n as f64;
        let values = (0..n)
            .map(|i| (0..k).map(|j| f(domain.0 + w * (i as f64 + (j as f64 + 0.5) / k as f64))).sum::<f64>() / k as f64)
            .collect();
        DensityVector { values, bin_width: w, domain }.normalized()
    }

    pub fn from_masses(masses: &[f64], domain: (f64, f64)) -> Self {
        let w = (domain.1 - domain.0) / masses.len() as f64;
        DensityVector { values: masses.iter().map(|m| m / w).collect(), bin_width: w, domain }
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().map(|v| v * self.bin_width).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_width
    }

    pub fn normalized(mut self) -> Result<Self> {
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams("density values must be finite and nonnegative".into()));
        }
        let m = self.total_mass();
        if !(m > 0.0) {
            return Err(Error::InvalidParams("density has zero mass".into()));
        }
        self.values.iter_mut().for_each(|v| *v /= m);
        Ok(self)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.bin_width
    }

    /// Mass of `[domain.0, x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        let t = ((x - self.domain.0) / self.bin_width).clamp(0.0, self.n_bins() as f64);
        let k = (t.floor() as usize).min(self.n_bins() - 1);
        let below: f64 = self.values[..k].iter().sum::<f64>() * self.bin_width;
        below + self.values[k] * self.bin_width * (t - k as f64)
    }

    /// Density of the push-forward under an increasing homeomorphism whose inverse is `inv`,
    /// on an `n`-bin partition of `target`.
    pub fn push_forward_monotone(&self, inv: impl Fn(f64) -> f64, n: usize, target: (f64, f64)) -> Result<Self> {
        let w = (target.1 - target.0) / n as f64;
        let cuts: Vec<f64> = (0..=n).map(|j| self.cdf(inv(target.0 + w * j as f64))).collect();
        let masses: Vec<f64> = cuts.windows(2).map(|c| (c[1] - c[0]).max(0.0)).collect();
        DensityVector::from_masses(&masses, target).normalized()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "density"]).map_err(|e| Error::Io(e.to_string()))?;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.domain.0 + self.bin_width * (i as f64 + 0.5);
            out.serialize((x, v)).map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, domain: (f64, f64)) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut values = Vec::new();
        for rec in rd.deserialize::<(f64, f64)>() {
            values.push(rec.map_err(|e| Error::Format(e.to_string()))?.1);
        }
        if values.is_empty() {
            return Err(Error::Format("empty density file".into()));
        }
        let w = (domain.1 - domain.0) / values.len() as f64;
        Ok(DensityVector { values, bin_width: w, domain })
    }
}

impl UlamOperator {
    pub fn from_rows(domain: (f64, f64), rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut columns = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let sum: f64 = r.iter().map(|e| e.1).sum();
            if !(sum > 0.0) || r.iter().any(|e| e.1 < 0.0 || e.0 as usize >= n) {
                return Err(Error::InvalidParams("rows must be nonnegative with positive mass".into()));
            }
            for (c, v) in r {
                if columns.len() > *row_offsets.last().unwrap() && *columns.last().unwrap() == c {
                    *values.last_mut().unwrap() += v / sum;
                } else if v > 0.0 {
                    columns.push(c);
                    values.push(v / sum);
                }
            }
            row_offsets.push(columns.len());
        }
        Ok(UlamOperator { n_bins: n, domain, row_offsets, columns, values })
    }

    pub fn bin_width(&self) -> f64 {
        (self.domain.1 - self.domain.0) / self.n_bins as f64
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.columns[a..b].iter().zip(&self.values[a..b]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.n_bins).map(|i| (self.row(i).map(|e| e.1).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Mass vector pushed one step: `p P`.
    pub fn apply_masses(&self, p: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n_bins];
        for (i, &m) in p.iter().enumerate() {
            if m != 0.0 {
                for (j, v) in self.row(i) {
                    q[j] += m * v;
                }
            }
        }
        q
    }

    /// Transfer operator on densities. Signed inputs are allowed.
    pub fn apply(&self, h: &DensityVector) -> Result<DensityVector> {
        if h.n_bins() != self.n_bins {
            return Err(Error::PartitionMismatch(format!("{} bins vs operator {}", h.n_bins(), self.n_bins)));
        }
        Ok(DensityVector::from_masses(&self.apply_masses(&h.masses()), self.domain))
    }

    /// Largest L1 distance between corresponding rows.
    pub fn max_row_l1_diff(&self, other: &UlamOperator) -> Result<f64> {
        if self.n_bins != other.n_bins {
            return Err(Error::PartitionMismatch(format!("{} vs {} bins", self.n_bins, other.n_bins)));
        }
        let mut best: f64 = 0.0;
        for i in 0..self.n_bins {
            let mut row: Vec<(usize, f64)> = self.row(i).collect();
            row.extend(other.row(i).map(|(j, v)| (j, -v)));
            row.sort_by_key(|e| e.0);
            let mut d = 0.0;
            let mut k = 0;
            while k < row.len() {
                let mut s = row[k].1;
                while k + 1 < row.len() && row[k + 1].0 == row[k].0 {
                    k += 1;
                    s += row[k].1;
                }
                d += s.abs();
                k += 1;
            }
            best = best.max(d);
        }
        Ok(best)
    }

    /// Convex combination of operators on one partition.
    pub fn average(ops: &[UlamOperator], weights: &[f64]) -> Result<UlamOperator> {
        let first = ops.first().ok_or_else(|| Error::InvalidParams("nothing to average".into()))?;
        if ops.iter().any(|o| o.n_bins != first.n_bins) {
            return Err(Error::PartitionMismatch("operators differ in bins".into()));
        }
        let rows = (0..first.n_bins)
            .into_par_iter()
            .map(|i| {
                let mut r: Vec<(u32, f64)> =
                    ops.iter().zip(weights).flat_map(|(o, &w)| o.row(i).map(move |(j, v)| (j as u32, w * v))).collect();
                r.sort_by_key(|e| e.0);
                r
            })
            .collect();
        UlamOperator::from_rows(first.domain, rows)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.n_bins as u32).to_le_bytes())?;
        for &o in &self.row_offsets {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in &self.columns {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// The binary layout carries no domain, so it is supplied by the reader.
    pub fn read_binary<R: Read>(mut r: R, domain: (f64, f64)) -> Result<UlamOperator> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut row_offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            r.read_exact(&mut b8)?;
            row_offsets.push(u64::from_le_bytes(b8) as usize);
        }
        let nnz = *row_offsets.last().unwrap();
        if row_offsets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Format("row offsets not monotone".into()));
        }
        let mut columns = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            r.read_exact(&mut b4)?;
            columns.push(u32::from_le_bytes(b4));
        }
        let mut values = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(UlamOperator { n_bins: n, domain, row_offsets, columns, values })
    }
}

pub const DEFAULT_SAMPLING_SEED: u64 = 0x55_4c_41_4d;

pub fn ulam_matrix(map: &IntervalMapSpec, n_bins: usize, samples_per_bin: usize) -> Result<UlamOperator> {
    ulam_matrix_of(map.build()?.as_ref(), n_bins, samples_per_bin, DEFAULT_SAMPLING_SEED)
}

/// Stratified sampling: bin `i` is cut into `samples_per_bin` strata, one
/// jittered sample each. Samples landing on a critical point are re-drawn.
pub fn ulam_matrix_of(map: &dyn IntervalMap, n_bins: usize, samples_per_bin: usize, seed: u64) -> Result<UlamOperator> {
    let images = sample_images(map, n_bins, samples_per_bin, seed)?;
    bin_images(&images, map.domain(), &[(0.0, 1.0)])
}

fn sample_images(map: &dyn IntervalMap, n_bins: usize, samples_per_bin: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_bins < 16 || samples_per_bin < 32 {
        return Err(Error::InvalidParams(format!(
            "need n_bins >= 16 and samples_per_bin >= 32, got {n_bins} and {samples_per_bin}"
        )));
    }
    let (lo, hi) = map.domain();
    let w = (hi - lo) / n_bins as f64;
    let s = samples_per_bin;
    (0..n_bins)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            (0..s)
                .map(|k| {
                    let mut tries = 0;
                    loop {
                        let r: f64 = rng.gen();
                        let x = lo + w * (i as f64 + (k as f64 + r) / s as f64);
                        match map.eval(x.clamp(lo, hi)) {
                            Ok((y, _)) => return Ok(y),
                            Err(Error::CriticalPoint(_)) if tries < 64 => tries += 1,
                            Err(e) => return Err(e),
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Rows from sampled images, each image shifted by every `eta` (reflected at the
/// endpoints) and counted with the node weight.
fn bin_images(images: &[Vec<f64>], domain: (f64, f64), nodes: &[(f64, f64)]) -> Result<UlamOperator> {
    let n = images.len();
    let (lo, hi) = domain;
    let w = (hi - lo) / n as f64;
    let rows = images
        .par_iter()
        .map(|ys| {
            let mut counts: Vec<(u32, f64)> = Vec::with_capacity(8);
            for &(eta, weight) in nodes {
                for &y in ys {
                    let mut v = y + eta;
                    if v > hi {
                        v = 2.0 * hi - v;
                    } else if v < lo {
                        v = 2.0 * lo - v;
                    }
                    let j = (((v - lo) / w).floor().max(0.0) as usize).min(n - 1) as u32;
                    match counts.iter_mut().find(|c| c.0 == j) {
                        Some(c) => c.1 += weight,
                        None => counts.push((j, weight)),
                    }
                }
            }
            counts
        })
        .collect();
    UlamOperator::from_rows(domain, rows)
}

/// [`random_operator`] for the vertical additive family over `base`, sampling
/// the base map once and shifting the images.
pub fn vertical_random_operator(
    base: &IntervalMapSpec,
    noise: &NoiseSpec,
    n_bins: usize,
    samples_per_bin: usize,
    n_quadrature: usize,
) -> Result<UlamOperator> {
    let nodes = noise_nodes(noise, n_quadrature)?;
    let map = base.build()?;
    let images = sample_images(map.as_ref(), n_bins, samples_per_bin, noise.seed)?;
    bin_images(&images, map.domain(), &nodes)
}

/// Noise nodes and weights for `lambda_eps`.
pub fn noise_nodes(noise: &NoiseSpec, n_quadrature: usize) -> Result<Vec<(f64, f64)>> {
    noise.validate()?;
    if noise.epsilon == 0.0 || noise.family == NoiseFamily::Atomic0 {
        return Ok(vec![(0.0, 1.0)]);
    }
    if n_quadrature < 8 {
        return Err(Error::InvalidParams(format!("n_quadrature must be >= 8, got {n_quadrature}")));
    }
    let e = noise.epsilon;
    let (x, w) = gauss_legendre(n_quadrature);
    let mut nodes: Vec<(f64, f64)> = match noise.family {
        NoiseFamily::UniformSymmetric => x.iter().zip(&w).map(|(x, w)| (e * x, w / 2.0)).collect(),
        NoiseFamily::TruncatedGaussian => {
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            x.iter().zip(&w).map(|(x, w)| (e * x, w * n.pdf(2.0 * x))).collect()
        }
        NoiseFamily::Atomic0 => unreachable!(),
    };
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    nodes.iter_mut().for_each(|n| n.1 /= total);
    Ok(nodes)
}

/// `int lambda_eps(d eta) L_eta`, by quadrature over `eta`. Ulam samples use `noise.seed`.
pub fn random_operator(
    family: &(dyn Fn(f64) -> Result<IntervalMapSpec> + Sync),
    noise: &NoiseSpec,
    n_bins: usize,
    samples_per_bin: usize,
    n_quadrature: usize,
) -> Result<UlamOperator> {
    let nodes = noise_nodes(noise, n_quadrature)?;
    let ops: Vec<UlamOperator> = nodes
        .iter()
        .map(|&(eta, _)| ulam_matrix_of(family(eta)?.build()?.as_ref(), n_bins, samples_per_bin, noise.seed))
        .collect::<Result<_>>()?;
    if ops.len() == 1 {
        return Ok(ops.into_iter().next().unwrap());
    }
    let weights: Vec<f64> = nodes.iter().map(|n| n.1).collect();
    UlamOperator::average(&ops, &weights)
}

pub fn stationary_density(op: &UlamOperator, tol: f64, max_iter: usize) -> Result<DensityVector> {
    let n = op.n_bins;
    let mut p = vec![1.0 / n as f64; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let mut q = op.apply_masses(&p);
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= s);
        change = q.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = q;
        if change < tol {
            return DensityVector::from_masses(&p, op.domain).normalized();
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual: change })
}

/// Sparse table for window max and min.
struct RangeTable {
    max: Vec<Vec<f64>>,
    min: Vec<Vec<f64>>,
}

impl RangeTable {
    fn new(v: &[f64]) -> Self {
        let mut max = vec![v.to_vec()];
        let mut min = vec![v.to_vec()];
        let mut span = 1;
        while 2 * span <= v.len() {
            let (pm, pn) = (max.last().unwrap(), min.last().unwrap());
            let nm: Vec<f64> = (0..=v.len() - 2 * span).map(|i| pm[i].max(pm[i + span])).collect();
            let nn: Vec<f64> = (0..=v.len() - 2 * span).map(|i| pn[i].min(pn[i + span])).collect();
            max.push(nm);
            min.push(nn);
            span *= 2;
        }
        RangeTable { max, min }
    }

    /// Oscillation over `a..=b`.
    fn osc(&self, a: usize, b: usize) -> f64 {
        let len = b - a + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let s = 1 << k;
        let hi = self.max[k][a].max(self.max[k][b + 1 - s]);
        let lo = self.min[k][a].min(self.min[k][b + 1 - s]);
        hi - lo
    }
}

/// `sup` over `eps1 = 2^k bin_width <= eps0` (`k >= 1`) of
/// `eps1^-alpha int osc(h, B_eps1(x)) dx`, balls centred at bin midpoints.
pub fn quasi_holder_seminorm(h: &DensityVector, alpha: f64, eps0: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParams(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let w = h.bin_width;
    if eps0 < 2.0 * w * (1.0 - 1e-12) {
        return Err(Error::InvalidParams(format!("eps0 {eps0} below twice the bin width {w}")));
    }
    let n = h.n_bins();
    let table = RangeTable::new(&h.values);
    let mut best: f64 = 0.0;
    let mut m = 2usize;
    while (m as f64) * w <= eps0 * (1.0 + 1e-12) {
        let eps1 = m as f64 * w;
        let total: f64 = (0..n).map(|i| table.osc(i.saturating_sub(m), (i + m).min(n - 1))).sum::<f64>() * w;
        best = best.max(total / eps1.powf(alpha));
        if m >= n {
            break;
        }
        m *= 2;
    }
    Ok(best)
}

/// Strong norm `|h|_alpha + ||h||_1`.
pub fn quasi_holder_norm(h: &DensityVector, alpha: f64, eps0: f64) -> Result<f64> {
    Ok(quasi_holder_seminorm(h, alpha, eps0)? + h.l1_norm())
}

/// Smooth and rough test densities on `n` bins.
pub fn probe_library(n: usize, domain: (f64, f64)) -> Result<Vec<DensityVector>> {
    let (a, b) = domain;
    let len = b - a;
    let t = move |x: f64| (x - a) / len;
    let mut out = vec![DensityVector::uniform(n, domain)];
    out.push(DensityVector::from_fn(n, domain, 4, |x| 0.1 + t(x))?);
    out.push(DensityVector::from_fn(n, domain, 4, |x| 1.1 - t(x))?);
    for k in 1..=8 {
        let f = k as f64 * std::f64::consts::TAU;
        out.push(DensityVector::from_fn(n, domain, 4, move |x| 1.0 + 0.9 * (f * t(x)).cos())?);
    }
    for (c, r) in [(0.25, 0.1), (0.5, 0.2), (0.75, 0.1), (0.4, 0.3)] {
        let s = 0.02;
        out.push(DensityVector::from_fn(n, domain, 4, move |x| {
            let d = (t(x) - c).abs() - r;
            0.01 + 0.5 * (1.0 - (d / s).tanh())
        })?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LasotaYorke {
    pub kappa: f64,
    pub d: f64,
    /// `kappa < 1`.
    pub contracting: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    /// Probe lower bound of the strong-to-weak operator norm of `L0 - Leps`.
    pub distance: f64,
    pub lasota_yorke_base: LasotaYorke,
    pub lasota_yorke_perturbed: LasotaYorke,
}

fn fit_lasota_yorke(op: &UlamOperator, probes: &[DensityVector], alpha: f64, eps0: f64) -> Result<LasotaYorke> {
    let mut rows = Vec::with_capacity(probes.len());
    for h in probes {
        let lh = op.apply(h)?;
        rows.push((quasi_holder_norm(h, alpha, eps0)?, h.l1_norm(), quasi_holder_norm(&lh, alpha, eps0)?));
    }
    // least squares for (kappa, D), then lift D until every probe satisfies the bound
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in &rows {
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxz += x * z;
        syz += y * z;
    }
    let det = sxx * syy - sxy * sxy;
    let kappa = if det.abs() > 1e-300 { ((sxz * syy - syz * sxy) / det).max(0.0) } else { 0.0 };
    let d = rows.iter().map(|&(x, y, z)| (z - kappa * x) / y).fold(0.0, f64::max);
    Ok(LasotaYorke { kappa, d, contracting: kappa < 1.0 })
}

pub fn operator_diagnostics(
    l0: &UlamOperator,
    leps: &UlamOperator,
    probes: &[DensityVector],
    alpha: f64,
    eps0: f64,
) -> Result<OperatorReport> {
    if l0.n_bins != leps.n_bins {
        return Err(Error::PartitionMismatch(format!("{} vs {} bins", l0.n_bins, leps.n_bins)));
    }
    let mut distance: f64 = 0.0;
    for h in probes {
        let a = l0.apply(h)?;
        let b = leps.apply(h)?;
        let diff: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * h.bin_width;
        distance = distance.max(diff / quasi_holder_norm(h, alpha, eps0)?);
    }
    Ok(OperatorReport {
        distance,
        lasota_yorke_base: fit_lasota_yorke(l0, probes, alpha, eps0)?,
        lasota_yorke_perturbed: fit_lasota_yorke(leps, probes, alpha, eps0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval_maps::{make_perturbed_family, PerturbationFamily, ReferenceMap};
    use proptest::prelude::*;

    fn reference(m: ReferenceMap) -> IntervalMapSpec {
        IntervalMapSpec::Reference { map: m }
    }

    fn l1(a: &DensityVector, b: &DensityVector) -> f64 {
        a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.bin_width
    }

    #[test]
    fn identity_gives_identity() {
        let op = ulam_matrix(&reference(ReferenceMap::Identity), 64, 32).unwrap();
        for i in 0..64 {
            assert_eq!(op.row(i).collect::<Vec<_>>(), vec![(i, 1.0)]);
        }
    }

    #[test]
    fn doubling_rows_split_in_half() {
        let op = ulam_matrix_of(&ReferenceMap::Doubling, 16, 32, 7).unwrap();
        for i in 0..16 {
            let r: Vec<_> = op.row(i).collect();
            assert_eq!(r, vec![((2 * i) % 16, 0.5), ((2 * i + 1) % 16, 0.5)]);
        }
        assert!(op.max_row_sum_error() <= 1e-12);
    }

    #[test]
    fn small_partitions_rejected() {
        assert!(ulam_matrix(&reference(ReferenceMap::Tent), 8, 32).is_err());
        assert!(ulam_matrix(&reference(ReferenceMap::Tent), 16, 16).is_err());
    }

    #[test]
    fn uniform_invariant_for_doubling_and_tent() {
        for m in [ReferenceMap::Doubling, ReferenceMap::Tent] {
            let op = ulam_matrix(&reference(m), 4096, 32).unwrap();
            let h = stationary_density(&op, 1e-12, 10_000).unwrap();
            let u = DensityVector::uniform(4096, op.domain);
            assert!(l1(&h, &u) <= 1e-3, "{m:?}: {}", l1(&h, &u));
        }
    }

    #[test]
    fn doubling_error_does_not_grow_with_refinement() {
        let mut prev = f64::INFINITY;
        for n in [256, 512, 1024, 2048, 4096] {
            let op = ulam_matrix(&reference(ReferenceMap::Doubling), n, 32).unwrap();
            let h = stationary_density(&op, 1e-13, 10_000).unwrap();
            let e = l1(&h, &DensityVector::uniform(n, op.domain));
            assert!(e <= prev + 1e-12, "{n}: {e} after {prev}");
            prev = e;
        }
    }

    #[test]
    fn logistic_approaches_arcsine_density() {
        // the bin next to the repelling fixed point keeps about a third of its
        // mass at every resolution, so the error decays slowly
        let mut errs = Vec::new();
        for n in [1024, 4096, 16384] {
            let op = ulam_matrix(&reference(ReferenceMap::Logistic), n, 256).unwrap();
            let h = stationary_density(&op, 1e-10, 100_000).unwrap();
            let w = 1.0 / n as f64;
            let exact: Vec<f64> = (0..n)
                .map(|i| {
                    let (a, b) = (i as f64 * w, (i + 1) as f64 * w);
                    2.0 / std::f64::consts::PI * (b.sqrt().asin() - a.sqrt().asin()) / w
                })
                .collect();
            errs.push(l1(&h, &DensityVector { values: exact, bin_width: w, domain: (0.0, 1.0) }));
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[1] <= 0.025 && errs[2] <= 2e-2, "{errs:?}");
    }

    #[test]
    fn fixed_point_residual() {
        let op = ulam_matrix(&reference(ReferenceMap::Logistic), 512, 32).unwrap();
        let tol = 1e-10;
        let h = stationary_density(&op, tol, 100_000).unwrap();
        assert!((h.total_mass() - 1.0).abs() <= 1e-10);
        assert!(l1(&op.apply(&h).unwrap(), &h) <= 2.0 * tol);
    }

    #[test]
    fn bipartite_chain_does_not_converge() {
        let rows = vec![vec![(1, 0.5), (2, 0.5)], vec![(0, 1.0)], vec![(0, 1.0)]];
        let op = UlamOperator::from_rows((0.0, 1.0), rows).unwrap();
        match stationary_density(&op, 1e-10, 500) {
            Err(Error::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 500);
                assert!((residual - 2.0 / 3.0).abs() < 1e-12, "{residual}");
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn zero_noise_is_the_base_operator() {
        let base = reference(ReferenceMap::Tent);
        let fam = |eta: f64| make_perturbed_family(&base, eta, PerturbationFamily::VerticalAdditive);
        let a = random_operator(&fam, &NoiseSpec::uniform(0.0, DEFAULT_SAMPLING_SEED), 64, 32, 8).unwrap();
        let b = ulam_matrix(&base, 64, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadrature_average_matches_monte_carlo() {
        let base = reference(ReferenceMap::Tent);
        let fam = |eta: f64| make_perturbed_family(&base, eta, PerturbationFamily::VerticalAdditive);
        let noise = NoiseSpec::uniform(0.1, 3);
        let (n, s) = (16, 32);
        let q = random_operator(&fam, &noise, n, s, 256).unwrap();
        assert!(q.max_row_sum_error() <= 1e-12);
        let draws = 10_000;
        let mats: Vec<Vec<f64>> = (0..draws as u64)
            .into_par_iter()
            .map(|k| {
                let op = ulam_matrix_of(fam(noise.coordinate(k)).unwrap().build().unwrap().as_ref(), n, s, noise.seed)
                    .unwrap();
                (0..n * n).map(|ij| op.entry(ij / n, ij % n)).collect()
            })
            .collect();
        for ij in 0..n * n {
            let xs: Vec<f64> = mats.iter().map(|m| m[ij]).collect();
            let mean = xs.iter().sum::<f64>() / draws as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt().max(1.0 / draws as f64);
            let got = q.entry(ij / n, ij % n);
            assert!((got - mean).abs() <= 3.0 * se + 1e-12, "entry {ij}: {got} vs {mean} (se {se})");
        }
    }

    #[test]
    fn vertical_fast_path_matches_generic_average() {
        let base = IntervalMapSpec::default_conjugated();
        let fam = |eta: f64| make_perturbed_family(&base, eta, PerturbationFamily::VerticalAdditive);
        let noise = NoiseSpec::uniform(0.05, 11);
        let a = random_operator(&fam, &noise, 64, 32, 8).unwrap();
        let b = vertical_random_operator(&base, &noise, 64, 32, 8).unwrap();
        assert_eq!(a.columns, b.columns);
        let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-14, "{d}");
    }

    #[test]
    fn truncated_gaussian_weights_are_symmetric() {
        let nodes = noise_nodes(&NoiseSpec::new(NoiseFamily::TruncatedGaussian, 0.2, 0).unwrap(), 16).unwrap();
        assert!((nodes.iter().map(|n| n.1).sum::<f64>() - 1.0).abs() < 1e-14);
        for k in 0..8 {
            assert!((nodes[k].1 - nodes[15 - k].1).abs() < 1e-14);
            assert!((nodes[k].0 + nodes[15 - k].0).abs() < 1e-14);
        }
        assert!(noise_nodes(&NoiseSpec::uniform(0.1, 0), 4).is_err());
    }

    #[test]
    fn seminorm_examples() {
        let c = DensityVector::uniform(256, (0.0, 1.0));
        assert_eq!(quasi_holder_seminorm(&c, 1.0, 0.25).unwrap(), 0.0);
        let step: Vec<f64> = (0..256).map(|i| if i < 128 { 0.0 } else { 1.0 }).collect();
        let h = DensityVector { values: step, bin_width: 1.0 / 256.0, domain: (0.0, 1.0) };
        let s = quasi_holder_seminorm(&h, 1.0, 0.25).unwrap();
        assert!((s - 2.0).abs() < 1e-12, "{s}");
        let h2 = DensityVector { values: h.values.iter().map(|v| 2.0 * v).collect(), ..h.clone() };
        assert!(
            (quasi_holder_seminorm(&h2, 0.5, 0.25).unwrap() - 2.0 * quasi_holder_seminorm(&h, 0.5, 0.25).unwrap())
                .abs()
                < 1e-12
        );
        assert!(quasi_holder_seminorm(&h, 1.0, 1.0 / 512.0).is_err());
    }

    #[test]
    fn operator_distance_zero_and_bounded() {
        let base = IntervalMapSpec::default_conjugated();
        let l0 = ulam_matrix(&base, 256, 32).unwrap();
        let probes = probe_library(256, l0.domain).unwrap();
        let r = operator_diagnostics(&l0, &l0, &probes, 1.0, 0.125).unwrap();
        assert_eq!(r.distance, 0.0);
        let fam = |eta: f64| make_perturbed_family(&base, eta, PerturbationFamily::VerticalAdditive);
        let le = random_operator(&fam, &NoiseSpec::uniform(0.05, DEFAULT_SAMPLING_SEED), 256, 32, 16).unwrap();
        let r = operator_diagnostics(&l0, &le, &probes, 1.0, 0.125).unwrap();
        let bound = l0.max_row_l1_diff(&le).unwrap();
        // ||(L0 - Le) h||_1 <= max row diff * ||h||_1 <= max row diff * ||h||_alpha
        assert!(r.distance > 0.0 && r.distance <= bound + 1e-12, "{} vs {bound}", r.distance);
    }

    #[test]
    fn operator_distance_is_linear_in_epsilon() {
        let base = IntervalMapSpec::default_conjugated();
        // fewer samples leave an Ulam sampling floor comparable to the eps = 0.01 signal
        let (n, s) = (1024, 1024);
        let l0 = ulam_matrix(&base, n, s).unwrap();
        let probes = probe_library(n, l0.domain).unwrap();
        let eps = [0.1, 0.05, 0.02, 0.01];
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| {
                let le =
                    vertical_random_operator(&base, &NoiseSpec::uniform(e, DEFAULT_SAMPLING_SEED), n, s, 16).unwrap();
                let d = operator_diagnostics(&l0, &le, &probes, 1.0, 0.125).unwrap().distance;
                (e.ln(), d.ln())
            })
            .collect();
        let m = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() <= 0.2, "slope {slope}");
    }

    #[test]
    fn binary_round_trip() {
        let op = ulam_matrix(&reference(ReferenceMap::Logistic), 64, 32).unwrap();
        let mut buf = Vec::new();
        op.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"ULAM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 64);
        let back = UlamOperator::read_binary(buf.as_slice(), op.domain).unwrap();
        assert_eq!(back, op);
        buf[0] = b'X';
        assert!(matches!(UlamOperator::read_binary(buf.as_slice(), op.domain), Err(Error::Format(_))));
    }

    #[test]
    fn density_csv_round_trip() {
        let h = DensityVector::from_fn(32, (0.0, 1.0), 3, |x| 1.0 + x).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let back = DensityVector::read_csv(buf.as_slice(), (0.0, 1.0)).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn push_forward_of_identity_is_identity() {
        let h = DensityVector::from_fn(64, (0.0, 1.0), 3, |x| 1.0 + x).unwrap();
        let p = h.push_forward_monotone(|y| y, 64, (0.0, 1.0)).unwrap();
        assert!(l1(&h, &p) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn operators_preserve_mass(n in 16usize..200, eta in -0.3f64..0.3, seed in 0u64..1000) {
            let spec = make_perturbed_family(&reference(ReferenceMap::Logistic), eta, PerturbationFamily::VerticalAdditive).unwrap();
            let op = ulam_matrix_of(spec.build().unwrap().as_ref(), n, 32, seed).unwrap();
            prop_assert!(op.max_row_sum_error() <= 1e-12);
            prop_assert!(op.values.iter().all(|v| *v >= 0.0));
            let u = op.apply(&DensityVector::uniform(n, op.domain)).unwrap();
            prop_assert!((u.total_mass() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn averages_stay_stochastic(w in 0.0f64..1.0, n in 16usize..64) {
            let a = ulam_matrix(&reference(ReferenceMap::Tent), n, 32).unwrap();
            let b = ulam_matrix(&reference(ReferenceMap::Logistic), n, 32).unwrap();
            let c = UlamOperator::average(&[a, b], &[w, 1.0 - w]).unwrap();
            prop_assert!(c.max_row_sum_error() <= 1e-12);
        }
    }
}
