//! i.i.d. noise streams indexed by a cursor, the left shift and the metric on sequences.
//!
//! Coordinate `n` of a stream is drawn from its own ChaCha stream number `n`,
//! so shifting and cloning are constant time and any coordinate can be replayed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    UniformSymmetric,
    /// Normal with sigma = epsilon / 2 conditioned on `[-epsilon, epsilon]`.
    TruncatedGaussian,
    Atomic0,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub family: NoiseFamily,
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, epsilon: f64, seed: u64) -> Result<Self> {
        let s = NoiseSpec { family, epsilon, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(epsilon: f64, seed: u64) -> Self {
        NoiseSpec { family: NoiseFamily::UniformSymmetric, epsilon, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && (0.0..=1.0).contains(&self.epsilon)) {
            return Err(Error::InvalidParams(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }

    fn degenerate(&self) -> bool {
        self.epsilon == 0.0 || self.family == NoiseFamily::Atomic0
    }

    /// Closed-form CDF of the single-coordinate law.
    pub fn cdf(&self, x: f64) -> f64 {
        let e = self.epsilon;
        if self.degenerate() {
            return if x >= 0.0 { 1.0 } else { 0.0 };
        }
        if x < -e {
            return 0.0;
        }
        if x >= e {
            return 1.0;
        }
        match self.family {
            NoiseFamily::UniformSymmetric => (x + e) / (2.0 * e),
            NoiseFamily::TruncatedGaussian => {
                let n = std_normal();
                let (lo, hi) = (n.cdf(-2.0), n.cdf(2.0));
                (n.cdf(2.0 * x / e) - lo) / (hi - lo)
            }
            NoiseFamily::Atomic0 => unreachable!(),
        }
    }

    /// Coordinate `n` of every stream with this spec.
    pub fn coordinate(&self, n: u64) -> f64 {
        if self.degenerate() {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(n);
        let u: f64 = rng.gen();
        let e = self.epsilon;
        match self.family {
            NoiseFamily::UniformSymmetric => e * (2.0 * u - 1.0),
            NoiseFamily::TruncatedGaussian => {
                let n = std_normal();
                let (lo, hi) = (n.cdf(-2.0), n.cdf(2.0));
                let z = n.inverse_cdf(lo + u * (hi - lo));
                (0.5 * e * z).clamp(-e, e)
            }
            NoiseFamily::Atomic0 => 0.0,
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// A point `omega` of the sequence space together with its position under the shift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub spec: NoiseSpec,
    pub cursor: u64,
}

impl NoiseStream {
    pub fn new(spec: NoiseSpec) -> Self {
        NoiseStream { spec, cursor: 0 }
    }

    pub fn at(spec: NoiseSpec, cursor: u64) -> Self {
        NoiseStream { spec, cursor }
    }

    /// `pi(omega)`: the current head, without advancing.
    pub fn sample_head(&self) -> f64 {
        self.spec.coordinate(self.cursor)
    }

    /// The left shift `theta`.
    pub fn shift(&self) -> Self {
        NoiseStream { spec: self.spec, cursor: self.cursor + 1 }
    }

    pub fn shift_by(&self, n: u64) -> Self {
        NoiseStream { spec: self.spec, cursor: self.cursor + n }
    }

    pub fn take(&self, n: usize) -> Vec<f64> {
        (0..n as u64).map(|k| self.spec.coordinate(self.cursor + k)).collect()
    }
}

/// Anything that exposes the coordinates `eta_0, eta_1, ...` of a sequence.
pub trait NoiseSource {
    fn coord(&self, k: u64) -> f64;
}

impl NoiseSource for NoiseStream {
    fn coord(&self, k: u64) -> f64 {
        self.spec.coordinate(self.cursor + k)
    }
}

/// The constant sequence.
#[derive(Clone, Copy, Debug)]
pub struct ConstantNoise(pub f64);

impl NoiseSource for ConstantNoise {
    fn coord(&self, _k: u64) -> f64 {
        self.0
    }
}

/// `sum_{n=1}^{n_terms} 2^{-n} |d_n| / (1 + |d_n|)`, with `d_n` the difference of coordinate `n - 1`.
pub fn omega_metric<A: NoiseSource + ?Sized, B: NoiseSource + ?Sized>(w1: &A, w2: &B, n_terms: usize) -> Result<f64> {
    if n_terms == 0 {
        return Err(Error::InvalidParams("n_terms must be positive".into()));
    }
    let mut s = 0.0;
    let mut w = 0.5;
    for k in 0..n_terms as u64 {
        let d = (w1.coord(k) - w2.coord(k)).abs();
        s += w * d / (1.0 + d);
        w *= 0.5;
    }
    Ok(s)
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_epsilon_is_atomic() {
        let s = NoiseStream::new(NoiseSpec::uniform(0.0, 7));
        assert!(s.take(100).iter().all(|&x| x == 0.0));
        let a = NoiseStream::new(NoiseSpec { family: NoiseFamily::Atomic0, epsilon: 0.3, seed: 1 });
        assert_eq!(a.sample_head(), 0.0);
    }

    #[test]
    fn uniform_mean_and_support() {
        let eps = 0.1;
        let s = NoiseStream::new(NoiseSpec::uniform(eps, 42));
        let xs = s.take(100_000);
        assert!(xs.iter().all(|x| x.abs() <= eps));
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(m.abs() <= 3.0 * eps / (3.0e5f64).sqrt(), "mean {m}");
    }

    #[test]
    fn ks_against_closed_form() {
        for fam in [NoiseFamily::UniformSymmetric, NoiseFamily::TruncatedGaussian] {
            let spec = NoiseSpec { family: fam, epsilon: 0.2, seed: 1 };
            let xs = NoiseStream::new(spec).take(100_000);
            let d = ks_statistic(&xs, |x| spec.cdf(x));
            assert!(d < 1.36 / (1e5f64).sqrt(), "{fam:?}: {d}");
            assert!(xs.iter().all(|x| x.abs() <= 0.2));
        }
    }

    #[test]
    fn weak_limit_to_dirac() {
        let mut prev = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let xs = NoiseStream::new(NoiseSpec::uniform(eps, 5)).take(10_000);
            let d = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(d <= eps && d < prev);
            prev = d;
        }
    }

    #[test]
    fn shift_replays_direct_generation() {
        let spec = NoiseSpec::uniform(0.5, 11);
        let s = NoiseStream::new(spec);
        let direct = s.take(20);
        let mut t = s;
        for k in 0..10 {
            t = t.shift();
            assert_eq!(t.sample_head(), direct[k + 1]);
        }
        assert_eq!(t.take(10), direct[10..20].to_vec());
        let far = s.shift_by(1_000_000);
        assert_eq!(far.sample_head().to_bits(), NoiseStream::at(spec, 1_000_000).sample_head().to_bits());
        assert_eq!(far.shift().shift().sample_head(), spec.coordinate(1_000_002));
    }

    #[test]
    fn metric_examples() {
        let s = NoiseStream::new(NoiseSpec::uniform(0.5, 1));
        assert_eq!(omega_metric(&s, &s, 40).unwrap(), 0.0);
        let r = omega_metric(&ConstantNoise(1.0), &ConstantNoise(-1.0), 60).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert!(omega_metric(&s, &s, 0).is_err());
    }

    #[test]
    fn epsilon_out_of_range() {
        assert!(NoiseSpec::new(NoiseFamily::UniformSymmetric, 1.5, 0).is_err());
        assert!(NoiseSpec::new(NoiseFamily::UniformSymmetric, -0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn clones_evolve_identically(seed in any::<u64>(), n in 0u64..1000, k in 1usize..20) {
            let a = NoiseStream::at(NoiseSpec::uniform(0.3, seed), n);
            let b = a;
            let a2 = (0..k).fold(a, |s, _| s.shift());
            let b2 = b.shift_by(k as u64);
            prop_assert_eq!(a2.sample_head().to_bits(), b2.sample_head().to_bits());
        }

        #[test]
        fn metric_bounded_and_truncation(seed1 in any::<u64>(), seed2 in any::<u64>(), n in 1usize..30) {
            let a = NoiseStream::new(NoiseSpec::uniform(1.0, seed1));
            let b = NoiseStream::new(NoiseSpec::uniform(1.0, seed2));
            let r = omega_metric(&a, &b, n).unwrap();
            let r_long = omega_metric(&a, &b, 60).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(r_long - r <= 0.5f64.powi(n as i32) + 1e-15);
            let ba = omega_metric(&b, &a, n).unwrap();
            prop_assert_eq!(r, ba);
        }
    }
}
