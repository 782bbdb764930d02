use std::sync::OnceLock;

use super::{check_domain, CuspCoefficients, IntervalMap};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_adaptive};

/// Admissible region for `(gamma_bar, beta_bar)` given a cusp piece:
/// `0 < beta_bar < 1/B* - 1` and `gamma_bar > (beta_bar + 1)/(1 - u0) ln(1/a')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugationLimits {
    pub beta_max: f64,
    pub u0: f64,
    pub a_prime: f64,
}

pub fn conjugation_limits(c: &CuspCoefficients) -> ConjugationLimits {
    ConjugationLimits { beta_max: 1.0 / c.b_star() - 1.0, u0: c.u0, a_prime: c.a_prime }
}

impl ConjugationLimits {
    pub fn gamma_min(&self, beta_bar: f64) -> f64 {
        (beta_bar + 1.0) / (1.0 - self.u0) * (1.0 / self.a_prime).ln()
    }

    pub fn check(&self, gamma_bar: f64, beta_bar: f64) -> Result<()> {
        if !(beta_bar > 0.0 && beta_bar < self.beta_max) {
            return Err(Error::ConjugationParams(format!("beta_bar = {beta_bar} outside (0, {})", self.beta_max)));
        }
        let g = self.gamma_min(beta_bar);
        if !(gamma_bar > g) {
            return Err(Error::ConjugationParams(format!("gamma_bar = {gamma_bar} not above {g}")));
        }
        Ok(())
    }

    /// `beta_bar = 0.01` and `gamma_bar` one percent above its threshold.
    pub fn default_choice(&self) -> (f64, f64) {
        let beta = 0.01_f64.min(0.5 * self.beta_max);
        (1.01 * self.gamma_min(beta), beta)
    }
}

const CELLS: usize = 2048;

/// `W o T o W^-1` with `W` the distribution function of the density
/// `N e^(-gamma x) x^beta (1 - x)^beta` on `[0, 1]`.
pub struct WConjugacy {
    pub base: Box<dyn IntervalMap>,
    pub gamma_bar: f64,
    pub beta_bar: f64,
    norm: f64,
    cum: OnceLock<Vec<f64>>,
}

fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(8))
}

impl WConjugacy {
    pub fn new(base: Box<dyn IntervalMap>, gamma_bar: f64, beta_bar: f64) -> Result<Self> {
        if base.domain() != (0.0, 1.0) {
            return Err(Error::ConjugationParams("W acts on maps of [0, 1]".into()));
        }
        if !(gamma_bar > 0.0 && beta_bar > 0.0) {
            return Err(Error::ConjugationParams("gamma_bar and beta_bar must be positive".into()));
        }
        let mut w = WConjugacy { base, gamma_bar, beta_bar, norm: 1.0, cum: OnceLock::new() };
        let total = integrate_adaptive(&|x| w.raw(x), 0.0, 1.0, 1e-14);
        w.norm = 1.0 / total;
        Ok(w)
    }

    fn raw(&self, x: f64) -> f64 {
        (-self.gamma_bar * x).exp() * (x * (1.0 - x)).powf(self.beta_bar)
    }

    /// Normalized cell integral from `a` to `b` inside one cell.
    fn piece(&self, k: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let v = if k == 0 || k == CELLS - 1 {
            integrate_adaptive(&|x| self.raw(x), a, b, 1e-16)
        } else {
            let (x, w) = gl8();
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            x.iter().zip(w).map(|(xi, wi)| wi * self.raw(c + h * xi)).sum::<f64>() * h
        };
        v * self.norm
    }

    fn table(&self) -> &[f64] {
        self.cum.get_or_init(|| {
            let mut cum = Vec::with_capacity(CELLS + 1);
            let mut s = 0.0;
            cum.push(0.0);
            for k in 0..CELLS {
                s += self.piece(k, k as f64 / CELLS as f64, (k + 1) as f64 / CELLS as f64);
                cum.push(s);
            }
            let last = s;
            cum.iter_mut().for_each(|c| *c /= last);
            cum
        })
    }

    pub fn w_prime(&self, x: f64) -> f64 {
        self.norm * self.raw(x)
    }

    pub fn w(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let t = self.table();
        let k = ((x * CELLS as f64) as usize).min(CELLS - 1);
        (t[k] + self.piece(k, k as f64 / CELLS as f64, x)).min(1.0)
    }

    pub fn w_inv(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        let t = self.table();
        let k = (t.partition_point(|&c| c <= y) - 1).min(CELLS - 1);
        let (mut lo, mut hi) = (k as f64 / CELLS as f64, (k + 1) as f64 / CELLS as f64);
        let mut x = lo + (hi - lo) * (y - t[k]) / (t[k + 1] - t[k]);
        for _ in 0..60 {
            let f = self.w(x) - y;
            if f == 0.0 {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.w_prime(x);
            let mut nx = x - f / d;
            if !(nx > lo && nx < hi) {
                nx = 0.5 * (lo + hi);
            }
            if (nx - x).abs() <= 1e-16 * x.max(1e-300) || hi - lo <= f64::EPSILON * hi {
                return nx;
            }
            x = nx;
        }
        x
    }
}

impl IntervalMap for WConjugacy {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints().into_iter().map(|b| self.w(b)).collect()
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        check_domain(u, 0.0, 1.0)?;
        let x = self.w_inv(u);
        if self.base.breakpoints().contains(&x) {
            return Err(Error::CriticalPoint(u));
        }
        let (v, d) = self.base.eval(x)?;
        // W' vanishes at the endpoints; the ratio has a finite limit
        let xs = x.clamp(1e-13, 1.0 - 1e-13);
        let ratio = if xs == x { d / self.w_prime(x) } else { self.base.eval(xs)?.1 / self.w_prime(xs) };
        let vs = if xs == x { v } else { self.base.value(xs)? };
        Ok((self.w(v), self.w_prime(vs) * ratio))
    }
}
