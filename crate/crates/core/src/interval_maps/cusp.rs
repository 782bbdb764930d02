use serde::{Deserialize, Serialize};

use super::{check_domain, IntervalMap};
use crate::error::{Error, Result};

/// Where the cubic blends sit, as fractions of the two branches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendPlacement {
    /// Left blend starts at `left_start * u0`.
    pub left_start: f64,
    /// Left blend ends this fraction of the way from its start to `u0`.
    pub left_end: f64,
    /// Right blend starts this fraction of the way from `u0` to 1.
    pub right_start: f64,
    /// Right blend ends this fraction of the way from its start to 1.
    pub right_end: f64,
}

impl Default for BlendPlacement {
    fn default() -> Self {
        BlendPlacement { left_start: 0.2, left_end: 0.98, right_start: 0.01, right_end: 0.4 }
    }
}

/// Local forms of a two-branch cusp map of `[0, 1]`:
/// `a u + b u^(1+c)` at 0, `1 - A (u0 - u)^B` and `1 - A' (u - u0)^B'` at `u0`,
/// `a' (1 - u) + b' (1 - u)^(1+c')` at 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub big_a: f64,
    pub big_b: f64,
    pub big_a_prime: f64,
    pub big_b_prime: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    pub c_prime: f64,
    pub u0: f64,
    #[serde(default)]
    pub blend: BlendPlacement,
}

impl Default for CuspCoefficients {
    fn default() -> Self {
        CuspCoefficients {
            a: 1.5,
            b: 1.0,
            c: 2.0,
            big_a: 1.0,
            big_b: 0.75,
            big_a_prime: 1.0,
            big_b_prime: 0.75,
            a_prime: 0.5,
            b_prime: 1.0,
            c_prime: 2.0,
            u0: 0.55,
            blend: BlendPlacement::default(),
        }
    }
}

impl CuspCoefficients {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.a > 1.0, "a > 1"),
            (self.c > 1.0, "c > 1"),
            (self.b > 0.0, "b > 0"),
            (self.big_a > 0.0 && self.big_a_prime > 0.0, "A, A' > 0"),
            (self.big_b > 0.0 && self.big_b < 1.0, "B in (0, 1)"),
            (self.big_b_prime > 0.0 && self.big_b_prime < 1.0, "B' in (0, 1)"),
            (self.a_prime > 0.0 && self.a_prime < 1.0, "a' in (0, 1)"),
            (self.b_prime > 0.0, "b' > 0"),
            (self.c_prime > 1.0, "c' > 1"),
            (self.u0 > 0.0 && self.u0 < 1.0, "u0 in (0, 1)"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidParams(format!("cusp coefficients violate {what}")));
            }
        }
        let bl = &self.blend;
        for f in [bl.left_start, bl.left_end, bl.right_start, bl.right_end] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidParams("blend fractions must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    /// `B* = max(B, B')`.
    pub fn b_star(&self) -> f64 {
        self.big_b.max(self.big_b_prime)
    }

    /// The coefficient-modulated family: `a + eta`, `A (1 + eta)`, `A' (1 - eta)`, `a' + eta/2`, `u0 + eta/2`.
    pub fn modulated(&self, eta: f64) -> Self {
        CuspCoefficients {
            a: self.a + eta,
            big_a: self.big_a * (1.0 + eta),
            big_a_prime: self.big_a_prime * (1.0 - eta),
            a_prime: self.a_prime + 0.5 * eta,
            u0: self.u0 + 0.5 * eta,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Hermite {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    m0: f64,
    m1: f64,
}

impl Hermite {
    fn new(x0: f64, x1: f64, (y0, m0): (f64, f64), (y1, m1): (f64, f64)) -> Result<Self> {
        let h = Hermite { x0, x1, y0, y1, m0, m1 };
        // Fritsch-Carlson sufficient condition for a monotone cubic
        let delta = (y1 - y0) / (x1 - x0);
        let (al, be) = (m0 / delta, m1 / delta);
        if !(delta != 0.0 && al > 0.0 && be > 0.0 && al * al + be * be <= 9.0) {
            return Err(Error::InvalidParams(format!(
                "blend on [{x0}, {x1}] cannot be monotone (slopes {m0}, {m1}, secant {delta})"
            )));
        }
        Ok(h)
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * self.y0
            + (t3 - 2.0 * t2 + t) * h * self.m0
            + (-2.0 * t3 + 3.0 * t2) * self.y1
            + (t3 - t2) * h * self.m1;
        let d = (6.0 * t2 - 6.0 * t) * self.y0 / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.m0
            + (-6.0 * t2 + 6.0 * t) * self.y1 / h
            + (3.0 * t2 - 2.0 * t) * self.m1;
        (v, d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuspMap {
    pub coef: CuspCoefficients,
    /// Blend intervals `[p1, p2]` and `[p3, p4]`.
    pub knots: [f64; 4],
    left: Hermite,
    right: Hermite,
}

impl CuspMap {
    pub fn new(coef: CuspCoefficients) -> Result<Self> {
        coef.validate()?;
        let u0 = coef.u0;
        let bl = coef.blend;
        let p1 = bl.left_start * u0;
        let p2 = p1 + bl.left_end * (u0 - p1);
        let p3 = u0 + bl.right_start * (1.0 - u0);
        let p4 = p3 + bl.right_end * (1.0 - p3);
        let mut m = CuspMap {
            coef,
            knots: [p1, p2, p3, p4],
            left: Hermite { x0: 0.0, x1: 1.0, y0: 0.0, y1: 0.0, m0: 0.0, m1: 0.0 },
            right: Hermite { x0: 0.0, x1: 1.0, y0: 0.0, y1: 0.0, m0: 0.0, m1: 0.0 },
        };
        m.left = Hermite::new(p1, p2, m.near_zero(p1), m.near_cusp_left(p2))?;
        m.right = Hermite::new(p3, p4, m.near_cusp_right(p3), m.near_one(p4))?;
        Ok(m)
    }

    fn near_zero(&self, u: f64) -> (f64, f64) {
        let c = &self.coef;
        (c.a * u + c.b * u.powf(1.0 + c.c), c.a + c.b * (1.0 + c.c) * u.powf(c.c))
    }

    fn near_cusp_left(&self, u: f64) -> (f64, f64) {
        let c = &self.coef;
        let s = c.u0 - u;
        (1.0 - c.big_a * s.powf(c.big_b), c.big_a * c.big_b * s.powf(c.big_b - 1.0))
    }

    fn near_cusp_right(&self, u: f64) -> (f64, f64) {
        let c = &self.coef;
        let s = u - c.u0;
        (1.0 - c.big_a_prime * s.powf(c.big_b_prime), -c.big_a_prime * c.big_b_prime * s.powf(c.big_b_prime - 1.0))
    }

    fn near_one(&self, u: f64) -> (f64, f64) {
        let c = &self.coef;
        let s = 1.0 - u;
        (
            c.a_prime * s + c.b_prime * s.powf(1.0 + c.c_prime),
            -c.a_prime - c.b_prime * (1.0 + c.c_prime) * s.powf(c.c_prime),
        )
    }
}

impl IntervalMap for CuspMap {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![self.coef.u0]
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        check_domain(u, 0.0, 1.0)?;
        let [p1, p2, p3, p4] = self.knots;
        let u0 = self.coef.u0;
        Ok(if u == u0 {
            return Err(Error::CriticalPoint(u));
        } else if u <= p1 {
            self.near_zero(u)
        } else if u < p2 {
            self.left.eval(u)
        } else if u < u0 {
            self.near_cusp_left(u)
        } else if u <= p3 {
            self.near_cusp_right(u)
        } else if u < p4 {
            self.right.eval(u)
        } else {
            self.near_one(u)
        })
    }
}

/// Two cusp pieces assembled on `[-1, 1]`: `T~2(-u)` on `[-1, -u0_2]`,
/// `-T~2(-u)` on `[-u0_2, 0]`, `T~1(u)` on `[0, u0_1]`, `-T~1(u)` on `[u0_1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedTbar {
    pub piece1: CuspMap,
    pub piece2: CuspMap,
}

impl CombinedTbar {
    pub fn new(c1: CuspCoefficients, c2: CuspCoefficients) -> Result<Self> {
        Ok(CombinedTbar { piece1: CuspMap::new(c1)?, piece2: CuspMap::new(c2)? })
    }
}

impl IntervalMap for CombinedTbar {
    fn domain(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        vec![-self.piece2.coef.u0, self.piece1.coef.u0]
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        check_domain(u, -1.0, 1.0)?;
        let (u01, u02) = (self.piece1.coef.u0, self.piece2.coef.u0);
        if u == u01 || u == -u02 {
            return Err(Error::CriticalPoint(u));
        }
        Ok(if u < -u02 {
            let (v, d) = self.piece2.eval(-u)?;
            (v, -d)
        } else if u < 0.0 {
            let (v, d) = self.piece2.eval(-u)?;
            (-v, d)
        } else if u < u01 {
            self.piece1.eval(u)?
        } else {
            let (v, d) = self.piece1.eval(u)?;
            (-v, -d)
        })
    }
}
