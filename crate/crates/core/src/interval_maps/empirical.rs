use serde::{Deserialize, Serialize};

use super::{check_domain, IntervalMap};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBranch {
    /// `(u, T(u))`, strictly increasing in `u` and strictly monotone in `T`.
    pub knots: Vec<[f64; 2]>,
}

/// A map known on knots, one monotone piecewise-cubic interpolant per branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMap {
    pub domain: (f64, f64),
    pub breaks: Vec<f64>,
    pub branches: Vec<EmpiricalBranch>,
}

impl EmpiricalBranch {
    fn delta(&self, k: usize) -> f64 {
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        (b[1] - a[1]) / (b[0] - a[0])
    }

    fn slope(&self, k: usize) -> f64 {
        let n = self.knots.len();
        if k == 0 {
            return self.delta(0);
        }
        if k == n - 1 {
            return self.delta(n - 2);
        }
        let (d0, d1) = (self.delta(k - 1), self.delta(k));
        if d0 * d1 <= 0.0 {
            return 0.0;
        }
        let h0 = self.knots[k][0] - self.knots[k - 1][0];
        let h1 = self.knots[k + 1][0] - self.knots[k][0];
        let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
        (w1 + w2) / (w1 / d0 + w2 / d1)
    }

    fn eval(&self, u: f64) -> (f64, f64) {
        let n = self.knots.len();
        let (first, last) = (self.knots[0], self.knots[n - 1]);
        if u <= first[0] {
            let d = self.delta(0);
            return (first[1] + d * (u - first[0]), d);
        }
        if u >= last[0] {
            let d = self.delta(n - 2);
            return (last[1] + d * (u - last[0]), d);
        }
        let k = self.knots.partition_point(|p| p[0] <= u) - 1;
        let (a, b) = (self.knots[k], self.knots[k + 1]);
        let h = b[0] - a[0];
        let t = (u - a[0]) / h;
        let (m0, m1) = (self.slope(k), self.slope(k + 1));
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * a[1]
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * b[1]
            + (t3 - t2) * h * m1;
        (v, self.delta(k))
    }
}

impl EmpiricalMap {
    pub fn validated(self) -> Result<Self> {
        if self.branches.is_empty() || self.breaks.len() + 1 != self.branches.len() {
            return Err(Error::InvalidParams("empirical map needs one more branch than breaks".into()));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::InvalidParams("empty empirical domain".into()));
        }
        for br in &self.branches {
            if br.knots.len() < 2 {
                return Err(Error::InvalidParams("each branch needs at least two knots".into()));
            }
            let incr = br.knots[1][1] > br.knots[0][1];
            for w in br.knots.windows(2) {
                if !(w[1][0] > w[0][0]) || (w[1][1] > w[0][1]) != incr || w[1][1] == w[0][1] {
                    return Err(Error::InvalidParams("empirical branch is not strictly monotone".into()));
                }
            }
        }
        Ok(self)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["branch", "u", "t"]).map_err(|e| Error::Io(e.to_string()))?;
        for (i, br) in self.branches.iter().enumerate() {
            for k in &br.knots {
                out.serialize((i, k[0], k[1])).map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

impl IntervalMap for EmpiricalMap {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }

    fn eval(&self, u: f64) -> Result<(f64, f64)> {
        check_domain(u, self.domain.0, self.domain.1)?;
        if self.breaks.contains(&u) {
            return Err(Error::CriticalPoint(u));
        }
        let i = self.breaks.partition_point(|&b| b < u);
        Ok(self.branches[i].eval(u))
    }
}
