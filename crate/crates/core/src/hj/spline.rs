//! Shape-preserving (PCHIP) cubic Hermite interpolation.

/// Monotone piecewise-cubic interpolant through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Fritsch-Carlson slopes with the harmonic-mean interior rule.
    ///
    /// `end_slopes` overrides the derivative at the first and last knot; the
    /// overrides are clamped to `3 * secant` so the interpolant stays monotone.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, end_slopes: Option<(f64, f64)>) -> Self {
        let n = xs.len();
        assert!(n >= 1 && n == ys.len());
        debug_assert!(xs.windows(2).all(|w| w[1] > w[0]));
        if n == 1 {
            let s = end_slopes.map(|e| e.0).unwrap_or(0.0);
            return Self {
                xs,
                ys,
                slopes: vec![s],
            };
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        for k in 1..n - 1 {
            let (d0, d1) = (delta[k - 1], delta[k]);
            if d0 * d1 > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                m[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        let (left, right) = match end_slopes {
            Some(e) => e,
            None if n == 2 => (delta[0], delta[0]),
            None => (
                end_slope(h[0], h[1], delta[0], delta[1]),
                end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]),
            ),
        };
        m[0] = clamp_slope(left, delta[0]);
        m[n - 1] = clamp_slope(right, delta[n - 2]);
        Self { xs, ys, slopes: m }
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn first_x(&self) -> f64 {
        self.xs[0]
    }

    pub fn last_x(&self) -> f64 {
        *self.xs.last().expect("non-empty")
    }

    /// Value and derivative; outside the knot range the end value is held.
    pub fn eval_with_slope(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return (self.ys[0], 0.0);
        }
        if x >= self.xs[n - 1] {
            return (self.ys[n - 1], 0.0);
        }
        // Largest k with xs[k] <= x.
        let k = self.xs.partition_point(|&v| v <= x) - 1;
        if x == self.xs[k] {
            return (self.ys[k], self.slopes[k]);
        }
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value =
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1;
        let deriv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (value, deriv)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_slope(x).0
    }
}

fn clamp_slope(m: f64, secant: f64) -> f64 {
    if secant <= 0.0 {
        0.0
    } else {
        m.clamp(0.0, 3.0 * secant)
    }
}

/// Non-centered three-point end slope with the usual shape guards.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn passes_through_knots() {
        let s = MonotoneCubic::new(vec![10.0, 20.0, 40.0], vec![0.25, 0.5, 0.75], None);
        assert_eq!(s.eval(10.0), 0.25);
        assert_eq!(s.eval(20.0), 0.5);
        assert_eq!(s.eval(40.0), 0.75);
    }

    #[test]
    fn reproduces_lines() {
        let s = MonotoneCubic::new(vec![0.0, 1.0, 3.0, 4.0], vec![0.0, 0.25, 0.75, 1.0], None);
        for k in 0..=40 {
            let x = k as f64 * 0.1;
            let (v, d) = s.eval_with_slope(x);
            assert!((v - x / 4.0).abs() < 1e-12);
            if x > 0.0 && x < 4.0 {
                assert!((d - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = MonotoneCubic::new(vec![0.0, 1.0, 1.5, 4.0], vec![0.1, 0.2, 0.7, 0.9], None);
        for &x in &[0.3, 0.9, 1.2, 2.0, 3.7] {
            let h = 1e-6;
            let fd = (s.eval(x + h) - s.eval(x - h)) / (2.0 * h);
            assert!((fd - s.eval_with_slope(x).1).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn monotone_on_fine_grid(
            gaps in prop::collection::vec(0.01f64..10.0, 2..12),
            rises in prop::collection::vec(0.0f64..1.0, 2..12),
        ) {
            let n = gaps.len().min(rises.len());
            let mut xs = vec![0.0];
            let mut ys = vec![0.0];
            for k in 0..n {
                xs.push(xs[k] + gaps[k]);
                ys.push(ys[k] + rises[k]);
            }
            let s = MonotoneCubic::new(xs.clone(), ys, None);
            let last = *xs.last().unwrap();
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=2000 {
                let v = s.eval(last * k as f64 / 2000.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
