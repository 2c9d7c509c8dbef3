//! Scalar arithmetic abstracted over plain `f64` evaluation and a
//! reverse-mode gradient tape.
//!
//! Model code is written once against [`Ops`]; running it with [`Plain`]
//! gives values, running it with a [`Tape`] additionally records the
//! computation so [`Tape::gradient`] can back-propagate.

pub trait Ops {
    type V: Copy;

    fn cst(&mut self, x: f64) -> Self::V;
    fn val(&self, v: Self::V) -> f64;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    /// `a * c + d` for constants `c`, `d`.
    fn affine(&mut self, a: Self::V, c: f64, d: f64) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn ln(&mut self, a: Self::V) -> Self::V;
    /// `ln(1 + e^a)`, computed stably.
    fn softplus(&mut self, a: Self::V) -> Self::V;
    /// `max(a, floor)` for a constant floor.
    fn max_const(&mut self, a: Self::V, floor: f64) -> Self::V;
    /// Larger of two variables; the gradient follows the winner (`a` on ties).
    fn max(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sum(&mut self, xs: &[Self::V]) -> Self::V;
    fn dot(&mut self, xs: &[Self::V], ys: &[Self::V]) -> Self::V;
    fn dot_const(&mut self, xs: &[Self::V], cs: &[f64]) -> Self::V;
    /// Node with a given value and explicit partials to its inputs.
    fn custom(&mut self, value: f64, inputs: &[Self::V], partials: &[f64]) -> Self::V;

    fn neg(&mut self, a: Self::V) -> Self::V {
        self.affine(a, -1.0, 0.0)
    }

    fn scale(&mut self, a: Self::V, c: f64) -> Self::V {
        self.affine(a, c, 0.0)
    }

    fn add_const(&mut self, a: Self::V, c: f64) -> Self::V {
        self.affine(a, 1.0, c)
    }

    fn square(&mut self, a: Self::V) -> Self::V {
        self.mul(a, a)
    }

    /// Logistic function `1 / (1 + e^-a)`.
    fn sigmoid(&mut self, a: Self::V) -> Self::V {
        let na = self.neg(a);
        let sp = self.softplus(na);
        let nsp = self.neg(sp);
        self.exp(nsp)
    }

    /// `ln(sum(exp(xs)))`, shifted by the largest value for stability.
    fn log_sum_exp(&mut self, xs: &[Self::V]) -> Self::V {
        let m = xs.iter().map(|&x| self.val(x)).fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<Self::V> = xs
            .iter()
            .map(|&x| {
                let s = self.add_const(x, -m);
                self.exp(s)
            })
            .collect();
        let total = self.sum(&shifted);
        let l = self.ln(total);
        self.add_const(l, m)
    }

    /// Softmax weights of `xs`.
    fn softmax(&mut self, xs: &[Self::V]) -> Vec<Self::V> {
        let lse = self.log_sum_exp(xs);
        xs.iter()
            .map(|&x| {
                let d = self.sub(x, lse);
                self.exp(d)
            })
            .collect()
    }
}

fn softplus_f64(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid_f64(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Value-only evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Ops for Plain {
    type V = f64;

    fn cst(&mut self, x: f64) -> f64 {
        x
    }
    fn val(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn affine(&mut self, a: f64, c: f64, d: f64) -> f64 {
        a * c + d
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    fn softplus(&mut self, a: f64) -> f64 {
        softplus_f64(a)
    }
    fn max_const(&mut self, a: f64, floor: f64) -> f64 {
        if a >= floor {
            a
        } else {
            floor
        }
    }
    fn max(&mut self, a: f64, b: f64) -> f64 {
        if a >= b {
            a
        } else {
            b
        }
    }
    fn sum(&mut self, xs: &[f64]) -> f64 {
        xs.iter().sum()
    }
    fn dot(&mut self, xs: &[f64], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(x, y)| x * y).sum()
    }
    fn dot_const(&mut self, xs: &[f64], cs: &[f64]) -> f64 {
        xs.iter().zip(cs).map(|(x, y)| x * y).sum()
    }
    fn custom(&mut self, value: f64, _inputs: &[f64], _partials: &[f64]) -> f64 {
        value
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

/// Wengert list for reverse-mode differentiation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    // Node k owns edges[starts[k]..starts[k + 1]], each a parent and partial.
    starts: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        let mut t = Self::default();
        t.starts.push(0);
        t
    }

    /// Empties the tape, keeping allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.edges.clear();
        self.starts.clear();
        self.starts.push(0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input(&mut self, x: f64) -> Var {
        self.push(x, &[], &[])
    }

    #[inline]
    fn push(&mut self, value: f64, parents: &[Var], partials: &[f64]) -> Var {
        let id = self.values.len() as u32;
        self.values.push(value);
        self.edges.extend(parents.iter().zip(partials).map(|(v, &p)| (v.0, p)));
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }

    #[inline]
    fn push1(&mut self, value: f64, a: Var, da: f64) -> Var {
        let id = self.values.len() as u32;
        self.values.push(value);
        self.edges.push((a.0, da));
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }

    #[inline]
    fn push2(&mut self, value: f64, a: Var, da: f64, b: Var, db: f64) -> Var {
        let id = self.values.len() as u32;
        self.values.push(value);
        self.edges.extend([(a.0, da), (b.0, db)]);
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }

    /// Adjoints of `output` with respect to the given inputs.
    pub fn gradient(&self, output: Var, inputs: &[Var]) -> Vec<f64> {
        let mut adj = vec![0.0; output.0 as usize + 1];
        adj[output.0 as usize] = 1.0;
        for k in (0..=output.0 as usize).rev() {
            let a = adj[k];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (self.starts[k] as usize, self.starts[k + 1] as usize);
            for &(p, d) in &self.edges[s..e] {
                adj[p as usize] += a * d;
            }
        }
        inputs
            .iter()
            .map(|v| adj.get(v.0 as usize).copied().unwrap_or(0.0))
            .collect()
    }
}

impl Ops for Tape {
    type V = Var;

    fn cst(&mut self, x: f64) -> Var {
        self.push(x, &[], &[])
    }
    fn val(&self, v: Var) -> f64 {
        self.values[v.0 as usize]
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) + self.val(b);
        self.push2(v, a, 1.0, b, 1.0)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) - self.val(b);
        self.push2(v, a, 1.0, b, -1.0)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.push2(x * y, a, y, b, x)
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.val(a), self.val(b));
        self.push2(x / y, a, 1.0 / y, b, -x / (y * y))
    }
    fn affine(&mut self, a: Var, c: f64, d: f64) -> Var {
        let v = self.val(a) * c + d;
        self.push1(v, a, c)
    }
    fn exp(&mut self, a: Var) -> Var {
        let v = self.val(a).exp();
        self.push1(v, a, v)
    }
    fn ln(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push1(x.ln(), a, 1.0 / x)
    }
    fn softplus(&mut self, a: Var) -> Var {
        let x = self.val(a);
        self.push1(softplus_f64(x), a, sigmoid_f64(x))
    }
    fn max_const(&mut self, a: Var, floor: f64) -> Var {
        let x = self.val(a);
        if x >= floor {
            a
        } else {
            self.push(floor, &[], &[])
        }
    }
    fn max(&mut self, a: Var, b: Var) -> Var {
        if self.val(a) >= self.val(b) {
            a
        } else {
            b
        }
    }
    fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.val(x)).sum();
        let id = self.values.len() as u32;
        self.values.push(v);
        self.edges.extend(xs.iter().map(|x| (x.0, 1.0)));
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }
    fn dot(&mut self, xs: &[Var], ys: &[Var]) -> Var {
        let mut v = 0.0;
        let id = self.values.len() as u32;
        let values = &self.values;
        self.edges.reserve(2 * xs.len());
        for (&x, &y) in xs.iter().zip(ys) {
            let (a, b) = (values[x.0 as usize], values[y.0 as usize]);
            v += a * b;
            self.edges.extend([(x.0, b), (y.0, a)]);
        }
        self.values.push(v);
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }
    fn dot_const(&mut self, xs: &[Var], cs: &[f64]) -> Var {
        let mut v = 0.0;
        let id = self.values.len() as u32;
        for (&x, &c) in xs.iter().zip(cs) {
            v += self.values[x.0 as usize] * c;
            self.edges.push((x.0, c));
        }
        self.values.push(v);
        self.starts.push(self.edges.len() as u32);
        Var(id)
    }
    fn custom(&mut self, value: f64, inputs: &[Var], partials: &[f64]) -> Var {
        self.push(value, inputs, partials)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x, y) = ln(1 + e^{x*y}) + exp(x) / y - max(x, 0.5) + logsumexp(x, y)
    fn f<O: Ops>(o: &mut O, x: O::V, y: O::V) -> O::V {
        let xy = o.mul(x, y);
        let a = o.softplus(xy);
        let ex = o.exp(x);
        let b = o.div(ex, y);
        let c = o.max_const(x, 0.5);
        let d = o.log_sum_exp(&[x, y]);
        let s = o.sum(&[a, b, d]);
        o.sub(s, c)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for &(x, y) in &[(0.3, 1.7), (1.2, -0.4), (-2.0, 3.0)] {
            let mut t = Tape::new();
            let (vx, vy) = (t.input(x), t.input(y));
            let out = f(&mut t, vx, vy);
            let g = t.gradient(out, &[vx, vy]);
            let h = 1e-6;
            let fx = (f(&mut Plain, x + h, y) - f(&mut Plain, x - h, y)) / (2.0 * h);
            let fy = (f(&mut Plain, x, y + h) - f(&mut Plain, x, y - h)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-6, "{} vs {}", g[0], fx);
            assert!((g[1] - fy).abs() < 1e-6, "{} vs {}", g[1], fy);
            assert_eq!(t.val(out), f(&mut Plain, x, y));
        }
    }

    #[test]
    fn dot_and_softmax() {
        let mut t = Tape::new();
        let xs: Vec<Var> = [1.0, 2.0, 3.0].iter().map(|&x| t.input(x)).collect();
        let w = t.softmax(&xs);
        let total: f64 = w.iter().map(|&v| t.val(v)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let d = t.dot(&xs, &xs);
        assert_eq!(t.gradient(d, &xs), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus_f64(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus_f64(-800.0) >= 0.0);
        assert!((Plain.sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}
