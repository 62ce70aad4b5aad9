//! Scalar reverse-mode differentiation on a flat tape.
//!
//! Every node stores its value and the local partial derivative with respect
//! to each parent. Vector operations that dominate the head distances (dot
//! products, norms, point-to-span residuals) are recorded as single fused
//! nodes with explicit partials instead of chains of scalar nodes.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<f64>,
    starts: Vec<usize>,
    parents: Vec<usize>,
    partials: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn values(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.value(v)).collect()
    }

    pub fn push<I>(&mut self, value: f64, deps: I) -> Var
    where
        I: IntoIterator<Item = (Var, f64)>,
    {
        let id = self.values.len();
        self.values.push(value);
        self.starts.push(self.parents.len());
        for (p, d) in deps {
            debug_assert!(p.0 < id);
            self.parents.push(p.0);
            self.partials.push(d);
        }
        Var(id)
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, [])
    }

    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(self.value(a) + self.value(b), [(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(self.value(a) - self.value(b), [(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x * y, [(a, y), (b, x)])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(x / y, [(a, 1.0 / y), (b, -x / (y * y))])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(self.value(a) * c, [(a, c)])
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.push(self.value(a) + c, [(a, 1.0)])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(x * x, [(a, 2.0 * x)])
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(1.0 / x, [(a, -1.0 / (x * x))])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.value(a).exp();
        self.push(y, [(a, y)])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).tanh();
        self.push(y, [(a, 1.0 - y * y)])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|&x| self.value(x)).sum();
        self.push(v, xs.iter().map(|&x| (x, 1.0)))
    }

    pub fn product(&mut self, xs: &[Var]) -> Var {
        let vals = self.values(xs);
        let v: f64 = vals.iter().product();
        let deps: Vec<(Var, f64)> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let others: f64 = vals
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| v)
                    .product();
                (x, others)
            })
            .collect();
        self.push(v, deps)
    }

    pub fn lincomb(&mut self, terms: &[(Var, f64)]) -> Var {
        let v = terms.iter().map(|&(x, c)| self.value(x) * c).sum();
        self.push(v, terms.iter().copied())
    }

    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        debug_assert_eq!(a.len(), b.len());
        let av = self.values(a);
        let bv = self.values(b);
        let v = av.iter().zip(&bv).map(|(x, y)| x * y).sum();
        let deps: Vec<(Var, f64)> = a
            .iter()
            .zip(&bv)
            .map(|(&x, &y)| (x, y))
            .chain(b.iter().zip(&av).map(|(&y, &x)| (y, x)))
            .collect();
        self.push(v, deps)
    }

    /// `a - b` elementwise.
    pub fn vsub(&mut self, a: &[Var], b: &[Var]) -> Vec<Var> {
        a.iter().zip(b).map(|(&x, &y)| self.sub(x, y)).collect()
    }

    /// Euclidean norm; the subgradient at the origin is taken to be zero.
    pub fn norm(&mut self, a: &[Var]) -> Var {
        let av = self.values(a);
        let n = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return self.push(0.0, a.iter().map(|&x| (x, 0.0)));
        }
        self.push(n, a.iter().zip(&av).map(|(&x, &v)| (x, v / n)))
    }

    /// `‖a - b‖` as one node.
    pub fn distance(&mut self, a: &[Var], b: &[Var]) -> Var {
        let diff: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| self.value(x) - self.value(y))
            .collect();
        let n = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let g: Vec<f64> = if n == 0.0 {
            vec![0.0; diff.len()]
        } else {
            diff.iter().map(|d| d / n).collect()
        };
        let deps: Vec<(Var, f64)> = a
            .iter()
            .zip(&g)
            .map(|(&x, &gi)| (x, gi))
            .chain(b.iter().zip(&g).map(|(&y, &gi)| (y, -gi)))
            .collect();
        self.push(n, deps)
    }

    /// Distance from `q` to the affine span `origin + span(basis)`, where the
    /// basis vectors are orthonormal. Recorded as a single node.
    pub fn span_residual(&mut self, q: &[Var], origin: &[Var], basis: &[Vec<Var>]) -> Var {
        let m = q.len();
        let c: Vec<f64> = (0..m)
            .map(|i| self.value(q[i]) - self.value(origin[i]))
            .collect();
        let bv: Vec<Vec<f64>> = basis.iter().map(|b| self.values(b)).collect();
        let coeffs: Vec<f64> = bv
            .iter()
            .map(|b| b.iter().zip(&c).map(|(x, y)| x * y).sum())
            .collect();
        let mut r = c.clone();
        for (b, &coef) in bv.iter().zip(&coeffs) {
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= coef * bi;
            }
        }
        let d = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let unit: Vec<f64> = if d == 0.0 {
            vec![0.0; m]
        } else {
            r.iter().map(|x| x / d).collect()
        };
        let mut deps = Vec::with_capacity(m * (basis.len() + 2));
        for i in 0..m {
            deps.push((q[i], unit[i]));
            deps.push((origin[i], -unit[i]));
        }
        for (b, &coef) in basis.iter().zip(&coeffs) {
            for i in 0..m {
                deps.push((b[i], -coef * unit[i]));
            }
        }
        self.push(d, deps)
    }

    /// `tanh`-free affine map `W x + b` for one output unit.
    pub fn affine_unit(&mut self, weights: &[Var], x: &[Var], bias: Var) -> Var {
        let wv = self.values(weights);
        let xv = self.values(x);
        let v = wv.iter().zip(&xv).map(|(a, b)| a * b).sum::<f64>() + self.value(bias);
        let mut deps = Vec::with_capacity(2 * x.len() + 1);
        for i in 0..x.len() {
            deps.push((weights[i], xv[i]));
            deps.push((x[i], wv[i]));
        }
        deps.push((bias, 1.0));
        self.push(v, deps)
    }

    /// Softmax cross-entropy over negated distances for the true index.
    pub fn neg_distance_xent(&mut self, distances: &[Var], target: usize) -> Var {
        let d = self.values(distances);
        let shift = d.iter().copied().fold(f64::INFINITY, f64::min);
        let exps: Vec<f64> = d.iter().map(|x| (-(x - shift)).exp()).collect();
        let z: f64 = exps.iter().sum();
        let loss = (d[target] - shift) + z.ln();
        let deps: Vec<(Var, f64)> = distances
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let p = exps[j] / z;
                let delta = if j == target { 1.0 } else { 0.0 };
                (v, delta - p)
            })
            .collect();
        self.push(loss, deps)
    }

    /// Adjoint of `output` with respect to every node on the tape.
    pub fn gradient(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; output.0 + 1];
        adj[output.0] = 1.0;
        for id in (0..=output.0).rev() {
            let a = adj[id];
            if a == 0.0 {
                continue;
            }
            let end = self.starts.get(id + 1).copied().unwrap_or(self.parents.len());
            for e in self.starts[id]..end {
                adj[self.parents[e]] += a * self.partials[e];
            }
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn scalar_chain_rule() {
        let mut t = Tape::new();
        let x = t.leaf(0.7);
        let y = t.leaf(-1.3);
        let xy = t.mul(x, y);
        let e = t.exp(xy);
        let th = t.tanh(x);
        let out = t.div(e, th);
        let g = t.gradient(out);
        let f = |v: &[f64]| (v[0] * v[1]).exp() / v[0].tanh();
        let want = fd(f, &[0.7, -1.3]);
        assert_relative_eq!(g[x.index()], want[0], max_relative = 1e-6);
        assert_relative_eq!(g[y.index()], want[1], max_relative = 1e-6);
    }

    #[test]
    fn span_residual_matches_finite_differences() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // basis vectors are fixed here; only q and origin move
        let input = [1.0, 2.0, 3.0, 0.2, -0.1, 0.4];
        let mut t = Tape::new();
        let vars = t.leaves(&input);
        let b = t.leaves(&[h, h, 0.0]);
        let out = t.span_residual(&vars[..3], &vars[3..], &[b]);
        let g = t.gradient(out);
        let f = |v: &[f64]| {
            let c: Vec<f64> = (0..3).map(|i| v[i] - v[i + 3]).collect();
            let proj = (c[0] + c[1]) * h;
            let r = [c[0] - proj * h, c[1] - proj * h, c[2]];
            r.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        let want = fd(f, &input);
        for i in 0..6 {
            assert_relative_eq!(g[vars[i].index()], want[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn xent_is_log_two_for_ties() {
        let mut t = Tape::new();
        let d = t.leaves(&[0.0, 0.0]);
        let l = t.neg_distance_xent(&d, 0);
        assert_relative_eq!(t.value(l), std::f64::consts::LN_2, epsilon = 1e-15);
    }
}
