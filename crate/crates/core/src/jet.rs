//! Second-order forward-mode jets.
//!
//! A [`Jet2`] carries the value, gradient and Hessian of a scalar function
//! of `n` variables at a fixed point. The Hessian is stored as a packed
//! upper triangle, so `hess(i, j)` and `hess(j, i)` read the same slot and
//! symmetry holds exactly.

use std::fmt;

#[derive(Clone, PartialEq)]
pub struct Jet2 {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

#[inline]
fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i - 1) / 2 + j
}

impl Jet2 {
    pub fn constant(value: f64, nvars: usize) -> Self {
        Jet2 {
            value,
            grad: vec![0.0; nvars],
            hess: vec![0.0; packed_len(nvars)],
        }
    }

    /// The jet of the coordinate function `x_index` evaluated at `value`.
    pub fn variable(index: usize, value: f64, nvars: usize) -> Self {
        let mut jet = Jet2::constant(value, nvars);
        jet.grad[index] = 1.0;
        jet
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn nvars(&self) -> usize {
        self.grad.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[packed_index(self.nvars(), i, j)]
    }

    /// Dense copy of the Hessian, row-major.
    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let n = self.nvars();
        (0..n)
            .map(|i| (0..n).map(|j| self.hess(i, j)).collect())
            .collect()
    }

    pub fn add(&self, rhs: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + rhs.value,
            grad: zip_with(&self.grad, &rhs.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &rhs.hess, |a, b| a + b),
        }
    }

    pub fn sub(&self, rhs: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - rhs.value,
            grad: zip_with(&self.grad, &rhs.grad, |a, b| a - b),
            hess: zip_with(&self.hess, &rhs.hess, |a, b| a - b),
        }
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn mul(&self, rhs: &Jet2) -> Jet2 {
        let n = self.nvars();
        let (a, b) = (self.value, rhs.value);
        let grad = zip_with(&self.grad, &rhs.grad, |ga, gb| a * gb + b * ga);
        let mut hess = zip_with(&self.hess, &rhs.hess, |ha, hb| a * hb + b * ha);
        for i in 0..n {
            for j in i..n {
                hess[packed_index(n, i, j)] +=
                    self.grad[i] * rhs.grad[j] + self.grad[j] * rhs.grad[i];
            }
        }
        Jet2 {
            value: a * b,
            grad,
            hess,
        }
    }

    /// Quotient; the caller guarantees a nonzero denominator.
    pub fn div(&self, rhs: &Jet2) -> Jet2 {
        let b = rhs.value;
        self.mul(&rhs.compose(1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b)))
    }

    /// Chain rule for `f(self)` given `f`, `f'` and `f''` at `self.value()`.
    pub fn compose(&self, f: f64, df: f64, d2f: f64) -> Jet2 {
        let n = self.nvars();
        let grad = self.grad.iter().map(|g| df * g).collect();
        let mut hess: Vec<f64> = self.hess.iter().map(|h| df * h).collect();
        if d2f != 0.0 {
            for i in 0..n {
                for j in i..n {
                    hess[packed_index(n, i, j)] += d2f * self.grad[i] * self.grad[j];
                }
            }
        }
        Jet2 {
            value: f,
            grad,
            hess,
        }
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            value: c * self.value,
            grad: self.grad.iter().map(|g| c * g).collect(),
            hess: self.hess.iter().map(|h| c * h).collect(),
        }
    }

    /// Directional derivative `∇f · v`.
    pub fn directional(&self, v: &[f64]) -> f64 {
        self.grad.iter().zip(v).map(|(g, x)| g * x).sum()
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

impl fmt::Debug for Jet2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet2")
            .field("value", &self.value)
            .field("grad", &self.grad)
            .field("hess", &self.hessian())
            .finish()
    }
}
