//! Bessel functions of integer order, their positive zeros, and the smooth
//! Littlewood-Paley cutoff with its first three derivatives.

use std::f64::consts::PI;

/// `J_n(x)` for any integer order, using `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let k = n.unsigned_abs() as u32;
    let v = if x < 0.0 {
        // J_k(-x) = (-1)^k J_k(x)
        let v = puruspe::Jn(k, -x);
        if k % 2 == 1 {
            -v
        } else {
            v
        }
    } else {
        puruspe::Jn(k, x)
    };
    if n < 0 && k % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `J_n'(x) = (J_{n-1}(x) - J_{n+1}(x)) / 2`.
pub fn bessel_j_prime(n: i64, x: f64) -> f64 {
    0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
}

/// McMahon's large-zero expansion, used only as a starting guess.
fn mcmahon(order: u32, k: usize) -> f64 {
    let beta = (k as f64 + 0.5 * order as f64 - 0.25) * PI;
    let mu = 4.0 * (order as f64).powi(2);
    let e = 8.0 * beta;
    beta - (mu - 1.0) / e - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * e.powi(3))
}

/// The first `count` positive zeros `j_{order,1} < j_{order,2} < ...` of `J_order`.
///
/// Each zero is bracketed by a sign scan around McMahon's estimate (consecutive
/// zeros are more than pi apart) and then polished by safeguarded Newton steps.
pub fn bessel_zeros(order: u32, count: usize) -> Vec<f64> {
    let n = order as i64;
    let f = |x: f64| bessel_j(n, x);
    let mut zeros = Vec::with_capacity(count);
    let mut prev = if order == 0 { 0.0 } else { order as f64 * 0.5 };
    for k in 1..=count {
        let guess = mcmahon(order, k).max(prev + 0.5);
        // scan outward from just above the previous zero for the first sign change
        let step = 0.05;
        let mut a = (guess - 1.5).max(prev + 1e-6);
        let mut fa = f(a);
        let mut b = a + step;
        let mut fb = f(b);
        while fa * fb > 0.0 {
            a = b;
            fa = fb;
            b += step;
            fb = f(b);
        }
        zeros.push(polish_root(&f, n, a, b));
        prev = *zeros.last().unwrap();
    }
    zeros
}

fn polish_root(f: &impl Fn(f64) -> f64, order: i64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    let mut x = 0.5 * (a + b);
    for _ in 0..100 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fa * fx < 0.0 {
            b = x;
        } else {
            a = x;
            fa = fx;
        }
        let d = bessel_j_prime(order, x);
        let mut next = x - fx / d;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Value and first three derivatives of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet3(pub [f64; 4]);

impl Jet3 {
    pub fn variable(x: f64) -> Self {
        Jet3([x, 1.0, 0.0, 0.0])
    }

    pub fn constant(c: f64) -> Self {
        Jet3([c, 0.0, 0.0, 0.0])
    }

    /// `h(self)` given `[h, h', h'', h''']` evaluated at `self.0[0]`.
    fn compose(self, h: [f64; 4]) -> Self {
        let [_, f1, f2, f3] = self.0;
        Jet3([h[0], h[1] * f1, h[2] * f1 * f1 + h[1] * f2, h[3] * f1 * f1 * f1 + 3.0 * h[2] * f1 * f2 + h[1] * f3])
    }

    pub fn recip(self) -> Self {
        let y = self.0[0];
        self.compose([1.0 / y, -1.0 / (y * y), 2.0 / y.powi(3), -6.0 / y.powi(4)])
    }

    pub fn exp(self) -> Self {
        let e = self.0[0].exp();
        self.compose([e; 4])
    }

    pub fn scale(self, c: f64) -> Self {
        Jet3(self.0.map(|v| v * c))
    }
}

impl std::ops::Mul for Jet3 {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let [f0, f1, f2, f3] = self.0;
        let [g0, g1, g2, g3] = o.0;
        Jet3([
            f0 * g0,
            f1 * g0 + f0 * g1,
            f2 * g0 + 2.0 * f1 * g1 + f0 * g2,
            f3 * g0 + 3.0 * f2 * g1 + 3.0 * f1 * g2 + f0 * g3,
        ])
    }
}

impl std::ops::Add for Jet3 {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        let mut v = self.0;
        for (a, b) in v.iter_mut().zip(o.0) {
            *a += b;
        }
        Jet3(v)
    }
}

// exp(-1/t) for t > 0, identically zero otherwise (all derivatives vanish there).
fn flat_bump(t: Jet3) -> Jet3 {
    if t.0[0] <= 0.0 {
        Jet3([0.0; 4])
    } else {
        t.recip().scale(-1.0).exp()
    }
}

/// Smooth monotone cutoff: 1 on [0,1], 0 on [2,inf), C^inf in between.
/// Returns the value and its first three derivatives in `x`.
pub fn smooth_cutoff_jet(x: f64) -> Jet3 {
    if x <= 1.0 {
        return Jet3([1.0, 0.0, 0.0, 0.0]);
    }
    if x >= 2.0 {
        return Jet3([0.0; 4]);
    }
    let xv = Jet3::variable(x);
    let a = flat_bump(Jet3::constant(2.0) + xv.scale(-1.0));
    let b = flat_bump(xv + Jet3::constant(-1.0));
    a * (a + b).recip()
}

pub fn smooth_cutoff(x: f64) -> f64 {
    smooth_cutoff_jet(x).0[0]
}
