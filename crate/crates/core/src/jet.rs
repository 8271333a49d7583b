//! Second-order directional jets.
//!
//! A [`Jet2`] carries a value together with its first and second derivative
//! along one active spatial coordinate. Running the network once per coordinate
//! with that coordinate seeded as `(x, 1, 0)` yields `u`, `∂ᵢu` and `∂ᵢ²u`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub val: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        val: 0.0,
        d1: 0.0,
        d2: 0.0,
    };

    pub const fn new(val: f64, d1: f64, d2: f64) -> Self {
        Jet2 { val, d1, d2 }
    }

    /// A quantity that does not depend on the active coordinate.
    pub const fn constant(val: f64) -> Self {
        Jet2 {
            val,
            d1: 0.0,
            d2: 0.0,
        }
    }

    /// The active coordinate itself.
    pub const fn variable(x: f64) -> Self {
        Jet2 {
            val: x,
            d1: 1.0,
            d2: 0.0,
        }
    }

    /// Compose a scalar function with this jet, given `[f(v), f'(v), f''(v)]`.
    #[inline]
    pub fn compose(self, f: [f64; 3]) -> Jet2 {
        Jet2 {
            val: f[0],
            d1: f[1] * self.d1,
            d2: f[2] * self.d1 * self.d1 + f[1] * self.d2,
        }
    }

    pub fn scale(self, c: f64) -> Jet2 {
        Jet2 {
            val: c * self.val,
            d1: c * self.d1,
            d2: c * self.d2,
        }
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.val.sin_cos();
        self.compose([s, c, -s])
    }

    pub fn is_finite(&self) -> bool {
        self.val.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            val: self.val + rhs.val,
            d1: self.d1 + rhs.d1,
            d2: self.d2 + rhs.d2,
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            val: self.val - rhs.val,
            d1: self.d1 - rhs.d1,
            d2: self.d2 - rhs.d2,
        }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, rhs: Jet2) -> Jet2 {
        Jet2 {
            val: self.val * rhs.val,
            d1: self.d1 * rhs.val + self.val * rhs.d1,
            d2: self.d2 * rhs.val + 2.0 * self.d1 * rhs.d1 + self.val * rhs.d2,
        }
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

/// Smooth activation functions. Both are C∞, so loss Hessians exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `z · sigmoid(z)`
    #[default]
    Swish,
    /// `1 / (1 + e^{-z})`
    Sigmoid,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Value and first three derivatives at `z`.
    ///
    /// The third derivative is needed by the reverse sweep: the adjoint of the
    /// `d2` component with respect to the input value involves `f'''`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        let s = sigmoid(z);
        let q = s * (1.0 - s);
        let t = 1.0 - 2.0 * s;
        match self {
            Activation::Swish => {
                let f0 = z * s;
                let f1 = s + z * q;
                let f2 = q * (2.0 + z * t);
                let f3 = q * (t * (3.0 + z * t) - 2.0 * z * q);
                [f0, f1, f2, f3]
            }
            Activation::Sigmoid => [s, q, q * t, q * (t * t - 2.0 * q)],
        }
    }

    #[inline]
    pub fn apply(self, z: Jet2) -> Jet2 {
        let [f0, f1, f2, _] = self.derivatives(z.val);
        z.compose([f0, f1, f2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_second_order() {
        let f = Jet2::new(1.5, -0.3, 2.0);
        let g = Jet2::new(-0.7, 1.1, 0.4);
        let h = f * g;
        assert_eq!(h.d2, f.d2 * g.val + 2.0 * f.d1 * g.d1 + f.val * g.d2);
    }

    #[test]
    fn constants_and_variables() {
        let c = Jet2::constant(3.0);
        assert_eq!((c.d1, c.d2), (0.0, 0.0));
        let x = Jet2::variable(0.25);
        assert_eq!(x, Jet2::new(0.25, 1.0, 0.0));
    }

    #[test]
    fn swish_values() {
        assert_eq!(Activation::Swish.derivatives(0.0)[0], 0.0);
        let one = Activation::Swish.derivatives(1.0)[0];
        assert!((one - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((one - 0.7310585786300049).abs() < 1e-12);
        let big = Activation::Swish.derivatives(40.0)[0];
        assert!((big - 40.0).abs() < 1e-12);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Swish, Activation::Sigmoid] {
            for &z in &[-3.0, -0.4, 0.0, 0.9, 2.5] {
                let h = 1e-4;
                let d = act.derivatives(z);
                let p = act.derivatives(z + h);
                let m = act.derivatives(z - h);
                for k in 0..3 {
                    let fd = (p[k] - m[k]) / (2.0 * h);
                    assert!(
                        (fd - d[k + 1]).abs() < 1e-7,
                        "{act:?} order {} at {z}: fd {fd} vs {}",
                        k + 1,
                        d[k + 1]
                    );
                }
            }
        }
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        // g(x) = swish(sin(x) * x), checked against differences of the value.
        let g = |x: Jet2| Activation::Swish.apply(x.sin() * x);
        let x0 = 0.8;
        let h = 1e-4;
        let j = g(Jet2::variable(x0));
        let v = |x: f64| g(Jet2::constant(x)).val;
        let d1 = (v(x0 + h) - v(x0 - h)) / (2.0 * h);
        let d2 = (v(x0 + h) - 2.0 * v(x0) + v(x0 - h)) / (h * h);
        assert!((j.d1 - d1).abs() < 1e-7);
        assert!((j.d2 - d2).abs() < 1e-5);
    }
}
