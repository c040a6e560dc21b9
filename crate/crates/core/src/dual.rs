//! Forward-mode dual numbers.
//!
//! `Dual<T>` carries a value and one infinitesimal part with `ε² = 0`.
//! Nesting gives higher derivatives: a `Dual<Dual<f64>>` seeded with two
//! independent directions exposes the mixed second derivative in its
//! `eps.eps` component, and three levels give third derivatives.
//!
//! All numerical kernels in this crate are written once against the
//! [`Real`] trait and instantiated at `f64` for evaluation or at one of the
//! nested dual types ([`D1`]..[`D4`]) for differentiation.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::metric::ErasedNorm;
use crate::submanifold::ErasedImmersion;

/// Scalar type accepted by every generic kernel.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(c: f64) -> Self;
    /// Primal (real) part.
    fn re(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn recip(self) -> Self {
        Self::one() / self
    }

    #[doc(hidden)]
    fn eval_norm(f: &dyn ErasedNorm, chart: usize, x: &[Self], v: &[Self]) -> Self;
    #[doc(hidden)]
    fn eval_immersion(f: &dyn ErasedImmersion, theta: &[Self], out: &mut [Self]);
}

impl Real for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn eval_norm(f: &dyn ErasedNorm, chart: usize, x: &[Self], v: &[Self]) -> Self {
        f.norm_f64(chart, x, v)
    }
    fn eval_immersion(f: &dyn ErasedImmersion, theta: &[Self], out: &mut [Self]) {
        f.embed_f64(theta, out)
    }
}

/// A dual number `re + eps·ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }
    #[inline]
    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }
    #[inline]
    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::one() }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Dual::new(self.re + c, self.eps)
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Dual::new(self.re - c, self.eps)
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Dual::new(self.re * c, self.eps * c)
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Dual::new(self.re / c, self.eps / c)
    }
}

macro_rules! dual_real {
    ($ty:ty, $norm:ident, $imm:ident) => {
        impl Real for $ty {
            #[inline]
            fn cst(c: f64) -> Self {
                Dual::constant(Real::cst(c))
            }
            #[inline]
            fn re(self) -> f64 {
                self.re.re()
            }
            #[inline]
            fn sqrt(self) -> Self {
                let r = self.re.sqrt();
                Dual::new(r, self.eps / (r * 2.0))
            }
            #[inline]
            fn sin(self) -> Self {
                Dual::new(self.re.sin(), self.eps * self.re.cos())
            }
            #[inline]
            fn cos(self) -> Self {
                Dual::new(self.re.cos(), -(self.eps * self.re.sin()))
            }
            #[inline]
            fn exp(self) -> Self {
                let e = self.re.exp();
                Dual::new(e, self.eps * e)
            }
            #[inline]
            fn ln(self) -> Self {
                Dual::new(self.re.ln(), self.eps / self.re)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                if n == 0 {
                    return Self::one();
                }
                let p = self.re.powi(n - 1);
                Dual::new(p * self.re, self.eps * p * f64::from(n))
            }
            #[inline]
            fn abs(self) -> Self {
                if self.re() < 0.0 {
                    -self
                } else {
                    self
                }
            }
            fn eval_norm(f: &dyn ErasedNorm, chart: usize, x: &[Self], v: &[Self]) -> Self {
                f.$norm(chart, x, v)
            }
            fn eval_immersion(f: &dyn ErasedImmersion, theta: &[Self], out: &mut [Self]) {
                f.$imm(theta, out)
            }
        }
    };
}

dual_real!(D1, norm_d1, embed_d1);
dual_real!(D2, norm_d2, embed_d2);
dual_real!(D3, norm_d3, embed_d3);
dual_real!(D4, norm_d4, embed_d4);

/// Lifts a slice into constants of the next dual level.
pub fn lift<T: Real>(xs: &[T]) -> Vec<Dual<T>> {
    xs.iter().map(|&x| Dual::constant(x)).collect()
}

/// Lifts `xs` and seeds it with direction `dir` in the new infinitesimal.
pub fn lift_seeded<T: Real>(xs: &[T], dir: &[T]) -> Vec<Dual<T>> {
    xs.iter().zip(dir).map(|(&x, &d)| Dual::new(x, d)).collect()
}

/// Splits a slice of duals into primal and tangent parts.
pub fn split<T: Real>(xs: &[Dual<T>]) -> (Vec<T>, Vec<T>) {
    (xs.iter().map(|d| d.re).collect(), xs.iter().map(|d| d.eps).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_derivative_of_polynomial() {
        // f(x) = x³ − 2x + 1, f'(2) = 10
        let x = D1::variable(2.0);
        let f = x * x * x - x * 2.0 + 1.0;
        assert_eq!(f.re, 5.0);
        assert_eq!(f.eps, 10.0);
    }

    #[test]
    fn nested_gives_second_and_third_derivatives() {
        // f(x) = sin(x)·exp(x); check f'' and f''' against closed forms
        let x0 = 0.7_f64;
        let x = D3::new(
            D2::new(D1::new(x0, 1.0), D1::new(1.0, 0.0)),
            D2::new(D1::new(1.0, 0.0), D1::new(0.0, 0.0)),
        );
        let f = x.sin() * x.exp();
        let e = x0.exp();
        let (s, c) = x0.sin_cos();
        assert_relative_eq!(f.re.re.re, s * e, epsilon = 1e-14);
        assert_relative_eq!(f.re.re.eps, (s + c) * e, epsilon = 1e-14);
        assert_relative_eq!(f.re.eps.eps, 2.0 * c * e, epsilon = 1e-14);
        assert_relative_eq!(f.eps.eps.eps, 2.0 * (c - s) * e, epsilon = 1e-13);
    }

    #[test]
    fn sqrt_ln_div_chain() {
        let x = D1::variable(3.0);
        let f = (x * x + 1.0).sqrt().ln() / x;
        let h = 1e-6;
        let g = |t: f64| (t * t + 1.0).sqrt().ln() / t;
        let fd = (g(3.0 + h) - g(3.0 - h)) / (2.0 * h);
        assert_relative_eq!(f.eps, fd, epsilon = 1e-9);
    }

    #[test]
    fn powi_and_abs() {
        let x = D1::variable(-1.5);
        let p = x.powi(4);
        assert_relative_eq!(p.eps, 4.0 * (-1.5f64).powi(3), epsilon = 1e-12);
        let a = x.abs();
        assert_eq!(a.re, 1.5);
        assert_eq!(a.eps, -1.0);
        assert_eq!(x.powi(0).re, 1.0);
    }
}
