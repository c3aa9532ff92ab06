//! Rotation-coefficient functions shared by the SE(3) exponential map and
//! its autodiff counterpart.
//!
//! All three are analytic functions of `u = theta^2` (the squared rotation
//! angle), which keeps them smooth through `theta = 0` — important because
//! the pose network starts at exactly the zero twist:
//!
//! - `a(u) = sin(theta)/theta`
//! - `b(u) = (1 - cos(theta))/theta^2`
//! - `c(u) = (theta - sin(theta))/theta^3`
//!
//! Below `SERIES_THRESHOLD` the closed forms lose precision to
//! cancellation and a cubic Taylor series (error < 1e-21 there) is used
//! instead, both for values and derivatives.

use crate::scalar::Scalar;

const SERIES_THRESHOLD: f64 = 1e-4;

#[inline]
pub(crate) fn lie_a<T: Scalar>(u: T) -> T {
    if u < T::of_f64(SERIES_THRESHOLD) {
        // 1 - u/6 + u^2/120 - u^3/5040
        T::one() - u / T::of_f64(6.0) + u * u / T::of_f64(120.0)
            - u * u * u / T::of_f64(5040.0)
    } else {
        let theta = Float::sqrt(u);
        Float::sin(theta) / theta
    }
}

#[inline]
pub(crate) fn lie_b<T: Scalar>(u: T) -> T {
    if u < T::of_f64(SERIES_THRESHOLD) {
        T::of_f64(0.5) - u / T::of_f64(24.0) + u * u / T::of_f64(720.0)
            - u * u * u / T::of_f64(40320.0)
    } else {
        let theta = Float::sqrt(u);
        (T::one() - Float::cos(theta)) / u
    }
}

#[inline]
pub(crate) fn lie_c<T: Scalar>(u: T) -> T {
    if u < T::of_f64(SERIES_THRESHOLD) {
        T::of_f64(1.0 / 6.0) - u / T::of_f64(120.0) + u * u / T::of_f64(5040.0)
            - u * u * u / T::of_f64(362_880.0)
    } else {
        let theta = Float::sqrt(u);
        (theta - Float::sin(theta)) / (u * theta)
    }
}

/// d a / d u
#[inline]
pub(crate) fn lie_a_deriv<T: Scalar>(u: T) -> T {
    if u < T::of_f64(SERIES_THRESHOLD) {
        -T::one() / T::of_f64(6.0) + u / T::of_f64(60.0) - u * u / T::of_f64(1680.0)
    } else {
        let theta = Float::sqrt(u);
        (Float::cos(theta) - lie_a(u)) / (u + u)
    }
}

/// d b / d u
#[inline]
pub(crate) fn lie_b_deriv<T: Scalar>(u: T) -> T {
    if u < T::of_f64(SERIES_THRESHOLD) {
        -T::one() / T::of_f64(24.0) + u / T::of_f64(360.0) - u * u / T::of_f64(13440.0)
    } else {
        (lie_a(u) - T::of_f64(2.0) * lie_b(u)) / (u + u)
    }
}

/// d c / d u
#[inline]
pub(crate) fn lie_c_deriv<T: Scalar>(u: T) -> T {
    if u < T::of_f64(SERIES_THRESHOLD) {
        -T::one() / T::of_f64(120.0) + u / T::of_f64(2520.0) - u * u / T::of_f64(120_960.0)
    } else {
        (lie_b(u) - T::of_f64(3.0) * lie_c(u)) / (u + u)
    }
}

use num_traits::Float;
