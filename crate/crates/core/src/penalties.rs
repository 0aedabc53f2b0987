//! Penalty terms of the composite cost and their derivatives.

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex;

use crate::dtcwt::WaveletPyramid;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Scale of the Cauchy prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyParams<T> {
    gamma: T,
}

impl<T: Real> CauchyParams<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if !(gamma.is_finite() && gamma > T::zero()) {
            return Err(Error::param(format!(
                "Cauchy scale must be finite and positive, got {gamma}"
            )));
        }
        Ok(CauchyParams { gamma })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }
}

/// `Σ −log(γ / (x² + γ²))`, evaluated as `log γ + log1p(x²/γ²)` per element.
pub fn cauchy_penalty<T: Real>(x: ArrayView2<T>, p: CauchyParams<T>) -> T {
    let g = p.gamma;
    let log_g = g.ln();
    x.iter()
        .map(|&v| {
            let u = v / g;
            log_g + (u * u).ln_1p()
        })
        .sum()
}

/// Elementwise `2x / (γ² + x²)`; bounded by `1/γ`.
pub fn cauchy_gradient<T: Real>(x: ArrayView2<T>, p: CauchyParams<T>) -> Array2<T> {
    let g2 = p.gamma * p.gamma;
    let two = T::lit(2.0);
    x.mapv(|v| two * v / (g2 + v * v))
}

/// Magnitude shrinkage `w ↦ w · max(0, 1 − t/|w|)` of every directional
/// coefficient; phase is kept and the lowpass is passed through.
pub fn soft_threshold<T: Real>(w: &WaveletPyramid<T>, threshold: T) -> Result<WaveletPyramid<T>> {
    if !(threshold >= T::zero()) {
        return Err(Error::param(format!(
            "soft threshold must be non-negative, got {threshold}"
        )));
    }
    Ok(w.map_directional(|c| shrink(c, threshold)))
}

#[inline]
fn shrink<T: Real>(c: Complex<T>, t: T) -> Complex<T> {
    let m = c.norm();
    if m <= t {
        Complex::new(T::zero(), T::zero())
    } else {
        c * (T::one() - t / m)
    }
}

/// Forward differences with a zero difference past the last row/column.
fn forward_differences<T: Real>(x: ArrayView2<T>) -> (Array2<T>, Array2<T>) {
    let (r, c) = x.dim();
    let dx = Array2::from_shape_fn((r, c), |(i, j)| {
        if j + 1 < c {
            x[[i, j + 1]] - x[[i, j]]
        } else {
            T::zero()
        }
    });
    let dy = Array2::from_shape_fn((r, c), |(i, j)| {
        if i + 1 < r {
            x[[i + 1, j]] - x[[i, j]]
        } else {
            T::zero()
        }
    });
    (dx, dy)
}

/// Smoothed total variation `weight · Σ √(|∇x|² + ε²)`.
pub fn tv_value<T: Real>(x: ArrayView2<T>, weight: T, eps: T) -> T {
    let (dx, dy) = forward_differences(x);
    let eps2 = eps * eps;
    let s: T = Zip::from(&dx)
        .and(&dy)
        .fold(T::zero(), |acc, &a, &b| acc + (a * a + b * b + eps2).sqrt());
    weight * s
}

/// Gradient of [`tv_value`]: `−weight · div(∇x / √(|∇x|² + ε²))`, with the
/// divergence taken as the exact adjoint of the forward differences.
pub fn tv_gradient<T: Real>(x: ArrayView2<T>, weight: T, eps: T) -> Array2<T> {
    let (r, c) = x.dim();
    let (dx, dy) = forward_differences(x);
    let eps2 = eps * eps;
    let mut px = dx;
    let mut py = dy;
    Zip::from(&mut px).and(&mut py).for_each(|a, b| {
        let n = (*a * *a + *b * *b + eps2).sqrt();
        *a /= n;
        *b /= n;
    });
    Array2::from_shape_fn((r, c), |(i, j)| {
        let mut g = T::zero();
        if j + 1 < c {
            g -= px[[i, j]];
        }
        if j > 0 {
            g += px[[i, j - 1]];
        }
        if i + 1 < r {
            g -= py[[i, j]];
        }
        if i > 0 {
            g += py[[i - 1, j]];
        }
        weight * g
    })
}

/// Lipschitz bound of [`tv_gradient`]: `8 · weight / ε`.
pub fn tv_lipschitz<T: Real>(weight: T, eps: T) -> T {
    T::lit(8.0) * weight / eps
}
