//! Parallel-beam Radon operators.
//!
//! Line convention: a bin `(r, θ)` is the line `x cos θ + y sin θ = r` in the
//! centred y-up frame, so `θ = 0` is a vertical line, `θ` grows
//! counter-clockwise and `r` is the signed distance from the image centre.
//!
//! The observation model maps a sinogram to an image with filtered
//! backprojection `C = (π / n_θ) · BP ∘ F`, where `F` ramp-filters every
//! angular profile and `BP` smears with linear interpolation in `r`.
//! `Cᵀ = (π / n_θ) · F ∘ BPᵀ` is assembled from the transposes of those same
//! discrete steps; `F` is a symmetric circulant on the padded profile and is
//! therefore its own transpose.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear_zero, grid_center, Image, Sinogram};
use crate::operator::{norm, LinearOperator};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Linear,
}

/// Profile filter applied before backprojection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFilter {
    /// Band-limited ramp derived from the spatial Ram-Lak kernel.
    #[default]
    Ramp,
    /// Plain (unfiltered) backprojection.
    None,
}

/// Discretisation of the sinogram grid for a given image size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadonGeometry {
    pub width: usize,
    pub height: usize,
    /// Angles are `k · 180° / n_angles`.
    pub n_angles: usize,
    /// Odd; offsets are `k - n_offsets / 2` pixels.
    pub n_offsets: usize,
    pub interpolation: Interpolation,
    pub filter: ProfileFilter,
}

impl RadonGeometry {
    /// One-degree angular sampling and unit offset sampling covering the
    /// full diagonal.
    pub fn new(width: usize, height: usize) -> Self {
        RadonGeometry {
            width,
            height,
            n_angles: 180,
            n_offsets: Self::min_offsets(width, height),
            interpolation: Interpolation::Linear,
            filter: ProfileFilter::Ramp,
        }
    }

    pub fn for_image<T: Real>(img: &Image<T>) -> Self {
        Self::new(img.width(), img.height())
    }

    /// Smallest odd offset count whose bins reach every pixel centre with a
    /// spare bin for linear interpolation.
    pub fn min_offsets(width: usize, height: usize) -> usize {
        let (cx, cy) = grid_center(width, height);
        let half = (cx * cx + cy * cy).sqrt().ceil() as usize + 1;
        2 * half + 1
    }

    pub fn with_angles(mut self, n_angles: usize) -> Self {
        self.n_angles = n_angles;
        self
    }

    pub fn with_offsets(mut self, n_offsets: usize) -> Self {
        self.n_offsets = n_offsets;
        self
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn with_filter(mut self, filter: ProfileFilter) -> Self {
        self.filter = filter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Dimension("empty image grid".into()));
        }
        if self.n_angles == 0 {
            return Err(Error::param("at least one projection angle is required"));
        }
        if self.n_offsets.is_multiple_of(2) {
            return Err(Error::param(format!(
                "offset count {} must be odd so that r = 0 is a bin",
                self.n_offsets
            )));
        }
        let min = Self::min_offsets(self.width, self.height);
        if self.n_offsets < min {
            return Err(Error::param(format!(
                "offset count {} does not cover the image diagonal (need >= {min})",
                self.n_offsets
            )));
        }
        Ok(())
    }

    pub fn half_offsets(&self) -> usize {
        self.n_offsets / 2
    }

    pub fn angle_step(&self) -> f64 {
        180.0 / self.n_angles as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_angles)
            .map(|k| k as f64 * self.angle_step())
            .collect()
    }

    pub fn offsets(&self) -> Vec<f64> {
        let half = self.half_offsets() as f64;
        (0..self.n_offsets).map(|k| k as f64 - half).collect()
    }

    pub fn image_dim(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn sinogram_dim(&self) -> (usize, usize) {
        (self.n_offsets, self.n_angles)
    }

    pub fn empty_sinogram<T: Real>(&self) -> Sinogram<T> {
        Sinogram::new(
            self.offsets(),
            self.angles(),
            Array2::zeros(self.sinogram_dim()),
        )
        .expect("geometry grids are valid")
    }

    fn check_image<T: Real>(&self, img: &Image<T>) -> Result<()> {
        if img.data().dim() != self.image_dim() {
            return Err(Error::Shape {
                expected: self.image_dim(),
                actual: img.data().dim(),
            });
        }
        Ok(())
    }

    fn check_sinogram<T: Real>(&self, sino: &Sinogram<T>) -> Result<()> {
        if sino.data().dim() != self.sinogram_dim() {
            return Err(Error::Shape {
                expected: self.sinogram_dim(),
                actual: sino.data().dim(),
            });
        }
        let same = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
        };
        if !same(sino.offsets(), &self.offsets()) || !same(sino.angles(), &self.angles()) {
            return Err(Error::param("sinogram grids differ from the geometry"));
        }
        Ok(())
    }
}

/// Precomputed filtered-backprojection operator `C` and its adjoint.
pub struct RadonOperator<T: Real> {
    geo: RadonGeometry,
    cos: Vec<f64>,
    sin: Vec<f64>,
    response: Option<Vec<T>>,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for RadonOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadonOperator")
            .field("geometry", &self.geo)
            .finish_non_exhaustive()
    }
}

impl<T: Real> RadonOperator<T> {
    pub fn new(geo: RadonGeometry) -> Result<Self> {
        geo.validate()?;
        let (cos, sin) = geo
            .angles()
            .iter()
            .map(|a| {
                let t = a.to_radians();
                (t.cos(), t.sin())
            })
            .unzip();
        let len = padded_len(geo.n_offsets);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let response = match geo.filter {
            ProfileFilter::Ramp => Some(ramp_response(len, fft.as_ref())),
            ProfileFilter::None => None,
        };
        Ok(RadonOperator {
            geo,
            cos,
            sin,
            response,
            fft,
            ifft,
        })
    }

    pub fn geometry(&self) -> &RadonGeometry {
        &self.geo
    }

    fn scale(&self) -> T {
        T::lit(std::f64::consts::PI / self.geo.n_angles as f64)
    }

    /// Filters one offset profile in place. Identity for `ProfileFilter::None`.
    fn filter_profile(&self, profile: &mut [T], buf: &mut [Complex<T>]) {
        let Some(resp) = &self.response else {
            return;
        };
        let n = profile.len();
        for (b, &p) in buf.iter_mut().zip(profile.iter()) {
            *b = Complex::new(p, T::zero());
        }
        for b in buf[n..].iter_mut() {
            *b = Complex::new(T::zero(), T::zero());
        }
        self.fft.process(buf);
        for (b, &h) in buf.iter_mut().zip(resp.iter()) {
            *b = *b * h;
        }
        self.ifft.process(buf);
        let inv = T::one() / T::lit(buf.len() as f64);
        for (p, b) in profile.iter_mut().zip(buf.iter()) {
            *p = b.re * inv;
        }
    }

    /// Fixed-point start and step of the bin coordinate along image row `i`
    /// for angle `a`. `C` and `Cᵀ` both walk rows with these values, so they
    /// visit identical (bin, weight) pairs and stay exact transposes.
    #[inline]
    fn row_walk(&self, a: usize, i: usize) -> (i64, i64) {
        let (h, w) = self.geo.image_dim();
        let (cx, cy) = grid_center(w, h);
        let (c, s) = (self.cos[a], self.sin[a]);
        let t0 = -cx * c + (cy - i as f64) * s + self.geo.half_offsets() as f64;
        ((t0 * FIX_ONE).round() as i64, (c * FIX_ONE).round() as i64)
    }

    /// `C`: sinogram values to image values.
    fn backproject(&self, sino: ArrayView2<T>) -> Array2<T> {
        let (h, w) = self.geo.image_dim();
        let mut out = Array2::<T>::zeros((h, w));
        let mut profile = vec![T::zero(); self.geo.n_offsets];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); padded_len(self.geo.n_offsets)];
        let out_slice = out.as_slice_mut().expect("standard layout");
        for a in 0..self.geo.n_angles {
            for (p, v) in profile.iter_mut().zip(sino.column(a).iter()) {
                *p = *v;
            }
            self.filter_profile(&mut profile, &mut buf);
            for (i, row) in out_slice.chunks_exact_mut(w).enumerate() {
                let (mut t, dt) = self.row_walk(a, i);
                match self.geo.interpolation {
                    Interpolation::Linear => {
                        for px in row.iter_mut() {
                            let (k, f) = split_fixed::<T>(t);
                            let pair = &profile[k..k + 2];
                            *px += pair[0] + f * (pair[1] - pair[0]);
                            t += dt;
                        }
                    }
                    Interpolation::Nearest => {
                        for px in row.iter_mut() {
                            *px += profile[round_fixed(t)];
                            t += dt;
                        }
                    }
                }
            }
        }
        let scale = self.scale();
        out.mapv_inplace(|v| v * scale);
        out
    }

    /// `Cᵀ`: image values to sinogram values.
    ///
    /// Splats every pixel onto its two nearest offset bins. Four interleaved
    /// partial profiles keep neighbouring pixels from serialising on the
    /// same accumulator; they are summed in a fixed order.
    fn project_adjoint(&self, img: ArrayView2<T>) -> Array2<T> {
        let (_, w) = self.geo.image_dim();
        let img = img.as_standard_layout();
        let img_slice = img.as_slice().expect("standard layout");
        let mut out = Array2::<T>::zeros(self.geo.sinogram_dim());
        let mut lanes = vec![[T::zero(); 4]; self.geo.n_offsets];
        let mut profile = vec![T::zero(); self.geo.n_offsets];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); padded_len(self.geo.n_offsets)];
        for a in 0..self.geo.n_angles {
            lanes.iter_mut().for_each(|l| *l = [T::zero(); 4]);
            for (i, row) in img_slice.chunks_exact(w).enumerate() {
                let (mut t, dt) = self.row_walk(a, i);
                match self.geo.interpolation {
                    Interpolation::Linear => {
                        for quad in row.chunks(4) {
                            for (l, &v) in quad.iter().enumerate() {
                                let (k, f) = split_fixed::<T>(t);
                                let hi = f * v;
                                lanes[k][l] += v - hi;
                                lanes[k + 1][l] += hi;
                                t += dt;
                            }
                        }
                    }
                    Interpolation::Nearest => {
                        for quad in row.chunks(4) {
                            for (l, &v) in quad.iter().enumerate() {
                                lanes[round_fixed(t)][l] += v;
                                t += dt;
                            }
                        }
                    }
                }
            }
            for (p, l) in profile.iter_mut().zip(&lanes) {
                *p = (l[0] + l[1]) + (l[2] + l[3]);
            }
            self.filter_profile(&mut profile, &mut buf);
            for (o, p) in out.column_mut(a).iter_mut().zip(profile.iter()) {
                *o = *p;
            }
        }
        let scale = self.scale();
        out.mapv_inplace(|v| v * scale);
        out
    }

    /// Ray-driven Radon transform: unit-spaced samples along every line.
    pub fn forward_radon(&self, img: ArrayView2<T>) -> Array2<T> {
        let (h, w) = self.geo.image_dim();
        let (cx, cy) = grid_center(w, h);
        let half = self.geo.half_offsets() as isize;
        let img = img.to_owned();
        let mut out = Array2::<T>::zeros(self.geo.sinogram_dim());
        for a in 0..self.geo.n_angles {
            let (c, s) = (self.cos[a], self.sin[a]);
            for k in 0..self.geo.n_offsets {
                let r = (k as isize - half) as f64;
                let mut acc = T::zero();
                for step in -half..=half {
                    let u = step as f64;
                    let x = r * c - u * s;
                    let y = r * s + u * c;
                    let col = cx + x;
                    let row = cy - y;
                    if col <= -1.0 || row <= -1.0 || col >= w as f64 || row >= h as f64 {
                        continue;
                    }
                    acc += match self.geo.interpolation {
                        Interpolation::Linear => bilinear_zero(&img, col, row),
                        Interpolation::Nearest => {
                            let (ci, ri) = (col.round(), row.round());
                            if ci < 0.0 || ri < 0.0 || ci >= w as f64 || ri >= h as f64 {
                                T::zero()
                            } else {
                                img[[ri as usize, ci as usize]]
                            }
                        }
                    };
                }
                out[[k, a]] = acc;
            }
        }
        out
    }
}

impl<T: Real> LinearOperator<T> for RadonOperator<T> {
    fn input_dim(&self) -> (usize, usize) {
        self.geo.sinogram_dim()
    }

    fn output_dim(&self) -> (usize, usize) {
        self.geo.image_dim()
    }

    fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        self.backproject(x)
    }

    fn adjoint(&self, y: ArrayView2<T>) -> Array2<T> {
        self.project_adjoint(y)
    }
}

/// 32.32 fixed point for bin coordinates.
const FIX_ONE: f64 = (1u64 << 32) as f64;

#[inline]
fn split_fixed<T: Real>(t: i64) -> (usize, T) {
    let k = (t >> 32) as usize;
    let f = (t & 0xffff_ffff) as f64 * (1.0 / FIX_ONE);
    (k, T::lit(f))
}

#[inline]
fn round_fixed(t: i64) -> usize {
    ((t + (1i64 << 31)) >> 32) as usize
}

fn padded_len(n_offsets: usize) -> usize {
    (2 * n_offsets).next_power_of_two().max(64)
}

/// Frequency response of the spatial Ram-Lak kernel
/// `h[0] = 1/4, h[n odd] = -1/(πn)², h[n even] = 0`, circularly arranged.
/// Real and even, so the circulant it defines is symmetric.
fn ramp_response<T: Real>(len: usize, fft: &dyn Fft<T>) -> Vec<T> {
    let mut kernel = vec![Complex::new(T::zero(), T::zero()); len];
    kernel[0].re = T::lit(0.25);
    let pi = std::f64::consts::PI;
    for n in (1..len / 2).step_by(2) {
        let v = T::lit(-1.0 / (pi * n as f64).powi(2));
        kernel[n].re = v;
        kernel[len - n].re = v;
    }
    fft.process(&mut kernel);
    kernel.into_iter().map(|c| c.re).collect()
}

/// Sums bilinear samples along every line of the geometry.
pub fn forward_radon<T: Real>(img: &Image<T>, geo: &RadonGeometry) -> Result<Sinogram<T>> {
    geo.check_image(img)?;
    let op = RadonOperator::<T>::new(*geo)?;
    geo.empty_sinogram()
        .with_data(op.forward_radon(img.data().view()))
}

/// Filtered backprojection `C`.
pub fn inverse_radon<T: Real>(sino: &Sinogram<T>, geo: &RadonGeometry) -> Result<Image<T>> {
    geo.check_sinogram(sino)?;
    let op = RadonOperator::<T>::new(*geo)?;
    Image::new(op.apply(sino.data().view()))
}

/// The exact transpose `Cᵀ` of [`inverse_radon`].
pub fn adjoint_inverse_radon<T: Real>(img: &Image<T>, geo: &RadonGeometry) -> Result<Sinogram<T>> {
    geo.check_image(img)?;
    let op = RadonOperator::<T>::new(*geo)?;
    geo.empty_sinogram()
        .with_data(op.adjoint(img.data().view()))
}

/// Power iteration on `AᵀA`; returns the estimate of `‖A‖²`.
pub fn power_iteration<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    iterations: usize,
    seed: u64,
) -> Result<T> {
    if iterations < 10 {
        return Err(Error::param(format!(
            "power iteration needs at least 10 steps, got {iterations}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::from_shape_fn(op.input_dim(), |_| T::lit(StandardNormal.sample(&mut rng)));
    let n0 = norm(v.view());
    v.mapv_inplace(|x| x / n0);
    let mut estimate = T::zero();
    for _ in 0..iterations {
        let w = op.adjoint(op.apply(v.view()).view());
        estimate = v.iter().zip(w.iter()).map(|(&a, &b)| a * b).sum();
        let nw = norm(w.view());
        if nw == T::zero() {
            return Ok(T::zero());
        }
        v = w.mapv(|x| x / nw);
    }
    Ok(estimate)
}

/// `‖C‖²` for the filtered-backprojection operator of `geo`.
pub fn estimate_operator_norm(geo: &RadonGeometry, iterations: usize, seed: u64) -> Result<f64> {
    let op = RadonOperator::<f64>::new(*geo)?;
    power_iteration(&op, iterations, seed)
}
