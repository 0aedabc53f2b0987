#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wake_core::dtcwt::{dtcwt_forward, FilterBank};
use wake_core::sim::SceneParams;
use wake_core::wake::Side;

pub fn random_grid(shape: (usize, usize), seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
}

pub fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &Array2<f64>) -> f64 {
    dot(a, a).sqrt()
}

/// Vertical step: zero left of column `at`, one from it on.
pub fn step_edge(n: usize, at: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(_, j)| if j >= at { 1.0 } else { 0.0 })
}

/// One level of the orthonormal 2-D Haar transform: (LL, [LH, HL, HH]).
fn haar_level(x: &Array2<f64>) -> (Array2<f64>, [Array2<f64>; 3]) {
    let (r, c) = (x.nrows() / 2, x.ncols() / 2);
    let q = |i: usize, j: usize| {
        (
            x[[2 * i, 2 * j]],
            x[[2 * i, 2 * j + 1]],
            x[[2 * i + 1, 2 * j]],
            x[[2 * i + 1, 2 * j + 1]],
        )
    };
    let band = |f: fn(f64, f64, f64, f64) -> f64| {
        Array2::from_shape_fn((r, c), |(i, j)| {
            let (a, b, cc, d) = q(i, j);
            f(a, b, cc, d) / 2.0
        })
    };
    (
        band(|a, b, c, d| a + b + c + d),
        [
            band(|a, b, c, d| a + b - c - d),
            band(|a, b, c, d| a - b + c - d),
            band(|a, b, c, d| a - b - c + d),
        ],
    )
}

/// Per-level detail energies of a critically sampled Haar DWT.
pub fn haar_directional_energy(x: &Array2<f64>, levels: usize) -> Vec<Vec<f64>> {
    let mut ll = x.clone();
    let mut out = Vec::new();
    for _ in 0..levels {
        let (next, bands) = haar_level(&ll);
        out.push(
            bands
                .iter()
                .map(|b| b.iter().map(|v| v * v).sum())
                .collect(),
        );
        ll = next;
    }
    out
}

pub fn dtcwt_directional_energy(x: &Array2<f64>, levels: usize) -> Vec<Vec<f64>> {
    let p = dtcwt_forward(x.view(), levels, &FilterBank::default()).unwrap();
    (0..levels)
        .map(|l| p.directional_energy(l).to_vec())
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)` over one level's band energies.
pub fn shift_sensitivity(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&d) / n(a).max(n(b))
}

/// Turbulent wake plus both narrow-V arms, no Kelvin arms.
pub fn three_wake_scene(seed: u64) -> SceneParams {
    SceneParams {
        theta: 62.0,
        side: Side::Positive,
        turbulent_contrast: 0.3,
        narrow_contrast: 1.8,
        narrow_half_angle: 6.0,
        visible: [true, true, true, false, false],
        seed,
        ..Default::default()
    }
}
