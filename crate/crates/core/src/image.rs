//! Image and sinogram containers.
//!
//! Pixel coordinates use a centred, y-up frame: the image centre sits at
//! `((width - 1) / 2, (height - 1) / 2)` in (column, row) indices and `y`
//! grows towards row 0. Every line parameterisation in the crate (Radon
//! bins, wake hypotheses, simulated wakes) is expressed in this frame.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A 2-D real intensity grid, rows by columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    data: Array2<T>,
    pixel_spacing: f64,
}

impl<T: Real> Image<T> {
    /// Smallest accepted side length.
    pub const MIN_DIM: usize = 32;

    /// Wraps a grid, enforcing even side lengths of at least [`Self::MIN_DIM`]
    /// and finite values.
    pub fn new(data: Array2<T>) -> Result<Self> {
        let (h, w) = data.dim();
        check_dims(w, h)?;
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite intensity at flat index {pos}"
            )));
        }
        Ok(Image {
            data,
            pixel_spacing: 1.0,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(Array2::zeros((height, width)))
    }

    pub fn with_pixel_spacing(mut self, meters: f64) -> Self {
        self.pixel_spacing = meters;
        self
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    /// Metres per pixel; metadata only.
    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    /// Centre of the grid in (column, row) pixel indices.
    pub fn center(&self) -> (f64, f64) {
        grid_center(self.width(), self.height())
    }

    /// Same geometry, values replaced by `f(value)`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Ok(Self::new(self.data.mapv(f))?.with_pixel_spacing(self.pixel_spacing))
    }

    /// Bilinear sample at centred coordinates, or `None` outside the pixel
    /// hull.
    pub fn sample(&self, x: f64, y: f64) -> Option<T> {
        let (cx, cy) = self.center();
        let col = x + cx;
        let row = cy - y;
        let (h, w) = self.data.dim();
        if col < 0.0 || row < 0.0 || col > (w - 1) as f64 || row > (h - 1) as f64 {
            return None;
        }
        Some(bilinear_zero(&self.data, col, row))
    }
}

/// Rejects grids the dual-tree decimation cannot handle.
pub fn check_dims(width: usize, height: usize) -> Result<()> {
    let min = Image::<f64>::MIN_DIM;
    if width < min || height < min {
        return Err(Error::Dimension(format!(
            "{width}x{height} is smaller than the {min}x{min} minimum"
        )));
    }
    if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "{width}x{height} has an odd side; crop to {}x{} (e.g. with center_crop_even)",
            width - width % 2,
            height - height % 2
        )));
    }
    Ok(())
}

pub(crate) fn grid_center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Bilinear interpolation in (column, row) indices with zeros outside.
#[inline]
pub(crate) fn bilinear_zero<T: Real>(data: &Array2<T>, col: f64, row: f64) -> T {
    let (h, w) = data.dim();
    let c0 = col.floor();
    let r0 = row.floor();
    let fc = T::lit(col - c0);
    let fr = T::lit(row - r0);
    let c0 = c0 as isize;
    let r0 = r0 as isize;
    let at = |r: isize, c: isize| -> T {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            T::zero()
        } else {
            data[[r as usize, c as usize]]
        }
    };
    let one = T::one();
    at(r0, c0) * (one - fr) * (one - fc)
        + at(r0, c0 + 1) * (one - fr) * fc
        + at(r0 + 1, c0) * fr * (one - fc)
        + at(r0 + 1, c0 + 1) * fr * fc
}

/// Drops the last row and/or column so both sides become even.
pub fn center_crop_even<T: Clone>(data: &Array2<T>) -> Array2<T> {
    let (h, w) = data.dim();
    data.slice(ndarray::s![..h - h % 2, ..w - w % 2]).to_owned()
}

/// Mean over the pixels whose `excluded` flag is false (all pixels when no
/// mask is given).
pub fn image_mean<T: Real>(img: &Image<T>, excluded: Option<&Array2<bool>>) -> Result<T> {
    match excluded {
        None => Ok(img.data.sum() / T::lit(img.data.len() as f64)),
        Some(mask) => {
            if mask.dim() != img.data.dim() {
                return Err(Error::Shape {
                    expected: img.data.dim(),
                    actual: mask.dim(),
                });
            }
            let (sum, n) = img
                .data
                .iter()
                .zip(mask.iter())
                .filter(|(_, &m)| !m)
                .fold((T::zero(), 0usize), |(s, n), (&v, _)| (s + v, n + 1));
            if n == 0 {
                return Err(Error::Empty("every pixel is masked".into()));
            }
            Ok(sum / T::lit(n as f64))
        }
    }
}

/// Boolean disc of the given radius around the grid centre.
pub fn center_disc(width: usize, height: usize, radius: f64) -> Array2<bool> {
    let (cx, cy) = grid_center(width, height);
    Array2::from_shape_fn((height, width), |(r, c)| {
        let dx = c as f64 - cx;
        let dy = r as f64 - cy;
        dx * dx + dy * dy <= radius * radius
    })
}

/// Radon-domain grid indexed by (offset, angle).
///
/// Offsets are in pixels, uniform and symmetric about zero; angles are in
/// degrees, uniform over `[0, 180)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram<T> {
    offsets: Vec<f64>,
    angles: Vec<f64>,
    data: Array2<T>,
}

impl<T: Real> Sinogram<T> {
    pub fn new(offsets: Vec<f64>, angles: Vec<f64>, data: Array2<T>) -> Result<Self> {
        if data.dim() != (offsets.len(), angles.len()) {
            return Err(Error::Shape {
                expected: (offsets.len(), angles.len()),
                actual: data.dim(),
            });
        }
        validate_offsets(&offsets)?;
        validate_angles(&angles)?;
        Ok(Sinogram {
            offsets,
            angles,
            data,
        })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    /// Same grids with new values.
    pub fn with_data(&self, data: Array2<T>) -> Result<Self> {
        Self::new(self.offsets.clone(), self.angles.clone(), data)
    }
}

fn validate_offsets(offsets: &[f64]) -> Result<()> {
    let n = offsets.len();
    if n == 0 {
        return Err(Error::Empty("offset grid".into()));
    }
    for i in 0..n {
        if (offsets[i] + offsets[n - 1 - i]).abs() > 1e-9 {
            return Err(Error::param("offset grid is not symmetric about zero"));
        }
    }
    check_uniform(offsets, "offset")
}

fn validate_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::Empty("angle grid".into()));
    }
    if angles.iter().any(|&a| !(0.0..180.0).contains(&a)) {
        return Err(Error::param("angles must lie in [0, 180) degrees"));
    }
    check_uniform(angles, "angle")
}

fn check_uniform(v: &[f64], what: &str) -> Result<()> {
    if v.len() < 2 {
        return Ok(());
    }
    let step = v[1] - v[0];
    if step <= 0.0 {
        return Err(Error::param(format!("{what} grid must be increasing")));
    }
    if v.windows(2)
        .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0))
    {
        return Err(Error::param(format!("{what} grid must be uniform")));
    }
    Ok(())
}
