//! 2-D dual-tree complex wavelet transform.
//!
//! Two real separable wavelet trees run side by side without exchanging
//! data; combining the four row/column tree pairings yields six complex
//! subbands per level, oriented near ±15°, ±45° and ±75°. Level 1 filters
//! without decimation and splits the trees by polyphase phase (a one-sample
//! offset); deeper levels use quarter-shift filters on an interleaved
//! layout. Boundaries use half-sample symmetric extension throughout.

mod filters;
mod kernels;

use ndarray::{s, Array2, ArrayView2, Zip};
use num_complex::Complex;

pub use filters::{Biorthogonal, FilterBank, QuarterShift};

use crate::error::{Error, Result};
use crate::scalar::Real;
use kernels::{along_rows, coldfilt, colfilter, colifilt};

/// Line orientation of each subband, degrees counter-clockwise from the +x
/// axis with y pointing up.
pub const ORIENTATIONS: [f64; 6] = [15.0, 45.0, 75.0, 105.0, 135.0, 165.0];

/// Default number of decomposition levels.
pub const DEFAULT_LEVELS: usize = 3;

/// Six oriented complex subbands of one level, in [`ORIENTATIONS`] order.
pub type Subbands<T> = [Array2<Complex<T>>; 6];

/// Coefficients `W = B x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid<T> {
    /// Lowpass residual of the coarsest level. The four tree pairings are
    /// interleaved on a grid of twice the coarsest subband size.
    pub lowpass: Array2<T>,
    /// `highpasses[0]` is the finest level.
    pub highpasses: Vec<Subbands<T>>,
}

impl<T: Real> WaveletPyramid<T> {
    pub fn levels(&self) -> usize {
        self.highpasses.len()
    }

    /// Number of real values held, counting a complex value as two.
    pub fn coefficient_count(&self) -> usize {
        self.lowpass.len()
            + self
                .highpasses
                .iter()
                .flat_map(|lv| lv.iter())
                .map(|b| 2 * b.len())
                .sum::<usize>()
    }

    /// Applies `f` to every directional coefficient, leaving the lowpass
    /// untouched.
    pub fn map_directional(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        WaveletPyramid {
            lowpass: self.lowpass.clone(),
            highpasses: self
                .highpasses
                .iter()
                .map(|lv| std::array::from_fn(|d| lv[d].mapv(&f)))
                .collect(),
        }
    }

    /// `a·self + b·other`, coefficientwise (lowpass included).
    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(WaveletPyramid {
            lowpass: &self.lowpass * a + &other.lowpass * b,
            highpasses: self
                .highpasses
                .iter()
                .zip(&other.highpasses)
                .map(|(x, y)| {
                    std::array::from_fn(|d| {
                        Zip::from(&x[d])
                            .and(&y[d])
                            .map_collect(|&u, &v| u * a + v * b)
                    })
                })
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        WaveletPyramid {
            lowpass: Array2::zeros(self.lowpass.dim()),
            highpasses: self
                .highpasses
                .iter()
                .map(|lv| std::array::from_fn(|d| Array2::zeros(lv[d].dim())))
                .collect(),
        }
    }

    /// Energy of each oriented subband at one level.
    pub fn directional_energy(&self, level: usize) -> [T; 6] {
        std::array::from_fn(|d| self.highpasses[level][d].iter().map(|c| c.norm_sqr()).sum())
    }

    /// Squared norm of every coefficient, lowpass included.
    pub fn energy(&self) -> T {
        let lp: T = self.lowpass.iter().map(|&v| v * v).sum();
        let hp: T = (0..self.levels())
            .map(|l| self.directional_energy(l).into_iter().sum::<T>())
            .sum();
        lp + hp
    }

    /// Sum of complex magnitudes over the directional subbands; the lowpass
    /// is not penalised.
    pub fn l1(&self) -> T {
        self.highpasses
            .iter()
            .flat_map(|lv| lv.iter())
            .flat_map(|b| b.iter())
            .map(|c| c.norm())
            .sum()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        let mismatch = || Error::param("wavelet pyramids have different layouts");
        if self.lowpass.dim() != other.lowpass.dim() || self.levels() != other.levels() {
            return Err(mismatch());
        }
        for (x, y) in self.highpasses.iter().zip(&other.highpasses) {
            if x.iter().zip(y.iter()).any(|(a, b)| a.dim() != b.dim()) {
                return Err(mismatch());
            }
        }
        Ok(())
    }
}

/// `λ‖B x‖₁` without the weight: see [`WaveletPyramid::l1`].
pub fn pyramid_l1<T: Real>(pyr: &WaveletPyramid<T>) -> T {
    pyr.l1()
}

/// Filters converted to the working scalar type.
struct Bank<T> {
    h0o: Vec<T>,
    h1o: Vec<T>,
    g0o: Vec<T>,
    g1o: Vec<T>,
    h0a: Vec<T>,
    h0b: Vec<T>,
    h1a: Vec<T>,
    h1b: Vec<T>,
    g0a: Vec<T>,
    g0b: Vec<T>,
    g1a: Vec<T>,
    g1b: Vec<T>,
}

impl<T: Real> Bank<T> {
    fn new(fb: &FilterBank) -> Result<Self> {
        fb.validate()?;
        let cv = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let q = &fb.qshift;
        Ok(Bank {
            h0o: cv(&fb.level1.h0),
            h1o: cv(&fb.level1.h1),
            g0o: cv(&fb.level1.g0),
            g1o: cv(&fb.level1.g1),
            h0a: cv(&q.h0a),
            h0b: cv(&q.h0b),
            h1a: cv(&q.h1a),
            h1b: cv(&q.h1b),
            g0a: cv(&q.g0a),
            g0b: cv(&q.g0b),
            g1a: cv(&q.g1a),
            g1b: cv(&q.g1b),
        })
    }
}

/// Packs each 2x2 quad `[a b; c d]` into the complex pair
/// `(p - q, p + q)` with `p = (a + jb)/√2`, `q = (d - jc)/√2`.
fn q2c<T: Real>(y: &Array2<T>) -> (Array2<Complex<T>>, Array2<Complex<T>>) {
    let (r, c) = y.dim();
    let k = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let a = y.slice(s![0..r;2, 0..c;2]);
    let b = y.slice(s![0..r;2, 1..c;2]);
    let cc = y.slice(s![1..r;2, 0..c;2]);
    let d = y.slice(s![1..r;2, 1..c;2]);
    let p = Zip::from(&a)
        .and(&b)
        .map_collect(|&a, &b| Complex::new(a * k, b * k));
    let q = Zip::from(&d)
        .and(&cc)
        .map_collect(|&d, &c| Complex::new(d * k, -c * k));
    let lo = Zip::from(&p).and(&q).map_collect(|&p, &q| p - q);
    let hi = Zip::from(&p).and(&q).map_collect(|&p, &q| p + q);
    (lo, hi)
}

/// Inverse of [`q2c`].
fn c2q<T: Real>(w0: &Array2<Complex<T>>, w1: &Array2<Complex<T>>) -> Array2<T> {
    let (r, c) = w0.dim();
    let k = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let mut x = Array2::zeros((2 * r, 2 * c));
    for i in 0..r {
        for j in 0..c {
            let p = (w0[[i, j]] + w1[[i, j]]) * k;
            let q = (w0[[i, j]] - w1[[i, j]]) * k;
            x[[2 * i, 2 * j]] = p.re;
            x[[2 * i, 2 * j + 1]] = p.im;
            x[[2 * i + 1, 2 * j]] = q.im;
            x[[2 * i + 1, 2 * j + 1]] = -q.re;
        }
    }
    x
}

/// Builds the six-band array from the horizontal, diagonal and vertical
/// quad images.
fn assemble<T: Real>(horiz: &Array2<T>, diag: &Array2<T>, vert: &Array2<T>) -> Subbands<T> {
    let (h0, h5) = q2c(horiz);
    let (d1, d4) = q2c(diag);
    let (v2, v3) = q2c(vert);
    [h0, d1, v2, v3, d4, h5]
}

/// Checks that a grid can be decomposed `levels` times.
pub fn check_decomposable(dim: (usize, usize), levels: usize) -> Result<()> {
    if levels < 1 {
        return Err(Error::param("at least one decomposition level is required"));
    }
    let q = 1usize << levels;
    let (r, c) = dim;
    if r == 0 || c == 0 || r % q != 0 || c % q != 0 {
        return Err(Error::Dimension(format!(
            "{r}x{c} grid is not divisible by 2^{levels} = {q}"
        )));
    }
    Ok(())
}

/// Forward transform `B x`.
pub fn dtcwt_forward<T: Real>(
    x: ArrayView2<T>,
    levels: usize,
    fb: &FilterBank,
) -> Result<WaveletPyramid<T>> {
    check_decomposable(x.dim(), levels)?;
    let k = Bank::<T>::new(fb)?;

    let lo = colfilter(x, &k.h0o);
    let hi = colfilter(x, &k.h1o);
    let mut lolo = along_rows(lo.view(), |v| colfilter(v, &k.h0o));
    let horiz = along_rows(hi.view(), |v| colfilter(v, &k.h0o));
    let diag = along_rows(hi.view(), |v| colfilter(v, &k.h1o));
    let vert = along_rows(lo.view(), |v| colfilter(v, &k.h1o));
    let mut highpasses = vec![assemble(&horiz, &diag, &vert)];

    for _ in 1..levels {
        let lo = coldfilt(lolo.view(), &k.h0b, &k.h0a);
        let hi = coldfilt(lolo.view(), &k.h1b, &k.h1a);
        lolo = along_rows(lo.view(), |v| coldfilt(v, &k.h0b, &k.h0a));
        let horiz = along_rows(hi.view(), |v| coldfilt(v, &k.h0b, &k.h0a));
        let diag = along_rows(hi.view(), |v| coldfilt(v, &k.h1b, &k.h1a));
        let vert = along_rows(lo.view(), |v| coldfilt(v, &k.h1b, &k.h1a));
        highpasses.push(assemble(&horiz, &diag, &vert));
    }

    Ok(WaveletPyramid {
        lowpass: lolo,
        highpasses,
    })
}

/// Inverse transform `B⁻¹ W`; a left inverse of [`dtcwt_forward`].
pub fn dtcwt_inverse<T: Real>(pyr: &WaveletPyramid<T>, fb: &FilterBank) -> Result<Array2<T>> {
    let levels = pyr.levels();
    if levels == 0 {
        return Err(Error::param("pyramid has no levels"));
    }
    check_layout(pyr)?;
    let k = Bank::<T>::new(fb)?;

    let mut z = pyr.lowpass.clone();
    for level in (1..levels).rev() {
        let b = &pyr.highpasses[level];
        let lh = c2q(&b[0], &b[5]);
        let hl = c2q(&b[2], &b[3]);
        let hh = c2q(&b[1], &b[4]);
        let y1 = colifilt(z.view(), &k.g0b, &k.g0a) + colifilt(lh.view(), &k.g1b, &k.g1a);
        let y2 = colifilt(hl.view(), &k.g0b, &k.g0a) + colifilt(hh.view(), &k.g1b, &k.g1a);
        z = along_rows(y1.view(), |v| colifilt(v, &k.g0b, &k.g0a))
            + along_rows(y2.view(), |v| colifilt(v, &k.g1b, &k.g1a));
    }

    let b = &pyr.highpasses[0];
    let lh = c2q(&b[0], &b[5]);
    let hl = c2q(&b[2], &b[3]);
    let hh = c2q(&b[1], &b[4]);
    let y1 = colfilter(z.view(), &k.g0o) + colfilter(lh.view(), &k.g1o);
    let y2 = colfilter(hl.view(), &k.g0o) + colfilter(hh.view(), &k.g1o);
    Ok(along_rows(y1.view(), |v| colfilter(v, &k.g0o))
        + along_rows(y2.view(), |v| colfilter(v, &k.g1o)))
}

fn check_layout<T: Real>(pyr: &WaveletPyramid<T>) -> Result<()> {
    let (r1, c1) = pyr.highpasses[0][0].dim();
    let (rows, cols) = (2 * r1, 2 * c1);
    for (level, lv) in pyr.highpasses.iter().enumerate() {
        let want = (rows >> (level + 1), cols >> (level + 1));
        if let Some(bad) = lv.iter().find(|b| b.dim() != want) {
            return Err(Error::Shape {
                expected: want,
                actual: bad.dim(),
            });
        }
    }
    let levels = pyr.levels();
    let want = (rows >> (levels - 1), cols >> (levels - 1));
    if pyr.lowpass.dim() != want {
        return Err(Error::Shape {
            expected: want,
            actual: pyr.lowpass.dim(),
        });
    }
    Ok(())
}
