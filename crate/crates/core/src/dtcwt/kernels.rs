//! Column filtering kernels with half-sample symmetric extension.
//!
//! All three kernels filter along axis 0; row filtering goes through a
//! transposed copy. The decimating and interpolating pair work on the
//! interleaved two-tree layout: even and odd output rows belong to
//! different trees, which is how both trees share a single grid from
//! level two onwards.

use ndarray::{Array2, ArrayView2, Axis};

use crate::scalar::Real;

/// Half-sample symmetric reflection of an index into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

#[inline]
fn axpy<T: Real>(out: &mut ndarray::ArrayViewMut1<T>, a: T, x: ndarray::ArrayView1<T>) {
    if a != T::zero() {
        out.scaled_add(a, &x);
    }
}

/// Undecimated filtering with an odd-length filter, output aligned with
/// input (same number of rows).
pub(crate) fn colfilter<T: Real>(x: ArrayView2<T>, h: &[T]) -> Array2<T> {
    let (r, c) = x.dim();
    let m2 = (h.len() / 2) as isize;
    let mut y = Array2::zeros((r, c));
    for (k, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            let src = reflect(k as isize + m2 - j as isize, r);
            axpy(&mut row, hj, x.row(src));
        }
    }
    y
}

fn polyphase<T: Real>(h: &[T]) -> (Vec<T>, Vec<T>) {
    let odd = h.iter().step_by(2).copied().collect();
    let even = h.iter().skip(1).step_by(2).copied().collect();
    (odd, even)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Decimate-by-two filtering of both trees. `ha` acts on one polyphase
/// stream and `hb = reverse(ha)` on the other; the outputs interleave.
/// Requires `rows % 4 == 0` and even filter length.
pub(crate) fn coldfilt<T: Real>(x: ArrayView2<T>, ha: &[T], hb: &[T]) -> Array2<T> {
    let (r, c) = x.dim();
    debug_assert!(r.is_multiple_of(4) && ha.len() == hb.len() && ha.len().is_multiple_of(2));
    let m = ha.len() as isize;
    let taps = ha.len() / 2;
    let (hao, hae) = polyphase(ha);
    let (hbo, hbe) = polyphase(hb);
    let (s1, s2) = if dot(ha, hb) > T::zero() {
        (0, 1)
    } else {
        (1, 0)
    };

    // Row of the extended signal feeding position `t`.
    let ext = |t: isize| reflect(t - m, r);
    let t_at = |n: usize| 5 + 4 * n as isize;

    let r2 = r / 2;
    let mut y = Array2::zeros((r2, c));
    for n in 0..r / 4 {
        {
            let mut row = y.row_mut(2 * n + s1);
            for j in 0..taps {
                let t = t_at(n + taps - 1 - j);
                axpy(&mut row, hao[j], x.row(ext(t - 1)));
                axpy(&mut row, hae[j], x.row(ext(t - 3)));
            }
        }
        let mut row = y.row_mut(2 * n + s2);
        for j in 0..taps {
            let t = t_at(n + taps - 1 - j);
            axpy(&mut row, hbo[j], x.row(ext(t)));
            axpy(&mut row, hbe[j], x.row(ext(t - 2)));
        }
    }
    debug_assert!(c == 0 || y.nrows() == r2);
    y
}

/// Interpolate-by-two filtering of both trees; inverse partner of
/// [`coldfilt`]. Requires even rows and filter length `4k + 2`.
pub(crate) fn colifilt<T: Real>(x: ArrayView2<T>, ha: &[T], hb: &[T]) -> Array2<T> {
    let (r, c) = x.dim();
    debug_assert!(r % 2 == 0 && ha.len() == hb.len() && ha.len() % 4 == 2);
    let m2 = (ha.len() / 2) as isize;
    let taps = ha.len() / 2;
    let (hao, hae) = polyphase(ha);
    let (hbo, hbe) = polyphase(hb);
    let positive = dot(ha, hb) > T::zero();

    let ext = |t: isize| reflect(t - m2, r);
    let t_at = |n: usize| 2 + 2 * n as isize;
    let (da, db) = if positive { (0, 1) } else { (1, 0) };

    let mut y = Array2::zeros((2 * r, c));
    for n in 0..r / 2 {
        let base = 4 * n;
        for j in 0..taps {
            let t = t_at(n + taps - 1 - j);
            let ta = ext(t - da);
            let tb = ext(t - db);
            axpy(&mut y.row_mut(base), hao[j], x.row(tb));
            axpy(&mut y.row_mut(base + 1), hbo[j], x.row(ta));
            axpy(&mut y.row_mut(base + 2), hae[j], x.row(tb));
            axpy(&mut y.row_mut(base + 3), hbe[j], x.row(ta));
        }
    }
    y
}

/// Applies a column kernel along axis 1.
pub(crate) fn along_rows<T: Real>(
    x: ArrayView2<T>,
    f: impl FnOnce(ArrayView2<T>) -> Array2<T>,
) -> Array2<T> {
    let xt = x.t().as_standard_layout().into_owned();
    let yt = f(xt.view());
    yt.t().as_standard_layout().into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_repeats_edge_samples() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn colfilter_with_unit_impulse_is_identity() {
        let x = Array2::from_shape_fn((8, 3), |(i, j)| (i * 3 + j) as f64);
        let y = colfilter(x.view(), &[0.0, 1.0, 0.0]);
        assert_eq!(x, y);
    }

    #[test]
    fn colfilter_constant_is_scaled_by_dc_gain() {
        let x = Array2::from_elem((10, 2), 2.0f64);
        let y = colfilter(x.view(), &[0.25, 0.5, 0.25]);
        assert!(y.iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }
}
