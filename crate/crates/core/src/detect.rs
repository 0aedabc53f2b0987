//! Wake detection: preprocess, solve, pick sinogram features, validate.
//!
//! The ship sits at the image centre and every wake is a half-line leaving
//! it, so features are searched in a narrow offset band around `r = 0`.
//! The turbulent wake is the deepest trough; arms are local maxima at set
//! angular distances from it, one slot on each side (slot 1 counter-clockwise).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{center_disc, image_mean, Image, Sinogram};
use crate::solver::{fb_solve, SolveOutput, SolverConfig};
use crate::wake::{
    angle_diff, DetectionReport, HalfLine, Side, SolverDiagnostics, WakeHypothesis, WakeType,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Ship mask radius in pixels. Default 5% of the smaller side.
    pub mask_radius: Option<f64>,
    /// Largest `|r|` searched for wake lines, pixels.
    pub search_radius: f64,
    /// `|Δθ|` range from the turbulent angle for narrow-V arms, degrees.
    pub narrow_window: (f64, f64),
    /// `|Δθ|` range for Kelvin arms, degrees.
    pub kelvin_window: (f64, f64),
    /// Bright arms validate when merit exceeds this.
    pub margin: f64,
    /// The turbulent wake validates when merit is below this.
    pub turbulent_threshold: f64,
    /// Validate every turbulent hypothesis regardless of merit.
    pub accept_any_turbulent: bool,
    /// Narrow-V arms take one slot per side of the turbulent angle; when
    /// false the two strongest peaks fill both slots.
    pub straddle: bool,
    /// A local maximum must exceed the sinogram mean by this many standard
    /// deviations.
    pub peak_sigma: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            mask_radius: None,
            search_radius: 2.0,
            narrow_window: (2.0, 10.0),
            kelvin_window: (14.0, 22.0),
            margin: 0.1,
            turbulent_threshold: 0.0,
            accept_any_turbulent: false,
            straddle: true,
            peak_sigma: 5.0,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("narrow", self.narrow_window),
            ("kelvin", self.kelvin_window),
        ] {
            if !(lo > 0.0 && lo <= hi && hi < 90.0) {
                return Err(Error::param(format!(
                    "{name} window ({lo}, {hi}) must satisfy 0 < lo <= hi < 90"
                )));
            }
        }
        let (n, k) = (self.narrow_window, self.kelvin_window);
        if n.0 <= k.1 && k.0 <= n.1 {
            return Err(Error::param("narrow-V and Kelvin windows overlap"));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::param(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        for (name, v) in [
            ("mask_radius", self.mask_radius),
            ("search_radius", Some(self.search_radius)),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::param(format!("{name} must be >= 0, got {v}")));
                }
            }
        }
        if !(self.peak_sigma.is_finite() && self.peak_sigma >= 0.0) {
            return Err(Error::param("peak_sigma must be >= 0"));
        }
        Ok(())
    }

    pub fn mask_radius_for(&self, width: usize, height: usize) -> f64 {
        self.mask_radius.unwrap_or(0.05 * width.min(height) as f64)
    }
}

/// Fills the ship disc with the mean of the remaining pixels, then
/// subtracts that mean.
pub fn preprocess(img: &Image<f64>, cfg: &DetectConfig) -> Result<Image<f64>> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let radius = cfg.mask_radius_for(w, h);
    if radius >= w.min(h) as f64 / 2.0 {
        return Err(Error::param(format!(
            "mask radius {radius} must be below half the smaller side ({})",
            w.min(h) as f64 / 2.0
        )));
    }
    let disc = center_disc(w, h, radius);
    let mean = image_mean(img, Some(&disc))?;
    let mut data = img.data().clone();
    ndarray::Zip::from(&mut data).and(&disc).for_each(|v, &m| {
        *v = if m { 0.0 } else { *v - mean };
    });
    Ok(Image::new(data)?.with_pixel_spacing(img.pixel_spacing()))
}

/// Bilinear samples at unit spacing from the foot of `line` outward,
/// clipped to the image.
pub fn sample_halfline(img: &Image<f64>, line: &HalfLine) -> Result<Vec<f64>> {
    sample_halfline_beyond(img, line, 0.0)
}

/// As [`sample_halfline`], dropping samples closer than `radius` to the
/// image centre.
pub fn sample_halfline_beyond(img: &Image<f64>, line: &HalfLine, radius: f64) -> Result<Vec<f64>> {
    let (fx, fy) = line.foot();
    let (dx, dy) = line.direction();
    let reach = (img.width() as f64).hypot(img.height() as f64);
    let mut out = Vec::new();
    let mut entered = false;
    for step in 0..=reach.ceil() as usize {
        let s = step as f64;
        let (x, y) = (fx + s * dx, fy + s * dy);
        match img.sample(x, y) {
            Some(v) => {
                entered = true;
                if x.hypot(y) >= radius {
                    out.push(v);
                }
            }
            None if entered => break,
            None => {}
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!(
            "half-line r={} theta={} has no samples inside the image",
            line.r, line.theta
        )));
    }
    Ok(out)
}

/// `mean(samples) / image_mean − 1`.
pub fn merit_index(samples: &[f64], image_mean: f64) -> Result<f64> {
    if !(image_mean > 0.0) {
        return Err(Error::param(format!(
            "image mean must be > 0, got {image_mean}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let m = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(m / image_mean - 1.0)
}

/// Threshold rule for one slot.
pub fn validate(kind: WakeType, merit: f64, cfg: &DetectConfig) -> bool {
    if kind.is_bright() {
        merit > cfg.margin
    } else {
        cfg.accept_any_turbulent || merit < cfg.turbulent_threshold
    }
}

/// Sinogram cells eligible as wake lines: `|r| ≤ radius`.
fn offset_band(offsets: &[f64], radius: Option<f64>) -> Vec<usize> {
    (0..offsets.len())
        .filter(|&i| radius.is_none_or(|rad| offsets[i].abs() <= rad))
        .collect()
}

/// Value at `(i, a + da)` with the angle axis wrapped; crossing 180° mirrors
/// the offset.
fn wrapped(x: &Array2<f64>, i: usize, a: usize, di: isize, da: isize) -> Option<f64> {
    let (no, na) = x.dim();
    let mut a2 = a as isize + da;
    let mut i2 = i as isize + di;
    if a2 < 0 || a2 >= na as isize {
        a2 = a2.rem_euclid(na as isize);
        i2 = no as isize - 1 - i2;
    }
    if i2 < 0 || i2 >= no as isize {
        return None;
    }
    Some(x[[i2 as usize, a2 as usize]])
}

fn is_local_max(x: &Array2<f64>, i: usize, a: usize) -> bool {
    let v = x[[i, a]];
    for di in -1..=1isize {
        for da in -1..=1isize {
            if (di, da) != (0, 0) && wrapped(x, i, a, di, da).is_some_and(|n| n > v) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy)]
struct Peak {
    r: f64,
    theta: f64,
    value: f64,
    delta: f64,
}

fn placeholder(kind: WakeType, r: f64, theta: f64) -> WakeHypothesis {
    let line = HalfLine::normalized(r, theta, Side::Positive);
    WakeHypothesis {
        kind,
        r: line.r,
        theta: line.theta,
        side: line.side,
        merit: 0.0,
        validated: false,
        candidate: false,
    }
}

fn from_peak(kind: WakeType, p: Option<Peak>, theta_t: f64, nominal: f64) -> WakeHypothesis {
    match p {
        Some(p) => WakeHypothesis {
            candidate: true,
            ..placeholder(kind, p.r, p.theta)
        },
        None => placeholder(kind, 0.0, theta_t + nominal),
    }
}

/// Locates the five slots in `x` within `|r| ≤ radius` (all offsets when
/// `None`). Sides are left at [`Side::Positive`]; see [`assign_sides`].
pub fn find_hypotheses_within(
    x: &Sinogram<f64>,
    radius: Option<f64>,
    cfg: &DetectConfig,
) -> Result<[WakeHypothesis; 5]> {
    cfg.validate()?;
    let data = x.data();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "sinogram contains non-finite values".into(),
        ));
    }
    let offsets = x.offsets();
    let angles = x.angles();
    let band = offset_band(offsets, radius);
    if band.is_empty() {
        return Err(Error::param("search band contains no offsets"));
    }
    let (mut ti, mut ta) = (band[0], 0);
    for &i in &band {
        for a in 0..angles.len() {
            if data[[i, a]] < data[[ti, ta]] {
                (ti, ta) = (i, a);
            }
        }
    }
    let theta_t = angles[ta];
    let turbulent = WakeHypothesis {
        candidate: true,
        ..placeholder(WakeType::Turbulent, offsets[ti], theta_t)
    };

    let n = data.len() as f64;
    let mean = data.sum() / n;
    let sd = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let floor = mean + cfg.peak_sigma * sd;
    let mut peaks = Vec::new();
    for &i in &band {
        for a in 0..angles.len() {
            let v = data[[i, a]];
            if v >= floor && v > mean && is_local_max(data, i, a) {
                peaks.push(Peak {
                    r: offsets[i],
                    theta: angles[a],
                    value: v,
                    delta: angle_diff(angles[a], theta_t),
                });
            }
        }
    }
    let best = |lo: f64, hi: f64, sign: f64| {
        peaks
            .iter()
            .filter(|p| {
                let d = p.delta * sign;
                d >= lo && d <= hi
            })
            .copied()
            .max_by(|a, b| a.value.total_cmp(&b.value))
    };
    let (nlo, nhi) = cfg.narrow_window;
    let (mut n1, mut n2) = (best(nlo, nhi, 1.0), best(nlo, nhi, -1.0));
    if !cfg.straddle {
        let mut both: Vec<Peak> = peaks
            .iter()
            .filter(|p| (nlo..=nhi).contains(&p.delta.abs()))
            .copied()
            .collect();
        both.sort_by(|a, b| b.value.total_cmp(&a.value));
        both.truncate(2);
        both.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        n1 = both.first().copied();
        n2 = both.get(1).copied();
    }
    let (klo, khi) = cfg.kelvin_window;
    let mid_n = (nlo + nhi) / 2.0;
    let mid_k = (klo + khi) / 2.0;
    Ok([
        turbulent,
        from_peak(WakeType::NarrowV1, n1, theta_t, mid_n),
        from_peak(WakeType::NarrowV2, n2, theta_t, -mid_n),
        from_peak(WakeType::Kelvin1, best(klo, khi, 1.0), theta_t, mid_k),
        from_peak(WakeType::Kelvin2, best(klo, khi, -1.0), theta_t, -mid_k),
    ])
}

/// [`find_hypotheses_within`] over the whole offset range.
pub fn find_hypotheses(x: &Sinogram<f64>, cfg: &DetectConfig) -> Result<[WakeHypothesis; 5]> {
    find_hypotheses_within(x, None, cfg)
}

/// Picks, for every hypothesis, the half whose mean deviation on the
/// mean-centred image is larger in magnitude.
pub fn assign_sides(
    hyps: &mut [WakeHypothesis; 5],
    centred: &Image<f64>,
    skip_radius: f64,
) -> Result<()> {
    for h in hyps.iter_mut() {
        let score = |side: Side| -> f64 {
            sample_halfline_beyond(centred, &HalfLine { side, ..h.line() }, skip_radius)
                .map(|s| (s.iter().sum::<f64>() / s.len() as f64).abs())
                .unwrap_or(f64::NEG_INFINITY)
        };
        h.side = if score(Side::Negative) > score(Side::Positive) {
            Side::Negative
        } else {
            Side::Positive
        };
    }
    Ok(())
}

/// Everything the pipeline produced for one image.
#[derive(Debug, Clone)]
pub struct Detection {
    pub report: DetectionReport,
    pub solve: SolveOutput<f64>,
}

/// Preprocess, solve, locate, measure merit on `img`, validate.
pub fn detect_pipeline(
    id: &str,
    img: &Image<f64>,
    scfg: &SolverConfig,
    dcfg: &DetectConfig,
) -> Result<Detection> {
    dcfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let centred = preprocess(img, dcfg)?;
    let solve = fb_solve(&centred, scfg)?;
    let mut hyps = find_hypotheses_within(&solve.sinogram, Some(dcfg.search_radius), dcfg)?;
    let radius = dcfg.mask_radius_for(w, h);
    assign_sides(&mut hyps, &centred, radius)?;
    let mean = image_mean(img, Some(&center_disc(w, h, radius)))?;
    for hyp in hyps.iter_mut() {
        hyp.merit = merit_index(&sample_halfline_beyond(img, &hyp.line(), radius)?, mean)?;
        hyp.validated = hyp.candidate && validate(hyp.kind, hyp.merit, dcfg);
    }
    let trace = &solve.trace;
    let diagnostics = SolverDiagnostics {
        iterations: trace.iterations(),
        final_epsilon: trace.final_epsilon().unwrap_or(f64::NAN),
        final_cost: trace.final_cost().unwrap_or(f64::NAN),
    };
    if !(diagnostics.final_epsilon.is_finite() || diagnostics.final_epsilon == f64::INFINITY)
        || !diagnostics.final_cost.is_finite()
    {
        return Err(Error::Numerical("solver diagnostics are not finite".into()));
    }
    Ok(Detection {
        report: DetectionReport {
            id: id.to_string(),
            mode: scfg.penalty,
            hypotheses: hyps,
            diagnostics,
        },
        solve,
    })
}

/// Gray levels used by [`overlay`].
pub const OVERLAY_TURBULENT: f64 = 0.0;
pub const OVERLAY_NARROW: f64 = 1.0;
pub const OVERLAY_KELVIN: f64 = 0.85;

/// The image scaled into `[0.2, 0.7]` with validated half-lines drawn on
/// top: turbulent black, narrow-V white, Kelvin light gray.
pub fn overlay(img: &Image<f64>, report: &DetectionReport) -> Array2<f64> {
    let data = img.data();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = data.mapv(|v| 0.2 + 0.5 * (v - lo) / span);
    let (cx, cy) = img.center();
    let (h, w) = out.dim();
    for hyp in report.hypotheses.iter().filter(|h| h.validated) {
        let level = match hyp.kind {
            WakeType::Turbulent => OVERLAY_TURBULENT,
            WakeType::NarrowV1 | WakeType::NarrowV2 => OVERLAY_NARROW,
            WakeType::Kelvin1 | WakeType::Kelvin2 => OVERLAY_KELVIN,
        };
        let line = hyp.line();
        let (fx, fy) = line.foot();
        let (dx, dy) = line.direction();
        let reach = (w as f64).hypot(h as f64);
        let mut s = 0.0;
        while s <= reach {
            let col = (fx + s * dx + cx).round();
            let row = (cy - (fy + s * dy)).round();
            if col >= 0.0 && row >= 0.0 && (col as usize) < w && (row as usize) < h {
                out[[row as usize, col as usize]] = level;
            }
            s += 0.5;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radon::RadonGeometry;

    fn sino_with(features: &[(f64, f64, f64)]) -> Sinogram<f64> {
        let geo = RadonGeometry::new(64, 64);
        let s = geo.empty_sinogram::<f64>();
        let offsets = s.offsets().to_vec();
        let angles = s.angles().to_vec();
        let data = Array2::from_shape_fn(geo.sinogram_dim(), |(i, a)| {
            features
                .iter()
                .map(|&(r, t, amp)| {
                    let dr = offsets[i] - r;
                    let dt = angle_diff(angles[a], t);
                    amp * (-(dr * dr + dt * dt) / 2.0).exp()
                })
                .sum()
        });
        s.with_data(data).unwrap()
    }

    #[test]
    fn trough_becomes_turbulent_hypothesis() {
        let h =
            find_hypotheses(&sino_with(&[(0.0, 30.0, -5.0)]), &DetectConfig::default()).unwrap();
        assert_eq!((h[0].r, h[0].theta), (0.0, 30.0));
        assert!(h[1..].iter().all(|h| !h.candidate));
    }

    #[test]
    fn flanking_peaks_fill_narrow_slots() {
        let s = sino_with(&[(0.0, 30.0, -5.0), (0.0, 34.0, 4.0), (0.0, 26.0, 3.0)]);
        let h = find_hypotheses(&s, &DetectConfig::default()).unwrap();
        assert_eq!(h[1].theta, 34.0);
        assert_eq!(h[2].theta, 26.0);
        assert!(h[1].candidate && h[2].candidate);
    }

    #[test]
    fn kelvin_peaks_fill_kelvin_slots() {
        let s = sino_with(&[(0.0, 30.0, -5.0), (0.0, 49.0, 4.0), (0.0, 11.0, 3.0)]);
        let h = find_hypotheses(&s, &DetectConfig::default()).unwrap();
        assert_eq!((h[3].theta, h[4].theta), (49.0, 11.0));
        assert!(!h[1].candidate && !h[2].candidate);
    }

    #[test]
    fn validation_thresholds() {
        let cfg = DetectConfig::default();
        assert!(validate(WakeType::NarrowV1, 0.2, &cfg));
        assert!(!validate(WakeType::NarrowV1, 0.05, &cfg));
        assert!(validate(WakeType::Turbulent, -0.3, &cfg));
        assert!(!validate(WakeType::Turbulent, 0.1, &cfg));
        assert!(validate(
            WakeType::Turbulent,
            0.1,
            &DetectConfig {
                accept_any_turbulent: true,
                ..cfg
            }
        ));
    }

    #[test]
    fn merit_examples() {
        assert_eq!(merit_index(&[2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!((merit_index(&[2.4], 2.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(merit_index(&[1.0], 2.0).unwrap(), -0.5);
        assert!(merit_index(&[1.0], 0.0).is_err());
    }

    #[test]
    fn vertical_half_line_walks_up_the_rows() {
        let img = Image::new(Array2::from_shape_fn((64, 64), |(i, _)| i as f64)).unwrap();
        let s = sample_halfline(
            &img,
            &HalfLine {
                r: 0.0,
                theta: 0.0,
                side: Side::Positive,
            },
        )
        .unwrap();
        let expect: Vec<f64> = (0..32).map(|k| 31.5 - k as f64).collect();
        assert_eq!(s, expect);
        let diag = 64f64.hypot(64.0);
        assert!(s.len() as f64 <= diag);
    }

    #[test]
    fn preprocess_zeroes_constant_images_and_the_ship() {
        let cfg = DetectConfig::default();
        let flat = Image::new(Array2::from_elem((64, 64), 3.0)).unwrap();
        assert!(preprocess(&flat, &cfg)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let mut blob = Array2::from_shape_fn((64, 64), |(i, j)| 1.0 + ((i * 7 + j * 3) % 5) as f64);
        let disc = center_disc(64, 64, cfg.mask_radius_for(64, 64));
        ndarray::Zip::from(&mut blob).and(&disc).for_each(|v, &m| {
            if m {
                *v = 100.0;
            }
        });
        let img = Image::new(blob.clone()).unwrap();
        let pre = preprocess(&img, &cfg).unwrap();
        let inside = pre
            .data()
            .iter()
            .zip(disc.iter())
            .filter(|(_, &m)| m)
            .fold(f64::MIN, |a, (&v, _)| a.max(v));
        assert_eq!(inside, 0.0);
        let mean = image_mean(&img, Some(&disc)).unwrap();
        for ((v, o), &m) in pre.data().iter().zip(blob.iter()).zip(disc.iter()) {
            if !m {
                assert_eq!(*v + mean, *o);
            }
        }
        assert!(preprocess(
            &img,
            &DetectConfig {
                mask_radius: Some(32.0),
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let cfg = DetectConfig {
            narrow_window: (1.0, 15.0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_images_sample_constant_and_far_lines_fail() {
        let img = Image::new(Array2::from_elem((32, 48), 2.5)).unwrap();
        for theta in [0.0, 33.0, 90.0, 151.0] {
            for side in [Side::Positive, Side::Negative] {
                let s = sample_halfline(
                    &img,
                    &HalfLine {
                        r: 3.0,
                        theta,
                        side,
                    },
                )
                .unwrap();
                assert!(!s.is_empty() && s.iter().all(|&v| (v - 2.5).abs() < 1e-12));
                assert!(s.len() as f64 <= 32f64.hypot(48.0));
            }
        }
        assert!(sample_halfline(
            &img,
            &HalfLine {
                r: 100.0,
                theta: 10.0,
                side: Side::Positive
            }
        )
        .is_err());
    }

    #[test]
    fn turbulent_angle_is_the_global_argmin_angle() {
        use rand::{Rng, SeedableRng};
        let geo = RadonGeometry::new(32, 32);
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data = Array2::from_shape_fn(geo.sinogram_dim(), |_| rng.random_range(-1.0..1.0));
            let s = geo.empty_sinogram::<f64>().with_data(data.clone()).unwrap();
            let h = find_hypotheses(&s, &DetectConfig::default()).unwrap();
            let ((_, a), _) = data
                .indexed_iter()
                .fold(((0, 0), f64::INFINITY), |best, (k, &v)| {
                    if v < best.1 {
                        (k, v)
                    } else {
                        best
                    }
                });
            assert_eq!(h[0].theta, s.angles()[a]);
            let kinds: Vec<WakeType> = h.iter().map(|h| h.kind).collect();
            assert_eq!(kinds, WakeType::ALL);
        }
    }

    proptest::proptest! {
        #[test]
        fn merit_ignores_global_scale(
            samples in proptest::collection::vec(0.01f64..10.0, 1..40),
            mean in 0.1f64..5.0,
            c in 0.01f64..100.0,
        ) {
            let a = merit_index(&samples, mean).unwrap();
            let scaled: Vec<f64> = samples.iter().map(|v| v * c).collect();
            let b = merit_index(&scaled, mean * c).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn bright_validation_is_monotone(m1 in -2.0f64..2.0, m2 in -2.0f64..2.0, slot in 1usize..5) {
            let cfg = DetectConfig::default();
            let kind = WakeType::ALL[slot];
            let (hi, lo) = if m1 >= m2 { (m1, m2) } else { (m2, m1) };
            if validate(kind, lo, &cfg) {
                proptest::prop_assert!(validate(kind, hi, &cfg));
            }
        }
    }
}
