//! Synthetic wake scenes with ground truth.
//!
//! A scene is a constant-reflectivity sea with up to five half-line wakes
//! radiating from the ship at the image centre, multiplied by unit-mean
//! gamma speckle. Arms sit at `±half_angle` around the turbulent axis on the
//! same side of the ship; slot 1 of each pair is the counter-clockwise arm.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_dims, grid_center, Image};
use crate::io::{save_raw, write_atomic};
use crate::wake::{GroundTruthAnnotation, HalfLine, Side, WakeLine};

/// Kelvin cusp half-angle `asin(1/3)` in degrees.
pub const KELVIN_HALF_ANGLE: f64 = 19.47;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    /// Multiplicative gamma speckle with the scene's look count.
    Speckle,
    /// Additive zero-mean Gaussian noise.
    Gaussian {
        sigma: f64,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub background: f64,
    pub looks: u32,
    pub noise: NoiseModel,
    pub turbulent_contrast: f64,
    pub narrow_contrast: f64,
    pub kelvin_contrast: f64,
    /// Turbulent wake angle, degrees.
    pub theta: f64,
    /// Side of the ship the wakes trail on.
    pub side: Side,
    pub narrow_half_angle: f64,
    pub kelvin_half_angle: f64,
    /// Full width of every wake band, pixels.
    pub wake_width: f64,
    pub visible: [bool; 5],
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 128,
            height: 128,
            background: 1.0,
            looks: 4,
            noise: NoiseModel::Speckle,
            turbulent_contrast: 0.4,
            narrow_contrast: 1.8,
            kelvin_contrast: 1.5,
            theta: 30.0,
            side: Side::Positive,
            narrow_half_angle: 3.0,
            kelvin_half_angle: KELVIN_HALF_ANGLE,
            wake_width: 3.0,
            visible: [true, true, false, false, false],
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.width, self.height)?;
        let finite_pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        finite_pos("background", self.background)?;
        finite_pos("wake_width", self.wake_width)?;
        if self.looks < 1 {
            return Err(Error::param("looks must be at least 1"));
        }
        if !(self.turbulent_contrast > 0.0 && self.turbulent_contrast <= 1.0) {
            return Err(Error::param(format!(
                "turbulent contrast must be in (0, 1], got {}",
                self.turbulent_contrast
            )));
        }
        for (name, c) in [
            ("narrow-V", self.narrow_contrast),
            ("Kelvin", self.kelvin_contrast),
        ] {
            if !(c.is_finite() && c >= 1.0) {
                return Err(Error::param(format!(
                    "{name} contrast must be >= 1, got {c}"
                )));
            }
        }
        for (name, a) in [
            ("narrow-V", self.narrow_half_angle),
            ("Kelvin", self.kelvin_half_angle),
        ] {
            if !(a > 0.0 && a < 90.0) {
                return Err(Error::param(format!(
                    "{name} half-angle must be in (0, 90), got {a}"
                )));
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::param("turbulent angle must be finite"));
        }
        if let NoiseModel::Gaussian { sigma } = self.noise {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::param(format!(
                    "noise sigma must be >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }

    /// True placement of every slot, visible or not.
    pub fn wake_lines(&self) -> [WakeLine; 5] {
        let at = |offset: f64, contrast: f64| WakeLine {
            line: HalfLine::normalized(0.0, self.theta + offset, self.side),
            contrast,
        };
        [
            at(0.0, self.turbulent_contrast),
            at(self.narrow_half_angle, self.narrow_contrast),
            at(-self.narrow_half_angle, self.narrow_contrast),
            at(self.kelvin_half_angle, self.kelvin_contrast),
            at(-self.kelvin_half_angle, self.kelvin_contrast),
        ]
    }
}

/// Unit-mean gamma multipliers with shape `looks` and scale `1/looks`.
pub fn speckle_field(width: usize, height: usize, looks: u32, seed: u64) -> Result<Array2<f64>> {
    if looks < 1 {
        return Err(Error::param("looks must be at least 1"));
    }
    let l = f64::from(looks);
    let law = Gamma::new(l, 1.0 / l).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Array2::from_shape_simple_fn((height, width), || {
        law.sample(&mut rng)
    }))
}

/// Noise-free reflectivity map.
pub fn reflectivity(p: &SceneParams) -> Result<Array2<f64>> {
    p.validate()?;
    let (cx, cy) = grid_center(p.width, p.height);
    let half = p.wake_width / 2.0;
    let wakes: Vec<WakeLine> = p
        .wake_lines()
        .into_iter()
        .zip(p.visible)
        .filter_map(|(w, v)| v.then_some(w))
        .collect();
    Ok(Array2::from_shape_fn((p.height, p.width), |(i, j)| {
        let x = j as f64 - cx;
        let y = cy - i as f64;
        let mut v = p.background;
        for w in &wakes {
            let t = w.line.theta.to_radians();
            let (dx, dy) = w.line.direction();
            let across = x * t.cos() + y * t.sin() - w.line.r;
            if across.abs() <= half && x * dx + y * dy > 0.0 {
                v *= w.contrast;
            }
        }
        v
    }))
}

/// Renders one scene and its annotation.
pub fn simulate_scene(p: &SceneParams, id: &str) -> Result<(Image<f64>, GroundTruthAnnotation)> {
    let refl = reflectivity(p)?;
    let data = match p.noise {
        NoiseModel::Speckle => refl * speckle_field(p.width, p.height, p.looks, p.seed)?,
        NoiseModel::Gaussian { sigma } => {
            let law = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            refl.mapv(|v| v + law.sample(&mut rng))
        }
        NoiseModel::None => refl,
    };
    let mut ann = GroundTruthAnnotation::new(id, p.visible);
    for (slot, w) in p.wake_lines().into_iter().enumerate() {
        if p.visible[slot] {
            ann.lines[slot] = Some(w);
        }
    }
    Ok((Image::new(data)?, ann))
}

/// Ranges from which [`make_corpus`] draws scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusParams {
    pub width: usize,
    pub height: usize,
    pub background: f64,
    pub looks: u32,
    pub turbulent_contrast: (f64, f64),
    pub narrow_contrast: (f64, f64),
    pub kelvin_contrast: (f64, f64),
    /// Narrow-V half-angle range, degrees.
    pub narrow_half_angle: (f64, f64),
    pub kelvin_half_angle: f64,
    pub wake_width: f64,
    /// Fraction of scenes in which each slot is visible; the count per slot
    /// is `round(fraction · n)`.
    pub visibility: [f64; 5],
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            width: 128,
            height: 128,
            background: 1.0,
            looks: 4,
            turbulent_contrast: (0.3, 0.6),
            narrow_contrast: (1.5, 2.0),
            kelvin_contrast: (1.3, 1.8),
            narrow_half_angle: (4.0, 7.0),
            kelvin_half_angle: KELVIN_HALF_ANGLE,
            wake_width: 3.0,
            visibility: [1.0, 1.0, 0.0, 9.0 / 22.0, 1.0 / 22.0],
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("turbulent_contrast", self.turbulent_contrast),
            ("narrow_contrast", self.narrow_contrast),
            ("kelvin_contrast", self.kelvin_contrast),
            ("narrow_half_angle", self.narrow_half_angle),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::param(format!(
                    "{name} range ({lo}, {hi}) is not ordered"
                )));
            }
        }
        if let Some(f) = self.visibility.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::param(format!(
                "visibility fraction {f} outside [0, 1]"
            )));
        }
        if self.visibility[0] < 1.0 {
            return Err(Error::param("every ship scene carries a turbulent wake"));
        }
        Ok(())
    }

    /// Draws `n` scene parameter sets from `master_seed`.
    pub fn draw(&self, n: usize, master_seed: u64) -> Result<Vec<SceneParams>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::param("corpus size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        let mut flags = vec![[false; 5]; n];
        for slot in 0..5 {
            let count = (self.visibility[slot] * n as f64).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for &i in &order[..count.min(n)] {
                flags[i][slot] = true;
            }
        }
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let scenes = flags
            .into_iter()
            .map(|visible| {
                let theta = (rng.random_range(0.0..180.0f64) * 10.0).round() / 10.0;
                let side = if rng.random_bool(0.5) {
                    Side::Positive
                } else {
                    Side::Negative
                };
                SceneParams {
                    width: self.width,
                    height: self.height,
                    background: self.background,
                    looks: self.looks,
                    noise: NoiseModel::Speckle,
                    turbulent_contrast: uniform(&mut rng, self.turbulent_contrast),
                    narrow_contrast: uniform(&mut rng, self.narrow_contrast),
                    kelvin_contrast: uniform(&mut rng, self.kelvin_contrast),
                    theta: theta % 180.0,
                    side,
                    narrow_half_angle: uniform(&mut rng, self.narrow_half_angle),
                    kelvin_half_angle: self.kelvin_half_angle,
                    wake_width: self.wake_width,
                    visible,
                    seed: rng.random(),
                }
            })
            .collect();
        Ok(scenes)
    }
}

/// Scene identifier for position `i`.
pub fn scene_id(i: usize) -> String {
    format!("scene_{i:03}")
}

/// File names written by [`make_corpus`].
pub const SUMMARY_FILE: &str = "summary.txt";

/// Table-style listing of annotations with per-column totals.
pub fn summary_table(anns: &[GroundTruthAnnotation]) -> String {
    let mut out = String::from("image T N1 N2 K1 K2\n");
    let mut totals = [0usize; 5];
    for a in anns {
        out.push_str(&a.id);
        for (slot, v) in a.visible.iter().enumerate() {
            out.push_str(if *v { " 1" } else { " 0" });
            totals[slot] += usize::from(*v);
        }
        out.push('\n');
    }
    out.push_str("total");
    for t in totals {
        out.push_str(&format!(" {t}"));
    }
    out.push('\n');
    out
}

/// Writes `n` scenes (`<id>.raw` plus `<id>.txt`) and a summary into `dir`.
pub fn make_corpus(
    dir: &Path,
    n: usize,
    params: &CorpusParams,
    master_seed: u64,
) -> Result<Vec<GroundTruthAnnotation>> {
    let scenes = params.draw(n, master_seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut anns = Vec::with_capacity(n);
    for (i, p) in scenes.iter().enumerate() {
        let id = scene_id(i);
        let (img, ann) = simulate_scene(p, &id)?;
        save_raw(&corpus_path(dir, &id, "raw"), &img)?;
        write_atomic(
            &corpus_path(dir, &id, "txt"),
            format!("{}\n", ann.to_record()).as_bytes(),
        )?;
        anns.push(ann);
    }
    write_atomic(&dir.join(SUMMARY_FILE), summary_table(&anns).as_bytes())?;
    Ok(anns)
}

pub fn corpus_path(dir: &Path, id: &str, ext: &str) -> PathBuf {
    dir.join(format!("{id}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radon::{forward_radon, ProfileFilter, RadonGeometry};
    use crate::wake::angle_diff;

    #[test]
    fn speckle_has_unit_mean_and_inverse_look_variance() {
        let f = speckle_field(256, 256, 16, 3).unwrap();
        let n = f.len() as f64;
        let mean = f.sum() / n;
        let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!((var - 1.0 / 16.0).abs() < 0.15 / 16.0, "{var}");
        assert_eq!(f, speckle_field(256, 256, 16, 3).unwrap());
        assert!(speckle_field(8, 8, 0, 0).is_err());
    }

    #[test]
    fn unit_contrasts_give_pure_speckle() {
        let p = SceneParams {
            turbulent_contrast: 1.0,
            narrow_contrast: 1.0,
            kelvin_contrast: 1.0,
            background: 2.5,
            width: 256,
            height: 256,
            visible: [true; 5],
            ..Default::default()
        };
        let (img, _) = simulate_scene(&p, "s").unwrap();
        let mean = img.data().mean().unwrap();
        assert!((mean / 2.5 - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn annotation_mirrors_requested_flags() {
        let p = SceneParams {
            visible: [true, false, true, true, false],
            ..Default::default()
        };
        let (_, ann) = simulate_scene(&p, "x").unwrap();
        assert_eq!(ann.visible, p.visible);
        assert!(ann.lines[1].is_none() && ann.lines[2].is_some());
    }

    #[test]
    fn arms_wrap_past_180_degrees() {
        let p = SceneParams {
            theta: 178.0,
            side: Side::Positive,
            ..Default::default()
        };
        let lines = p.wake_lines();
        let n1 = lines[1].line;
        assert!((n1.theta - 1.0).abs() < 1e-12);
        assert_eq!(n1.side, Side::Negative);
        let (ax, ay) = lines[0].line.direction();
        let (bx, by) = n1.direction();
        assert!(ax * bx + ay * by > 0.99);
    }

    #[test]
    fn invalid_scene_parameters_are_rejected() {
        let bad = [
            SceneParams {
                turbulent_contrast: 1.5,
                ..Default::default()
            },
            SceneParams {
                narrow_contrast: 0.5,
                ..Default::default()
            },
            SceneParams {
                looks: 0,
                ..Default::default()
            },
            SceneParams {
                width: 31,
                ..Default::default()
            },
            SceneParams {
                kelvin_half_angle: 95.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn drawn_visibility_matches_requested_counts() {
        let scenes = CorpusParams::default().draw(22, 9).unwrap();
        let mut counts = [0usize; 5];
        for s in &scenes {
            for (c, v) in counts.iter_mut().zip(s.visible) {
                *c += usize::from(v);
            }
        }
        assert_eq!(counts, [22, 22, 0, 9, 1]);
    }

    #[test]
    fn dark_turbulent_band_halves_the_mean() {
        let p = SceneParams {
            turbulent_contrast: 0.3,
            looks: 4,
            seed: 11,
            ..Default::default()
        };
        let (img, ann) = simulate_scene(&p, "t").unwrap();
        let line = ann.lines[0].unwrap().line;
        let samples = crate::detect::sample_halfline(&img, &line).unwrap();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!(mean < 0.5 * p.background, "{mean}");
    }

    #[test]
    fn pixel_expectation_is_the_reflectivity() {
        let p = SceneParams {
            looks: 2000,
            theta: 40.0,
            ..Default::default()
        };
        let refl = reflectivity(&p).unwrap();
        let mut acc = Array2::<f64>::zeros((8, 8));
        for seed in 0..50 {
            let (img, _) = simulate_scene(&SceneParams { seed, ..p.clone() }, "e").unwrap();
            acc += &img.data().slice(ndarray::s![48..56, 50..58]);
        }
        for ((i, j), v) in acc.indexed_iter() {
            let want = refl[[48 + i, 50 + j]];
            assert!(
                (v / 50.0 / want - 1.0).abs() < 0.01,
                "({i},{j}) {} vs {want}",
                v / 50.0
            );
        }
        assert!(refl
            .slice(ndarray::s![48..56, 50..58])
            .iter()
            .any(|&v| v != p.background));
    }

    #[test]
    fn turbulent_line_is_the_radon_extremum_of_the_clean_map() {
        for (theta, side) in [
            (30.0, Side::Positive),
            (117.0, Side::Negative),
            (172.5, Side::Positive),
        ] {
            let p = SceneParams {
                theta,
                side,
                noise: NoiseModel::None,
                visible: [true, false, false, false, false],
                ..Default::default()
            };
            let contrast = reflectivity(&p).unwrap().mapv(|v| v - p.background);
            let img = Image::new(contrast).unwrap();
            let geo = RadonGeometry::for_image(&img).with_filter(ProfileFilter::None);
            let sino = forward_radon(&img, &geo).unwrap();
            let ((ri, ai), _) =
                sino.data()
                    .indexed_iter()
                    .fold(((0, 0), 0.0f64), |best, (k, &v)| {
                        if v.abs() > best.1.abs() {
                            (k, v)
                        } else {
                            best
                        }
                    });
            let want = p.wake_lines()[0].line;
            let step = geo.angle_step();
            let (r, a) = (sino.offsets()[ri], sino.angles()[ai]);
            let r_true = if (a - want.theta).abs() > 90.0 {
                -want.r
            } else {
                want.r
            };
            assert!(
                angle_diff(a, want.theta) <= step + 1e-9,
                "{theta}: angle {a}"
            );
            assert!((r - r_true).abs() <= 1.0 + 1e-9, "{theta}: offset {r}");
        }
    }

    #[test]
    fn one_scene_corpus_writes_one_pair() {
        let dir = tempfile::tempdir().unwrap();
        let anns = make_corpus(dir.path(), 1, &CorpusParams::default(), 3).unwrap();
        assert_eq!(anns.len(), 1);
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["scene_000.raw", "scene_000.txt", SUMMARY_FILE]);
        assert!(make_corpus(dir.path(), 0, &CorpusParams::default(), 3).is_err());
    }

    #[test]
    fn same_master_seed_gives_identical_files() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let params = CorpusParams {
            width: 64,
            height: 64,
            ..Default::default()
        };
        make_corpus(a.path(), 4, &params, 21).unwrap();
        make_corpus(b.path(), 4, &params, 21).unwrap();
        for entry in std::fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(
                std::fs::read(a.path().join(&name)).unwrap(),
                std::fs::read(b.path().join(&name)).unwrap()
            );
        }
        let c = tempfile::tempdir().unwrap();
        make_corpus(c.path(), 4, &params, 22).unwrap();
        assert_ne!(
            std::fs::read(a.path().join("scene_000.raw")).unwrap(),
            std::fs::read(c.path().join("scene_000.raw")).unwrap()
        );
    }

    #[test]
    fn summary_counts_columns() {
        let anns = [
            GroundTruthAnnotation::new("a", [true, true, false, true, false]),
            GroundTruthAnnotation::new("b", [true, false, false, true, true]),
        ];
        let t = summary_table(&anns);
        assert_eq!(t.lines().last().unwrap(), "total 2 1 0 2 1");
        assert_eq!(t.lines().nth(1).unwrap(), "a 1 1 0 1 0");
    }
}
