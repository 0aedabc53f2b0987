//! Wake taxonomy, per-slot hypotheses, annotations and reports.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::PenaltyMode;

/// The five annotation slots, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WakeType {
    Turbulent,
    NarrowV1,
    NarrowV2,
    Kelvin1,
    Kelvin2,
}

impl WakeType {
    pub const ALL: [WakeType; 5] = [
        WakeType::Turbulent,
        WakeType::NarrowV1,
        WakeType::NarrowV2,
        WakeType::Kelvin1,
        WakeType::Kelvin2,
    ];

    /// Column position in annotations and reports.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            WakeType::Turbulent => "T",
            WakeType::NarrowV1 => "N1",
            WakeType::NarrowV2 => "N2",
            WakeType::Kelvin1 => "K1",
            WakeType::Kelvin2 => "K2",
        }
    }

    /// Bright arms are validated against the margin, the turbulent wake
    /// against the dark threshold.
    pub fn is_bright(self) -> bool {
        self != WakeType::Turbulent
    }
}

impl fmt::Display for WakeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for WakeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WakeType::ALL
            .into_iter()
            .find(|k| k.code() == s)
            .ok_or_else(|| Error::format("wake type", format!("unknown code `{s}`")))
    }
}

/// Half of a line, split at the foot of the perpendicular from the image
/// centre. `Positive` follows the direction `(−sin θ, cos θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Side {
        match self {
            Side::Positive => Side::Negative,
            Side::Negative => Side::Positive,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Side::Positive => "+",
            Side::Negative => "-",
        }
    }
}

/// A half-line `x cos θ + y sin θ = r` (centred, y up) on one side of its
/// foot point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfLine {
    pub r: f64,
    pub theta: f64,
    pub side: Side,
}

impl HalfLine {
    /// Brings `theta` into `[0, 180)`. Crossing 180° reverses the line
    /// direction, so `r` and the side flip with it.
    pub fn normalized(r: f64, theta: f64, side: Side) -> HalfLine {
        let turns = (theta / 180.0).floor();
        let theta = theta - 180.0 * turns;
        let odd = (turns as i64).rem_euclid(2) == 1;
        let theta = if theta >= 180.0 { 0.0 } else { theta };
        if odd {
            HalfLine {
                r: -r,
                theta,
                side: side.flip(),
            }
        } else {
            HalfLine { r, theta, side }
        }
    }

    /// Unit direction along the half-line, y up.
    pub fn direction(&self) -> (f64, f64) {
        let t = self.theta.to_radians();
        (-t.sin() * self.side.sign(), t.cos() * self.side.sign())
    }

    /// Foot of the perpendicular from the centre, y up.
    pub fn foot(&self) -> (f64, f64) {
        let t = self.theta.to_radians();
        (self.r * t.cos(), self.r * t.sin())
    }
}

/// Ground-truth placement of one simulated wake.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeLine {
    pub line: HalfLine,
    pub contrast: f64,
}

/// Signed angular difference `a − b` folded into `(−90, 90]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    if d > 90.0 {
        d - 180.0
    } else {
        d
    }
}

/// One slot of a detection report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeHypothesis {
    pub kind: WakeType,
    pub r: f64,
    pub theta: f64,
    pub side: Side,
    pub merit: f64,
    pub validated: bool,
    /// False when no sinogram feature qualified for the slot; such slots are
    /// reported but never validated.
    pub candidate: bool,
}

impl WakeHypothesis {
    pub fn line(&self) -> HalfLine {
        HalfLine {
            r: self.r,
            theta: self.theta,
            side: self.side,
        }
    }
}

/// Visibility flags per slot plus, for simulated scenes, the true lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub id: String,
    pub visible: [bool; 5],
    pub lines: [Option<WakeLine>; 5],
}

impl GroundTruthAnnotation {
    pub fn new(id: impl Into<String>, visible: [bool; 5]) -> Self {
        GroundTruthAnnotation {
            id: id.into(),
            visible,
            lines: [None; 5],
        }
    }

    pub fn is_visible(&self, kind: WakeType) -> bool {
        self.visible[kind.index()]
    }

    /// `id T N1 N2 K1 K2 [CODE=r,theta,side,contrast ...]`
    pub fn to_record(&self) -> String {
        let mut out = self.id.clone();
        for v in self.visible {
            out.push_str(if v { " 1" } else { " 0" });
        }
        for kind in WakeType::ALL {
            if let Some(w) = &self.lines[kind.index()] {
                out.push_str(&format!(
                    " {}={},{},{},{}",
                    kind.code(),
                    w.line.r,
                    w.line.theta,
                    w.line.side.code(),
                    w.contrast
                ));
            }
        }
        out
    }

    pub fn parse_record(line: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("annotation", detail);
        let mut fields = line.split_whitespace();
        let id = fields.next().ok_or_else(|| bad("empty record".into()))?;
        let mut visible = [false; 5];
        for (slot, v) in visible.iter_mut().enumerate() {
            *v = match fields.next() {
                Some("1") => true,
                Some("0") => false,
                Some(other) => {
                    return Err(bad(format!(
                        "{id}: flag {} is `{other}`, expected 0 or 1",
                        slot + 1
                    )))
                }
                None => return Err(bad(format!("{id}: expected 5 flags"))),
            };
        }
        let mut ann = GroundTruthAnnotation::new(id, visible);
        for field in fields {
            let (code, rest) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("{id}: unexpected field `{field}`")))?;
            let kind: WakeType = code.parse()?;
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 4 {
                return Err(bad(format!("{id}: `{field}` needs r,theta,side,contrast")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| bad(format!("{id}: `{s}`: {e}")))
            };
            let side = match parts[2] {
                "+" => Side::Positive,
                "-" => Side::Negative,
                s => return Err(bad(format!("{id}: side `{s}`"))),
            };
            ann.lines[kind.index()] = Some(WakeLine {
                line: HalfLine {
                    r: num(parts[0])?,
                    theta: num(parts[1])?,
                    side,
                },
                contrast: num(parts[3])?,
            });
        }
        Ok(ann)
    }
}

/// Solver summary attached to a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_epsilon: f64,
    pub final_cost: f64,
}

/// Five-slot outcome for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub id: String,
    pub mode: PenaltyMode,
    pub hypotheses: [WakeHypothesis; 5],
    pub diagnostics: SolverDiagnostics,
}

impl DetectionReport {
    pub fn slot(&self, kind: WakeType) -> &WakeHypothesis {
        &self.hypotheses[kind.index()]
    }

    pub fn validated(&self) -> [bool; 5] {
        self.hypotheses.map(|h| h.validated)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: DetectionReport =
            serde_json::from_str(s).map_err(|e| Error::format("report", e.to_string()))?;
        for (i, h) in r.hypotheses.iter().enumerate() {
            if h.kind.index() != i {
                return Err(Error::format(
                    "report",
                    format!("slot {i} holds {}", h.kind),
                ));
            }
        }
        Ok(r)
    }
}
