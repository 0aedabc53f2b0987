//! Filter coefficients for the 2-D dual-tree transform.
//!
//! Level 1 uses Kingsbury's near-symmetric (13,19)-tap biorthogonal pair
//! ("near_sym_b"); deeper levels use the 14-tap quarter-shift pair
//! ("qshift_b"). Values match the tables distributed with Kingsbury's
//! reference DT-CWT toolbox.

use crate::error::{Error, Result};

/// Level-1 analysis lowpass, 13 taps.
const NEAR_SYM_B_H0: [f64; 13] = [
    -0.0017578125,
    0.0,
    0.022265625,
    -0.046875,
    -0.0482421875,
    0.296875,
    0.55546875,
    0.296875,
    -0.0482421875,
    -0.046875,
    0.022265625,
    0.0,
    -0.0017578125,
];

/// Level-1 synthesis lowpass, 19 taps.
const NEAR_SYM_B_G0: [f64; 19] = [
    7.062639508928571e-05,
    0.0,
    -0.0013419015066964285,
    -0.0018833705357142855,
    0.007156808035714285,
    0.023856026785714284,
    -0.05564313616071428,
    -0.05168805803571428,
    0.29975760323660716,
    0.5594308035714286,
    0.29975760323660716,
    -0.05168805803571428,
    -0.05564313616071428,
    0.023856026785714284,
    0.007156808035714285,
    -0.0018833705357142855,
    -0.0013419015066964285,
    0.0,
    7.062639508928571e-05,
];

/// Quarter-shift lowpass of tree a (analysis); the tree-b filter is its
/// time reverse.
const QSHIFT_B_H0A: [f64; 14] = [
    0.003253142763653182,
    -0.00388321199915849,
    0.03466034684485349,
    -0.03887280126882779,
    -0.11720388769911527,
    0.27529538466888204,
    0.7561456438925225,
    0.5688104207121227,
    0.011866092033797,
    -0.1067118046866654,
    0.023825384794920298,
    0.01702522388155399,
    -0.005439475937274115,
    -0.004556895628475491,
];

/// Level-1 biorthogonal pair. Highpasses are the alternating-sign
/// modulations of the opposite lowpass.
#[derive(Debug, Clone, PartialEq)]
pub struct Biorthogonal {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
}

/// Quarter-shift pair for levels two and deeper, both trees.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterShift {
    pub h0a: Vec<f64>,
    pub h0b: Vec<f64>,
    pub g0a: Vec<f64>,
    pub g0b: Vec<f64>,
    pub h1a: Vec<f64>,
    pub h1b: Vec<f64>,
    pub g1a: Vec<f64>,
    pub g1b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub level1: Biorthogonal,
    pub qshift: QuarterShift,
}

impl Default for FilterBank {
    fn default() -> Self {
        FilterBank::near_sym_b_qshift_b()
    }
}

/// `(-1)^(n - centre) x[n]`, the quadrature mirror of an odd-length filter.
fn modulate_odd(x: &[f64], sign_at_centre: f64) -> Vec<f64> {
    let c = x.len() / 2;
    x.iter()
        .enumerate()
        .map(|(n, &v)| {
            let parity = (n as isize - c as isize).rem_euclid(2);
            let s = if parity == 0 { 1.0 } else { -1.0 };
            sign_at_centre * s * v
        })
        .collect()
}

fn reversed(x: &[f64]) -> Vec<f64> {
    x.iter().rev().copied().collect()
}

impl FilterBank {
    pub fn near_sym_b_qshift_b() -> Self {
        let h0 = NEAR_SYM_B_H0.to_vec();
        let g0 = NEAR_SYM_B_G0.to_vec();
        // h1 is the modulated synthesis lowpass and vice versa; the sign at
        // the centre tap is fixed by the table (h1 centre > 0, g1 centre > 0).
        let h1 = modulate_odd(&g0, 1.0);
        let g1 = modulate_odd(&h0, 1.0);

        let h0a = QSHIFT_B_H0A.to_vec();
        let h0b = reversed(&h0a);
        // Orthonormal CQF highpass: h1[n] = (-1)^n h0[N-1-n] (up to sign).
        let alt = |x: &[f64], first: f64| -> Vec<f64> {
            x.iter()
                .enumerate()
                .map(|(n, &v)| if n % 2 == 0 { first * v } else { -first * v })
                .collect()
        };
        let h1a = alt(&h0b, 1.0);
        let h1b = reversed(&h1a);
        let g0a = h0b.clone();
        let g0b = h0a.clone();
        let g1a = h1b.clone();
        let g1b = h1a.clone();
        FilterBank {
            level1: Biorthogonal { h0, h1, g0, g1 },
            qshift: QuarterShift {
                h0a,
                h0b,
                g0a,
                g0b,
                h1a,
                h1b,
                g1a,
                g1b,
            },
        }
    }

    /// Length constraints assumed by the filtering kernels.
    pub fn validate(&self) -> Result<()> {
        let l = &self.level1;
        for (name, f) in [("h0", &l.h0), ("h1", &l.h1), ("g0", &l.g0), ("g1", &l.g1)] {
            if f.len() % 2 != 1 {
                return Err(Error::param(format!(
                    "level-1 filter {name} must have odd length"
                )));
            }
        }
        let q = &self.qshift;
        let m = q.h0a.len();
        for f in [
            &q.h0a, &q.h0b, &q.g0a, &q.g0b, &q.h1a, &q.h1b, &q.g1a, &q.g1b,
        ] {
            if f.len() != m || m % 4 != 2 {
                return Err(Error::param(
                    "quarter-shift filters must share a length of the form 4k + 2",
                ));
            }
        }
        Ok(())
    }
}
