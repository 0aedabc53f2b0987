//! Forward-backward splitting for the Radon-domain wake model.
//!
//! The cost is
//!
//! ```text
//! F(X) = ‖Y − CX‖² + Σ −log(γ / (X² + γ²)) + λ ‖B X‖₁
//! ```
//!
//! with `C` the filtered backprojection and `B` the DT-CWT. The smooth part
//! `g` holds the data term and the Cauchy term; the wavelet L1 term is
//! handled by soft thresholding in the DT-CWT domain.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dtcwt::{
    dtcwt_forward, dtcwt_inverse, pyramid_l1, FilterBank, WaveletPyramid, DEFAULT_LEVELS,
};
use crate::error::{Error, Result};
use crate::image::{Image, Sinogram};
use crate::operator::{norm, LinearOperator};
use crate::penalties::{
    cauchy_gradient, cauchy_penalty, soft_threshold, tv_gradient, tv_lipschitz, tv_value,
    CauchyParams,
};
use crate::radon::{power_iteration, Interpolation, ProfileFilter, RadonGeometry, RadonOperator};
use crate::scalar::Real;

/// Safety factor applied to the inverse Lipschitz bound for the automatic step.
pub const STEP_SAFETY: f64 = 0.9;

/// Which regularizers enter the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Cauchy prior plus wavelet L1.
    #[default]
    CauchyDtcwt,
    /// Cauchy prior alone; the wavelet step is skipped.
    CauchyOnly,
    /// Smoothed total variation in place of both priors.
    TvOnly,
}

impl PenaltyMode {
    pub const ALL: [PenaltyMode; 3] = [
        PenaltyMode::CauchyDtcwt,
        PenaltyMode::CauchyOnly,
        PenaltyMode::TvOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyMode::CauchyDtcwt => "cauchy_dtcwt",
            PenaltyMode::CauchyOnly => "cauchy_only",
            PenaltyMode::TvOnly => "tv_only",
        }
    }
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PenaltyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::param(format!(
                    "unknown penalty mode `{s}` (expected cauchy_dtcwt, cauchy_only or tv_only)"
                ))
            })
    }
}

/// Solver settings. `None` parameters are derived from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Cauchy scale. Default `gamma_fraction · max|CᵀY|`.
    pub gamma: Option<f64>,
    /// Wavelet L1 weight. Default `lambda_fraction · max|B CᵀY|` over
    /// directional bands.
    pub lambda: Option<f64>,
    pub gamma_fraction: f64,
    pub lambda_fraction: f64,
    /// Step size. Default `0.9 / (2‖C‖² + 2/γ²)`, or `0.9 / (2‖C‖² + 8w/ε)`
    /// for the TV baseline.
    pub mu: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub penalty: PenaltyMode,
    pub levels: usize,
    pub n_angles: usize,
    pub interpolation: Interpolation,
    pub filter: ProfileFilter,
    /// TV weight for [`PenaltyMode::TvOnly`]. Default `0.05 · max|CᵀY|`.
    pub tv_weight: Option<f64>,
    /// TV smoothing `ε`. Default the resolved `γ`.
    pub tv_epsilon: Option<f64>,
    pub norm_iterations: usize,
    pub norm_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: None,
            lambda: None,
            gamma_fraction: 0.1,
            lambda_fraction: 0.5,
            mu: None,
            max_iter: 500,
            tol: 5e-3,
            penalty: PenaltyMode::CauchyDtcwt,
            levels: DEFAULT_LEVELS,
            n_angles: 180,
            interpolation: Interpolation::Linear,
            filter: ProfileFilter::Ramp,
            tv_weight: None,
            tv_epsilon: None,
            norm_iterations: 20,
            norm_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(v) if !(v.is_finite() && v > 0.0) => Err(Error::param(format!(
                "{name} must be finite and > 0, got {v}"
            ))),
            _ => Ok(()),
        };
        positive("gamma", self.gamma)?;
        positive("mu", self.mu)?;
        positive("tv_epsilon", self.tv_epsilon)?;
        positive("gamma_fraction", Some(self.gamma_fraction))?;
        if !(self.lambda_fraction.is_finite() && self.lambda_fraction >= 0.0) {
            return Err(Error::param(format!(
                "lambda_fraction must be >= 0, got {}",
                self.lambda_fraction
            )));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::param(format!(
                    "lambda must be finite and >= 0, got {l}"
                )));
            }
        }
        if let Some(w) = self.tv_weight {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param(format!(
                    "tv_weight must be finite and >= 0, got {w}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::param(format!(
                "tol must be finite and >= 0, got {}",
                self.tol
            )));
        }
        if !(1..=5).contains(&self.levels) {
            return Err(Error::param(format!(
                "levels must be in 1..=5, got {}",
                self.levels
            )));
        }
        if let (Some(g), Some(m)) = (self.gamma, self.mu) {
            check_step(g, m)?;
        }
        Ok(())
    }

    /// Radon geometry for an image of the given size.
    pub fn geometry(&self, width: usize, height: usize) -> RadonGeometry {
        RadonGeometry::new(width, height)
            .with_angles(self.n_angles)
            .with_interpolation(self.interpolation)
            .with_filter(self.filter)
    }
}

fn check_step(gamma: f64, mu: f64) -> Result<()> {
    if gamma < mu.sqrt() / 2.0 {
        return Err(Error::param(format!(
            "gamma = {gamma} is below sqrt(mu)/2 = {} for mu = {mu}",
            mu.sqrt() / 2.0
        )));
    }
    Ok(())
}

/// Parameters after data-driven defaults are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub gamma: f64,
    pub lambda: f64,
    pub mu: f64,
    pub tv_weight: f64,
    pub tv_epsilon: f64,
    /// `‖C‖²` estimate used for the automatic step.
    pub lipschitz: f64,
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub cost: f64,
    pub epsilon: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.entries.len()
    }

    pub fn final_epsilon(&self) -> Option<f64> {
        self.entries.last().map(|e| e.epsilon)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.entries.last().map(|e| e.cost)
    }

    /// `iteration,cost,epsilon,seconds` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cost,epsilon,seconds\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{:e},{:e},{:.6}\n",
                e.iteration, e.cost, e.epsilon, e.seconds
            ));
        }
        out
    }
}

/// Result of [`fb_solve`].
#[derive(Debug, Clone)]
pub struct SolveOutput<T> {
    pub sinogram: Sinogram<T>,
    pub trace: SolverTrace,
    pub params: ResolvedParams,
}

/// The problem-specific pieces of one FB run, independent of how `C` is
/// realized.
#[derive(Debug, Clone, Copy)]
pub struct Problem<T> {
    pub mode: PenaltyMode,
    pub gamma: T,
    pub lambda: T,
    pub mu: T,
    pub tv_weight: T,
    pub tv_epsilon: T,
    pub levels: usize,
}

impl<T: Real> Problem<T> {
    pub fn new(mode: PenaltyMode, params: &ResolvedParams, levels: usize) -> Self {
        Problem {
            mode,
            gamma: T::lit(params.gamma),
            lambda: T::lit(params.lambda),
            mu: T::lit(params.mu),
            tv_weight: T::lit(params.tv_weight),
            tv_epsilon: T::lit(params.tv_epsilon),
            levels,
        }
    }

    fn cauchy(&self) -> Result<CauchyParams<T>> {
        CauchyParams::new(self.gamma)
    }
}

/// DT-CWT on a grid zero-padded up to a multiple of `2^levels`.
#[derive(Debug, Clone)]
pub struct PaddedDtcwt {
    dim: (usize, usize),
    padded: (usize, usize),
    levels: usize,
    bank: FilterBank,
}

impl PaddedDtcwt {
    pub fn new(dim: (usize, usize), levels: usize) -> Self {
        let m = 1usize << levels;
        let up = |n: usize| n.div_ceil(m).max(1) * m;
        PaddedDtcwt {
            dim,
            padded: (up(dim.0), up(dim.1)),
            levels,
            bank: FilterBank::default(),
        }
    }

    pub fn padded_dim(&self) -> (usize, usize) {
        self.padded
    }

    pub fn forward<T: Real>(&self, x: ArrayView2<T>) -> Result<WaveletPyramid<T>> {
        if x.dim() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        if self.padded == self.dim {
            return dtcwt_forward(x, self.levels, &self.bank);
        }
        let mut p = Array2::zeros(self.padded);
        p.slice_mut(s![..self.dim.0, ..self.dim.1]).assign(&x);
        dtcwt_forward(p.view(), self.levels, &self.bank)
    }

    pub fn inverse<T: Real>(&self, pyr: &WaveletPyramid<T>) -> Result<Array2<T>> {
        let full = dtcwt_inverse(pyr, &self.bank)?;
        if self.padded == self.dim {
            return Ok(full);
        }
        Ok(full.slice(s![..self.dim.0, ..self.dim.1]).to_owned())
    }

    /// `B⁻¹ soft(B z, t)`.
    pub fn shrink<T: Real>(&self, z: ArrayView2<T>, threshold: T) -> Result<Array2<T>> {
        self.inverse(&soft_threshold(&self.forward(z)?, threshold)?)
    }

    pub fn l1<T: Real>(&self, x: ArrayView2<T>) -> Result<T> {
        Ok(pyramid_l1(&self.forward(x)?))
    }
}

fn check_shapes<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
) -> Result<()> {
    if x.dim() != op.input_dim() {
        return Err(Error::Shape {
            expected: op.input_dim(),
            actual: x.dim(),
        });
    }
    if y.dim() != op.output_dim() {
        return Err(Error::Shape {
            expected: op.output_dim(),
            actual: y.dim(),
        });
    }
    Ok(())
}

/// Gradient of the smooth part from a precomputed `CX`.
fn smooth_gradient<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    x: ArrayView2<T>,
    cx: ArrayView2<T>,
    y: ArrayView2<T>,
    pb: &Problem<T>,
) -> Result<Array2<T>> {
    let two = T::lit(2.0);
    let residual = &cx - &y;
    let mut g = op.adjoint(residual.view());
    g.mapv_inplace(|v| two * v);
    match pb.mode {
        PenaltyMode::TvOnly => g += &tv_gradient(x, pb.tv_weight, pb.tv_epsilon),
        _ => g += &cauchy_gradient(x, pb.cauchy()?),
    }
    Ok(g)
}

/// `∇g(X) = 2Cᵀ(CX − Y) + 2X/(γ² + X²)`, the exact gradient of the smooth
/// part of the cost. In TV mode the Cauchy term is replaced by the smoothed
/// TV gradient.
pub fn grad_g_with<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    pb: &Problem<T>,
) -> Result<Array2<T>> {
    check_shapes(op, x, y)?;
    let cx = op.apply(x);
    smooth_gradient(op, x, cx.view(), y, pb)
}

fn cost_parts<T: Real>(
    x: ArrayView2<T>,
    cx: ArrayView2<T>,
    y: ArrayView2<T>,
    pb: &Problem<T>,
    wavelet: &PaddedDtcwt,
) -> Result<T> {
    let data: T = cx
        .iter()
        .zip(y.iter())
        .map(|(&a, &b)| (b - a) * (b - a))
        .sum();
    let prior = match pb.mode {
        PenaltyMode::TvOnly => tv_value(x, pb.tv_weight, pb.tv_epsilon),
        PenaltyMode::CauchyOnly => cauchy_penalty(x, pb.cauchy()?),
        PenaltyMode::CauchyDtcwt => {
            let l1 = if pb.lambda == T::zero() {
                T::zero()
            } else {
                pb.lambda * wavelet.l1(x)?
            };
            cauchy_penalty(x, pb.cauchy()?) + l1
        }
    };
    Ok(data + prior)
}

/// `F(X)` for an arbitrary operator.
pub fn cost_with<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    pb: &Problem<T>,
) -> Result<T> {
    check_shapes(op, x, y)?;
    let cx = op.apply(x);
    cost_parts(x, cx.view(), y, pb, &PaddedDtcwt::new(x.dim(), pb.levels))
}

fn prox_step<T: Real>(z: Array2<T>, pb: &Problem<T>, wavelet: &PaddedDtcwt) -> Result<Array2<T>> {
    match pb.mode {
        PenaltyMode::CauchyDtcwt => wavelet.shrink(z.view(), pb.mu * pb.lambda),
        _ => Ok(z),
    }
}

/// One forward-backward step from `x`.
pub fn fb_step_with<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    x: ArrayView2<T>,
    y: ArrayView2<T>,
    pb: &Problem<T>,
) -> Result<Array2<T>> {
    let g = grad_g_with(op, x, y, pb)?;
    let z = &x - &(g * pb.mu);
    prox_step(z, pb, &PaddedDtcwt::new(x.dim(), pb.levels))
}

fn relative_change<T: Real>(new: ArrayView2<T>, old: ArrayView2<T>) -> f64 {
    let diff = norm((&new - &old).view()).as_f64();
    if diff == 0.0 {
        return 0.0;
    }
    let base = norm(old).as_f64();
    if base == 0.0 {
        f64::INFINITY
    } else {
        diff / base
    }
}

/// Forward-backward iteration on an arbitrary operator, starting from `X = 0`.
pub fn fb_solve_with<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    y: ArrayView2<T>,
    pb: &Problem<T>,
    max_iter: usize,
    tol: f64,
) -> Result<(Array2<T>, SolverTrace)> {
    if max_iter == 0 {
        return Err(Error::param("max_iter must be at least 1"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "observation contains non-finite values".into(),
        ));
    }
    let mut x = Array2::<T>::zeros(op.input_dim());
    check_shapes(op, x.view(), y)?;
    let wavelet = PaddedDtcwt::new(x.dim(), pb.levels);
    let start = Instant::now();
    let mut trace = SolverTrace::default();
    let mut cx = op.apply(x.view());
    for iteration in 1..=max_iter {
        let g = smooth_gradient(op, x.view(), cx.view(), y, pb)?;
        let z = &x - &(g * pb.mu);
        let next = prox_step(z, pb, &wavelet)?;
        let epsilon = relative_change(next.view(), x.view());
        x = next;
        cx = op.apply(x.view());
        let cost = cost_parts(x.view(), cx.view(), y, pb, &wavelet)?.as_f64();
        if !cost.is_finite() {
            return Err(Error::Numerical(format!(
                "cost became non-finite at iteration {iteration}; the step size is likely too large"
            )));
        }
        trace.entries.push(TraceEntry {
            iteration,
            cost,
            epsilon,
            seconds: start.elapsed().as_secs_f64(),
        });
        if epsilon <= tol {
            break;
        }
    }
    Ok((x, trace))
}

/// Fills in data-driven defaults for `cfg` given the observation.
pub fn resolve_params<T: Real>(
    op: &RadonOperator<T>,
    y: ArrayView2<T>,
    cfg: &SolverConfig,
) -> Result<ResolvedParams> {
    cfg.validate()?;
    let cty = op.adjoint(y);
    let peak = cty.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let scale = if peak > 0.0 { peak } else { 1.0 };
    let gamma = cfg.gamma.unwrap_or(cfg.gamma_fraction * scale);
    let lambda = match (cfg.penalty, cfg.lambda) {
        (PenaltyMode::CauchyDtcwt, Some(l)) => l,
        (PenaltyMode::CauchyDtcwt, None) => {
            let pyr = PaddedDtcwt::new(cty.dim(), cfg.levels).forward(cty.view())?;
            let m = pyr
                .highpasses
                .iter()
                .flatten()
                .flat_map(|b| b.iter())
                .fold(0.0f64, |m, c| m.max(c.norm().as_f64()));
            cfg.lambda_fraction * m
        }
        _ => 0.0,
    };
    let tv_weight = cfg.tv_weight.unwrap_or(0.05 * scale);
    let tv_epsilon = cfg.tv_epsilon.unwrap_or(gamma);
    let lipschitz = power_iteration(op, cfg.norm_iterations, cfg.norm_seed)?.as_f64();
    let mu = match cfg.mu {
        Some(mu) => {
            if cfg.penalty != PenaltyMode::TvOnly {
                check_step(gamma, mu)?;
            }
            mu
        }
        None => match cfg.penalty {
            PenaltyMode::TvOnly => {
                STEP_SAFETY / (2.0 * lipschitz + tv_lipschitz(tv_weight, tv_epsilon))
            }
            _ => STEP_SAFETY / (2.0 * lipschitz + 2.0 / (gamma * gamma)),
        },
    };
    Ok(ResolvedParams {
        gamma,
        lambda,
        mu,
        tv_weight,
        tv_epsilon,
        lipschitz,
    })
}

fn radon_problem<T: Real>(
    y: &Image<T>,
    cfg: &SolverConfig,
) -> Result<(RadonOperator<T>, ResolvedParams)> {
    let op = RadonOperator::new(cfg.geometry(y.width(), y.height()))?;
    let params = resolve_params(&op, y.data().view(), cfg)?;
    Ok((op, params))
}

/// `∇g` with the filtered-backprojection operator.
pub fn grad_g<T: Real>(x: &Sinogram<T>, y: &Image<T>, cfg: &SolverConfig) -> Result<Sinogram<T>> {
    let (op, params) = radon_problem(y, cfg)?;
    let pb = Problem::new(cfg.penalty, &params, cfg.levels);
    x.with_data(grad_g_with(&op, x.data().view(), y.data().view(), &pb)?)
}

/// `F(X)` with the filtered-backprojection operator.
pub fn cost<T: Real>(x: &Sinogram<T>, y: &Image<T>, cfg: &SolverConfig) -> Result<T> {
    let (op, params) = radon_problem(y, cfg)?;
    let pb = Problem::new(cfg.penalty, &params, cfg.levels);
    cost_with(&op, x.data().view(), y.data().view(), &pb)
}

/// Forward-backward solve of `y` with the configured penalty.
pub fn fb_solve<T: Real>(y: &Image<T>, cfg: &SolverConfig) -> Result<SolveOutput<T>> {
    let (op, params) = radon_problem(y, cfg)?;
    let pb = Problem::new(cfg.penalty, &params, cfg.levels);
    let (x, trace) = fb_solve_with(&op, y.data().view(), &pb, cfg.max_iter, cfg.tol)?;
    Ok(SolveOutput {
        sinogram: op.geometry().empty_sinogram().with_data(x)?,
        trace,
        params,
    })
}
