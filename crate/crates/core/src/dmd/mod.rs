//! Exact dynamic mode decomposition of a grayscale STMap.
//!
//! Columns of the map are treated as successive states `l_1 .. l_m` of a
//! linear system `l_{t+1} = A l_t`. The best-fit operator is never formed:
//! the prior snapshots are factored with a truncated SVD, `A` is projected
//! onto the leading left singular vectors, and the eigenpairs of that small
//! operator are lifted back to full-space modes. Each mode evolves as
//! `lambda^t`; modes with `lambda` at 1 carry the static background.

mod diagnostics;
mod format;
mod linalg;

pub use diagnostics::{mode_diagnostics, render_spectrum, time_dynamics, write_diagnostics_csv, ModeRecord};
pub use format::{read_modes, write_modes, DMD_MAGIC, DMD_VERSION};
pub use linalg::eig_complex;

use crate::stmap::GrayMap;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Error)]
pub enum DmdError {
    #[error("need at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("prior snapshot matrix is zero")]
    ZeroMatrix,
    #[error("rank {requested} requested but singular value {sigma:e} is below the floor {floor:e}")]
    RankDeficient { requested: usize, sigma: f64, floor: f64 },
    #[error("rank {requested} outside 1..={max}")]
    InvalidRank { requested: usize, max: usize },
    #[error("amplitudes have not been computed")]
    MissingAmplitudes,
    #[error("vector of length {got} does not match mode length {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("snapshot matrices differ in shape")]
    ShapeMismatch,
    #[error("malformed mode file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = DmdError> = std::result::Result<T, E>;

/// Singular values below this fraction of the largest are treated as zero.
pub const SVD_RELATIVE_FLOOR: f64 = 1e-12;
/// Default stationarity threshold on `|ln lambda|` (per frame).
pub const DEFAULT_STATIONARITY_TOL: f64 = 1e-2;
/// Amplitude fits with a mode-matrix condition number above this are flagged.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e12;

/// One-frame-shifted snapshot matrices: `prior` holds columns `0..m-1` of the
/// source map, `posterior` columns `1..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    prior: DMatrix<f64>,
    posterior: DMatrix<f64>,
}

impl SnapshotPair {
    pub fn new(prior: DMatrix<f64>, posterior: DMatrix<f64>) -> Result<Self> {
        if prior.shape() != posterior.shape() {
            return Err(DmdError::ShapeMismatch);
        }
        Ok(Self { prior, posterior })
    }

    pub fn from_matrix(data: &DMatrix<f64>) -> Result<Self> {
        let m = data.ncols();
        if m < 2 {
            return Err(DmdError::TooFewFrames(m));
        }
        Ok(Self {
            prior: data.columns(0, m - 1).into_owned(),
            posterior: data.columns(1, m - 1).into_owned(),
        })
    }

    pub fn prior(&self) -> &DMatrix<f64> {
        &self.prior
    }

    pub fn posterior(&self) -> &DMatrix<f64> {
        &self.posterior
    }

    /// Frame count of the source map.
    pub fn frame_count(&self) -> usize {
        self.prior.ncols() + 1
    }
}

pub fn make_snapshots(gray: &GrayMap) -> Result<SnapshotPair> {
    SnapshotPair::from_matrix(&gray.to_matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankRule {
    /// Smallest rank whose singular values hold this fraction of the energy.
    Energy(f64),
    Fixed(usize),
}

impl Default for RankRule {
    fn default() -> Self {
        RankRule::Energy(0.999)
    }
}

/// DMD modes (unit-norm columns), eigenvalues and, once fitted, amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdModes {
    modes: DMatrix<C64>,
    eigenvalues: Vec<C64>,
    amplitudes: Option<Vec<C64>>,
    frame_count: usize,
    singular_values: Vec<f64>,
    fit_residual: f64,
}

impl DmdModes {
    pub fn from_parts(
        modes: DMatrix<C64>,
        eigenvalues: Vec<C64>,
        amplitudes: Option<Vec<C64>>,
        frame_count: usize,
    ) -> Result<Self> {
        let k = modes.ncols();
        if eigenvalues.len() != k || amplitudes.as_ref().is_some_and(|b| b.len() != k) {
            return Err(DmdError::ShapeMismatch);
        }
        Ok(Self {
            modes,
            eigenvalues,
            amplitudes,
            frame_count,
            singular_values: Vec::new(),
            fit_residual: f64::NAN,
        })
    }

    pub fn modes(&self) -> &DMatrix<C64> {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn amplitudes(&self) -> Option<&[C64]> {
        self.amplitudes.as_deref()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// All singular values of the prior snapshot matrix, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `||X' - U A~ U* X||_F / ||X'||_F` for the truncated fit.
    pub fn fit_residual(&self) -> f64 {
        self.fit_residual
    }

    fn require_amplitudes(&self) -> Result<&[C64]> {
        self.amplitudes.as_deref().ok_or(DmdError::MissingAmplitudes)
    }
}

fn choose_rank(sigma: &[f64], rule: RankRule, max: usize) -> Result<usize> {
    let floor = SVD_RELATIVE_FLOOR * sigma[0];
    let usable = sigma.iter().take(max).take_while(|&&s| s > floor).count();
    match rule {
        RankRule::Fixed(r) => {
            if r == 0 || r > max {
                return Err(DmdError::InvalidRank { requested: r, max });
            }
            if r > usable {
                return Err(DmdError::RankDeficient {
                    requested: r,
                    sigma: sigma[r - 1],
                    floor,
                });
            }
            Ok(r)
        }
        RankRule::Energy(frac) => {
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            let mut r = 0;
            for s in sigma.iter().take(usable) {
                acc += s * s;
                r += 1;
                if acc >= frac * total {
                    break;
                }
            }
            Ok(r.max(1))
        }
    }
}

/// Exact DMD of a snapshot pair. Amplitudes are left unset; see
/// [`compute_amplitudes`].
pub fn compute_dmd(snap: &SnapshotPair, rank_rule: RankRule) -> Result<DmdModes> {
    let x = &snap.prior;
    let xp = &snap.posterior;
    let (n, cols) = x.shape();
    if x.iter().all(|&v| v == 0.0) {
        return Err(DmdError::ZeroMatrix);
    }
    let max_rank = n.min(cols);
    let svd = linalg::sorted_svd(x);
    let sigma = svd.sigma;
    let r = choose_rank(&sigma, rank_rule, max_rank)?;

    let u_r = svd.u.columns(0, r).into_owned();
    let v_r = svd.v.columns(0, r).into_owned();
    let inv_sigma = DMatrix::from_diagonal(&DVector::from_iterator(r, sigma[..r].iter().map(|s| 1.0 / s)));

    // X' V Sigma^-1 is shared by the reduced operator and the lifted modes.
    let xp_v_sinv = xp * &v_r * &inv_sigma;
    let a_tilde = u_r.transpose() * &xp_v_sinv;

    let residual = {
        let sigma_v = DMatrix::from_diagonal(&DVector::from_column_slice(&sigma[..r])) * v_r.transpose();
        let approx = &u_r * &a_tilde * sigma_v;
        let denom = xp.norm();
        if denom > 0.0 {
            (xp - approx).norm() / denom
        } else {
            0.0
        }
    };

    let a_c = a_tilde.map(|v| C64::new(v, 0.0));
    let (eigenvalues, w) = eig_complex(&a_c);
    let lift = xp_v_sinv.map(|v| C64::new(v, 0.0)) * &w;
    let projected = u_r.map(|v| C64::new(v, 0.0)) * &w;

    let scale = lift.norm().max(f64::MIN_POSITIVE);
    let mut modes = DMatrix::<C64>::zeros(n, r);
    for j in 0..r {
        // A zero eigenvalue has no exact mode (X' V S^-1 w vanishes); fall back
        // to the projected mode U w for that column.
        let mut col = lift.column(j).into_owned();
        if col.norm() <= 1e-12 * scale {
            col = projected.column(j).into_owned();
        }
        let norm = col.norm();
        modes.set_column(j, &(col / C64::new(norm, 0.0)));
    }

    Ok(DmdModes {
        modes,
        eigenvalues,
        amplitudes: None,
        frame_count: snap.frame_count(),
        singular_values: sigma,
        fit_residual: residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeFit {
    pub condition_number: f64,
    /// Set when the condition number exceeds the configured bound.
    pub ill_conditioned: bool,
    pub residual_norm: f64,
}

/// Least-squares amplitudes `b = argmin ||l_1 - Phi b||`.
pub fn compute_amplitudes(
    modes: DmdModes,
    first_column: &[f64],
    condition_bound: f64,
) -> Result<(DmdModes, AmplitudeFit)> {
    let n = modes.n();
    if first_column.len() != n {
        return Err(DmdError::LengthMismatch {
            got: first_column.len(),
            expected: n,
        });
    }
    let rhs: Vec<C64> = first_column.iter().map(|&v| C64::new(v, 0.0)).collect();
    let (b, condition_number) = linalg::complex_least_squares(&modes.modes, &rhs, SVD_RELATIVE_FLOOR);
    let b = DVector::from_vec(b);
    let rhs = DVector::from_vec(rhs);
    let residual_norm = (&rhs - &modes.modes * &b).norm();
    let ill_conditioned = condition_number > condition_bound;
    if ill_conditioned {
        log::warn!("mode matrix condition number {condition_number:e} exceeds {condition_bound:e}");
    }
    let modes = DmdModes {
        amplitudes: Some(b.iter().copied().collect()),
        ..modes
    };
    Ok((
        modes,
        AmplitudeFit {
            condition_number,
            ill_conditioned,
            residual_norm,
        },
    ))
}

/// Real part of a reconstruction plus the largest discarded imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub values: DMatrix<f64>,
    pub max_imag: f64,
}

fn accumulate(modes: &DmdModes, indices: &[usize], frames: &Range<usize>) -> Result<DMatrix<C64>> {
    let b = modes.require_amplitudes()?;
    let n = modes.n();
    let mut out = DMatrix::<C64>::zeros(n, frames.len());
    for &j in indices {
        let lambda = modes.eigenvalues[j];
        let phi = modes.modes.column(j);
        let mut power = lambda.powu(frames.start as u32);
        for (c, _t) in frames.clone().enumerate() {
            let coef = b[j] * power;
            for i in 0..n {
                out[(i, c)] += phi[i] * coef;
            }
            power *= lambda;
        }
    }
    Ok(out)
}

fn split_real(z: &DMatrix<C64>) -> Reconstruction {
    Reconstruction {
        values: z.map(|v| v.re),
        max_imag: z.iter().fold(0.0, |a, v| a.max(v.im.abs())),
    }
}

/// Reconstructs frames `range` (0-based): column `t` is
/// `Re sum_j b_j phi_j lambda_j^t`.
pub fn reconstruct(modes: &DmdModes, frames: Range<usize>) -> Result<Reconstruction> {
    let all: Vec<usize> = (0..modes.rank()).collect();
    Ok(split_real(&accumulate(modes, &all, &frames)?))
}

/// `|ln lambda|`, the per-frame distance from a stationary mode.
pub fn stationarity(lambda: C64) -> f64 {
    if lambda == C64::new(0.0, 0.0) {
        return f64::INFINITY;
    }
    lambda.ln().norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitWarning {
    /// No eigenvalue met the stationarity tolerance; the background is zero.
    NoBackgroundMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundForeground {
    pub background: DMatrix<f64>,
    pub foreground: DMatrix<f64>,
    pub background_mode_indices: Vec<usize>,
    pub max_imag: f64,
    pub warning: Option<SplitWarning>,
}

/// Splits the reconstruction over all frames into stationary modes
/// (`|ln lambda| <= tol`) and the rest.
pub fn split_background(modes: &DmdModes, stationarity_tol: f64) -> Result<BackgroundForeground> {
    let (bg_idx, fg_idx): (Vec<usize>, Vec<usize>) =
        (0..modes.rank()).partition(|&j| stationarity(modes.eigenvalues[j]) <= stationarity_tol);
    let frames = 0..modes.frame_count;
    let bg = split_real(&accumulate(modes, &bg_idx, &frames)?);
    let fg = split_real(&accumulate(modes, &fg_idx, &frames)?);
    let warning = if bg_idx.is_empty() {
        log::warn!("no DMD mode within stationarity tolerance {stationarity_tol}");
        Some(SplitWarning::NoBackgroundMode)
    } else {
        None
    };
    Ok(BackgroundForeground {
        background: bg.values,
        foreground: fg.values,
        background_mode_indices: bg_idx,
        max_imag: bg.max_imag.max(fg.max_imag),
        warning,
    })
}

/// `data - background`: what the stationary modes fail to explain. Moving
/// strands that enter after the first frame cannot be rebuilt from the
/// first-frame amplitudes, so the modal foreground misses them; this
/// residual keeps them and is what the labelling stage thresholds.
pub fn residual_foreground(data: &DMatrix<f64>, split: &BackgroundForeground) -> Result<DMatrix<f64>> {
    if data.shape() != split.background.shape() {
        return Err(DmdError::LengthMismatch {
            got: data.len(),
            expected: split.background.len(),
        });
    }
    Ok(data - &split.background)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmdConfig {
    pub rank_rule: RankRule,
    pub stationarity_tol: f64,
    pub condition_bound: f64,
}

impl Default for DmdConfig {
    fn default() -> Self {
        Self {
            rank_rule: RankRule::default(),
            stationarity_tol: DEFAULT_STATIONARITY_TOL,
            condition_bound: DEFAULT_CONDITION_BOUND,
        }
    }
}

/// Snapshots, decomposition and amplitude fit on the first column.
pub fn decompose(data: &DMatrix<f64>, cfg: &DmdConfig) -> Result<(DmdModes, AmplitudeFit)> {
    let snap = SnapshotPair::from_matrix(data)?;
    let modes = compute_dmd(&snap, cfg.rank_rule)?;
    let first: Vec<f64> = data.column(0).iter().copied().collect();
    compute_amplitudes(modes, &first, cfg.condition_bound)
}
