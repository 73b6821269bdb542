//! TTD/PS beamformer synthesis and array-gain evaluation.
//!
//! A beamformer on subcarrier `n` is `diag(exp(-j 2π f_n t)) · aᴴ(θ_b, φ_b, 0)`
//! where `t` is an additive per-element delay `t_h[m_h] + t_v[m_v]`. Because
//! the delay is additive the weight factorizes into a horizontal and a
//! vertical vector, and every gain is evaluated as the product of the two
//! partial inner products (`M_h + M_v` work instead of `M_h * M_v`).
//!
//! The elevation-sensing (EAS) beam does not carry a synthesized horizontal
//! chain. Its horizontal response is the ideal flat constant from
//! [`flat_horizontal_gain`] inside the ROI and zero outside; every consumer
//! (channel, power, dictionary) goes through the same [`HorizontalModel`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::{CandidateSpacing, SystemConfig};
use crate::error::{Error, Result};
use crate::geometry::{self, checked_acos, flat_horizontal_gain, SteeringVector};

/// Per-element true-time-delay profile, additive across the two array axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TtdProfile {
    /// Delays of the `M_h` columns, seconds.
    pub horizontal: Vec<f64>,
    /// Delays of the `M_v` rows, seconds.
    pub vertical: Vec<f64>,
}

impl TtdProfile {
    pub fn zeros(m_h: usize, m_v: usize) -> Self {
        Self {
            horizontal: vec![0.0; m_h],
            vertical: vec![0.0; m_v],
        }
    }

    /// Delay of element `(m_h, m_v)`.
    pub fn delay(&self, m_h: usize, m_v: usize) -> f64 {
        self.horizontal[m_h] + self.vertical[m_v]
    }

    /// Largest |delay| over all elements.
    pub fn max_abs_delay(&self) -> f64 {
        let hmax = self.horizontal.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let hmin = self.horizontal.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let vmax = self.vertical.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let vmin = self.vertical.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        (hmax + vmax).abs().max((hmin + vmin).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamKind {
    /// Stage-0 elevation sweep.
    Eas,
    /// Azimuth sweep at a fixed elevation estimate.
    Aas { theta_hat: f64 },
    /// Squint-compensated pencil beam toward a user (or any fixed direction).
    Comm { theta: f64, phi: f64 },
    /// Baseline beam: horizontal pointing at `phi`, vertical squint sweep over the elevation grid.
    AzimuthScan { phi: f64 },
}

/// How the horizontal half of a beam responds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizontalModel {
    /// Constant magnitude `gain` for every direction inside the ROI, zero outside.
    IdealFlat {
        gain: f64,
        theta_min: f64,
        theta_max: f64,
        phi_min: f64,
        phi_max: f64,
    },
    /// Exact phase-shifter plus TTD chain.
    Analog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub kind: BeamKind,
    pub ps_theta: f64,
    /// `None` when the horizontal chain is modelled rather than synthesized.
    pub ps_phi: Option<f64>,
    pub ttd: TtdProfile,
    pub horizontal: HorizontalModel,
    /// Direction each subcarrier is designed to peak at.
    pub design_points: Vec<(f64, f64)>,
    /// Horizontal PS spatial frequency (`sinθ_b cosφ_b` for a pointed beam).
    ps_h: f64,
    /// Vertical PS spatial frequency `cosθ_b`.
    ps_v: f64,
    fc: f64,
    freq_devs: Vec<f64>,
}

/// Closed-form `(1/len) Σ_m exp(-jπ (m·slope + 2 f t[m]))`.
fn partial_gain(slope: f64, f_dev: f64, delays: &[f64]) -> Complex64 {
    let len = delays.len() as f64;
    let step = delays.get(1).copied().unwrap_or(0.0);
    if delays.iter().enumerate().all(|(m, &t)| t == m as f64 * step) {
        // linear profile: geometric series, one exponential
        let z = Complex64::from_polar(1.0, -PI * (slope + 2.0 * f_dev * step));
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for _ in 0..delays.len() {
            acc += term;
            term *= z;
        }
        return acc / len;
    }
    delays
        .iter()
        .enumerate()
        .map(|(m, &t)| Complex64::from_polar(1.0, -PI * (m as f64 * slope + 2.0 * f_dev * t)))
        .sum::<Complex64>()
        / len
}

fn chain_weights(ps_spatial: f64, f_dev: f64, delays: &[f64]) -> Vec<Complex64> {
    let norm = 1.0 / (delays.len() as f64).sqrt();
    delays
        .iter()
        .enumerate()
        .map(|(m, &t)| Complex64::from_polar(norm, PI * m as f64 * ps_spatial - 2.0 * PI * f_dev * t))
        .collect()
}

impl BeamformerWeights {
    pub fn num_subcarriers(&self) -> usize {
        self.freq_devs.len()
    }

    pub fn freq_dev(&self, n: usize) -> f64 {
        self.freq_devs[n]
    }

    pub fn m_h(&self) -> usize {
        self.ttd.horizontal.len()
    }

    pub fn m_v(&self) -> usize {
        self.ttd.vertical.len()
    }

    /// Horizontal weight vector on subcarrier `n`; `None` under the flat model.
    pub fn horizontal_weights(&self, n: usize) -> Option<Vec<Complex64>> {
        if !matches!(self.horizontal, HorizontalModel::Analog) {
            return None;
        }
        Some(chain_weights(self.ps_h, self.freq_devs[n], &self.ttd.horizontal))
    }

    pub fn vertical_weights(&self, n: usize) -> Vec<Complex64> {
        chain_weights(self.ps_v, self.freq_devs[n], &self.ttd.vertical)
    }

    /// Full length-`M` weight vector on subcarrier `n` (horizontal-major).
    pub fn subcarrier_weights(&self, n: usize) -> Option<Vec<Complex64>> {
        let h = self.horizontal_weights(n)?;
        Some(geometry::kron(&h, &self.vertical_weights(n)))
    }

    /// Horizontal partial gain `a_h(θ,φ,f_n) · w_h,n`.
    pub fn horizontal_gain(&self, theta: f64, phi: f64, n: usize) -> Complex64 {
        match self.horizontal {
            HorizontalModel::IdealFlat {
                gain,
                theta_min,
                theta_max,
                phi_min,
                phi_max,
            } => {
                const TOL: f64 = 1e-9;
                let inside = theta >= theta_min - TOL
                    && theta <= theta_max + TOL
                    && phi >= phi_min - TOL
                    && phi <= phi_max + TOL;
                if inside {
                    Complex64::new(gain, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            HorizontalModel::Analog => {
                let f = self.freq_devs[n];
                let slope = theta.sin() * phi.cos() * (1.0 + f / self.fc) - self.ps_h;
                partial_gain(slope, f, &self.ttd.horizontal)
            }
        }
    }

    /// Vertical partial gain `a_v(θ,f_n) · w_v,n`.
    pub fn vertical_gain(&self, theta: f64, n: usize) -> Complex64 {
        let f = self.freq_devs[n];
        let slope = theta.cos() * (1.0 + f / self.fc) - self.ps_v;
        partial_gain(slope, f, &self.ttd.vertical)
    }

    /// Array gain `a(θ,φ,f_n) · b_n` via the factorized path.
    pub fn gain(&self, theta: f64, phi: f64, n: usize) -> Complex64 {
        self.horizontal_gain(theta, phi, n) * self.vertical_gain(theta, n)
    }

    /// Array gain via the full `M`-length inner product. `None` under the flat model.
    pub fn gain_full(&self, cfg: &SystemConfig, theta: f64, phi: f64, n: usize) -> Option<Complex64> {
        let w = self.subcarrier_weights(n)?;
        let sv = geometry::upa_steering(cfg, theta, phi, self.freq_devs[n]);
        Some(geometry::inner(&sv.entries, &w))
    }
}

/// `a · w` for a steering vector and a weight vector of equal length.
pub fn array_gain(sv: &SteeringVector, w: &[Complex64]) -> Result<Complex64> {
    if sv.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: sv.len(),
            got: w.len(),
        });
    }
    Ok(geometry::inner(&sv.entries, w))
}

/// Closed-form squint grid map between `lo` (first subcarrier) and `hi` (last).
pub fn squint_grid_angle(lo: f64, hi: f64, f_dev: f64, bandwidth: f64, fc: f64) -> Result<f64> {
    let num = lo.cos() - (f_dev / bandwidth) * (lo.cos() - hi.cos() * (1.0 + bandwidth / fc));
    checked_acos(num / (1.0 + f_dev / fc), "squint grid angle")
}

/// Elevation angle steered by each subcarrier in the EAS stage.
pub fn eas_elevation_grid(cfg: &SystemConfig) -> Result<Vec<f64>> {
    cfg.freq_devs()
        .into_iter()
        .map(|f| squint_grid_angle(cfg.theta_min, cfg.theta_max, f, cfg.bandwidth, cfg.fc))
        .collect()
}

/// Azimuth angle steered by each subcarrier in every AAS stage (independent of θ̂).
pub fn aas_azimuth_grid(cfg: &SystemConfig) -> Result<Vec<f64>> {
    cfg.freq_devs()
        .into_iter()
        .map(|f| squint_grid_angle(cfg.phi_min, cfg.phi_max, f, cfg.bandwidth, cfg.fc))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAngles {
    pub elevation_grid: Vec<f64>,
    pub azimuth_grid: Vec<f64>,
}

impl GridAngles {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        Ok(Self {
            elevation_grid: eas_elevation_grid(cfg)?,
            azimuth_grid: aas_azimuth_grid(cfg)?,
        })
    }
}

/// `count` dictionary candidates between `lo` and `hi`.
///
/// With [`CandidateSpacing::SquintMap`] the squint grid map is evaluated at
/// `count` equally spaced frequency deviations over `[0, F]`, so `count = N`
/// reproduces the subcarrier grid exactly.
pub fn candidate_angles(cfg: &SystemConfig, lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 candidates, got {count}")));
    }
    let step = 1.0 / (count - 1) as f64;
    match cfg.candidate_spacing {
        CandidateSpacing::SquintMap => (0..count)
            .map(|l| squint_grid_angle(lo, hi, l as f64 * step * cfg.bandwidth, cfg.bandwidth, cfg.fc))
            .collect(),
        CandidateSpacing::UniformAngle => Ok((0..count).map(|l| lo + (hi - lo) * l as f64 * step).collect()),
    }
}

fn require_bandwidth(cfg: &SystemConfig, what: &'static str) -> Result<()> {
    if cfg.bandwidth == 0.0 {
        return Err(Error::ZeroBandwidth(what));
    }
    Ok(())
}

fn check_delay_limit(cfg: &SystemConfig, ttd: &TtdProfile) -> Result<()> {
    if let Some(limit) = cfg.max_ttd_delay_s {
        let worst = ttd.max_abs_delay();
        if worst > limit {
            return Err(Error::InvalidConfig(format!(
                "TTD profile needs |delay| up to {worst:.3e} s, above max_ttd_delay_s = {limit:.3e} s"
            )));
        }
    }
    Ok(())
}

/// Vertical delays that move the last subcarrier's peak from θ_min to θ_max.
pub fn eas_vertical_ttd(cfg: &SystemConfig) -> Result<Vec<f64>> {
    require_bandwidth(cfg, "EAS vertical TTD")?;
    let step = (cfg.theta_min.cos() - cfg.theta_max.cos() * (1.0 + cfg.squint_ratio())) / (2.0 * cfg.bandwidth);
    Ok((0..cfg.m_v).map(|m| m as f64 * step).collect())
}

/// TTD profile of the AAS beam at elevation `theta_hat`.
pub fn aas_ttd(cfg: &SystemConfig, theta_hat: f64) -> Result<TtdProfile> {
    require_bandwidth(cfg, "AAS horizontal TTD")?;
    let v_step = -theta_hat.cos() / (2.0 * cfg.fc);
    let h_step =
        theta_hat.sin() * (cfg.phi_min.cos() - cfg.phi_max.cos() * (1.0 + cfg.squint_ratio())) / (2.0 * cfg.bandwidth);
    Ok(TtdProfile {
        horizontal: (0..cfg.m_h).map(|m| m as f64 * h_step).collect(),
        vertical: (0..cfg.m_v).map(|m| m as f64 * v_step).collect(),
    })
}

/// Squint-cancelling TTD profile for a fixed direction.
pub fn comm_ttd(cfg: &SystemConfig, theta: f64, phi: f64) -> TtdProfile {
    let h_step = -theta.sin() * phi.cos() / (2.0 * cfg.fc);
    let v_step = -theta.cos() / (2.0 * cfg.fc);
    TtdProfile {
        horizontal: (0..cfg.m_h).map(|m| m as f64 * h_step).collect(),
        vertical: (0..cfg.m_v).map(|m| m as f64 * v_step).collect(),
    }
}

pub fn eas_beamformer(cfg: &SystemConfig) -> Result<BeamformerWeights> {
    let vertical = eas_vertical_ttd(cfg)?;
    let gain = flat_horizontal_gain(cfg)?;
    let grid = eas_elevation_grid(cfg)?;
    let phi_mid = 0.5 * (cfg.phi_min + cfg.phi_max);
    let ttd = TtdProfile {
        horizontal: vec![0.0; cfg.m_h],
        vertical,
    };
    check_delay_limit(cfg, &ttd)?;
    Ok(BeamformerWeights {
        kind: BeamKind::Eas,
        ps_theta: cfg.theta_min,
        ps_phi: None,
        ttd,
        horizontal: HorizontalModel::IdealFlat {
            gain,
            theta_min: cfg.theta_min,
            theta_max: cfg.theta_max,
            phi_min: cfg.phi_min,
            phi_max: cfg.phi_max,
        },
        design_points: grid.into_iter().map(|t| (t, phi_mid)).collect(),
        ps_h: 0.0,
        ps_v: cfg.theta_min.cos(),
        fc: cfg.fc,
        freq_devs: cfg.freq_devs(),
    })
}

pub fn aas_beamformer(cfg: &SystemConfig, theta_hat: f64) -> Result<BeamformerWeights> {
    let ttd = aas_ttd(cfg, theta_hat)?;
    check_delay_limit(cfg, &ttd)?;
    let grid = aas_azimuth_grid(cfg)?;
    Ok(BeamformerWeights {
        kind: BeamKind::Aas { theta_hat },
        ps_theta: theta_hat,
        ps_phi: Some(cfg.phi_min),
        ttd,
        horizontal: HorizontalModel::Analog,
        design_points: grid.into_iter().map(|p| (theta_hat, p)).collect(),
        ps_h: theta_hat.sin() * cfg.phi_min.cos(),
        ps_v: theta_hat.cos(),
        fc: cfg.fc,
        freq_devs: cfg.freq_devs(),
    })
}

pub fn comm_beamformer(cfg: &SystemConfig, theta: f64, phi: f64) -> Result<BeamformerWeights> {
    let ttd = comm_ttd(cfg, theta, phi);
    check_delay_limit(cfg, &ttd)?;
    Ok(BeamformerWeights {
        kind: BeamKind::Comm { theta, phi },
        ps_theta: theta,
        ps_phi: Some(phi),
        ttd,
        horizontal: HorizontalModel::Analog,
        design_points: vec![(theta, phi); cfg.subcarriers],
        ps_h: theta.sin() * phi.cos(),
        ps_v: theta.cos(),
        fc: cfg.fc,
        freq_devs: cfg.freq_devs(),
    })
}

/// Baseline beam that sweeps the elevation grid across subcarriers (EAS vertical
/// delays) while holding azimuth `phi` with an exact horizontal chain.
///
/// Along the sweep, subcarrier `n` needs horizontal spatial frequency
/// `u_n = sin(ϑ_n)(1 + f_n/fc) cos(phi)`, which is not affine in `f_n`. The
/// PS value and the linear horizontal TTD form the minimax affine fit
/// `u_n ≈ a + b f_n` (secant slope, offset centred between the extreme
/// deviations), which maximizes the worst-case gain over the sweep. The
/// residual mismatch stays in the exact gains.
pub fn azimuth_scan_beamformer(cfg: &SystemConfig, phi: f64) -> Result<BeamformerWeights> {
    require_bandwidth(cfg, "azimuth-scan TTD")?;
    let vertical = eas_vertical_ttd(cfg)?;
    let grid = eas_elevation_grid(cfg)?;
    let freqs = cfg.freq_devs();
    let u: Vec<f64> = grid
        .iter()
        .zip(&freqs)
        .map(|(t, f)| t.sin() * (1.0 + f / cfg.fc) * phi.cos())
        .collect();
    let last = freqs.len() - 1;
    let b = (u[last] - u[0]) / (freqs[last] - freqs[0]);
    let dev: Vec<f64> = u
        .iter()
        .zip(&freqs)
        .map(|(v, f)| v - u[0] - b * (f - freqs[0]))
        .collect();
    let hi = dev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = dev.iter().cloned().fold(f64::INFINITY, f64::min);
    let a = u[0] - b * freqs[0] + 0.5 * (hi + lo);
    let h_step = -b / 2.0;
    let ttd = TtdProfile {
        horizontal: (0..cfg.m_h).map(|m| m as f64 * h_step).collect(),
        vertical,
    };
    check_delay_limit(cfg, &ttd)?;
    Ok(BeamformerWeights {
        kind: BeamKind::AzimuthScan { phi },
        ps_theta: cfg.theta_min,
        ps_phi: Some(phi),
        ttd,
        horizontal: HorizontalModel::Analog,
        design_points: grid.into_iter().map(|t| (t, phi)).collect(),
        ps_h: a,
        ps_v: cfg.theta_min.cos(),
        fc: cfg.fc,
        freq_devs: freqs,
    })
}
