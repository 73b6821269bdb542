//! Physical system configuration shared by every module.
//!
//! Angles are stored in radians; powers, thresholds and the Rician factor
//! are stored in the units they are usually quoted in (dB / dBm / dBsm)
//! and converted through the accessor methods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// How the `L` dictionary candidates of a stage are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSpacing {
    /// Evaluate the closed-form squint grid map at `L` equally spaced
    /// frequency deviations (the natural refinement of the subcarrier grid).
    #[default]
    SquintMap,
    /// Equally spaced in angle between the ROI bounds.
    UniformAngle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Carrier frequency, Hz.
    pub fc: f64,
    /// Transmission bandwidth, Hz.
    pub bandwidth: f64,
    /// Number of OFDM subcarriers.
    pub subcarriers: usize,
    /// Horizontal element count.
    pub m_h: usize,
    /// Vertical element count.
    pub m_v: usize,
    /// Base-station height, m.
    pub height: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub noise_psd_dbm_hz: f64,
    pub rcs_dbsm: f64,
    pub kappa_db: f64,
    pub clutter_count: usize,
    pub clutter_rcs_dbsm: f64,
    pub tau_s_db: f64,
    pub tau_c_db: f64,
    /// Per-symbol sensing power budget, W.
    pub p_s_max_w: f64,
    /// Dictionary size `L`.
    pub candidates: usize,
    pub candidate_spacing: CandidateSpacing,
    /// Optional hardware bound on |TTD delay|, s.
    pub max_ttd_delay_s: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            fc: 30e9,
            bandwidth: 6e9,
            subcarriers: 128,
            m_h: 64,
            m_v: 64,
            height: 40.0,
            theta_min: 15f64.to_radians(),
            theta_max: 70f64.to_radians(),
            phi_min: 30f64.to_radians(),
            phi_max: 150f64.to_radians(),
            noise_psd_dbm_hz: -174.0,
            rcs_dbsm: 10.0,
            kappa_db: 8.0,
            clutter_count: 4,
            clutter_rcs_dbsm: 0.0,
            tau_s_db: 20.0,
            tau_c_db: 10.0,
            p_s_max_w: 1.0,
            candidates: 4096,
            candidate_spacing: CandidateSpacing::SquintMap,
            max_ttd_delay_s: None,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

impl SystemConfig {
    /// Desk-scale variant: 16x16 array, 32 subcarriers, 512 candidates.
    pub fn scaled() -> Self {
        Self {
            subcarriers: 32,
            m_h: 16,
            m_v: 16,
            candidates: 512,
            ..Self::default()
        }
    }

    /// Check every structural invariant. Returns the first violation.
    pub fn validate(&self) -> Result<()> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.fc > 0.0 && self.fc.is_finite()) {
            return bad(format!("fc must be positive, got {}", self.fc));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth));
        }
        if self.subcarriers < 2 {
            return bad(format!("subcarriers must be >= 2, got {}", self.subcarriers));
        }
        if self.m_h < 1 || self.m_v < 1 {
            return bad(format!("array dims must be >= 1, got {}x{}", self.m_h, self.m_v));
        }
        if self.candidates < self.subcarriers {
            return bad(format!(
                "candidates (L={}) must be >= subcarriers (N={})",
                self.candidates, self.subcarriers
            ));
        }
        if !(self.height > 0.0) {
            return bad(format!("height must be positive, got {}", self.height));
        }
        if !(0.0 < self.theta_min && self.theta_min < self.theta_max && self.theta_max < FRAC_PI_2) {
            return bad(format!(
                "elevation bounds must satisfy 0 < theta_min < theta_max < 90 deg, got [{}, {}] deg",
                self.theta_min.to_degrees(),
                self.theta_max.to_degrees()
            ));
        }
        if !(0.0 < self.phi_min && self.phi_min < self.phi_max && self.phi_max < PI) {
            return bad(format!(
                "azimuth bounds must satisfy 0 < phi_min < phi_max < 180 deg, got [{}, {}] deg",
                self.phi_min.to_degrees(),
                self.phi_max.to_degrees()
            ));
        }
        if !(self.p_s_max_w > 0.0) {
            return bad(format!("p_s_max_w must be positive, got {}", self.p_s_max_w));
        }
        if let Some(d) = self.max_ttd_delay_s {
            if !(d > 0.0) {
                return bad(format!("max_ttd_delay_s must be positive, got {d}"));
            }
        }
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.m_h * self.m_v
    }

    /// Carrier wavelength `c / fc`.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    /// Frequency deviation of subcarrier `n` (0-based): `n * F / (N - 1)`.
    pub fn freq_dev(&self, n: usize) -> f64 {
        n as f64 * self.bandwidth / (self.subcarriers - 1) as f64
    }

    pub fn freq_devs(&self) -> Vec<f64> {
        (0..self.subcarriers).map(|n| self.freq_dev(n)).collect()
    }

    /// Fractional bandwidth `F / fc`.
    pub fn squint_ratio(&self) -> f64 {
        self.bandwidth / self.fc
    }

    pub fn rcs_m2(&self) -> f64 {
        db_to_linear(self.rcs_dbsm)
    }

    pub fn clutter_rcs_m2(&self) -> f64 {
        db_to_linear(self.clutter_rcs_dbsm)
    }

    pub fn kappa(&self) -> f64 {
        db_to_linear(self.kappa_db)
    }

    pub fn tau_s(&self) -> f64 {
        db_to_linear(self.tau_s_db)
    }

    pub fn tau_c(&self) -> f64 {
        db_to_linear(self.tau_c_db)
    }

    /// Slant range `H / cos(theta)` to a ground point seen at elevation `theta`.
    pub fn slant_range(&self, theta: f64) -> f64 {
        self.height / theta.cos()
    }

    pub fn in_roi(&self, theta: f64, phi: f64) -> bool {
        const TOL: f64 = 1e-9;
        theta >= self.theta_min - TOL
            && theta <= self.theta_max + TOL
            && phi >= self.phi_min - TOL
            && phi <= self.phi_max + TOL
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SystemConfig::default().validate().unwrap();
        SystemConfig::scaled().validate().unwrap();
    }

    #[test]
    fn freq_dev_endpoints() {
        let cfg = SystemConfig::default();
        assert_eq!(cfg.freq_dev(0), 0.0);
        assert!((cfg.freq_dev(cfg.subcarriers - 1) - cfg.bandwidth).abs() < 1e-3);
        let devs = cfg.freq_devs();
        assert!(devs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rejects_bad_bounds() {
        let cfg = SystemConfig {
            theta_min: 80f64.to_radians(),
            ..SystemConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig {
            subcarriers: 1,
            ..SystemConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SystemConfig {
            candidates: 16,
            ..SystemConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
