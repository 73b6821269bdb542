//! UPA steering vectors with frequency-dependent beam squint.
//!
//! Element ordering of the full `M = M_h * M_v` vector is horizontal-major:
//! element `(m_h, m_v)` (0-based) sits at index `m_h * M_v + m_v`. Every
//! module relies on this ordering.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// How far an arccos argument may stray outside [-1, 1] before it is treated
/// as a configuration error instead of float drift.
pub const ACOS_TOLERANCE: f64 = 1e-9;

/// `arccos` with a small clamp band; beyond it the argument is rejected.
pub fn checked_acos(x: f64, context: &'static str) -> Result<f64> {
    if !x.is_finite() || x > 1.0 + ACOS_TOLERANCE || x < -1.0 - ACOS_TOLERANCE {
        return Err(Error::AngleDomain { context, value: x });
    }
    Ok(x.clamp(-1.0, 1.0).acos())
}

/// Uniform linear steering vector with per-element phase step `-pi * spatial`.
fn linear_steering(spatial: f64, len: usize) -> Vec<Complex64> {
    let norm = 1.0 / (len as f64).sqrt();
    (0..len)
        .map(|m| Complex64::from_polar(norm, -PI * m as f64 * spatial))
        .collect()
}

/// Horizontal factor `a_h(theta, phi, f_dev)`.
pub fn horizontal_steering(theta: f64, phi: f64, f_dev: f64, fc: f64, m_h: usize) -> Vec<Complex64> {
    linear_steering(theta.sin() * phi.cos() * (1.0 + f_dev / fc), m_h)
}

/// Vertical factor `a_v(theta, f_dev)`.
pub fn vertical_steering(theta: f64, f_dev: f64, fc: f64, m_v: usize) -> Vec<Complex64> {
    linear_steering(theta.cos() * (1.0 + f_dev / fc), m_v)
}

/// Kronecker product `a ⊗ b`, horizontal-major.
pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// A full UPA steering vector together with the direction and frequency it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: Vec<Complex64>,
    pub theta: f64,
    pub phi: f64,
    pub f_dev: f64,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `a(theta, phi, f_dev) = a_h ⊗ a_v` for the configured array.
pub fn upa_steering(cfg: &SystemConfig, theta: f64, phi: f64, f_dev: f64) -> SteeringVector {
    let h = horizontal_steering(theta, phi, f_dev, cfg.fc, cfg.m_h);
    let v = vertical_steering(theta, f_dev, cfg.fc, cfg.m_v);
    SteeringVector {
        entries: kron(&h, &v),
        theta,
        phi,
        f_dev,
    }
}

/// Composite-AoD interval `[psi_min, psi_max]` covering the ROI at its widest
/// elevation, including the squint stretch of the last subcarrier.
///
/// Works on raw angles so that boundary cases outside the validated
/// configuration space can be evaluated too.
pub fn composite_aod_interval(theta_max: f64, phi_min: f64, phi_max: f64, squint_ratio: f64) -> Result<(f64, f64)> {
    let a = checked_acos(theta_max.sin() * phi_min.cos(), "psi_min")?;
    let b = checked_acos(theta_max.sin() * phi_max.cos() * (1.0 + squint_ratio), "psi_max")?;
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let width = hi - lo;
    if width <= 0.0 {
        return Err(Error::DegenerateInterval { width });
    }
    Ok((lo, hi))
}

pub fn composite_aod_bounds(cfg: &SystemConfig) -> Result<(f64, f64)> {
    composite_aod_interval(cfg.theta_max, cfg.phi_min, cfg.phi_max, cfg.squint_ratio())
}

/// Constant horizontal gain magnitude of an ideal flat beam whose squared
/// gain integrates to `2*pi / M_h` over the composite-AoD interval.
pub fn flat_gain_for_width(m_h: usize, width: f64) -> f64 {
    (2.0 * PI / (m_h as f64 * width)).sqrt()
}

pub fn flat_horizontal_gain(cfg: &SystemConfig) -> Result<f64> {
    let (lo, hi) = composite_aod_bounds(cfg)?;
    Ok(flat_gain_for_width(cfg.m_h, hi - lo))
}

/// Row-vector times column-vector product `a · w` (no conjugation).
pub fn inner(a: &[Complex64], w: &[Complex64]) -> Complex64 {
    a.iter().zip(w).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DEG: f64 = PI / 180.0;

    #[test]
    fn zero_phase_horizontal() {
        let a = horizontal_steering(PI / 2.0, PI / 2.0, 0.0, 30e9, 4);
        for z in a {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn single_element_is_one() {
        let a = horizontal_steering(0.3, 1.1, 2e9, 30e9, 1);
        assert_eq!(a, vec![Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn horizontal_squinted_phase() {
        // independent scalar evaluation of the second entry
        let phase = -PI * (70.0 * DEG).sin() * (30.0 * DEG).cos() * 1.2;
        let expected = Complex64::new(phase.cos(), phase.sin()) / 2f64.sqrt();
        let a = horizontal_steering(70.0 * DEG, 30.0 * DEG, 6e9, 30e9, 2);
        assert!((a[1] - expected).norm() < 1e-14);
        // frozen value
        assert!((phase - (-3.067_944_98)).abs() < 1e-8, "{phase}");
    }

    #[test]
    fn vertical_cases() {
        let a = vertical_steering(PI / 2.0, 5e9, 30e9, 8);
        for z in a {
            assert!((z.re - 1.0 / 8f64.sqrt()).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
        let a = vertical_steering(0.0, 0.0, 30e9, 2);
        let r = 1.0 / 2f64.sqrt();
        assert!((a[0] - Complex64::new(r, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-r, 0.0)).norm() < 1e-15);

        let a = vertical_steering(15.0 * DEG, 3e9, 30e9, 4);
        for (m, z) in a.iter().enumerate() {
            let ph = -PI * m as f64 * (15.0 * DEG).cos() * 1.1;
            assert!((z - Complex64::from_polar(0.5, ph)).norm() < 1e-14);
        }
    }

    #[test]
    fn broadside_upa_uniform() {
        let cfg = SystemConfig {
            m_h: 4,
            m_v: 8,
            ..SystemConfig::default()
        };
        let sv = upa_steering(&cfg, PI / 2.0, PI / 2.0, 0.0);
        let expected = 1.0 / 32f64.sqrt();
        for z in &sv.entries {
            assert!((z.re - expected).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn aod_bounds_default_roi() {
        let cfg = SystemConfig::default();
        let (lo, hi) = composite_aod_bounds(&cfg).unwrap();
        // hand evaluation: acos(sin70 cos30), acos(1.2 sin70 cos150)
        assert!((lo - 0.620_139_006).abs() < 1e-8, "{lo}");
        assert!((hi - 2.924_636_652).abs() < 1e-8, "{hi}");
        let g = flat_horizontal_gain(&cfg).unwrap();
        assert!((g - 0.2063).abs() < 1e-3, "{g}");
    }

    #[test]
    fn aod_degenerate_and_identity() {
        assert!(matches!(
            composite_aod_interval(70.0 * DEG, 60.0 * DEG, 60.0 * DEG, 0.0),
            Err(Error::DegenerateInterval { .. })
        ));
        let phi_max = 2.0;
        let (lo, hi) = composite_aod_interval(PI / 2.0, 0.0, phi_max, 0.0).unwrap();
        assert!(lo.abs() < 1e-7 && (hi - phi_max).abs() < 1e-12);
    }

    #[test]
    fn acos_clamp_band() {
        assert_eq!(checked_acos(1.0 + 1e-12, "t").unwrap(), 0.0);
        assert!(checked_acos(1.0 + 1e-6, "t").is_err());
    }

    #[test]
    fn flat_gain_scaling() {
        let w = 2.306;
        let g1 = flat_gain_for_width(64, w);
        let g2 = flat_gain_for_width(128, w);
        assert!((g1 / g2 - 2f64.sqrt()).abs() < 1e-12);
        assert!((flat_gain_for_width(1, 2.0 * PI) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn squint_scales_vertical_phase() {
        let theta = 40.0 * DEG;
        let base = vertical_steering(theta, 0.0, 30e9, 2)[1].arg();
        let squinted = vertical_steering(theta, 6e9, 30e9, 2)[1].arg();
        // both phases stay inside (-pi, 0) for this angle, so no wrapping
        assert!((squinted - 1.2 * base).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn unit_norm(theta in 0.0..PI, phi in 0.0..PI, f in 0.0..6e9) {
            let cfg = SystemConfig { m_h: 7, m_v: 5, ..SystemConfig::default() };
            let sv = upa_steering(&cfg, theta, phi, f);
            prop_assert!((sv.norm() - 1.0).abs() < 1e-12);
            let self_ip: Complex64 = sv.entries.iter().map(|z| z.conj() * z).sum();
            prop_assert!((self_ip - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            for z in &sv.entries {
                prop_assert!((z.norm() - 1.0 / 35f64.sqrt()).abs() < 1e-12);
            }
        }

        #[test]
        fn kronecker_consistency(theta in 0.0..PI, phi in 0.0..PI, f in 0.0..6e9) {
            let cfg = SystemConfig { m_h: 6, m_v: 3, ..SystemConfig::default() };
            let sv = upa_steering(&cfg, theta, phi, f);
            let h = horizontal_steering(theta, phi, f, cfg.fc, 6);
            let v = vertical_steering(theta, f, cfg.fc, 3);
            for mh in 0..6 {
                for mv in 0..3 {
                    prop_assert!((sv.entries[mh * 3 + mv] - h[mh] * v[mv]).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn global_phase_invariance(t1 in 0.1..1.5, p1 in 0.1..3.0, t2 in 0.1..1.5, p2 in 0.1..3.0, rot in 0.0..6.28) {
            let cfg = SystemConfig { m_h: 4, m_v: 4, ..SystemConfig::default() };
            let a = upa_steering(&cfg, t1, p1, 1e9).entries;
            let b = upa_steering(&cfg, t2, p2, 2e9).entries;
            let r = Complex64::from_polar(1.0, rot);
            let ip = |x: &[Complex64], y: &[Complex64]| -> f64 {
                x.iter().zip(y).map(|(u, v)| u.conj() * v).sum::<Complex64>().norm()
            };
            let ar: Vec<_> = a.iter().map(|z| z * r).collect();
            let br: Vec<_> = b.iter().map(|z| z * r).collect();
            prop_assert!((ip(&a, &b) - ip(&ar, &br)).abs() < 1e-12);
        }
    }
}
