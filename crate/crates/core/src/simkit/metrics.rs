//! Distance error, sum rate, power and energy-efficiency metrics.

use crate::error::{Error, Result};
use crate::power::PowerPlan;

/// Ground-plane position `(H tanθ cosφ, H tanθ sinφ)` of a direction seen from height `H`.
pub fn ground_position(height: f64, theta: f64, phi: f64) -> (f64, f64) {
    let r = height * theta.tan();
    (r * phi.cos(), r * phi.sin())
}

/// Sort by elevation, then azimuth.
pub fn sort_angles(v: &mut [(f64, f64)]) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
}

/// Mean ground distance between truth and estimates after sorting both lists.
pub fn distance_error(height: f64, truth: &[(f64, f64)], estimates: &[(f64, f64)]) -> Result<f64> {
    if truth.len() != estimates.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimates.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let mut t = truth.to_vec();
    let mut e = estimates.to_vec();
    sort_angles(&mut t);
    sort_angles(&mut e);
    let total: f64 = t
        .iter()
        .zip(&e)
        .map(|(a, b)| {
            let (xa, ya) = ground_position(height, a.0, a.1);
            let (xb, yb) = ground_position(height, b.0, b.1);
            (xa - xb).hypot(ya - yb)
        })
        .sum();
    Ok(total / t.len() as f64)
}

/// `(1/(I+1)) Σ_i Σ_{k,n} log2(1 + SINR)`; one inner slice per stage.
pub fn sum_rate(stage_sinrs: &[Vec<f64>]) -> f64 {
    if stage_sinrs.is_empty() {
        return 0.0;
    }
    let total: f64 = stage_sinrs.iter().flatten().map(|s| (1.0 + s).log2()).sum();
    total / stage_sinrs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitMetrics {
    /// `Σ_i T_i Σ_n p^s_{i,n}`, W·symbols.
    pub total_sensing_energy: f64,
    /// `(1/(I+1)) Σ_i T_i (Σ_n p^s + Σ_{k,n} p^c)`, W·symbols per stage.
    pub avg_transmit_power: f64,
}

pub fn transmit_power_metrics(plan: &PowerPlan) -> TransmitMetrics {
    let total_sensing_energy = plan.stages.iter().map(|s| s.symbols as f64 * s.sensing_sum()).sum();
    let stages = plan.stages.len().max(1) as f64;
    let avg_transmit_power = plan
        .stages
        .iter()
        .map(|s| s.symbols as f64 * (s.sensing_sum() + s.comm_sum()))
        .sum::<f64>()
        / stages;
    TransmitMetrics {
        total_sensing_energy,
        avg_transmit_power,
    }
}

/// Sum rate per unit average transmit power; zero when nothing is transmitted.
pub fn energy_efficiency(sum_rate: f64, avg_transmit_power: f64) -> f64 {
    if avg_transmit_power > 0.0 {
        sum_rate / avg_transmit_power
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::StagePower;
    use std::f64::consts::PI;

    const DEG: f64 = PI / 180.0;

    #[test]
    fn distance_error_cases() {
        let truth = vec![(0.5, 1.0), (0.9, 2.0)];
        assert_eq!(distance_error(40.0, &truth, &truth).unwrap(), 0.0);
        assert!(distance_error(40.0, &truth, &truth[..1]).is_err());

        let (theta, phi, d) = (40.0 * DEG, 80.0 * DEG, 1e-5);
        let r = 40.0 * theta.tan();
        let err = distance_error(40.0, &[(theta, phi)], &[(theta, phi + d)]).unwrap();
        assert!((err - r * d).abs() < 1e-6 * r * d);
    }

    #[test]
    fn crossed_pairing_matches_assignment() {
        // estimates listed in the opposite order; sorting pairs them like the cheapest assignment
        let truth = vec![(30.0 * DEG, 60.0 * DEG), (50.0 * DEG, 120.0 * DEG)];
        let est = vec![(50.5 * DEG, 121.0 * DEG), (29.0 * DEG, 61.0 * DEG)];
        let sorted = distance_error(40.0, &truth, &est).unwrap();
        let cost = |a: (f64, f64), b: (f64, f64)| {
            let (xa, ya) = ground_position(40.0, a.0, a.1);
            let (xb, yb) = ground_position(40.0, b.0, b.1);
            (xa - xb).hypot(ya - yb)
        };
        let straight = (cost(truth[0], est[0]) + cost(truth[1], est[1])) / 2.0;
        let crossed = (cost(truth[0], est[1]) + cost(truth[1], est[0])) / 2.0;
        assert!((sorted - straight.min(crossed)).abs() < 1e-12);
    }

    #[test]
    fn sum_rate_cases() {
        assert_eq!(sum_rate(&[vec![0.0; 4]]), 0.0);
        assert!((sum_rate(&[vec![1.0, 3.0]]) - 3.0).abs() < 1e-12);
        let tau: f64 = 10.0;
        let rate = sum_rate(&[vec![tau; 6], vec![tau; 6]]);
        assert!((rate - 6.0 * (1.0 + tau).log2()).abs() < 1e-12);
    }

    #[test]
    fn transmit_metrics() {
        let stage = |symbols, sensing: Vec<f64>, comm: Vec<Vec<f64>>| StagePower {
            stage: 0,
            symbols,
            sensing,
            comm,
            effective_tau_c: 1.0,
        };
        let plan = PowerPlan {
            stages: vec![stage(3, vec![0.1, 0.2], vec![]), stage(1, vec![0.5, 0.5], vec![])],
        };
        let m = transmit_power_metrics(&plan);
        assert!((m.total_sensing_energy - 1.9).abs() < 1e-12);
        assert!((m.avg_transmit_power - 0.95).abs() < 1e-12);

        let with_comm = PowerPlan {
            stages: vec![stage(2, vec![0.25, 0.25], vec![vec![0.1, 0.2], vec![0.3, 0.4]])],
        };
        let m = transmit_power_metrics(&with_comm);
        assert!((m.total_sensing_energy - 1.0).abs() < 1e-12);
        assert!((m.avg_transmit_power - 3.0).abs() < 1e-12);

        let doubled = PowerPlan {
            stages: plan
                .stages
                .iter()
                .map(|s| StagePower {
                    symbols: 2 * s.symbols,
                    ..s.clone()
                })
                .collect(),
        };
        let d = transmit_power_metrics(&doubled);
        assert!((d.total_sensing_energy - 3.8).abs() < 1e-12);
        assert!((d.avg_transmit_power - 1.9).abs() < 1e-12);
        assert_eq!(energy_efficiency(5.0, 0.0), 0.0);
        assert!((energy_efficiency(5.0, 2.0) * 2.0 - 5.0).abs() < 1e-12);
    }
}
