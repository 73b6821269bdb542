//! Reference scanning schemes: an exhaustive pencil-beam grid scan and an
//! azimuth-only scan that relies on beam squint for elevation.
//!
//! Both run one OFDM symbol per beam with powers chosen so that a target on
//! the designed grid cell reaches the sensing SNR threshold on every
//! subcarrier, and both report the `Q` strongest grid cells.

use num_complex::Complex64;
use rand::Rng;

use crate::beamforming::{
    aas_azimuth_grid, azimuth_scan_beamformer, comm_beamformer, eas_elevation_grid, BeamformerWeights,
};
use crate::channel::{subcarrier_noise_variance, Scene};
use crate::config::SystemConfig;
use crate::detection::{assemble_observation, ObservationModel};
use crate::error::{Error, Result};
use crate::power::grid_echo_strength;

/// One transmitted sensing beam and its allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingStage {
    pub beam: BeamformerWeights,
    pub symbols: u64,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub estimates: Vec<(f64, f64)>,
    pub stages: Vec<SensingStage>,
}

impl ScanOutcome {
    pub fn symbol_count(&self) -> u64 {
        self.stages.iter().map(|s| s.symbols).sum()
    }
}

/// Single-symbol powers meeting the SNR threshold with equality at each design point.
fn single_symbol_powers(cfg: &SystemConfig, beam: &BeamformerWeights, stage: usize) -> Result<Vec<f64>> {
    let target = cfg.tau_s() * subcarrier_noise_variance(cfg);
    (0..beam.num_subcarriers())
        .map(|n| {
            let s = grid_echo_strength(cfg, beam, n);
            if s > 0.0 {
                Ok(target / s)
            } else {
                Err(Error::InfeasibleGrid { stage, subcarrier: n })
            }
        })
        .collect()
}

/// Indices of the `q` largest scores; ties keep the lower index.
fn top_q(scores: &[f64], q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(q);
    idx
}

/// Pencil-beam scan over the `N x N` (ϑ_m, φ_n) grid, one symbol per cell.
///
/// Per-cell statistic: magnitude of the coherent sum of the subcarrier
/// observations (the squint-compensated beam has the same response on every
/// subcarrier).
pub fn run_exhaustive<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scene: &Scene,
    q: usize,
    model: ObservationModel,
    rng: &mut R,
) -> Result<ScanOutcome> {
    let thetas = eas_elevation_grid(cfg)?;
    let phis = aas_azimuth_grid(cfg)?;
    let mut stages = Vec::with_capacity(thetas.len() * phis.len());
    let mut scores = Vec::with_capacity(thetas.len() * phis.len());
    let mut cells = Vec::with_capacity(thetas.len() * phis.len());
    for &theta in &thetas {
        for &phi in &phis {
            let stage = stages.len();
            let beam = comm_beamformer(cfg, theta, phi)?;
            let powers = single_symbol_powers(cfg, &beam, stage)?;
            let obs = assemble_observation(cfg, scene, &beam, &powers, 1, stage, model, rng)?;
            scores.push(obs.values.iter().sum::<Complex64>().norm());
            cells.push((theta, phi));
            stages.push(SensingStage {
                beam,
                symbols: 1,
                powers,
            });
        }
    }
    let estimates = top_q(&scores, q).into_iter().map(|i| cells[i]).collect();
    Ok(ScanOutcome { estimates, stages })
}

/// Azimuth scan: symbol `m` holds azimuth φ_m while subcarrier `n` covers ϑ_n.
///
/// Each (symbol, subcarrier) pair is one grid cell; the statistic is the
/// magnitude of that single observation.
pub fn run_azimuth_only<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scene: &Scene,
    q: usize,
    model: ObservationModel,
    rng: &mut R,
) -> Result<ScanOutcome> {
    let phis = aas_azimuth_grid(cfg)?;
    let mut stages = Vec::with_capacity(phis.len());
    let mut scores = Vec::with_capacity(phis.len() * cfg.subcarriers);
    let mut cells = Vec::with_capacity(phis.len() * cfg.subcarriers);
    for (m, &phi) in phis.iter().enumerate() {
        let beam = azimuth_scan_beamformer(cfg, phi)?;
        let powers = single_symbol_powers(cfg, &beam, m)?;
        let obs = assemble_observation(cfg, scene, &beam, &powers, 1, m, model, rng)?;
        for (n, v) in obs.values.iter().enumerate() {
            scores.push(v.norm());
            cells.push(beam.design_points[n]);
        }
        stages.push(SensingStage {
            beam,
            symbols: 1,
            powers,
        });
    }
    let estimates = top_q(&scores, q).into_iter().map(|i| cells[i]).collect();
    Ok(ScanOutcome { estimates, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Target;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SystemConfig {
        SystemConfig {
            subcarriers: 16,
            m_h: 16,
            m_v: 16,
            candidates: 16,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn exhaustive_on_grid() {
        let cfg = cfg();
        let th = eas_elevation_grid(&cfg).unwrap();
        let ph = aas_azimuth_grid(&cfg).unwrap();
        let scene = Scene {
            targets: vec![Target::new(&cfg, th[6], ph[11])],
            ..Scene::empty()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = run_exhaustive(&cfg, &scene, 1, ObservationModel::noiseless(false), &mut rng).unwrap();
        assert_eq!(out.symbol_count(), 256);
        assert_eq!(out.estimates, vec![(th[6], ph[11])]);
    }

    #[test]
    fn azimuth_only_on_grid() {
        let cfg = cfg();
        let th = eas_elevation_grid(&cfg).unwrap();
        let ph = aas_azimuth_grid(&cfg).unwrap();
        let scene = Scene {
            targets: vec![Target::new(&cfg, th[9], ph[3])],
            ..Scene::empty()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = run_azimuth_only(&cfg, &scene, 1, ObservationModel::noiseless(false), &mut rng).unwrap();
        assert_eq!(out.symbol_count(), 16);
        assert_eq!(out.estimates, vec![(th[9], ph[3])]);
    }

    #[test]
    fn top_q_ties() {
        assert_eq!(top_q(&[1.0, 3.0, 3.0, 2.0], 2), vec![1, 2]);
        assert_eq!(top_q(&[1.0], 0), Vec::<usize>::new());
    }
}
