//! Sensing power / symbol-count allocation and SINR-constrained
//! communication power allocation.

use nalgebra::{DMatrix, DVector};

use crate::beamforming::BeamformerWeights;
use crate::channel::{comm_gain, sensing_attenuation, subcarrier_noise_variance, Scene};
use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Backoff step applied to the communication threshold, dB.
pub const BACKOFF_STEP_DB: f64 = 0.5;
/// Lowest threshold tried, as a fraction of the requested one.
pub const BACKOFF_FLOOR: f64 = 1e-3;

/// Allocation for one sensing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePower {
    pub stage: usize,
    pub symbols: u64,
    /// `p^s_n`, W.
    pub sensing: Vec<f64>,
    /// `p^c_{k,n}`, indexed `[user][subcarrier]`, W.
    pub comm: Vec<Vec<f64>>,
    /// Achieved SINR threshold after backoff (linear); equals the requested one when no backoff was needed.
    pub effective_tau_c: f64,
}

impl StagePower {
    pub fn sensing_sum(&self) -> f64 {
        self.sensing.iter().sum()
    }

    pub fn comm_sum(&self) -> f64 {
        self.comm.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerPlan {
    pub stages: Vec<StagePower>,
}

impl PowerPlan {
    /// Lowest effective threshold over all stages, or `None` for a plan without users.
    pub fn effective_tau_c(&self) -> Option<f64> {
        self.stages
            .iter()
            .filter(|s| !s.comm.is_empty())
            .map(|s| s.effective_tau_c)
            .reduce(f64::min)
    }
}

/// Per-subcarrier interference structure seen by the users during one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrContext {
    /// `χ_{k,l,n}`, indexed `[n][k][l]`.
    pub chi: Vec<Vec<Vec<f64>>>,
    /// `σ̃²_{k,n}`, indexed `[n][k]`.
    pub effective_noise: Vec<Vec<f64>>,
}

impl SinrContext {
    pub fn users(&self) -> usize {
        self.chi.first().map_or(0, |c| c.len())
    }

    pub fn subcarriers(&self) -> usize {
        self.chi.len()
    }
}

/// `|bᴴ G^los b|²` of a single on-grid target at the beam's design point for subcarrier `n`.
pub fn grid_echo_strength(cfg: &SystemConfig, weights: &BeamformerWeights, n: usize) -> f64 {
    let (theta, phi) = weights.design_points[n];
    let alpha = sensing_attenuation(cfg, cfg.slant_range(theta), cfg.rcs_m2());
    let g = weights.gain(theta, phi, n).norm_sqr();
    (alpha * g).powi(2)
}

/// Symbol count and per-subcarrier powers meeting `τ^s` with equality at every grid point.
pub fn allocate_sensing(cfg: &SystemConfig, weights: &BeamformerWeights, stage: usize) -> Result<(u64, Vec<f64>)> {
    let noise = subcarrier_noise_variance(cfg);
    let target = cfg.tau_s() * noise;
    let strengths: Vec<f64> = (0..weights.num_subcarriers())
        .map(|n| grid_echo_strength(cfg, weights, n))
        .collect();
    if let Some(n) = strengths.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::InfeasibleGrid { stage, subcarrier: n });
    }
    let required: f64 = strengths.iter().map(|s| target / (cfg.p_s_max_w * s)).sum();
    let symbols = (required.ceil() as u64).max(1);
    let powers = strengths.iter().map(|s| target / (symbols as f64 * s)).collect();
    Ok((symbols, powers))
}

/// `χ` and `σ̃²` for the given sensing beam and powers.
pub fn sinr_context(
    cfg: &SystemConfig,
    scene: &Scene,
    comm_beams: &[BeamformerWeights],
    sensing_beam: &BeamformerWeights,
    sensing_powers: &[f64],
) -> Result<SinrContext> {
    if comm_beams.len() != scene.users.len() {
        return Err(Error::LengthMismatch {
            expected: scene.users.len(),
            got: comm_beams.len(),
        });
    }
    if sensing_powers.len() != sensing_beam.num_subcarriers() {
        return Err(Error::LengthMismatch {
            expected: sensing_beam.num_subcarriers(),
            got: sensing_powers.len(),
        });
    }
    let n_sub = sensing_beam.num_subcarriers();
    let mut chi = Vec::with_capacity(n_sub);
    let mut effective_noise = Vec::with_capacity(n_sub);
    for (n, &ps) in sensing_powers.iter().enumerate() {
        chi.push(
            scene
                .users
                .iter()
                .map(|u| comm_beams.iter().map(|w| comm_gain(cfg, u, w, n).norm_sqr()).collect())
                .collect(),
        );
        effective_noise.push(
            scene
                .users
                .iter()
                .map(|u| comm_gain(cfg, u, sensing_beam, n).norm_sqr() * ps + u.noise_var)
                .collect(),
        );
    }
    Ok(SinrContext { chi, effective_noise })
}

/// Strict diagonal dominance of the allocation system on subcarrier `n`.
pub fn check_feasibility(ctx: &SinrContext, tau_c: f64, n: usize) -> Result<bool> {
    let chi = &ctx.chi[n];
    for (k, row) in chi.iter().enumerate() {
        if !(row[k] > 0.0) {
            return Err(Error::UnservableUser { user: k, subcarrier: n });
        }
        let ratio: f64 = row
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != k)
            .map(|(_, &x)| x / row[k])
            .sum();
        if !(1.0 / tau_c > ratio) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Solve `D p = s` for the communication powers on subcarrier `n`.
pub fn allocate_comm(ctx: &SinrContext, tau_c: f64, n: usize) -> Result<Vec<f64>> {
    if !check_feasibility(ctx, tau_c, n)? {
        return Err(Error::InfeasibleComm { last_tau_c: tau_c });
    }
    let chi = &ctx.chi[n];
    let k = chi.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let d = DMatrix::from_fn(k, k, |r, c| if r == c { 1.0 } else { -tau_c * chi[r][c] / chi[r][r] });
    let s = DVector::from_fn(k, |r, _| tau_c * ctx.effective_noise[n][r] / chi[r][r]);
    let p = d
        .clone()
        .lu()
        .solve(&s)
        .ok_or_else(|| Error::Other(format!("singular allocation system on subcarrier {n}")))?;
    let residual = (&d * &p - &s).norm();
    if residual > 1e-10 * s.norm() {
        return Err(Error::Other(format!(
            "allocation residual {residual:e} too large on subcarrier {n}"
        )));
    }
    Ok(p.iter().copied().collect())
}

/// Largest threshold `τ^c · 10^(-0.05 j)` feasible on every subcarrier.
pub fn backoff_tau_c(ctx: &SinrContext, tau_c: f64) -> Result<f64> {
    let floor = tau_c * BACKOFF_FLOOR;
    let mut current = tau_c;
    let mut j = 0;
    while current >= floor {
        let mut ok = true;
        for n in 0..ctx.subcarriers() {
            if !check_feasibility(ctx, current, n)? {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(current);
        }
        j += 1;
        current = tau_c * 10f64.powf(-BACKOFF_STEP_DB * j as f64 / 10.0);
    }
    Err(Error::InfeasibleComm {
        last_tau_c: tau_c * 10f64.powf(-BACKOFF_STEP_DB * (j - 1) as f64 / 10.0),
    })
}

/// SINR of every user on subcarrier `n` under powers `p`.
pub fn achieved_sinr(ctx: &SinrContext, n: usize, p: &[f64]) -> Vec<f64> {
    let chi = &ctx.chi[n];
    (0..chi.len())
        .map(|k| {
            let interference: f64 = (0..chi.len()).filter(|&l| l != k).map(|l| chi[k][l] * p[l]).sum();
            chi[k][k] * p[k] / (interference + ctx.effective_noise[n][k])
        })
        .collect()
}

/// Allocate communication powers for every subcarrier of one stage, backing off `τ^c` if needed.
pub fn allocate_comm_stage(ctx: &SinrContext, tau_c: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let k = ctx.users();
    if k == 0 {
        return Ok((tau_c, Vec::new()));
    }
    let effective = backoff_tau_c(ctx, tau_c)?;
    let mut per_user = vec![vec![0.0; ctx.subcarriers()]; k];
    for n in 0..ctx.subcarriers() {
        let p = allocate_comm(ctx, effective, n)?;
        for (u, v) in p.into_iter().enumerate() {
            per_user[u][n] = v;
        }
    }
    Ok((effective, per_user))
}

/// Full allocation of one stage: sensing first, then communication on top of it.
pub fn plan_stage(
    cfg: &SystemConfig,
    scene: &Scene,
    comm_beams: &[BeamformerWeights],
    sensing_beam: &BeamformerWeights,
    stage: usize,
) -> Result<(StagePower, SinrContext)> {
    let (symbols, sensing) = allocate_sensing(cfg, sensing_beam, stage)?;
    let stage_power = with_comm(cfg, scene, comm_beams, sensing_beam, stage, symbols, sensing)?;
    Ok(stage_power)
}

/// Complete a stage whose sensing side is already fixed.
pub fn with_comm(
    cfg: &SystemConfig,
    scene: &Scene,
    comm_beams: &[BeamformerWeights],
    sensing_beam: &BeamformerWeights,
    stage: usize,
    symbols: u64,
    sensing: Vec<f64>,
) -> Result<(StagePower, SinrContext)> {
    let ctx = sinr_context(cfg, scene, comm_beams, sensing_beam, &sensing)?;
    let (effective_tau_c, comm) = allocate_comm_stage(&ctx, cfg.tau_c())?;
    Ok((
        StagePower {
            stage,
            symbols,
            sensing,
            comm,
            effective_tau_c,
        },
        ctx,
    ))
}
