//! Observation assembly, dictionaries and modified matching pursuit, plus
//! the hierarchical elevation-then-azimuth detection pipeline.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beamforming::{aas_beamformer, candidate_angles, eas_beamformer, BeamformerWeights};
use crate::channel::{echo_gain, sensing_attenuation, subcarrier_noise_variance, Scene};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::power::allocate_sensing;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    pub values: Vec<Complex64>,
    pub stage: usize,
    pub symbol_count: u64,
}

impl ObservationVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Elevation,
    Azimuth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    /// `L` columns of length `N`.
    pub columns: Vec<Vec<f64>>,
    /// Candidate angle of each column (elevation or azimuth, by `kind`).
    pub candidates: Vec<f64>,
    pub kind: StageKind,
    pub theta_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountingVector {
    pub counts: Vec<u32>,
    /// `(index, unit phasor)` per iteration, in selection order.
    pub selections: Vec<(usize, Complex64)>,
}

impl CountingVector {
    /// Nonzero entries as `(index, multiplicity)`, ascending by index.
    pub fn support(&self) -> Vec<(usize, u32)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpStep {
    pub iteration: usize,
    pub index: usize,
    /// Normalized correlation `|⟨r, c⟩| / ‖c‖` of the selected column.
    pub correlation: f64,
    /// Residual norm after deflation.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpOutcome {
    pub counting: CountingVector,
    pub trace: Vec<MpStep>,
}

/// Residual-energy stopping rule for the pursuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run exactly the requested number of iterations.
    Fixed,
    /// Stop early once the residual norm drops to `factor · ‖obs‖`.
    ResidualFraction(f64),
}

/// Default factor of [`StopRule::ResidualFraction`].
pub const DEFAULT_STOP_FRACTION: f64 = 1e-3;

/// Remove the symbol phase from a raw received sample.
pub fn matched_echo(raw: Complex64, symbol: Complex64) -> Result<Complex64> {
    let mag = symbol.norm();
    if !(mag > 0.0) {
        return Err(Error::ZeroSymbol);
    }
    Ok(symbol.conj() / mag * raw)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * (variance / 2.0).sqrt()
}

fn qpsk<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = if rng.random::<bool>() { s } else { -s };
    let im = if rng.random::<bool>() { s } else { -s };
    Complex64::new(re, im)
}

/// How echoes are simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    pub include_clutter: bool,
    /// Receiver noise variance per subcarrier, W; zero gives noiseless observations.
    pub noise_var: f64,
}

impl ObservationModel {
    pub fn noisy(cfg: &SystemConfig, include_clutter: bool) -> Self {
        Self {
            include_clutter,
            noise_var: subcarrier_noise_variance(cfg),
        }
    }

    pub fn noiseless(include_clutter: bool) -> Self {
        Self {
            include_clutter,
            noise_var: 0.0,
        }
    }
}

/// Average of `symbols` matched echoes on every subcarrier.
///
/// Each symbol is a random QPSK point; the combined receive noise has
/// variance `noise_var` because the beamformer has unit norm.
pub fn assemble_observation<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scene: &Scene,
    weights: &BeamformerWeights,
    powers: &[f64],
    symbols: u64,
    stage: usize,
    model: ObservationModel,
    rng: &mut R,
) -> Result<ObservationVector> {
    if symbols < 1 {
        return Err(Error::NoSymbols);
    }
    if powers.len() != weights.num_subcarriers() {
        return Err(Error::LengthMismatch {
            expected: weights.num_subcarriers(),
            got: powers.len(),
        });
    }
    let mut values = Vec::with_capacity(powers.len());
    for (n, &p) in powers.iter().enumerate() {
        let echo = p.sqrt() * echo_gain(cfg, scene, weights, n, model.include_clutter);
        let mut acc = Complex64::new(0.0, 0.0);
        for _ in 0..symbols {
            let s = qpsk(rng);
            let mut raw = echo * s;
            if model.noise_var > 0.0 {
                raw += complex_gaussian(rng, model.noise_var);
            }
            acc += matched_echo(raw, s)?;
        }
        values.push(acc / symbols as f64);
    }
    Ok(ObservationVector {
        values,
        stage,
        symbol_count: symbols,
    })
}

/// Dictionary column for a hypothetical target at `(theta, phi)`.
pub fn sensing_pattern(
    cfg: &SystemConfig,
    weights: &BeamformerWeights,
    powers: &[f64],
    theta: f64,
    phi: f64,
) -> Vec<f64> {
    let alpha = sensing_attenuation(cfg, cfg.slant_range(theta), cfg.rcs_m2());
    powers
        .iter()
        .enumerate()
        .map(|(n, p)| p.sqrt() * alpha * weights.gain(theta, phi, n).norm_sqr())
        .collect()
}

/// Dictionary of a stage. For an azimuth stage the elevation estimate is required.
pub fn build_measurement_matrix(
    cfg: &SystemConfig,
    kind: StageKind,
    theta_hat: Option<f64>,
    powers: &[f64],
) -> Result<MeasurementMatrix> {
    match kind {
        StageKind::Elevation => {
            let weights = eas_beamformer(cfg)?;
            build_with_beam(cfg, &weights, kind, None, powers)
        }
        StageKind::Azimuth => {
            let theta = theta_hat.ok_or(Error::MissingElevation)?;
            let weights = aas_beamformer(cfg, theta)?;
            build_with_beam(cfg, &weights, kind, Some(theta), powers)
        }
    }
}

fn build_with_beam(
    cfg: &SystemConfig,
    weights: &BeamformerWeights,
    kind: StageKind,
    theta_hat: Option<f64>,
    powers: &[f64],
) -> Result<MeasurementMatrix> {
    if powers.len() != weights.num_subcarriers() {
        return Err(Error::LengthMismatch {
            expected: weights.num_subcarriers(),
            got: powers.len(),
        });
    }
    let (candidates, columns) = match kind {
        StageKind::Elevation => {
            // the flat horizontal model makes the pattern azimuth-independent inside the ROI
            let phi_mid = 0.5 * (cfg.phi_min + cfg.phi_max);
            let cands = candidate_angles(cfg, cfg.theta_min, cfg.theta_max, cfg.candidates)?;
            let cols = cands
                .iter()
                .map(|&t| sensing_pattern(cfg, weights, powers, t, phi_mid))
                .collect();
            (cands, cols)
        }
        StageKind::Azimuth => {
            let theta = theta_hat.ok_or(Error::MissingElevation)?;
            let cands = candidate_angles(cfg, cfg.phi_min, cfg.phi_max, cfg.candidates)?;
            let cols = cands
                .iter()
                .map(|&p| sensing_pattern(cfg, weights, powers, theta, p))
                .collect();
            (cands, cols)
        }
    };
    Ok(MeasurementMatrix {
        columns,
        candidates,
        kind,
        theta_hat,
    })
}

/// Greedy pursuit that treats every coefficient as a unit phasor.
pub fn modified_mp(
    obs: &ObservationVector,
    mtx: &MeasurementMatrix,
    iterations: usize,
    stop: StopRule,
) -> Result<MpOutcome> {
    let mut counts = vec![0u32; mtx.columns.len()];
    let mut selections = Vec::with_capacity(iterations);
    let mut trace = Vec::with_capacity(iterations);
    if iterations == 0 {
        return Ok(MpOutcome {
            counting: CountingVector { counts, selections },
            trace,
        });
    }
    for col in &mtx.columns {
        if col.len() != obs.values.len() {
            return Err(Error::LengthMismatch {
                expected: obs.values.len(),
                got: col.len(),
            });
        }
    }
    let norms: Vec<f64> = mtx
        .columns
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let threshold = match stop {
        StopRule::Fixed => None,
        StopRule::ResidualFraction(f) => Some(f * obs.norm()),
    };
    let mut residual = obs.values.clone();
    for it in 0..iterations {
        if let Some(th) = threshold {
            let r: f64 = residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if r <= th {
                break;
            }
        }
        let mut best: Option<(usize, f64, Complex64)> = None;
        for (l, col) in mtx.columns.iter().enumerate() {
            if !(norms[l] > 0.0) {
                return Err(Error::DegenerateDictionary { column: l });
            }
            let corr: Complex64 = col.iter().zip(&residual).map(|(c, r)| r * *c).sum();
            let score = corr.norm() / norms[l];
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((l, score, corr));
            }
        }
        let (l, score, corr) = best.expect("dictionary has at least one column");
        let coef = corr / (norms[l] * norms[l]);
        let phasor = if coef.norm() > 0.0 {
            coef / coef.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for (r, c) in residual.iter_mut().zip(&mtx.columns[l]) {
            *r -= phasor * *c;
        }
        counts[l] += 1;
        selections.push((l, phasor));
        let residual_norm = residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        trace.push(MpStep {
            iteration: it,
            index: l,
            correlation: score,
            residual_norm,
        });
    }
    Ok(MpOutcome {
        counting: CountingVector { counts, selections },
        trace,
    })
}

/// Settings of one hierarchical detection run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    pub model: ObservationModel,
    pub stop: StopRule,
}

/// What one sensing stage used and found.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub beam: BeamformerWeights,
    pub symbols: u64,
    pub sensing_powers: Vec<f64>,
    pub trace: Vec<MpStep>,
    /// `(candidate index, multiplicity)` found by the pursuit.
    pub support: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// `(θ̂_i, Q_i)` from the elevation stage.
    pub elevations: Vec<(f64, u32)>,
    /// Azimuth estimates of each azimuth stage.
    pub azimuths: Vec<Vec<f64>>,
    /// Final `(θ̂, φ̂)` pairs.
    pub estimates: Vec<(f64, f64)>,
    pub stages: Vec<StageRecord>,
}

/// Elevation sweep followed by one azimuth sweep per distinct elevation estimate.
pub fn hierarchical_detect<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    scene: &Scene,
    q: usize,
    options: &DetectOptions,
    rng: &mut R,
) -> Result<DetectionResult> {
    if q == 0 {
        return Ok(DetectionResult {
            elevations: Vec::new(),
            azimuths: Vec::new(),
            estimates: Vec::new(),
            stages: Vec::new(),
        });
    }
    let eas = eas_beamformer(cfg)?;
    let (t0, p0) = allocate_sensing(cfg, &eas, 0)?;
    let obs0 = assemble_observation(cfg, scene, &eas, &p0, t0, 0, options.model, rng)?;
    let mtx0 = build_with_beam(cfg, &eas, StageKind::Elevation, None, &p0)?;
    let out0 = modified_mp(&obs0, &mtx0, q, options.stop)?;
    let support0 = out0.counting.support();
    let elevations: Vec<(f64, u32)> = support0.iter().map(|&(l, c)| (mtx0.candidates[l], c)).collect();
    let mut stages = vec![StageRecord {
        stage: 0,
        beam: eas,
        symbols: t0,
        sensing_powers: p0,
        trace: out0.trace,
        support: support0,
    }];
    let mut azimuths = Vec::with_capacity(elevations.len());
    let mut estimates = Vec::with_capacity(q);
    for (i, &(theta_hat, qi)) in elevations.iter().enumerate() {
        let stage = i + 1;
        let aas = aas_beamformer(cfg, theta_hat)?;
        let (t, p) = allocate_sensing(cfg, &aas, stage)?;
        let obs = assemble_observation(cfg, scene, &aas, &p, t, stage, options.model, rng)?;
        let mtx = build_with_beam(cfg, &aas, StageKind::Azimuth, Some(theta_hat), &p)?;
        let out = modified_mp(&obs, &mtx, qi as usize, options.stop)?;
        let support = out.counting.support();
        let mut found = Vec::new();
        for &(l, c) in &support {
            for _ in 0..c {
                found.push(mtx.candidates[l]);
                estimates.push((theta_hat, mtx.candidates[l]));
            }
        }
        azimuths.push(found);
        stages.push(StageRecord {
            stage,
            beam: aas,
            symbols: t,
            sensing_powers: p,
            trace: out.trace,
            support,
        });
    }
    Ok(DetectionResult {
        elevations,
        azimuths,
        estimates,
        stages,
    })
}
