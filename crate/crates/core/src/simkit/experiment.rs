//! Seeded, parallel Monte Carlo runs with deterministic aggregation.

use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::comm_beamformer;
use crate::channel::{generate_scene_with, Scene, SceneSpec};
use crate::config::{linear_to_db, SystemConfig};
use crate::detection::{hierarchical_detect, DetectOptions, DetectionResult, ObservationModel, StopRule};
use crate::error::{Error, Result};
use crate::power::{achieved_sinr, with_comm, PowerPlan};
use crate::simkit::baselines::{run_azimuth_only, run_exhaustive, SensingStage};
use crate::simkit::metrics::{distance_error, energy_efficiency, sum_rate, transmit_power_metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Exhaustive,
    AzimuthOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Exhaustive => "exhaustive",
            Method::AzimuthOnly => "azimuth_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(Method::Proposed),
            "exhaustive" => Some(Method::Exhaustive),
            "azimuth_only" => Some(Method::AzimuthOnly),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Quantity varied across an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Single point; the sweep value is ignored.
    None,
    /// Sensing SNR threshold, dB.
    TauS,
    /// Communication SINR threshold, dB.
    TauC,
    /// Dictionary size `L`.
    Candidates,
    /// Subcarrier count `N`.
    Subcarriers,
    /// Number of users `K`.
    Users,
    /// Per-symbol sensing power budget, W.
    PTot,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::None => "none",
            SweepVar::TauS => "tau_s_db",
            SweepVar::TauC => "tau_c_db",
            SweepVar::Candidates => "candidates",
            SweepVar::Subcarriers => "subcarriers",
            SweepVar::Users => "users",
            SweepVar::PTot => "p_tot_w",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SweepVar::None,
            SweepVar::TauS,
            SweepVar::TauC,
            SweepVar::Candidates,
            SweepVar::Subcarriers,
            SweepVar::Users,
            SweepVar::PTot,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub methods: Vec<Method>,
    pub sweep_var: SweepVar,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Number of targets `Q`.
    pub targets: usize,
    /// Number of users `K` (overridden by a `Users` sweep).
    pub users: usize,
    pub include_clutter: bool,
    pub noiseless: bool,
    pub min_user_separation: f64,
    pub stop: StopRule,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            base: SystemConfig::scaled(),
            methods: vec![Method::Proposed],
            sweep_var: SweepVar::None,
            sweep_values: vec![0.0],
            trials: 10,
            master_seed: 1,
            targets: 1,
            users: 2,
            include_clutter: true,
            noiseless: false,
            min_user_separation: 20f64.to_radians(),
            stop: StopRule::Fixed,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        if self.sweep_values.is_empty() || self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep values must be finite and non-empty".into()));
        }
        if self.sweep_values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("sweep values must be sorted ascending".into()));
        }
        for &v in &self.sweep_values {
            self.point(v)?.0.validate()?;
        }
        Ok(())
    }

    /// Configuration and user count at one sweep value.
    pub fn point(&self, value: f64) -> Result<(SystemConfig, usize)> {
        let mut cfg = self.base.clone();
        let mut users = self.users;
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidConfig(format!("sweep value {v} is not a count")))
            }
        };
        match self.sweep_var {
            SweepVar::None => {}
            SweepVar::TauS => cfg.tau_s_db = value,
            SweepVar::TauC => cfg.tau_c_db = value,
            SweepVar::Candidates => cfg.candidates = as_count(value)?,
            SweepVar::Subcarriers => cfg.subcarriers = as_count(value)?,
            SweepVar::Users => users = as_count(value)?,
            SweepVar::PTot => cfg.p_s_max_w = value,
        }
        Ok((cfg, users))
    }

    fn scene_spec(&self, users: usize) -> SceneSpec {
        SceneSpec {
            targets: self.targets,
            users,
            include_clutter: self.include_clutter,
            min_user_separation: self.min_user_separation,
            ..SceneSpec::default()
        }
    }

    fn model(&self, cfg: &SystemConfig) -> ObservationModel {
        if self.noiseless {
            ObservationModel::noiseless(self.include_clutter)
        } else {
            ObservationModel::noisy(cfg, self.include_clutter)
        }
    }
}

/// Scene and noise generators of one trial. They depend only on the master
/// seed and trial index, so every sweep value and method sees the same draws.
pub fn trial_rngs(master_seed: u64, trial: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut scene = ChaCha8Rng::seed_from_u64(master_seed);
    scene.set_stream(2 * trial as u64);
    let mut noise = ChaCha8Rng::seed_from_u64(master_seed);
    noise.set_stream(2 * trial as u64 + 1);
    (scene, noise)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub truth: Vec<(f64, f64)>,
    pub estimates: Vec<(f64, f64)>,
    pub distance_error: f64,
    /// W·symbols.
    pub total_sensing_energy: f64,
    pub avg_transmit_power: f64,
    pub sum_rate: f64,
    pub energy_efficiency: f64,
    /// Sensing stages `I + 1` (one per symbol for the scanning baselines).
    pub stage_count: usize,
    /// `T_i` of every stage.
    pub symbols: Vec<u64>,
    pub effective_tau_c: Option<f64>,
}

impl TrialRecord {
    pub fn total_symbols(&self) -> u64 {
        self.symbols.iter().sum()
    }
}

/// Serve the users during every sensing stage; returns the plan and the
/// achieved per-stage SINRs.
fn serve_users(cfg: &SystemConfig, scene: &Scene, stages: &[SensingStage]) -> Result<(PowerPlan, Vec<Vec<f64>>)> {
    let comm_beams = scene
        .users
        .iter()
        .map(|u| comm_beamformer(cfg, u.theta, u.phi))
        .collect::<Result<Vec<_>>>()?;
    let mut plan = PowerPlan::default();
    let mut sinrs = Vec::with_capacity(stages.len());
    for (i, st) in stages.iter().enumerate() {
        let (sp, ctx) = with_comm(cfg, scene, &comm_beams, &st.beam, i, st.symbols, st.powers.clone())?;
        let mut stage_sinr = Vec::with_capacity(scene.users.len() * cfg.subcarriers);
        for n in 0..ctx.subcarriers() {
            let p: Vec<f64> = sp.comm.iter().map(|u| u[n]).collect();
            stage_sinr.extend(achieved_sinr(&ctx, n, &p));
        }
        sinrs.push(stage_sinr);
        plan.stages.push(sp);
    }
    Ok((plan, sinrs))
}

fn finish_trial(
    cfg: &SystemConfig,
    scene: &Scene,
    method: Method,
    trial: usize,
    seed: u64,
    estimates: Vec<(f64, f64)>,
    stages: &[SensingStage],
) -> Result<TrialRecord> {
    let (plan, sinrs) = serve_users(cfg, scene, stages)?;
    let truth = scene.target_angles();
    let err = distance_error(cfg.height, &truth, &estimates)?;
    let tm = transmit_power_metrics(&plan);
    let rate = sum_rate(&sinrs);
    Ok(TrialRecord {
        method,
        trial,
        seed,
        truth,
        estimates,
        distance_error: err,
        total_sensing_energy: tm.total_sensing_energy,
        avg_transmit_power: tm.avg_transmit_power,
        sum_rate: rate,
        energy_efficiency: energy_efficiency(rate, tm.avg_transmit_power),
        stage_count: plan.stages.len(),
        symbols: plan.stages.iter().map(|s| s.symbols).collect(),
        effective_tau_c: plan.effective_tau_c(),
    })
}

/// Everything the proposed scheme produced in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedTrial {
    pub scene: Scene,
    pub detection: DetectionResult,
    pub plan: PowerPlan,
}

/// Proposed scheme on trial `trial`, keeping the detection trace and power plan.
pub fn run_proposed_detail(
    cfg: &SystemConfig,
    spec: &ExperimentSpec,
    users: usize,
    trial: usize,
) -> Result<ProposedTrial> {
    let (mut scene_rng, mut noise_rng) = trial_rngs(spec.master_seed, trial);
    let scene = generate_scene_with(cfg, &spec.scene_spec(users), &mut scene_rng, spec.master_seed)?;
    let opts = DetectOptions {
        model: spec.model(cfg),
        stop: spec.stop,
    };
    let detection = hierarchical_detect(cfg, &scene, spec.targets, &opts, &mut noise_rng)?;
    let stages: Vec<SensingStage> = detection
        .stages
        .iter()
        .map(|s| SensingStage {
            beam: s.beam.clone(),
            symbols: s.symbols,
            powers: s.sensing_powers.clone(),
        })
        .collect();
    let (plan, _) = serve_users(cfg, &scene, &stages)?;
    Ok(ProposedTrial { scene, detection, plan })
}

/// Run one method end to end on trial `trial` of the spec at the given configuration.
pub fn run_trial(
    cfg: &SystemConfig,
    spec: &ExperimentSpec,
    users: usize,
    method: Method,
    trial: usize,
) -> Result<TrialRecord> {
    let (mut scene_rng, mut noise_rng) = trial_rngs(spec.master_seed, trial);
    let scene = generate_scene_with(cfg, &spec.scene_spec(users), &mut scene_rng, spec.master_seed)?;
    let model = spec.model(cfg);
    let q = spec.targets;
    let (estimates, stages) = match method {
        Method::Proposed => {
            let opts = DetectOptions { model, stop: spec.stop };
            let det = hierarchical_detect(cfg, &scene, q, &opts, &mut noise_rng)?;
            let stages = det
                .stages
                .into_iter()
                .map(|s| SensingStage {
                    beam: s.beam,
                    symbols: s.symbols,
                    powers: s.sensing_powers,
                })
                .collect::<Vec<_>>();
            (det.estimates, stages)
        }
        Method::Exhaustive => {
            let out = run_exhaustive(cfg, &scene, q, model, &mut noise_rng)?;
            (out.estimates, out.stages)
        }
        Method::AzimuthOnly => {
            let out = run_azimuth_only(cfg, &scene, q, model, &mut noise_rng)?;
            (out.estimates, out.stages)
        }
    };
    finish_trial(cfg, &scene, method, trial, spec.master_seed, estimates, &stages)
}

/// One per-trial result, successful or not.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub sweep_value: f64,
    pub method: Method,
    pub trial: usize,
    pub outcome: std::result::Result<TrialRecord, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep_var: SweepVar,
    pub sweep_value: f64,
    pub method: Method,
    pub mean_distance_error_m: f64,
    pub stderr_m: f64,
    pub mean_total_sensing_energy: f64,
    pub mean_avg_transmit_power: f64,
    pub mean_sum_rate: f64,
    pub mean_ee: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<TrialRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Mean and standard error of the mean (`n - 1` normalization); NaN mean for no samples.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(spec: &ExperimentSpec, rows: &[TrialRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &value in &spec.sweep_values {
        for &method in &spec.methods {
            let group: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.sweep_value == value && r.method == method)
                .collect();
            let ok: Vec<&TrialRecord> = group.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let col = |f: fn(&TrialRecord) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
            let (mean_err, stderr) = mean_stderr(&col(|r| r.distance_error));
            out.push(AggregateRow {
                sweep_var: spec.sweep_var,
                sweep_value: value,
                method,
                mean_distance_error_m: mean_err,
                stderr_m: stderr,
                mean_total_sensing_energy: mean_stderr(&col(|r| r.total_sensing_energy)).0,
                mean_avg_transmit_power: mean_stderr(&col(|r| r.avg_transmit_power)).0,
                mean_sum_rate: mean_stderr(&col(|r| r.sum_rate)).0,
                mean_ee: mean_stderr(&col(|r| r.energy_efficiency)).0,
                trials_ok: ok.len(),
                trials_failed: group.len() - ok.len(),
            });
        }
    }
    out
}

/// Run every (sweep value, method, trial) combination in parallel.
///
/// Individual trial failures are recorded, not propagated.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &value in &spec.sweep_values {
        let (cfg, users) = spec.point(value)?;
        for &method in &spec.methods {
            for trial in 0..spec.trials {
                jobs.push((value, cfg.clone(), users, method, trial));
            }
        }
    }
    let rows: Vec<TrialRow> = jobs
        .into_par_iter()
        .map(|(value, cfg, users, method, trial)| TrialRow {
            sweep_value: value,
            method,
            trial,
            outcome: run_trial(&cfg, spec, users, method, trial).map_err(|e| e.to_string()),
        })
        .collect();
    let aggregate = aggregate(spec, &rows);
    Ok(ExperimentResult { rows, aggregate })
}

pub const AGGREGATE_HEADER: [&str; 11] = [
    "sweep_var",
    "sweep_value",
    "method",
    "mean_distance_error_m",
    "stderr_m",
    "mean_total_sensing_energy",
    "mean_avg_transmit_power",
    "mean_sum_rate",
    "mean_ee",
    "trials_ok",
    "trials_failed",
];

pub const TRIAL_HEADER: [&str; 15] = [
    "sweep_var",
    "sweep_value",
    "method",
    "trial",
    "seed",
    "status",
    "distance_error_m",
    "total_sensing_energy",
    "avg_transmit_power",
    "sum_rate",
    "energy_efficiency",
    "stage_count",
    "symbols",
    "effective_tau_c_db",
    "error",
];

fn to_csv_err(e: impl std::fmt::Display) -> Error {
    Error::Other(format!("csv output failed: {e}"))
}

/// Write `#`-prefixed provenance lines.
pub fn write_provenance<W: Write>(w: &mut W, provenance: &[String]) -> Result<()> {
    for line in provenance {
        writeln!(w, "# {line}").map_err(to_csv_err)?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(mut w: W, rows: &[AggregateRow], provenance: &[String]) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(AGGREGATE_HEADER).map_err(to_csv_err)?;
    for r in rows {
        csv.write_record([
            r.sweep_var.as_str().to_string(),
            r.sweep_value.to_string(),
            r.method.to_string(),
            r.mean_distance_error_m.to_string(),
            r.stderr_m.to_string(),
            r.mean_total_sensing_energy.to_string(),
            r.mean_avg_transmit_power.to_string(),
            r.mean_sum_rate.to_string(),
            r.mean_ee.to_string(),
            r.trials_ok.to_string(),
            r.trials_failed.to_string(),
        ])
        .map_err(to_csv_err)?;
    }
    csv.flush().map_err(to_csv_err)
}

pub fn write_trials_csv<W: Write>(
    mut w: W,
    sweep_var: SweepVar,
    rows: &[TrialRow],
    provenance: &[String],
) -> Result<()> {
    write_provenance(&mut w, provenance)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TRIAL_HEADER).map_err(to_csv_err)?;
    for r in rows {
        let head = [
            sweep_var.as_str().to_string(),
            r.sweep_value.to_string(),
            r.method.to_string(),
            r.trial.to_string(),
        ];
        let record: Vec<String> = match &r.outcome {
            Ok(t) => head
                .into_iter()
                .chain([
                    t.seed.to_string(),
                    "ok".into(),
                    t.distance_error.to_string(),
                    t.total_sensing_energy.to_string(),
                    t.avg_transmit_power.to_string(),
                    t.sum_rate.to_string(),
                    t.energy_efficiency.to_string(),
                    t.stage_count.to_string(),
                    t.symbols.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"),
                    t.effective_tau_c
                        .map(|v| linear_to_db(v).to_string())
                        .unwrap_or_default(),
                    String::new(),
                ])
                .collect(),
            Err(e) => head
                .into_iter()
                .chain([
                    String::new(),
                    "failed".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.clone(),
                ])
                .collect(),
        };
        csv.write_record(&record).map_err(to_csv_err)?;
    }
    csv.flush().map_err(to_csv_err)
}
