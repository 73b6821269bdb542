//! Command-line front end: flat TOML run configuration, subcommand dispatch
//! and CSV emission.
//!
//! Every CSV starts with `#` comment lines holding the tool version, the
//! master seed and the effective configuration, one `key = value` per line.
//! Stripping the `# ` prefix from the config block yields a file that loads
//! back to the same [`RunConfig`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::beamforming::{aas_azimuth_grid, aas_beamformer, candidate_angles, eas_beamformer, eas_elevation_grid};
use crate::config::{CandidateSpacing, SystemConfig};
use crate::detection::StopRule;
use crate::error::{Error, Result};
use crate::simkit::experiment::{write_aggregate_csv, write_provenance, write_trials_csv};
use crate::simkit::{run_experiment, run_proposed_detail, ExperimentSpec, Method, SweepVar};

/// Environment variable that overrides `output_dir`.
pub const OUT_DIR_ENV: &str = "SQUINT_OUT_DIR";

/// Marker line that opens the config echo inside a CSV provenance block.
pub const CONFIG_ECHO_MARKER: &str = "effective config:";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

pub const DETECT_HEADER: [&str; 6] = [
    "stage",
    "iteration",
    "index",
    "candidate_deg",
    "correlation",
    "residual_norm",
];
pub const POWER_HEADER: [&str; 6] = ["row", "stage", "user", "subcarrier", "symbols", "power_w"];
pub const BEAMPATTERN_HEADER: [&str; 5] = ["stage", "subcarrier", "theta_deg", "phi_deg", "gain"];

/// Flat run configuration in file units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fc_hz: f64,
    pub bandwidth_hz: f64,
    pub subcarriers: usize,
    pub m_h: usize,
    pub m_v: usize,
    pub height_m: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub noise_psd_dbm_hz: f64,
    pub rcs_dbsm: f64,
    pub kappa_db: f64,
    pub clutter_count: usize,
    pub clutter_rcs_dbsm: f64,
    pub tau_s_db: f64,
    pub tau_c_db: f64,
    pub p_s_max_w: f64,
    pub candidates: usize,
    pub candidate_spacing: CandidateSpacing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ttd_delay_s: Option<f64>,
    pub methods: Vec<String>,
    pub sweep_var: String,
    pub sweep_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub targets: usize,
    pub users: usize,
    pub include_clutter: bool,
    pub noiseless: bool,
    pub min_user_separation_deg: f64,
    /// Early-stop factor of the pursuit; 0 runs the full iteration count.
    pub stop_residual_fraction: f64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sys = SystemConfig::default();
        let exp = ExperimentSpec::default();
        Self {
            fc_hz: sys.fc,
            bandwidth_hz: sys.bandwidth,
            subcarriers: sys.subcarriers,
            m_h: sys.m_h,
            m_v: sys.m_v,
            height_m: sys.height,
            theta_min_deg: 15.0,
            theta_max_deg: 70.0,
            phi_min_deg: 30.0,
            phi_max_deg: 150.0,
            noise_psd_dbm_hz: sys.noise_psd_dbm_hz,
            rcs_dbsm: sys.rcs_dbsm,
            kappa_db: sys.kappa_db,
            clutter_count: sys.clutter_count,
            clutter_rcs_dbsm: sys.clutter_rcs_dbsm,
            tau_s_db: sys.tau_s_db,
            tau_c_db: sys.tau_c_db,
            p_s_max_w: sys.p_s_max_w,
            candidates: sys.candidates,
            candidate_spacing: sys.candidate_spacing,
            max_ttd_delay_s: sys.max_ttd_delay_s,
            methods: exp.methods.iter().map(|m| m.as_str().to_string()).collect(),
            sweep_var: exp.sweep_var.as_str().to_string(),
            sweep_values: exp.sweep_values,
            trials: exp.trials,
            seed: exp.master_seed,
            targets: exp.targets,
            users: exp.users,
            include_clutter: exp.include_clutter,
            noiseless: exp.noiseless,
            min_user_separation_deg: 20.0,
            stop_residual_fraction: 0.0,
            output_dir: "out".into(),
        }
    }
}

/// 1-based line on which `key` is assigned, if it is.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

fn at(text: &str, key: &str) -> String {
    match key_line(text, key) {
        Some(line) => format!("`{key}` (line {line})"),
        None => format!("`{key}` (default)"),
    }
}

impl RunConfig {
    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            fc: self.fc_hz,
            bandwidth: self.bandwidth_hz,
            subcarriers: self.subcarriers,
            m_h: self.m_h,
            m_v: self.m_v,
            height: self.height_m,
            theta_min: self.theta_min_deg.to_radians(),
            theta_max: self.theta_max_deg.to_radians(),
            phi_min: self.phi_min_deg.to_radians(),
            phi_max: self.phi_max_deg.to_radians(),
            noise_psd_dbm_hz: self.noise_psd_dbm_hz,
            rcs_dbsm: self.rcs_dbsm,
            kappa_db: self.kappa_db,
            clutter_count: self.clutter_count,
            clutter_rcs_dbsm: self.clutter_rcs_dbsm,
            tau_s_db: self.tau_s_db,
            tau_c_db: self.tau_c_db,
            p_s_max_w: self.p_s_max_w,
            candidates: self.candidates,
            candidate_spacing: self.candidate_spacing,
            max_ttd_delay_s: self.max_ttd_delay_s,
        }
    }

    pub fn experiment(&self) -> Result<ExperimentSpec> {
        let methods = self
            .methods
            .iter()
            .map(|m| Method::parse(m).ok_or_else(|| Error::InvalidConfig(format!("unknown method `{m}`"))))
            .collect::<Result<Vec<_>>>()?;
        let sweep_var = SweepVar::parse(&self.sweep_var)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep_var `{}`", self.sweep_var)))?;
        let stop = if self.stop_residual_fraction > 0.0 {
            StopRule::ResidualFraction(self.stop_residual_fraction)
        } else {
            StopRule::Fixed
        };
        Ok(ExperimentSpec {
            base: self.system(),
            methods,
            sweep_var,
            sweep_values: self.sweep_values.clone(),
            trials: self.trials,
            master_seed: self.seed,
            targets: self.targets,
            users: self.users,
            include_clutter: self.include_clutter,
            noiseless: self.noiseless,
            min_user_separation: self.min_user_separation_deg.to_radians(),
            stop,
        })
    }

    /// Key-level checks; `text` is the source, used only to report lines.
    fn check(&self, text: &str) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        let ordered = [
            ("theta_min_deg", self.theta_min_deg, "theta_max_deg", self.theta_max_deg),
            ("phi_min_deg", self.phi_min_deg, "phi_max_deg", self.phi_max_deg),
        ];
        for (lo_key, lo, hi_key, hi) in ordered {
            if !(lo < hi) {
                return fail(format!(
                    "{} = {lo} must be less than {} = {hi}",
                    at(text, lo_key),
                    at(text, hi_key)
                ));
            }
        }
        let ranges = [
            ("theta_min_deg", self.theta_min_deg, 0.0, 90.0),
            ("theta_max_deg", self.theta_max_deg, 0.0, 90.0),
            ("phi_min_deg", self.phi_min_deg, 0.0, 180.0),
            ("phi_max_deg", self.phi_max_deg, 0.0, 180.0),
        ];
        for (key, v, lo, hi) in ranges {
            if !(lo < v && v < hi) {
                return fail(format!("{} = {v} must lie in ({lo}, {hi})", at(text, key)));
            }
        }
        let positive = [
            ("fc_hz", self.fc_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("height_m", self.height_m),
            ("p_s_max_w", self.p_s_max_w),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{} = {v} must be positive", at(text, key)));
            }
        }
        if let Some(d) = self.max_ttd_delay_s {
            if !(d > 0.0) {
                return fail(format!("{} = {d} must be positive", at(text, "max_ttd_delay_s")));
            }
        }
        let minimums = [
            ("subcarriers", self.subcarriers, 2),
            ("m_h", self.m_h, 1),
            ("m_v", self.m_v, 1),
            ("trials", self.trials, 1),
            ("candidates", self.candidates, self.subcarriers),
        ];
        for (key, v, min) in minimums {
            if v < min {
                return fail(format!("{} = {v} must be at least {min}", at(text, key)));
            }
        }
        if !(self.stop_residual_fraction >= 0.0 && self.stop_residual_fraction < 1.0) {
            return fail(format!(
                "{} = {} must lie in [0, 1)",
                at(text, "stop_residual_fraction"),
                self.stop_residual_fraction
            ));
        }
        if !(self.min_user_separation_deg >= 0.0) {
            return fail(format!(
                "{} = {} must be non-negative",
                at(text, "min_user_separation_deg"),
                self.min_user_separation_deg
            ));
        }
        for m in &self.methods {
            if Method::parse(m).is_none() {
                return fail(format!(
                    "{}: unknown method `{m}` (expected proposed, exhaustive or azimuth_only)",
                    at(text, "methods")
                ));
            }
        }
        if SweepVar::parse(&self.sweep_var).is_none() {
            return fail(format!(
                "{}: unknown sweep variable `{}`",
                at(text, "sweep_var"),
                self.sweep_var
            ));
        }
        self.system().validate()?;
        self.experiment()?.validate()
    }

    /// Effective configuration as flat TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Provenance lines: version, seed, then the config echo.
    pub fn provenance(&self) -> Vec<String> {
        let mut lines = vec![
            format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            format!("master_seed = {}", self.seed),
            CONFIG_ECHO_MARKER.to_string(),
        ];
        lines.extend(self.to_toml().lines().map(str::to_string));
        lines
    }

    /// Output directory, with the environment override applied.
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.output_dir),
        }
    }
}

/// Parse and validate a configuration from TOML text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string().trim_end().to_string()))?;
    cfg.check(text)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Recover the configuration echoed in a CSV provenance block.
pub fn config_from_provenance(csv_text: &str) -> Result<RunConfig> {
    let echo: Vec<&str> = csv_text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .skip_while(|l| l.trim_start_matches('#').trim() != CONFIG_ECHO_MARKER)
        .skip(1)
        .map(|l| l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#')))
        .collect();
    if echo.is_empty() {
        return Err(Error::InvalidConfig("no config echo found".into()));
    }
    parse_config(&echo.join("\n"))
}

#[derive(Debug, Parser)]
#[command(name = "beamsquint", version, about = "Beam-squint-aided 2D angle sensing simulator")]
pub struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternStage {
    Eas,
    Aas,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured Monte Carlo experiment.
    Simulate,
    /// One trial of the proposed scheme with the pursuit trace.
    Detect {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Power plan of one trial of the proposed scheme.
    Power {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Gain-vs-angle curves of a sensing beam.
    Beampattern {
        #[arg(long, value_enum)]
        stage: PatternStage,
        /// AAS elevation in degrees (ignored for EAS).
        #[arg(long, default_value_t = 45.0)]
        theta_hat: f64,
        /// Fixed azimuth of the EAS elevation cut, degrees.
        #[arg(long, default_value_t = 90.0)]
        phi: f64,
        /// 1-based subcarrier indices.
        #[arg(long, value_delimiter = ',', required = true)]
        subcarriers: Vec<usize>,
        /// Samples per curve across the ROI.
        #[arg(long, default_value_t = 2401)]
        points: usize,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleGrid { .. }
        | Error::InfeasibleComm { .. }
        | Error::UnservableUser { .. }
        | Error::DegenerateDictionary { .. }
        | Error::Placement(_) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

/// Parse `args` (program name first), run the subcommand and return the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Execute a parsed command; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cfg.output_path();
    fs::create_dir_all(&out).map_err(|e| Error::Other(format!("cannot create {}: {e}", out.display())))?;
    match &cli.command {
        Command::Simulate => simulate(&cfg, &out),
        Command::Detect { trial } => detect(&cfg, *trial, &out).map(|p| vec![p]),
        Command::Power { trial } => power(&cfg, *trial, &out).map(|p| vec![p]),
        Command::Beampattern {
            stage,
            theta_hat,
            phi,
            subcarriers,
            points,
        } => beampattern(&cfg, *stage, *theta_hat, *phi, subcarriers, *points, &out).map(|p| vec![p]),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Other(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Other(format!("csv output failed: {e}"))
}

fn csv_writer(path: &Path, provenance: &[String]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = create(path)?;
    write_provenance(&mut w, provenance)?;
    Ok(csv::Writer::from_writer(w))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.experiment()?;
    let result = run_experiment(&spec)?;
    let prov = cfg.provenance();
    let agg = out.join("aggregate.csv");
    write_aggregate_csv(create(&agg)?, &result.aggregate, &prov)?;
    let trials = out.join("trials.csv");
    write_trials_csv(create(&trials)?, spec.sweep_var, &result.rows, &prov)?;
    Ok(vec![agg, trials])
}

fn detect(cfg: &RunConfig, trial: usize, out: &Path) -> Result<PathBuf> {
    let spec = cfg.experiment()?;
    let sys = cfg.system();
    let detail = run_proposed_detail(&sys, &spec, spec.users, trial)?;
    let mut prov = cfg.provenance();
    prov.push(format!("trial = {trial}"));
    for (t, p) in detail.scene.target_angles() {
        prov.push(format!("target_deg = {}, {}", t.to_degrees(), p.to_degrees()));
    }
    for (t, p) in &detail.detection.estimates {
        prov.push(format!("estimate_deg = {}, {}", t.to_degrees(), p.to_degrees()));
    }
    let path = out.join("detect_trace.csv");
    let mut w = csv_writer(&path, &prov)?;
    w.write_record(DETECT_HEADER).map_err(csv_err)?;
    let elev = candidate_angles(&sys, sys.theta_min, sys.theta_max, sys.candidates)?;
    let azim = candidate_angles(&sys, sys.phi_min, sys.phi_max, sys.candidates)?;
    for st in &detail.detection.stages {
        let candidates = if st.stage == 0 { &elev } else { &azim };
        for step in &st.trace {
            w.write_record([
                st.stage.to_string(),
                step.iteration.to_string(),
                step.index.to_string(),
                candidates
                    .get(step.index)
                    .map(|c| c.to_degrees().to_string())
                    .unwrap_or_default(),
                step.correlation.to_string(),
                step.residual_norm.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;
    Ok(path)
}

fn power(cfg: &RunConfig, trial: usize, out: &Path) -> Result<PathBuf> {
    let spec = cfg.experiment()?;
    let sys = cfg.system();
    let detail = run_proposed_detail(&sys, &spec, spec.users, trial)?;
    let mut prov = cfg.provenance();
    prov.push(format!("trial = {trial}"));
    let path = out.join("power_plan.csv");
    let mut w = csv_writer(&path, &prov)?;
    w.write_record(POWER_HEADER).map_err(csv_err)?;
    for st in &detail.plan.stages {
        let stage = st.stage.to_string();
        let symbols = st.symbols.to_string();
        w.write_record(["stage", &stage, "", "", &symbols, ""])
            .map_err(csv_err)?;
        for (n, p) in st.sensing.iter().enumerate() {
            w.write_record(["sensing", &stage, "", &n.to_string(), &symbols, &p.to_string()])
                .map_err(csv_err)?;
        }
        for (k, user) in st.comm.iter().enumerate() {
            for (n, p) in user.iter().enumerate() {
                w.write_record(["comm", &stage, &k.to_string(), &n.to_string(), &symbols, &p.to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(csv_err)?;
    Ok(path)
}

fn beampattern(
    cfg: &RunConfig,
    stage: PatternStage,
    theta_hat_deg: f64,
    phi_deg: f64,
    subcarriers: &[usize],
    points: usize,
    out: &Path,
) -> Result<PathBuf> {
    let sys = cfg.system();
    if points < 2 {
        return Err(Error::InvalidConfig(format!(
            "--points must be at least 2, got {points}"
        )));
    }
    if let Some(&bad) = subcarriers.iter().find(|&&n| n < 1 || n > sys.subcarriers) {
        return Err(Error::InvalidConfig(format!(
            "subcarrier {bad} outside 1..={}",
            sys.subcarriers
        )));
    }
    let theta_hat = theta_hat_deg.to_radians();
    let phi = phi_deg.to_radians();
    let (beam, name, grid) = match stage {
        PatternStage::Eas => (eas_beamformer(&sys)?, "eas", eas_elevation_grid(&sys)?),
        PatternStage::Aas => (aas_beamformer(&sys, theta_hat)?, "aas", aas_azimuth_grid(&sys)?),
    };
    let mut prov = cfg.provenance();
    prov.push(format!("stage = {name}"));
    for &n in subcarriers {
        prov.push(format!("grid_deg[{n}] = {}", grid[n - 1].to_degrees()));
    }
    let path = out.join("beampattern.csv");
    let mut w = csv_writer(&path, &prov)?;
    w.write_record(BEAMPATTERN_HEADER).map_err(csv_err)?;
    let (lo, hi) = match stage {
        PatternStage::Eas => (sys.theta_min, sys.theta_max),
        PatternStage::Aas => (sys.phi_min, sys.phi_max),
    };
    for &n in subcarriers {
        for i in 0..points {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let (t, p) = match stage {
                PatternStage::Eas => (x, phi),
                PatternStage::Aas => (theta_hat, x),
            };
            let g = beam.gain(t, p, n - 1).norm();
            w.write_record([
                name.to_string(),
                n.to_string(),
                t.to_degrees().to_string(),
                p.to_degrees().to_string(),
                g.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;
    Ok(path)
}
