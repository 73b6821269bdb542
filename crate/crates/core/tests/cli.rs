use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use beamsquint::beamforming::{aas_azimuth_grid, eas_elevation_grid};
use beamsquint::cli::{
    config_from_provenance, parse_config, BEAMPATTERN_HEADER, DETECT_HEADER, EXIT_CONFIG, EXIT_INFEASIBLE, OUT_DIR_ENV,
    POWER_HEADER,
};
use beamsquint::simkit::experiment::{AGGREGATE_HEADER, TRIAL_HEADER};
use beamsquint::SystemConfig;

const SMALL: &str = "subcarriers = 16\nm_h = 8\nm_v = 8\ncandidates = 64\ntrials = 3\n";

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsquint"))
        .args(args)
        .env(OUT_DIR_ENV, out)
        .output()
        .expect("binary runs")
}

/// Parsed CSV body below the `#` provenance block.
struct Table {
    provenance: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

/// Check provenance, header and field counts; `numeric` columns must parse as f64 when non-empty.
fn validate(path: &Path, header: &[&str], numeric: &[&str]) -> Table {
    let text = fs::read_to_string(path).unwrap();
    let provenance: Vec<String> = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(str::to_string)
        .collect();
    assert!(
        provenance.iter().any(|l| l.starts_with("# beamsquint ")),
        "missing version line"
    );
    assert!(
        provenance.iter().any(|l| l.starts_with("# master_seed = ")),
        "missing seed line"
    );
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let got: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(got, header, "header of {}", path.display());
    let cols: Vec<usize> = numeric
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), header.len());
        for &c in &cols {
            if !rec[c].is_empty() {
                rec[c]
                    .parse::<f64>()
                    .unwrap_or_else(|_| panic!("column {} = {:?}", header[c], &rec[c]));
            }
        }
        rows.push(rec);
    }
    Table { provenance, rows }
}

#[test]
fn no_subcommand_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(dir.path(), &["explode"]).status.code(), Some(EXIT_CONFIG));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "theta_min_deg = 80\ntheta_max_deg = 70\n").unwrap();
    let out = run(dir.path(), &["power", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("theta_min_deg") && err.contains("theta_max_deg"), "{err}");

    fs::write(&cfg, "fc_hz = 3e10\nwavelength = 1\n").unwrap();
    let out = run(dir.path(), &["power", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wavelength"));
}

#[test]
fn infeasible_placement_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("crowded.toml");
    fs::write(&cfg, format!("{SMALL}users = 6\nmin_user_separation_deg = 90\n")).unwrap();
    let out = run(dir.path(), &["detect", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(EXIT_INFEASIBLE),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn power_default_config_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["power"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = validate(
        &dir.path().join("power_plan.csv"),
        &POWER_HEADER,
        &["stage", "user", "subcarrier", "symbols", "power_w"],
    );
    let n = SystemConfig::default().subcarriers;
    let stages: Vec<&csv::StringRecord> = t.rows.iter().filter(|r| &r[0] == "stage").collect();
    assert!(stages.len() >= 2);
    for st in &stages {
        let id = &st[1];
        let symbols: u64 = st[4].parse().unwrap();
        assert!(symbols >= 1);
        let sensing: Vec<_> = t.rows.iter().filter(|r| &r[0] == "sensing" && &r[1] == id).collect();
        assert_eq!(sensing.len(), n);
        assert!(sensing
            .iter()
            .all(|r| r[4] == st[4] && r[5].parse::<f64>().unwrap() > 0.0));
        let comm = t.rows.iter().filter(|r| &r[0] == "comm" && &r[1] == id).count();
        assert_eq!(comm, 2 * n);
    }
    assert_eq!(t.rows.len(), stages.len() * (1 + 3 * n));
}

fn peak_check(stage: &str, grid: &[f64], col: usize) {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "beampattern",
            "--stage",
            stage,
            "--theta-hat",
            "45",
            "--subcarriers",
            "1,64,128",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = validate(
        &dir.path().join("beampattern.csv"),
        &BEAMPATTERN_HEADER,
        &["subcarrier", "theta_deg", "phi_deg", "gain"],
    );
    for n in [1usize, 64, 128] {
        let curve: Vec<(f64, f64)> = t
            .rows
            .iter()
            .filter(|r| r[1].parse::<usize>().unwrap() == n)
            .map(|r| (r[col].parse().unwrap(), r[4].parse().unwrap()))
            .collect();
        assert_eq!(curve.len(), 2401);
        let step = curve[1].0 - curve[0].0;
        let peak = curve.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let expected = grid[n - 1].to_degrees();
        assert!(
            (peak - expected).abs() <= step + 1e-9,
            "{stage} n={n}: peak {peak} vs {expected}"
        );
    }
}

#[test]
fn beampattern_aas_peaks_on_grid() {
    peak_check("aas", &aas_azimuth_grid(&SystemConfig::default()).unwrap(), 3);
}

#[test]
fn beampattern_eas_peaks_on_grid() {
    peak_check("eas", &eas_elevation_grid(&SystemConfig::default()).unwrap(), 2);
}

#[test]
fn detect_trace_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("{SMALL}targets = 2\n")).unwrap();
    let out = run(
        dir.path(),
        &["detect", "--config", cfg.to_str().unwrap(), "--seed", "5"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = validate(
        &dir.path().join("detect_trace.csv"),
        &DETECT_HEADER,
        &[
            "stage",
            "iteration",
            "index",
            "candidate_deg",
            "correlation",
            "residual_norm",
        ],
    );
    assert!(t.provenance.iter().any(|l| l == "# master_seed = 5"));
    let stage0 = t.rows.iter().filter(|r| &r[0] == "0").count();
    assert_eq!(stage0, 2);
    let later = t.rows.iter().filter(|r| &r[0] != "0").count();
    assert_eq!(later, 2);
}

#[test]
fn simulate_outputs_and_echo_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "{SMALL}methods = [\"proposed\", \"azimuth_only\"]\nsweep_var = \"tau_s_db\"\nsweep_values = [15, 20]\n"
        ),
    )
    .unwrap();
    let first = dir.path().join("first");
    let out = run(&first, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let agg = validate(&first.join("aggregate.csv"), &AGGREGATE_HEADER, &AGGREGATE_HEADER[3..]);
    assert_eq!(agg.rows.len(), 4);
    assert!(agg
        .rows
        .iter()
        .all(|r| &r[0] == "tau_s_db" && &r[9] == "3" && &r[10] == "0"));
    let trials = validate(
        &first.join("trials.csv"),
        &TRIAL_HEADER,
        &[
            "sweep_value",
            "trial",
            "seed",
            "distance_error_m",
            "total_sensing_energy",
            "avg_transmit_power",
            "sum_rate",
            "energy_efficiency",
            "stage_count",
            "effective_tau_c_db",
        ],
    );
    assert_eq!(trials.rows.len(), 12);
    assert!(trials.rows.iter().all(|r| &r[5] == "ok"));

    // the echoed config reproduces the run byte for byte
    let text = fs::read_to_string(first.join("aggregate.csv")).unwrap();
    let echoed = config_from_provenance(&text).unwrap();
    assert_eq!(echoed, parse_config(&fs::read_to_string(&cfg).unwrap()).unwrap());
    let echo_file = dir.path().join("echo.toml");
    fs::write(&echo_file, echoed.to_toml()).unwrap();
    let second = dir.path().join("second");
    assert!(run(&second, &["simulate", "--config", echo_file.to_str().unwrap()])
        .status
        .success());
    for name in ["aggregate.csv", "trials.csv"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}
