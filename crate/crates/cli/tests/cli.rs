use std::fs;
use std::path::Path;

use clap::Parser;
use tfqkd_cli::config::{Grid, OutputFormat, RunConfig};
use tfqkd_cli::error::{EXIT_CONFIG, EXIT_NUMERICAL};
use tfqkd_cli::record::{read_csv, read_json, write_records, CheckRecord, ResultRecord};
use tfqkd_cli::{commands, main_with_args, resolve_config, Cli};

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("tfqkd").chain(args.iter().copied()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn column(rows: &[ResultRecord], f: impl Fn(&ResultRecord) -> Option<f64>) -> Vec<f64> {
    rows.iter().map(|r| f(r).unwrap()).collect()
}

#[test]
fn csv_and_json_round_trip() {
    let mut cfg = RunConfig::default();
    cfg.physics.eta_d = "0.9,1.0".parse().unwrap();
    cfg.finite.rounds = vec![1e9, 1e12];
    cfg.physics.distance_km = Grid::List(vec![0.0, 50.0]);
    let rows = commands::cmd_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);
    let mut csv = Vec::new();
    write_records(&rows, OutputFormat::Csv, &mut csv).unwrap();
    assert_eq!(read_csv(csv.as_slice()).unwrap(), rows);
    let mut json = Vec::new();
    write_records(&rows, OutputFormat::Json, &mut json).unwrap();
    assert_eq!(read_json(json.as_slice()).unwrap(), rows);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let base = ["rate", "--protocol", "2ph", "--eta-d", "0.9:1.0:3", "--visibility", "0.95"];
    let mut args_a = base.to_vec();
    args_a.extend(["--jobs", "1", "--out", path_str(&a)]);
    let mut args_b = base.to_vec();
    args_b.extend(["--jobs", "3", "--out", path_str(&b)]);
    assert_eq!(run(&args_a), 0);
    assert_eq!(run(&args_b), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn empty_grid_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.csv");
    assert_eq!(run(&["chsh", "--eta-d", "0.8:1.0:0", "--out", path_str(&out)]), EXIT_CONFIG);
    assert!(!out.exists());
    assert_eq!(run(&["chsh", "--eta-d", "1.3", "--out", path_str(&out)]), EXIT_CONFIG);
    assert_eq!(run(&["chsh", "--protocol", "3ph"]), EXIT_CONFIG);
    assert!(!out.exists());
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, "protocol = \"two_photon\"\n[physics]\neta_d = 0.95\nrep_rate = 1e9\n[optimizer]\nstarts = 8\n").unwrap();
    let cli = Cli::parse_from(["tfqkd", "rate", "--config", path_str(&cfg_path), "--starts", "4"]);
    let cfg = resolve_config(&cli).unwrap();
    assert_eq!(cfg.physics.rep_rate, 1e9);
    assert_eq!(cfg.physics.eta_d, Grid::Value(0.95));
    assert_eq!(cfg.optimizer.starts, 4);
    assert_eq!(cfg.protocol.to_string(), "two_photon");

    fs::write(&cfg_path, "[physics]\nunknown_knob = 3\n").unwrap();
    assert_eq!(run(&["chsh", "--config", path_str(&cfg_path)]), EXIT_CONFIG);
    assert_eq!(run(&["chsh", "--config", path_str(&dir.path().join("missing.toml"))]), EXIT_CONFIG);
}

#[test]
fn chsh_curve_over_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chsh.csv");
    assert_eq!(run(&["chsh", "--eta-d", "0.80:1.00:21", "--out", path_str(&out)]), 0);
    let rows = read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 21);
    let s = column(&rows, |r| r.s);
    for w in s.windows(2) {
        assert!(w[1] >= w[0] - 1e-3, "{s:?}");
    }
    assert!((s[20] - 2.688).abs() < 0.005);
    assert!(rows.iter().all(|r| r.converged && r.seed == 20_240_917));
}

#[test]
fn lower_visibility_never_raises_the_rate() {
    let mut cfg = RunConfig::default();
    cfg.physics.eta_d = "0.93:1.0:4".parse().unwrap();
    cfg.physics.visibility = "0.9,1.0".parse().unwrap();
    let rows = commands::cmd_rate(&cfg).unwrap();
    // visibility varies faster than efficiency
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].visibility, Some(0.9));
        assert!(pair[0].r.unwrap() <= pair[1].r.unwrap() + 1e-9);
    }
}

#[test]
fn sweep_columns() {
    let mut cfg = RunConfig::default();
    cfg.physics.eta_d = Grid::Value(0.93);
    cfg.physics.distance_km = "200:400:5".parse().unwrap();
    let rows = commands::cmd_sweep(&cfg).unwrap();
    let r = column(&rows, |r| r.rate_bps);
    let slope = (r[4].log10() - r[0].log10()) / 200.0;
    assert!((slope + 0.01).abs() < 2e-4, "slope {slope}");
    let g = column(&rows, |r| r.gain);
    for w in g.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "{g:?}");
    }
    assert!(rows.iter().all(|r| r.rounds.is_none() && r.finite_rate.is_none()));
}

#[test]
fn finite_rows_are_ordered_by_block_size() {
    let mut cfg = RunConfig::default();
    cfg.protocol = tfqkd::measurement::Protocol::TwoPhoton;
    cfg.physics.eta_d = Grid::Value(0.89);
    cfg.physics.distance_km = Grid::Value(100.0);
    let rows = commands::cmd_finite(&cfg).unwrap();
    assert_eq!(rows.len(), commands::DEFAULT_FINITE_ROUNDS.len());
    let f = column(&rows, |r| r.finite_rate);
    for w in f.windows(2) {
        assert!(w[1] > w[0]);
    }
    let asym = rows[0].r.unwrap();
    assert!(f.iter().all(|&x| x < asym));
    let at_1e10 = rows.iter().find(|r| r.rounds == Some(1e10)).unwrap();
    let bps = at_1e10.finite_bps.unwrap();
    assert!(bps > 10.0 / 3.0 && bps < 30.0, "{bps}");
}

#[test]
fn threshold_subcommand() {
    let mut cfg = RunConfig::default();
    cfg.protocol = tfqkd::measurement::Protocol::TwoPhoton;
    cfg.threshold.tol = 2e-3;
    let rows = commands::cmd_threshold(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].command, "threshold_bell");
    assert!((rows[0].threshold.unwrap() - 2.0 / 3.0).abs() < 0.01);

    cfg.threshold.quantity = tfqkd_cli::config::ThresholdKind::Visibility;
    cfg.physics.eta_d = "0.7,1.0".parse().unwrap();
    let rows = commands::cmd_threshold(&cfg).unwrap();
    let v = column(&rows, |r| r.threshold);
    assert!(v[1] < v[0], "{v:?}");
}

#[test]
fn validate_reports_and_flags_injected_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.csv");
    assert_eq!(run(&["validate", "--draws", "10", "--out", path_str(&ok)]), 0);
    let rows: Vec<CheckRecord> = csv::Reader::from_path(&ok).unwrap().deserialize().collect::<Result<_, _>>().unwrap();
    assert!(rows.iter().all(|r| r.passed && r.max_error <= r.tolerance));
    assert!(rows.iter().filter(|r| r.formula != "series_a").all(|r| !r.worst_draw.is_empty() || r.max_error == 0.0));

    let bad = dir.path().join("bad.json");
    let code = run(&["validate", "--draws", "10", "--perturb", "p1ph_marginal=1e-6", "--format", "json", "--out", path_str(&bad)]);
    assert_eq!(code, EXIT_NUMERICAL);
    let rows: Vec<CheckRecord> = serde_json::from_slice(&fs::read(&bad).unwrap()).unwrap();
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.formula.as_str()).collect();
    assert_eq!(failed, ["p1ph_marginal"]);
    assert!(rows[1].worst_draw.contains("eta_d="));

    assert_eq!(run(&["validate", "--perturb", "nonsense=1"]), EXIT_CONFIG);
}
