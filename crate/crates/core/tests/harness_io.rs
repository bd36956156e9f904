//! Scenario files, output files and the command line.

use std::path::Path;
use std::process::Command;

use mbsense::harness::{presets, run_scenario, write_outputs, Scenario};

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let mut sc = presets::get("ca-c1").unwrap();
    sc.run.trials = 3;
    sc.run.snr_db = vec![10.0];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outputs(&run_scenario(&sc).unwrap(), d.path()).unwrap();
    }
    let a = read_dir_sorted(dirs[0].path());
    assert!(a.iter().any(|(n, _)| n == "metrics.csv"));
    assert_eq!(a, read_dir_sorted(dirs[1].path()));
}

#[test]
fn different_seeds_draw_different_scenes() {
    let sc = presets::get("ca-c1").unwrap();
    let setup = sc.validate().unwrap();
    let a = sc.draw_trial(&setup, 0, 1).unwrap();
    let b = sc.draw_trial(&setup, 0, 2).unwrap();
    assert_ne!(a.truth_m, b.truth_m);
}

#[test]
fn shipped_scenario_files_match_the_presets() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in presets::names() {
        let file = Scenario::load(&dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(file, presets::get(name).unwrap(), "{name}");
        file.validate().unwrap();
    }
}

#[test]
fn metrics_csv_has_one_row_per_method_and_condition() {
    let mut sc = presets::get("bwp-c1").unwrap();
    sc.run.trials = 2;
    sc.run.snr_db = vec![10.0, 20.0];
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&sc).unwrap();
    write_outputs(&report, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("method,snr_db,rmse_m,frt"));
    // multiband, fullband, contiguous, spotfi under two SNRs.
    assert_eq!(lines.count(), 8);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mbsense"))
}

#[test]
fn cli_validate_reports_bad_files_with_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = presets::get("ca-c1").unwrap();
    sc.scene.spacing_sets_m = vec![vec![-0.2]];
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, sc.to_toml_string().unwrap()).unwrap();
    let out = cli().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacing"));

    let ok = cli().args(["validate", "bwp-c1"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("K = 5282"));
}

#[test]
fn cli_rejects_unknown_methods_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["run", "ca-c1", "--methods", "multiband,bogus", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!dir.path().join("metrics.csv").exists());
}

#[test]
fn cli_dumps_compensated_slices() {
    let out = cli().args(["dump-cfr", "ca-c1", "--compensated"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 1000);
}
