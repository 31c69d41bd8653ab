//! End-to-end tests driving the compiled binary: artifact layout,
//! reproducibility headers, determinism, precedence, and error reporting.

use plkrr_core::sim::{generate, DGPSpec};
use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn plkrr() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_plkrr"));
    c.env_remove("PLKRR_OUT");
    c
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Writes a generated dataset in the ingestable CSV format.
fn write_dataset(path: &Path, n_total: usize, s: usize, seed: u64) {
    let dgp = DGPSpec::heterogeneous(n_total, s, seed).unwrap();
    let data = generate(&dgp, 0).unwrap();
    let p = data.p();
    let mut out = String::from("group,y,z");
    for k in 1..=p {
        write!(out, ",x{k}").unwrap();
    }
    out.push('\n');
    for j in 0..data.n_groups() {
        let g = data.group(j);
        for i in 0..g.n() {
            write!(out, "{},{:.16e},{:.16e}", j + 1, g.y[i], g.z[i]).unwrap();
            for k in 0..p {
                write!(out, ",{:.16e}", g.x[i * p + k]).unwrap();
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing artifact {name}: {e}"))
}

fn grab(text: &str, key: &str) -> f64 {
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(&format!("{key} = ")) {
            return rest.parse().unwrap_or_else(|_| panic!("unparseable {key}: {rest}"));
        }
    }
    panic!("no `{key} = ` line in:\n{text}");
}

#[test]
fn diagnose_prints_the_penalty_rules() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(plkrr().args(["diagnose", "--N", "1024", "--out"]).arg(dir.path()));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mse = grab(&stdout, "lambda_mse");
    let clt = grab(&stdout, "lambda_clt");
    assert!((mse - 1024f64.powf(-0.8)).abs() / mse < 1e-12, "lambda_mse {mse}");
    assert!((clt - 1024f64.powf(-4.0 / 9.0)).abs() / clt < 1e-12, "lambda_clt {clt}");
    assert!(grab(&stdout, "d_lambda_clt") > 1.0);
    assert!(grab(&stdout, "sigma2_pointwise_z0") > 0.0);
    let file = read(dir.path(), "diagnose.txt");
    assert!(file.starts_with("# command: diagnose\n# seed: 42\n# config_hash: "), "{file}");
    assert!(file.contains("guidance only"));
}

#[test]
fn fit_writes_artifacts_and_reruns_are_byte_identical() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data.csv");
    write_dataset(&data, 128, 4, 5);
    let dir1 = work.path().join("run1");
    let dir2 = work.path().join("run2");
    for dir in [&dir1, &dir2] {
        run_ok(plkrr().arg("fit").arg("--data").arg(&data).args(["--lambda", "1e-4"]).arg("--out").arg(dir));
    }
    for name in
        ["fit_summary.txt", "fit_groups.csv", "fit_fbar.csv", "fit_coefficients.csv", "resolved_config.txt"]
    {
        assert_eq!(read(&dir1, name), read(&dir2, name), "{name} differs between reruns");
    }
    let summary = read(&dir1, "fit_summary.txt");
    assert!(summary.starts_with("# command: fit\n# seed: 42\n"));
    assert_eq!(grab(&summary, "n_total") as usize, 128);
    assert_eq!(grab(&summary, "s") as usize, 4);
    assert!(grab(&summary, "sigma2_bar") > 0.0);
    let groups = read(&dir1, "fit_groups.csv");
    assert_eq!(groups.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
    assert!(groups.contains("beta_raw_1") && groups.contains("beta_boosted_1"));
    let fbar = read(&dir1, "fit_fbar.csv");
    assert_eq!(fbar.lines().filter(|l| !l.starts_with('#')).count(), 1 + 512);
    let coefs = read(&dir1, "fit_coefficients.csv");
    assert!(coefs.contains("fbar,penalized,0,") && coefs.contains("1,null,0,"));
}

#[test]
fn fit_rejects_a_rank_deficient_design() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("bad.csv");
    std::fs::write(
        &data,
        "group,y,z,x1,x2\n1,1.0,0.1,1.0,2.0\n1,2.0,0.2,2.0,4.0\n1,3.0,0.3,3.0,6.0\n1,1.5,0.4,4.0,8.0\n",
    )
    .unwrap();
    let out = plkrr().arg("fit").arg("--data").arg(&data).arg("--out").arg(work.path()).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.trim_end();
    assert!(!line.contains('\n'), "error must be a single line: {stderr:?}");
    assert!(line.starts_with("error: E_DATA: "), "{line}");
    assert!(line.contains("rank deficient"));
}

#[test]
fn ingest_failures_name_the_offending_line() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("bad.csv");
    std::fs::write(&data, "group,y,z,x1\n1,1.0,0.5,2.0\n0,2.0,0.1,3.0\n").unwrap();
    let out = plkrr().arg("fit").arg("--data").arg(&data).arg("--out").arg(work.path()).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: E_DATA: "), "{stderr}");
    assert!(stderr.contains("line 3"), "{stderr}");
}

#[test]
fn flag_beats_config_beats_default() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data.csv");
    write_dataset(&data, 64, 2, 8);
    let cfgfile = work.path().join("run.cfg");
    std::fs::write(&cfgfile, "[run]\nseed = 7\n[fit]\nlambda = 0.5\n").unwrap();

    let flag_dir = work.path().join("flagged");
    run_ok(
        plkrr()
            .arg("fit")
            .arg("--data")
            .arg(&data)
            .arg("--config")
            .arg(&cfgfile)
            .args(["--lambda", "0.25"])
            .arg("--out")
            .arg(&flag_dir),
    );
    let resolved = read(&flag_dir, "resolved_config.txt");
    assert!(resolved.contains("fit.lambda = 2.5"), "{resolved}");
    assert!(resolved.contains("run.seed = 7"), "{resolved}");

    let cfg_dir = work.path().join("from-config");
    run_ok(
        plkrr()
            .arg("fit")
            .arg("--data")
            .arg(&data)
            .arg("--config")
            .arg(&cfgfile)
            .arg("--out")
            .arg(&cfg_dir),
    );
    assert!(read(&cfg_dir, "resolved_config.txt").contains("fit.lambda = 5.0"), "config value lost");

    let def_dir = work.path().join("defaulted");
    run_ok(plkrr().arg("fit").arg("--data").arg(&data).arg("--out").arg(&def_dir));
    let resolved = read(&def_dir, "resolved_config.txt");
    let rule = 64f64.powf(-0.8);
    assert!(
        resolved.contains(&format!("fit.lambda = {rule:.16e}")),
        "default rule missing: {resolved}"
    );
    assert!(resolved.contains("run.seed = 42"), "{resolved}");
}

#[test]
fn env_var_supplies_the_default_output_directory() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data.csv");
    write_dataset(&data, 64, 2, 8);
    let env_dir = work.path().join("from-env");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plkrr"));
    cmd.env("PLKRR_OUT", &env_dir);
    run_ok(cmd.arg("fit").arg("--data").arg(&data).args(["--lambda", "1e-3"]));
    assert!(env_dir.join("fit_summary.txt").exists(), "artifacts did not land in $PLKRR_OUT");
}

#[test]
fn pairwise_test_reports_and_is_deterministic() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data.csv");
    write_dataset(&data, 128, 4, 3);
    let dir = work.path().join("pair");
    let out = run_ok(
        plkrr()
            .arg("test-pair")
            .arg("--data")
            .arg(&data)
            .args(["--groups", "1,2", "--estimator", "boosted", "--lambda", "1e-4"])
            .arg("--out")
            .arg(&dir),
    );
    assert!(String::from_utf8(out.stdout).unwrap().contains("test-pair (1 vs 2)"));
    let report = read(&dir, "test_pair.txt");
    assert!(report.starts_with("# command: test-pair\n"));
    assert!(grab(&report, "statistic") >= 0.0);
    assert!(grab(&report, "critical_value") > 0.0);
    assert!(report.contains("reject = ") && report.contains("estimator = boosted"));
}

#[test]
fn simultaneous_test_is_deterministic_across_reruns() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data.csv");
    write_dataset(&data, 128, 4, 3);
    let dir1 = work.path().join("s1");
    let dir2 = work.path().join("s2");
    for dir in [&dir1, &dir2] {
        run_ok(
            plkrr()
                .arg("test-simul")
                .arg("--data")
                .arg(&data)
                .args(["--groups", "all", "--null", "zero-diff", "--B", "200"])
                .args(["--lambda", "1e-4", "--seed", "9"])
                .arg("--out")
                .arg(dir),
        );
    }
    let r1 = read(&dir1, "test_simul.txt");
    assert_eq!(r1, read(&dir2, "test_simul.txt"), "bootstrap must be seed-deterministic");
    assert!(r1.starts_with("# command: test-simul\n# seed: 9\n"));
    assert!(r1.contains("bootstrap_reps = 200"));
    assert!(grab(&r1, "critical_value").is_finite());
}

#[test]
fn simulate_writes_experiment_csvs_deterministically() {
    let work = tempfile::tempdir().unwrap();
    let dir1 = work.path().join("m1");
    let dir2 = work.path().join("m2");
    for dir in [&dir1, &dir2] {
        run_ok(
            plkrr()
                .arg("simulate")
                .args(["--experiment", "mse", "--N", "64", "--s", "2", "--reps", "3", "--seed", "11"])
                .arg("--out")
                .arg(dir),
        );
    }
    let summary = read(&dir1, "mse_summary.csv");
    assert!(summary.starts_with("# experiment: mse\n# seed: 11\n# replicates: 3\n"));
    assert!(summary.contains("n_total,s,metric,value,mc_se,replicates"));
    assert_eq!(summary, read(&dir2, "mse_summary.csv"));
    assert_eq!(read(&dir1, "mse_long.csv"), read(&dir2, "mse_long.csv"));
    assert!(read(&dir1, "resolved_config.txt").contains("simulate.experiment = mse"));
}

#[test]
fn unknown_experiment_is_a_config_error() {
    let work = tempfile::tempdir().unwrap();
    let out = plkrr()
        .arg("simulate")
        .args(["--experiment", "bogus", "--N", "64", "--s", "2"])
        .arg("--out")
        .arg(work.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error: E_CONFIG: "), "{stderr}");
}

/// The contrast file routes through to the test: a 1x1 contrast on a p=1
/// model matches the default identity contrast exactly.
#[test]
fn contrast_file_matches_identity_default() {
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data.csv");
    write_dataset(&data, 128, 4, 3);
    let cpath = work.path().join("contrast.csv");
    std::fs::write(&cpath, "1.0\n").unwrap();
    let dir_default = work.path().join("ident");
    let dir_file = work.path().join("file");
    run_ok(
        plkrr()
            .arg("test-pair")
            .arg("--data")
            .arg(&data)
            .args(["--groups", "1,2", "--lambda", "1e-4"])
            .arg("--out")
            .arg(&dir_default),
    );
    run_ok(
        plkrr()
            .arg("test-pair")
            .arg("--data")
            .arg(&data)
            .args(["--groups", "1,2", "--lambda", "1e-4"])
            .arg("--contrast")
            .arg(&cpath)
            .arg("--out")
            .arg(&dir_file),
    );
    let a = read(&dir_default, "test_pair.txt");
    let b = read(&dir_file, "test_pair.txt");
    assert_eq!(grab(&a, "statistic"), grab(&b, "statistic"));
}
