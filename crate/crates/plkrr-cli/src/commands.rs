//! Command implementations: each resolves its configuration, archives the
//! resolved text, runs the computation, and writes header-stamped artifacts.

use nalgebra::{DMatrix, DVector};
use plkrr_core::asymptotics::{lambda_rule, pointwise_variance, s_bounds, LambdaObjective};
use plkrr_core::experiments::{
    experiment_ci_compare, experiment_coverage, experiment_homogeneous_dc, experiment_mse,
    experiment_power, CiCompareConfig, CoverageConfig, HomogeneousConfig, MseConfig, PowerConfig,
};
use plkrr_core::fit::{fit_all, BetaEstimator};
use plkrr_core::hetero::{
    bootstrap_simultaneous, wald_pairwise, PairwiseTestSpec, SimulNull, SimulTestSpec, TestReport,
};
use plkrr_core::output::{config_hash, save_experiment};
use plkrr_core::{EigenSystem, Error, KernelFamily, PLDataset, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{
    render_resolved, resolve_kernel, resolve_lambda, resolve_out, resolve_seed,
    resolve_weighting, resolve_z_interval, ConfigFile,
};
use crate::ingest::{check_designs, ingest_csv, read_matrix_csv};
use crate::{Cli, Command, DiagArgs, FitArgs, PairArgs, SimArgs, SimulArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Fit(a) => fit(cli, &cfg, a),
        Command::Simulate(a) => simulate(cli, &cfg, a),
        Command::TestPair(a) => test_pair(cli, &cfg, a),
        Command::TestSimul(a) => test_simul(cli, &cfg, a),
        Command::Diagnose(a) => diagnose(cli, &cfg, a),
    }
}

/// 17-significant-digit float rendering used in all artifacts.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn family_name(f: KernelFamily) -> String {
    match f {
        KernelFamily::SobolevPeriodic { nu } => format!("sobolev(nu={nu})"),
        KernelFamily::GaussianExp => "gaussian".to_string(),
        KernelFamily::FiniteRank { rank } => format!("finite(rank={rank})"),
    }
}

/// Reproducibility header stamped on every artifact.
fn artifact_header(command: &str, seed: u64, hash: &str) -> String {
    format!(
        "# command: {command}\n# seed: {seed}\n# config_hash: {hash}\n# version: {}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// Archives the canonical resolved configuration and returns its hash.
fn archive_config(out: &Path, resolved: &BTreeMap<String, String>) -> Result<String> {
    std::fs::create_dir_all(out)?;
    let text = render_resolved(resolved);
    std::fs::write(out.join("resolved_config.txt"), &text)?;
    Ok(config_hash(&text))
}

fn kernel_pairs(resolved: &mut BTreeMap<String, String>, es: &EigenSystem, z: (f64, f64)) {
    resolved.insert("kernel.family".into(), family_name(es.family()));
    resolved.insert("kernel.truncation".into(), es.penalized_len().to_string());
    resolved.insert("kernel.z_range".into(), format!("{},{}", z.0, z.1));
}

fn fit(cli: &Cli, cfg: &ConfigFile, a: &FitArgs) -> Result<()> {
    let es = resolve_kernel(&a.kernel, cfg)?;
    let z_int = resolve_z_interval(&a.kernel, cfg)?;
    let seed = resolve_seed(cli.seed, cfg)?;
    let out = resolve_out(cli.out.as_deref(), cfg);
    let data = ingest_csv(&a.data, z_int)?;
    check_designs(&data)?;
    let lambda = resolve_lambda(a.lambda.as_deref(), cfg, "fit.lambda", &es, data.n_total())?;
    let weighting = resolve_weighting(a.weighting.as_deref(), cfg)?;

    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "fit".into());
    resolved.insert("data".into(), a.data.display().to_string());
    kernel_pairs(&mut resolved, &es, z_int);
    resolved.insert("fit.lambda".into(), num(lambda));
    resolved.insert(
        "fit.weighting".into(),
        match weighting {
            plkrr_core::Weighting::BySize => "size".into(),
            plkrr_core::Weighting::Equal => "equal".into(),
        },
    );
    resolved.insert("run.seed".into(), seed.to_string());
    let hash = archive_config(&out, &resolved)?;
    let header = artifact_header("fit", seed, &hash);

    let model = fit_all(&data, &es, lambda, weighting)?;
    let sigma2 = model.sigma2_bar().ok();
    let p = data.p();

    let mut summary = header.clone();
    writeln!(summary, "n_total = {}", data.n_total()).expect("string write");
    writeln!(summary, "s = {}", data.n_groups()).expect("string write");
    writeln!(summary, "p = {p}").expect("string write");
    writeln!(summary, "kernel = {}", family_name(es.family())).expect("string write");
    writeln!(summary, "lambda = {}", num(lambda)).expect("string write");
    writeln!(summary, "d_lambda = {}", num(es.d_lambda(lambda))).expect("string write");
    writeln!(
        summary,
        "sigma2_bar = {}",
        sigma2.map(num).unwrap_or_else(|| "nan".into())
    )
    .expect("string write");
    std::fs::write(out.join("fit_summary.txt"), summary)?;

    let mut groups = header.clone();
    groups.push_str("group,n");
    for k in 1..=p {
        write!(groups, ",beta_raw_{k}").expect("string write");
    }
    for k in 1..=p {
        write!(groups, ",beta_boosted_{k}").expect("string write");
    }
    groups.push('\n');
    for j in 0..model.s() {
        write!(groups, "{},{}", j + 1, model.groups[j].n).expect("string write");
        for k in 0..p {
            write!(groups, ",{}", num(model.groups[j].beta[k])).expect("string write");
        }
        for k in 0..p {
            write!(groups, ",{}", num(model.beta_check[j][k])).expect("string write");
        }
        groups.push('\n');
    }
    std::fs::write(out.join("fit_groups.csv"), groups)?;

    // The function estimate twice over: a 512-point uniform grid for
    // plotting, and the exact dual coefficients per subfit.
    let mut fbar = header.clone();
    fbar.push_str("z,fbar\n");
    let (lo, hi) = z_int;
    for i in 0..512 {
        let z = lo + (hi - lo) * (i as f64 + 0.5) / 512.0;
        writeln!(fbar, "{},{}", num(z), num(model.fbar(z))).expect("string write");
    }
    std::fs::write(out.join("fit_fbar.csv"), fbar)?;

    let mut coefs = header.clone();
    coefs.push_str("component,basis,index,coefficient\n");
    let push_block = |coefs: &mut String, name: &str, null: &DVector<f64>, pen: &DVector<f64>| {
        for (i, v) in null.iter().enumerate() {
            writeln!(coefs, "{name},null,{i},{}", num(*v)).expect("string write");
        }
        for (i, v) in pen.iter().enumerate() {
            writeln!(coefs, "{name},penalized,{i},{}", num(*v)).expect("string write");
        }
    };
    push_block(&mut coefs, "fbar", &model.fbar_null, &model.fbar_coefs);
    for j in 0..model.s() {
        push_block(
            &mut coefs,
            &format!("{}", j + 1),
            &model.groups[j].null_coefs,
            &model.groups[j].f_coefs,
        );
    }
    std::fs::write(out.join("fit_coefficients.csv"), coefs)?;

    println!(
        "fit: N = {}, s = {}, p = {p}, lambda = {:.6e}, sigma2_bar = {}; artifacts in {}",
        data.n_total(),
        data.n_groups(),
        lambda,
        sigma2.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into()),
        out.display()
    );
    Ok(())
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("{what} entry `{t}` is not an integer")))
        })
        .collect()
}

fn simulate(cli: &Cli, cfg: &ConfigFile, a: &SimArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed, cfg)?;
    let out = resolve_out(cli.out.as_deref(), cfg);
    let ns = parse_list(&a.n_total, "--N")?;
    let ss = parse_list(&a.s, "--s")?;
    let mut grid = Vec::new();
    for &n in &ns {
        for &s in &ss {
            grid.push((n, s));
        }
    }
    let default_reps = if a.experiment == "power" { 500 } else { 200 };
    let reps = cfg.resolve(a.reps, "simulate.reps", default_reps)?;
    let lambda = cfg.resolve_opt(a.lambda, "simulate.lambda")?;

    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "simulate".into());
    resolved.insert("simulate.experiment".into(), a.experiment.clone());
    resolved.insert(
        "simulate.grid".into(),
        grid.iter().map(|(n, s)| format!("{n}/{s}")).collect::<Vec<_>>().join(","),
    );
    resolved.insert("simulate.reps".into(), reps.to_string());
    resolved.insert(
        "simulate.lambda".into(),
        lambda.map(num).unwrap_or_else(|| "default".into()),
    );
    resolved.insert("run.seed".into(), seed.to_string());
    let _hash = archive_config(&out, &resolved)?;
    let config_text = render_resolved(&resolved);

    let result = match a.experiment.as_str() {
        "coverage" => experiment_coverage(
            &grid,
            &CoverageConfig { r_reps: reps, seed, lambda, ..CoverageConfig::default() },
        )?,
        "mse" => experiment_mse(
            &grid,
            &MseConfig { r_reps: reps, seed, lambda, ..MseConfig::default() },
        )?,
        "ci" => experiment_ci_compare(&grid, &CiCompareConfig { r_reps: reps, seed, lambda })?,
        "power" => experiment_power(
            &grid,
            &PowerConfig { r_reps: reps, seed, lambda, ..PowerConfig::default() },
        )?,
        "dc" => experiment_homogeneous_dc(
            &grid,
            &HomogeneousConfig { r_reps: reps, seed, lambda, ..HomogeneousConfig::default() },
        )?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown experiment `{other}` (coverage | mse | ci | power | dc)"
            )))
        }
    };
    let (summary, long) = save_experiment(&result, &config_text, &out)?;
    println!(
        "simulate {}: {} cells x {reps} replicates; wrote {} and {}",
        a.experiment,
        grid.len(),
        summary.display(),
        long.display()
    );
    Ok(())
}

/// Fits the model for a test command and returns it with the dataset.
fn fit_for_test(
    cfg: &ConfigFile,
    kernel: &crate::KernelArgs,
    lambda_flag: Option<&str>,
    data_path: &Path,
) -> Result<(plkrr_core::AggregateModel, PLDataset, EigenSystem, f64, (f64, f64))> {
    let es = resolve_kernel(kernel, cfg)?;
    let z_int = resolve_z_interval(kernel, cfg)?;
    let data = ingest_csv(data_path, z_int)?;
    check_designs(&data)?;
    let lambda = resolve_lambda(lambda_flag, cfg, "fit.lambda", &es, data.n_total())?;
    let weighting = resolve_weighting(None, cfg)?;
    let model = fit_all(&data, &es, lambda, weighting)?;
    Ok((model, data, es, lambda, z_int))
}

fn write_report(
    out: &Path,
    file: &str,
    header: &str,
    extra: &[(&str, String)],
    report: &TestReport,
) -> Result<PathBuf> {
    let mut text = header.to_string();
    writeln!(text, "statistic = {}", num(report.statistic)).expect("string write");
    writeln!(text, "critical_value = {}", num(report.critical_value)).expect("string write");
    writeln!(text, "reject = {}", report.reject).expect("string write");
    for (k, v) in extra {
        writeln!(text, "{k} = {v}").expect("string write");
    }
    if let Some(h) = report.halfwidth {
        writeln!(text, "halfwidth = {}", num(h)).expect("string write");
    }
    writeln!(text, "unequal_n_adjusted = {}", report.unequal_n_adjusted).expect("string write");
    writeln!(
        text,
        "contributions = {}",
        report.contributions.iter().map(|v| num(*v)).collect::<Vec<_>>().join(",")
    )
    .expect("string write");
    writeln!(text, "label = {}", report.label).expect("string write");
    let path = out.join(file);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn test_pair(cli: &Cli, cfg: &ConfigFile, a: &PairArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed, cfg)?;
    let out = resolve_out(cli.out.as_deref(), cfg);
    let (model, data, es, lambda, z_int) =
        fit_for_test(cfg, &a.kernel, a.lambda.as_deref(), &a.data)?;
    let p = data.p();

    let (j, k) = a
        .groups
        .split_once(',')
        .and_then(|(j, k)| Some((j.trim().parse::<usize>().ok()?, k.trim().parse::<usize>().ok()?)))
        .ok_or_else(|| {
            Error::InvalidConfig(format!("--groups `{}` must be two ids `j,k`", a.groups))
        })?;
    let s = data.n_groups();
    if j < 1 || k < 1 || j > s || k > s || j == k {
        return Err(Error::InvalidConfig(format!(
            "--groups {j},{k} must name two distinct groups in 1..={s}"
        )));
    }
    let contrast = match &a.contrast {
        None => DMatrix::identity(p, p),
        Some(path) => {
            let rows = read_matrix_csv(path)?;
            if rows[0].len() != p {
                return Err(Error::InvalidConfig(format!(
                    "contrast has {} columns but the model has p = {p}",
                    rows[0].len()
                )));
            }
            let q = rows.len();
            DMatrix::from_fn(q, p, |r, c| rows[r][c])
        }
    };
    let estimator_name =
        cfg.resolve(a.estimator.clone(), "test.estimator", "raw".to_string())?;
    let estimator = match estimator_name.as_str() {
        "raw" => BetaEstimator::Raw,
        "boosted" => BetaEstimator::Boosted,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown estimator `{other}` (raw | boosted)"
            )))
        }
    };
    let alpha = cfg.resolve(a.alpha, "test.alpha", 0.05)?;

    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "test-pair".into());
    resolved.insert("data".into(), a.data.display().to_string());
    kernel_pairs(&mut resolved, &es, z_int);
    resolved.insert("fit.lambda".into(), num(lambda));
    resolved.insert("test.groups".into(), format!("{j},{k}"));
    resolved.insert("test.estimator".into(), estimator_name.clone());
    resolved.insert("test.alpha".into(), num(alpha));
    resolved.insert("run.seed".into(), seed.to_string());
    let hash = archive_config(&out, &resolved)?;

    let spec = PairwiseTestSpec { groups: (j - 1, k - 1), contrast, alpha, estimator };
    let report = wald_pairwise(&model, &spec, None, None)?;
    let path = write_report(
        &out,
        "test_pair.txt",
        &artifact_header("test-pair", seed, &hash),
        &[
            ("alpha", num(alpha)),
            ("estimator", estimator_name),
            ("groups", format!("{j},{k}")),
            ("lambda", num(lambda)),
        ],
        &report,
    )?;
    println!(
        "test-pair ({j} vs {k}): statistic = {:.6}, critical = {:.6}, reject = {}; wrote {}",
        report.statistic,
        report.critical_value,
        report.reject,
        path.display()
    );
    Ok(())
}

fn test_simul(cli: &Cli, cfg: &ConfigFile, a: &SimulArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed, cfg)?;
    let out = resolve_out(cli.out.as_deref(), cfg);
    let (model, data, es, lambda, z_int) =
        fit_for_test(cfg, &a.kernel, a.lambda.as_deref(), &a.data)?;
    let p = data.p();
    let s = data.n_groups();

    let groups: Vec<usize> = if a.groups == "all" {
        (0..s).collect()
    } else {
        let ids = parse_list(&a.groups, "--groups")?;
        for &g in &ids {
            if g < 1 || g > s {
                return Err(Error::InvalidConfig(format!(
                    "--groups id {g} outside 1..={s}"
                )));
            }
        }
        ids.iter().map(|&g| g - 1).collect()
    };
    let null = if a.null == "zero-diff" {
        SimulNull::AdjacentDifferences
    } else {
        let rows = read_matrix_csv(Path::new(&a.null))?;
        if rows.len() != groups.len() || rows[0].len() != p {
            return Err(Error::InvalidConfig(format!(
                "null values must be {} rows x {p} columns, got {} x {}",
                groups.len(),
                rows.len(),
                rows[0].len()
            )));
        }
        SimulNull::Values(rows.into_iter().map(DVector::from_vec).collect())
    };
    let b = cfg.resolve(a.bootstrap, "test.bootstrap", 300)?;
    let alpha = cfg.resolve(a.alpha, "test.alpha", 0.05)?;
    let two_sided = if a.two_sided {
        true
    } else {
        cfg.resolve(None, "test.two_sided", false)?
    };

    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "test-simul".into());
    resolved.insert("data".into(), a.data.display().to_string());
    kernel_pairs(&mut resolved, &es, z_int);
    resolved.insert("fit.lambda".into(), num(lambda));
    resolved.insert(
        "test.groups".into(),
        groups.iter().map(|g| (g + 1).to_string()).collect::<Vec<_>>().join(","),
    );
    resolved.insert("test.null".into(), a.null.clone());
    resolved.insert("test.bootstrap".into(), b.to_string());
    resolved.insert("test.alpha".into(), num(alpha));
    resolved.insert("test.two_sided".into(), two_sided.to_string());
    resolved.insert("run.seed".into(), seed.to_string());
    let hash = archive_config(&out, &resolved)?;

    let spec = SimulTestSpec { groups, null, alpha, bootstrap_reps: b, two_sided };
    let report = bootstrap_simultaneous(&model, &data, &spec, None, seed)?;
    let path = write_report(
        &out,
        "test_simul.txt",
        &artifact_header("test-simul", seed, &hash),
        &[
            ("alpha", num(alpha)),
            ("bootstrap_reps", b.to_string()),
            ("two_sided", two_sided.to_string()),
            ("lambda", num(lambda)),
        ],
        &report,
    )?;
    println!(
        "test-simul ({} groups): statistic = {:.6}, critical = {:.6}, reject = {}; wrote {}",
        spec_len(&report),
        report.statistic,
        report.critical_value,
        report.reject,
        path.display()
    );
    Ok(())
}

/// Number of per-group contribution blocks in a simultaneous report.
fn spec_len(report: &TestReport) -> usize {
    report.contributions.len()
}

fn diagnose(cli: &Cli, cfg: &ConfigFile, a: &DiagArgs) -> Result<()> {
    let es = resolve_kernel(&a.kernel, cfg)?;
    let seed = resolve_seed(cli.seed, cfg)?;
    let out = resolve_out(cli.out.as_deref(), cfg);
    let n = a.n_total;
    let z0 = cfg.resolve(a.z0, "diagnose.z0", 0.5)?;
    let lambda_mse = lambda_rule(es.family(), n, LambdaObjective::MinimaxMSE)?;
    let lambda_clt = lambda_rule(es.family(), n, LambdaObjective::JointCLT)?;

    let mut resolved = BTreeMap::new();
    resolved.insert("command".into(), "diagnose".into());
    resolved.insert("diagnose.n_total".into(), n.to_string());
    resolved.insert("diagnose.z0".into(), num(z0));
    kernel_pairs(&mut resolved, &es, resolve_z_interval(&a.kernel, cfg)?);
    resolved.insert("run.seed".into(), seed.to_string());
    let hash = archive_config(&out, &resolved)?;

    let bounds = s_bounds(&es, n, lambda_clt);
    let mut body = String::new();
    writeln!(body, "n_total = {n}").expect("string write");
    writeln!(body, "kernel = {}", family_name(es.family())).expect("string write");
    writeln!(body, "lambda_mse = {}", num(lambda_mse)).expect("string write");
    writeln!(body, "lambda_clt = {}", num(lambda_clt)).expect("string write");
    writeln!(body, "d_lambda_mse = {}", num(es.d_lambda(lambda_mse))).expect("string write");
    writeln!(body, "d_lambda_clt = {}", num(es.d_lambda(lambda_clt))).expect("string write");
    writeln!(body, "s_lower_guidance = {}", num(bounds.lower)).expect("string write");
    writeln!(
        body,
        "s_upper_guidance = {}",
        bounds.upper.map(num).unwrap_or_else(|| "none".into())
    )
    .expect("string write");
    writeln!(body, "# s bounds are rate guidance only, not sharp thresholds").expect("string write");
    writeln!(body, "z0 = {}", num(z0)).expect("string write");
    writeln!(body, "sigma2_pointwise_z0 = {}", num(pointwise_variance(&es, lambda_clt, z0)))
        .expect("string write");

    print!("{body}");
    let text = format!("{}{body}", artifact_header("diagnose", seed, &hash));
    std::fs::write(out.join("diagnose.txt"), text)?;
    Ok(())
}
