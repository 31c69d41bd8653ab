//! Deterministic CSV serialization of experiment results.
//!
//! Files are plain text with a fixed layout so that a rerun under an
//! identical config and seed reproduces them byte for byte, regardless of
//! thread count:
//!
//! * every file starts with a reproducibility header of `#`-prefixed
//!   lines: experiment name, seed, replicate count, a SHA-256 hash of the
//!   resolved config text, and the crate version;
//! * the summary file has columns `n_total,s,metric,value,mc_se,replicates`
//!   (one row per cell metric, `mc_se` empty when the metric has none);
//! * the long file has columns `n_total,s,metric,rep,value` (one row per
//!   replicate observation);
//! * floats are rendered with `{:.16e}`, which round-trips f64 exactly.
//!
//! Informational fields that vary between runs (wall-clock timing) are
//! never written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::experiments::ExperimentResult;

/// Hex SHA-256 of the resolved config text, tying an output file to the
/// exact settings that produced it.
pub fn config_hash(config_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
    }
    s
}

fn header(result: &ExperimentResult, config_text: &str) -> String {
    format!(
        "# experiment: {}\n# seed: {}\n# replicates: {}\n# config_hash: {}\n# version: {}\n",
        result.name,
        result.seed,
        result.replicates,
        config_hash(config_text),
        env!("CARGO_PKG_VERSION"),
    )
}

/// Renders the per-cell summary CSV.
pub fn render_summary_csv(result: &ExperimentResult, config_text: &str) -> String {
    let mut out = header(result, config_text);
    out.push_str("n_total,s,metric,value,mc_se,replicates\n");
    for cell in &result.cells {
        for m in &cell.metrics {
            let se = match m.mc_se {
                Some(v) => format!("{v:.16e}"),
                None => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{:.16e},{},{}",
                cell.n_total, cell.s, m.name, m.value, se, result.replicates
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}

/// Renders the per-replicate long-form CSV.
pub fn render_long_csv(result: &ExperimentResult, config_text: &str) -> String {
    let mut out = header(result, config_text);
    out.push_str("n_total,s,metric,rep,value\n");
    for row in &result.long {
        writeln!(
            out,
            "{},{},{},{},{:.16e}",
            row.n_total, row.s, row.metric, row.rep, row.value
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Writes `<name>_summary.csv` and `<name>_long.csv` into `dir`, creating
/// it if needed, and returns the two paths.
pub fn save_experiment(
    result: &ExperimentResult,
    config_text: &str,
    dir: &Path,
) -> io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let summary_path = dir.join(format!("{}_summary.csv", result.name));
    let long_path = dir.join(format!("{}_long.csv", result.name));
    fs::write(&summary_path, render_summary_csv(result, config_text))?;
    fs::write(&long_path, render_long_csv(result, config_text))?;
    Ok((summary_path, long_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{CellSummary, ExperimentResult, LongRow, Metric};

    fn toy_result() -> ExperimentResult {
        ExperimentResult {
            name: "toy".into(),
            replicates: 3,
            seed: 9,
            cells: vec![CellSummary {
                n_total: 64,
                s: 2,
                metrics: vec![
                    Metric { name: "lambda".into(), value: 1e-5, mc_se: None },
                    Metric { name: "coverage".into(), value: 2.0 / 3.0, mc_se: Some(0.25) },
                ],
                fit_seconds: Some(0.1),
            }],
            long: vec![
                LongRow { n_total: 64, s: 2, metric: "covered".into(), rep: 0, value: 1.0 },
                LongRow { n_total: 64, s: 2, metric: "covered".into(), rep: 1, value: 0.0 },
            ],
        }
    }

    #[test]
    fn summary_layout_is_fixed() {
        let csv = render_summary_csv(&toy_result(), "a = 1\n");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# experiment: toy");
        assert_eq!(lines[1], "# seed: 9");
        assert_eq!(lines[2], "# replicates: 3");
        assert!(lines[3].starts_with("# config_hash: "));
        assert_eq!(lines[3].len(), "# config_hash: ".len() + 64);
        assert!(lines[4].starts_with("# version: "));
        assert_eq!(lines[5], "n_total,s,metric,value,mc_se,replicates");
        assert_eq!(lines[6], "64,2,lambda,1.0000000000000001e-5,,3");
        assert!(lines[7].starts_with("64,2,coverage,6.666666666666666"));
        assert_eq!(lines.len(), 8);
    }

    #[test]
    fn long_layout_is_fixed() {
        let csv = render_long_csv(&toy_result(), "a = 1\n");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[5], "n_total,s,metric,rep,value");
        assert_eq!(lines[6], "64,2,covered,0,1.0000000000000000e0");
        assert_eq!(lines[7], "64,2,covered,1,0.0000000000000000e0");
    }

    #[test]
    fn float_format_round_trips_exactly() {
        for &v in &[2.0 / 3.0, 1e-300, -1.2345678901234567e17, f64::MIN_POSITIVE] {
            let s = format!("{v:.16e}");
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s} failed to round-trip");
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = config_hash("x = 1\n");
        assert_eq!(a, config_hash("x = 1\n"));
        assert_ne!(a, config_hash("x = 2\n"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn save_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let res = toy_result();
        let (s, l) = save_experiment(&res, "a = 1\n", dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(&s).unwrap(), render_summary_csv(&res, "a = 1\n"));
        assert_eq!(std::fs::read_to_string(&l).unwrap(), render_long_csv(&res, "a = 1\n"));
    }

    #[test]
    fn rerun_of_an_experiment_serializes_identically() {
        use crate::experiments::{experiment_mse, MseConfig};
        let cfg = MseConfig { r_reps: 3, seed: 4, n_quad: 64, ..MseConfig::default() };
        let a = experiment_mse(&[(32, 2)], &cfg).unwrap();
        let b = experiment_mse(&[(32, 2)], &cfg).unwrap();
        assert_eq!(render_summary_csv(&a, "c"), render_summary_csv(&b, "c"));
        assert_eq!(render_long_csv(&a, "c"), render_long_csv(&b, "c"));
    }
}
