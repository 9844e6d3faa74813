//! The `infosel` command line.
//!
//! Exit status: 0 on success, 2 on invalid input, 3 when the selection
//! procedure finds no multiplier with an acceptable estimated proportion
//! and so reports nothing.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::parse_family_arg;
use crate::io::{read_atoms, read_json, read_labels, read_probabilities, write_json};
use crate::oracle::{solve_mu_star, trivial_policy};
use crate::policy::{row_envelope, verify_nestedness, NestednessCheck};
use crate::selector::{apply_cal_only, fit_cal_only, mu_serde, run_og_infosp, Method};
use crate::shift::{apply_to_matrix, fit_vector_scaling, split_for_shift, FitOptions};
use crate::simlab::{run_experiment, write_metrics_csv, ExperimentConfig, GENERATOR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_SELECTION: i32 = 3;

/// Environment variable capping worker threads; `0` or unset means automatic.
pub const THREADS_VAR: &str = "INFOSEL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "infosel", version, about = "Selection of informative prediction sets with FCR control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrationArgs {
    /// Calibration probabilities: x_id,p_1,...,p_K
    #[arg(long)]
    pub cal_probs: PathBuf,
    /// Calibration labels: x_id,y
    #[arg(long)]
    pub cal_labels: PathBuf,
    /// `nontrivial`, `singletons`, `exclude=<k>` or a family JSON file
    #[arg(long, default_value = "nontrivial")]
    pub family: String,
    #[arg(long)]
    pub alpha: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select test examples and report their prediction sets.
    Select {
        #[command(flatten)]
        cal: CalibrationArgs,
        /// Test probabilities: x_id,p_1,...,p_K
        #[arg(long)]
        test_probs: PathBuf,
        #[arg(long, default_value = "threshold-form")]
        method: Method,
        /// Share of the calibration sample used to fit a label-shift
        /// correction before selecting.
        #[arg(long)]
        shift_fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        shift_seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit the calibration-only rule, optionally applying it to test rows.
    CalRule {
        #[command(flatten)]
        cal: CalibrationArgs,
        #[arg(long)]
        apply: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the population problem on an atomic model: mass,p_1,...,p_K
    Oracle {
        #[arg(long)]
        atoms: PathBuf,
        #[arg(long, default_value = "nontrivial")]
        family: String,
        #[arg(long)]
        alpha: f64,
        /// Test sample size for the FCR factor.
        #[arg(long, default_value_t = 1)]
        test_size: usize,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Fit label-shift coefficients on labelled probability rows.
    ShiftFit {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "shift.json")]
        out: PathBuf,
    },
    /// Dump the upper envelope of every row.
    Envelope {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long, default_value = "nontrivial")]
        family: String,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "envelopes.json")]
        out: PathBuf,
    },
}

/// Record of one invocation, written next to the outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub versions: serde_json::Value,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn manifest(
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    generator: Option<&str>,
    started: u64,
    outputs: Vec<PathBuf>,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config,
        seed,
        generator: generator.map(str::to_string),
        versions: serde_json::json!({ "infosel": env!("CARGO_PKG_VERSION") }),
        started_unix: started,
        finished_unix: now(),
        outputs,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Serialize)]
struct SelectedEntry {
    x_id: String,
    set: Vec<u32>,
}

#[derive(Debug, Serialize)]
struct SelectionFile {
    #[serde(with = "mu_serde")]
    mu_alpha: f64,
    selected: Vec<SelectedEntry>,
    fcp_hat: Option<f64>,
    method: String,
}

/// Outcome of a subcommand that ran to completion.
enum Done {
    Ok,
    NoSelection,
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        Error::InvalidConfig(format!("{THREADS_VAR} must be a thread count, got {value:?}"))
    })?;
    // A pool may already exist when the CLI runs inside a test process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn select(
    cal: &CalibrationArgs,
    test_probs: &Path,
    method: Method,
    shift_fraction: Option<f64>,
    shift_seed: u64,
    out: &Path,
) -> Result<Done> {
    let started = now();
    let (cal_ids, cal_rows) = read_probabilities(&cal.cal_probs)?;
    let labels = read_labels(&cal.cal_labels, &cal_ids, cal_rows.k())?;
    let (test_ids, test_rows) = read_probabilities(test_probs)?;
    if test_rows.k() != cal_rows.k() {
        return Err(Error::DimensionMismatch {
            expected: cal_rows.k(),
            got: test_rows.k(),
        });
    }
    let family = parse_family_arg(&cal.family, cal_rows.k())?;
    let (cal_rows, labels, test_rows) = match shift_fraction {
        None => (cal_rows, labels, test_rows),
        Some(fraction) => {
            let (fit, rest) = split_for_shift(cal_rows.len(), fraction, shift_seed)?;
            let fit_labels: Vec<u32> = fit.iter().map(|&i| labels[i]).collect();
            let coeffs = match fit_vector_scaling(
                &cal_rows.select(&fit),
                &fit_labels,
                &FitOptions::default(),
            ) {
                Ok(c) => c,
                Err(Error::DidNotConverge { best, .. }) => {
                    eprintln!("warning: shift fit stopped at the box bound; using the best iterate");
                    best
                }
                Err(e) => return Err(e),
            };
            (
                apply_to_matrix(&cal_rows.select(&rest), &coeffs)?,
                rest.iter().map(|&i| labels[i]).collect(),
                apply_to_matrix(&test_rows, &coeffs)?,
            )
        }
    };
    let outcome = run_og_infosp(&cal_rows, &labels, &test_rows, &family, cal.alpha, method)
        .map_err(|e| match &e {
            Error::NestednessViolated { sample, row, .. } => {
                let ids = match sample {
                    crate::error::Sample::Calibration => &cal_ids,
                    crate::error::Sample::Test => &test_ids,
                };
                // Row numbers refer to the shift-fit remainder when a split is used.
                let id = shift_fraction.map_or(ids.get(*row).cloned(), |_| None);
                match id {
                    Some(id) => Error::InvalidConfig(format!("{e} (x_id {id})")),
                    None => e,
                }
            }
            _ => e,
        })?;
    create_dir(out)?;
    let selection = SelectionFile {
        mu_alpha: outcome.mu_alpha,
        selected: outcome
            .sets
            .iter()
            .map(|(&i, s)| SelectedEntry {
                x_id: test_ids[i].clone(),
                set: s.members().to_vec(),
            })
            .collect(),
        fcp_hat: outcome.fcp_hat_at_solution,
        method: method.to_string(),
    };
    let path = out.join("selection.json");
    write_json(&path, &selection)?;
    let config = serde_json::json!({
        "calibration": cal,
        "test_probs": test_probs,
        "method": method.to_string(),
        "shift_fraction": shift_fraction,
    });
    let manifest_path = out.join("manifest.json");
    write_json(
        &manifest_path,
        &manifest(
            "select",
            config,
            shift_fraction.map(|_| shift_seed),
            shift_fraction.map(|_| GENERATOR),
            started,
            vec![path, manifest_path.clone()],
        ),
    )?;
    Ok(if outcome.mu_alpha.is_infinite() {
        Done::NoSelection
    } else {
        Done::Ok
    })
}

#[derive(Debug, Serialize)]
struct RuleFile {
    #[serde(with = "mu_serde")]
    mu_alpha: f64,
    alpha: f64,
    family: String,
}

fn cal_rule(cal: &CalibrationArgs, apply: Option<&Path>, out: &Path) -> Result<Done> {
    let started = now();
    let (ids, rows) = read_probabilities(&cal.cal_probs)?;
    let labels = read_labels(&cal.cal_labels, &ids, rows.k())?;
    let family = parse_family_arg(&cal.family, rows.k())?;
    let rule = fit_cal_only(&rows, &labels, &family, cal.alpha)?;
    create_dir(out)?;
    let rule_path = out.join("rule.json");
    write_json(
        &rule_path,
        &RuleFile {
            mu_alpha: rule.mu_alpha,
            alpha: cal.alpha,
            family: cal.family.clone(),
        },
    )?;
    let mut outputs = vec![rule_path];
    if let Some(test) = apply {
        let (test_ids, test_rows) = read_probabilities(test)?;
        let mut selected = Vec::new();
        for (id, row) in test_ids.iter().zip(test_rows.rows()) {
            if let Some(set) = apply_cal_only(&rule, row)? {
                selected.push(SelectedEntry {
                    x_id: id.clone(),
                    set: set.members().to_vec(),
                });
            }
        }
        let path = out.join("applied.json");
        write_json(&path, &serde_json::json!({ "selected": selected }))?;
        outputs.push(path);
    }
    let manifest_path = out.join("manifest.json");
    outputs.push(manifest_path.clone());
    let config = serde_json::json!({ "calibration": cal, "apply": apply });
    write_json(
        &manifest_path,
        &manifest("cal-rule", config, None, None, started, outputs),
    )?;
    Ok(if rule.mu_alpha.is_infinite() {
        Done::NoSelection
    } else {
        Done::Ok
    })
}

fn simulate(config_path: &Path, out: &Path) -> Result<Done> {
    let started = now();
    let config: ExperimentConfig = read_json(config_path)?;
    let result = run_experiment(&config)?;
    create_dir(out)?;
    let metrics = out.join("metrics.csv");
    let file = std::fs::File::create(&metrics)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", metrics.display())))?;
    write_metrics_csv(&result.rows, file)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", metrics.display())))?;
    let aggregate = out.join("aggregate.json");
    write_json(
        &aggregate,
        &serde_json::json!({
            "generator": result.generator,
            "seed": result.seed,
            "aggregates": result.aggregates,
        }),
    )?;
    let manifest_path = out.join("manifest.json");
    let config_value = serde_json::to_value(&config)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_json(
        &manifest_path,
        &manifest(
            "simulate",
            config_value,
            Some(config.seed),
            Some(GENERATOR),
            started,
            vec![metrics, aggregate, manifest_path.clone()],
        ),
    )?;
    Ok(Done::Ok)
}

fn oracle(atoms: &Path, family: &str, alpha: f64, test_size: usize, out: &Path) -> Result<Done> {
    let model = read_atoms(atoms)?;
    let family = parse_family_arg(family, model.k())?;
    let report = match solve_mu_star(&model, &family, alpha, test_size) {
        Ok(report) => serde_json::json!({ "regime": "regular", "report": report }),
        Err(Error::DegenerateRegime) => {
            let policy: Vec<_> = trivial_policy(&model, &family, alpha)?
                .into_iter()
                .map(|(set, d)| serde_json::json!({ "set": set, "selected": d }))
                .collect();
            serde_json::json!({ "regime": "degenerate", "trivial_policy": policy })
        }
        Err(e) => return Err(e),
    };
    write_json(out, &report)?;
    Ok(Done::Ok)
}

fn shift_fit(probs: &Path, labels: &Path, out: &Path) -> Result<Done> {
    let (ids, rows) = read_probabilities(probs)?;
    let labels = read_labels(labels, &ids, rows.k())?;
    let coeffs = match fit_vector_scaling(&rows, &labels, &FitOptions::default()) {
        Ok(c) => c,
        Err(Error::DidNotConverge { best, iterations, .. }) => {
            eprintln!("warning: shift fit did not converge after {iterations} iterations");
            best
        }
        Err(e) => return Err(e),
    };
    write_json(out, &coeffs)?;
    Ok(Done::Ok)
}

#[derive(Debug, Serialize)]
struct EnvelopeDump {
    x_id: String,
    envelope: crate::envelope::UpperEnvelope,
    nested: bool,
}

fn envelope(probs: &Path, family: &str, alpha: f64, out: &Path) -> Result<Done> {
    let (ids, rows) = read_probabilities(probs)?;
    let family = parse_family_arg(family, rows.k())?;
    let dump = ids
        .iter()
        .zip(rows.rows())
        .map(|(id, row)| {
            Ok(EnvelopeDump {
                x_id: id.clone(),
                envelope: row_envelope(row, &family, alpha)?,
                nested: matches!(
                    verify_nestedness(row, &family, alpha)?,
                    NestednessCheck::Nested
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(out, &dump)?;
    Ok(Done::Ok)
}

fn dispatch(cli: Cli) -> Result<Done> {
    configure_threads()?;
    match cli.command {
        Command::Select {
            cal,
            test_probs,
            method,
            shift_fraction,
            shift_seed,
            out,
        } => select(&cal, &test_probs, method, shift_fraction, shift_seed, &out),
        Command::CalRule { cal, apply, out } => cal_rule(&cal, apply.as_deref(), &out),
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Oracle {
            atoms,
            family,
            alpha,
            test_size,
            out,
        } => oracle(&atoms, &family, alpha, test_size, &out),
        Command::ShiftFit { probs, labels, out } => shift_fit(&probs, &labels, &out),
        Command::Envelope {
            probs,
            family,
            alpha,
            out,
        } => envelope(&probs, &family, alpha, &out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(Done::Ok) => EXIT_OK,
        Ok(Done::NoSelection) => {
            eprintln!("no multiplier meets the target level; nothing selected");
            EXIT_NO_SELECTION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
