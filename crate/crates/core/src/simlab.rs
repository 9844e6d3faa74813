//! Monte Carlo experiments on a four-component bivariate Gaussian mixture.
//!
//! Every repetition draws one calibration and one test sample and runs all
//! requested methods on the same draw. Estimated probabilities are the Bayes
//! posteriors under the training priors, which may differ from the priors
//! that generate the data. Repetition `r` of scenario `s` uses ChaCha8
//! seeded with the configured seed on stream `(s << 32) | r`.

use std::collections::BTreeMap;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ProbabilityMatrix;
use crate::error::{Error, Result};
use crate::family::{parse_family_arg, InformativeFamily};
use crate::selector::{apply_cal_only, fit_cal_only, run_og_infosp, Method};
use crate::shift::{apply_to_matrix, fit_vector_scaling, split_for_shift, FitOptions};
use crate::special::{run_classic_baseline, run_info_sp};

pub const CLASSES: usize = 4;

/// Name recorded in outputs for the random number generator.
pub const GENERATOR: &str = "ChaCha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub snr: f64,
    pub pi: [f64; CLASSES],
    pub seed: u64,
}

impl MixtureSpec {
    /// Mixing weights must be non-negative and sum to one within `1e-12`.
    pub fn new(snr: f64, pi: [f64; CLASSES], seed: u64) -> Result<Self> {
        check_priors(&pi)?;
        if !(snr.is_finite() && snr >= 0.0) {
            return Err(Error::InvalidConfig(format!("snr must be non-negative, got {snr}")));
        }
        Ok(MixtureSpec { snr, pi, seed })
    }

    pub fn means(&self) -> [[f64; 2]; CLASSES] {
        let s = self.snr;
        [[0.0, 0.0], [s, 0.0], [s, s], [0.0, s]]
    }
}

fn check_priors(pi: &[f64]) -> Result<()> {
    let total: f64 = pi.iter().sum();
    if pi.len() != CLASSES
        || pi.iter().any(|p| !(p.is_finite() && *p >= 0.0))
        || (total - 1.0).abs() > 1e-12
    {
        return Err(Error::InvalidConfig(format!(
            "mixing weights must be {CLASSES} non-negative numbers summing to 1, got {pi:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub x: [f64; 2],
    /// 1-based class.
    pub y: u32,
}

fn sample_with(rng: &mut impl Rng, spec: &MixtureSpec, count: usize) -> Vec<Draw> {
    let classes = WeightedIndex::new(spec.pi).expect("validated priors");
    let means = spec.means();
    (0..count)
        .map(|_| {
            let k = classes.sample(rng);
            let noise: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            Draw {
                x: [means[k][0] + noise[0], means[k][1] + noise[1]],
                y: k as u32 + 1,
            }
        })
        .collect()
}

/// `count` independent draws, determined by `spec.seed`.
pub fn sample_mixture(spec: &MixtureSpec, count: usize) -> Vec<Draw> {
    sample_with(&mut ChaCha8Rng::seed_from_u64(spec.seed), spec, count)
}

/// Class posteriors at `x` for a mixture with the given means' scale and
/// priors.
pub fn bayes_posteriors(x: [f64; 2], spec: &MixtureSpec) -> [f64; CLASSES] {
    let means = spec.means();
    let mut log_post = [0.0; CLASSES];
    for k in 0..CLASSES {
        let d0 = x[0] - means[k][0];
        let d1 = x[1] - means[k][1];
        log_post[k] = spec.pi[k].ln() - 0.5 * (d0 * d0 + d1 * d1);
    }
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = log_post.map(|l| (l - top).exp());
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    OgInfosp,
    OgInfospCalOnly,
    Classic,
    InfoSp,
    OgInfospVs,
    OgInfospCalOnlyVs,
}

impl SimMethod {
    pub const ALL: [SimMethod; 6] = [
        SimMethod::OgInfosp,
        SimMethod::OgInfospCalOnly,
        SimMethod::Classic,
        SimMethod::InfoSp,
        SimMethod::OgInfospVs,
        SimMethod::OgInfospCalOnlyVs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimMethod::OgInfosp => "og_infosp",
            SimMethod::OgInfospCalOnly => "og_infosp_cal_only",
            SimMethod::Classic => "classic",
            SimMethod::InfoSp => "info_sp",
            SimMethod::OgInfospVs => "og_infosp_vs",
            SimMethod::OgInfospCalOnlyVs => "og_infosp_cal_only_vs",
        }
    }

    fn uses_shift(self) -> bool {
        matches!(self, SimMethod::OgInfospVs | SimMethod::OgInfospCalOnlyVs)
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-repetition outcome of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub method: SimMethod,
    pub rep: usize,
    pub fcp: f64,
    pub tcp: f64,
    pub n_selected: usize,
    /// Set when the method failed on this draw; the metrics are then NaN.
    pub error: Option<String>,
}

/// Reported sets keyed by test index.
pub type Reported = BTreeMap<usize, Vec<u32>>;

/// `(fcp, tcp, n_selected)`: the miscovered share of the reported sets (zero
/// when none) and the weighted count of covering sets.
pub fn compute_metrics(
    reported: &Reported,
    truths: &[u32],
    weight: impl Fn(&[u32]) -> f64,
) -> (f64, f64, usize) {
    let mut miscovered = 0usize;
    let mut tcp = 0.0;
    for (&i, set) in reported {
        if set.contains(&truths[i]) {
            tcp += weight(set);
        } else {
            miscovered += 1;
        }
    }
    let n_selected = reported.len();
    (miscovered as f64 / n_selected.max(1) as f64, tcp, n_selected)
}

/// Weight `1 / |C|` used by the power metric.
pub fn inverse_cardinality(set: &[u32]) -> f64 {
    1.0 / set.len() as f64
}

fn default_shift_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub snr: f64,
    /// Priors generating calibration and test data.
    pub pi: [f64; CLASSES],
    /// Priors the probability model was trained under; defaults to `pi`.
    #[serde(default)]
    pub train_pi: Option<[f64; CLASSES]>,
    /// `nontrivial`, `exclude=<k>`, or a family file.
    pub goal: String,
    pub n: usize,
    pub m: usize,
    /// Share of the calibration sample used to fit the shift correction.
    #[serde(default = "default_shift_fraction")]
    pub shift_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<SimMethod>,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub method: SimMethod,
    pub reps: usize,
    pub failures: usize,
    pub fcr: f64,
    pub fcr_se: f64,
    pub power: f64,
    pub power_se: f64,
    pub mean_selected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub generator: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Generator for repetition `rep` of scenario number `scenario`.
pub fn rep_rng(seed: u64, scenario: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | rep as u64);
    rng
}

/// One draw of a scenario: estimated probabilities and labels.
#[derive(Debug, Clone)]
pub struct ScenarioDraw {
    pub cal: ProbabilityMatrix,
    pub cal_labels: Vec<u32>,
    pub test: ProbabilityMatrix,
    pub test_labels: Vec<u32>,
}

pub fn draw_scenario(scenario: &Scenario, rng: &mut impl Rng) -> Result<ScenarioDraw> {
    let target = MixtureSpec::new(scenario.snr, scenario.pi, 0)?;
    let trained = MixtureSpec::new(scenario.snr, scenario.train_pi.unwrap_or(scenario.pi), 0)?;
    let mut split = |count| -> Result<(ProbabilityMatrix, Vec<u32>)> {
        let draws = sample_with(rng, &target, count);
        let rows: Vec<f64> = draws
            .iter()
            .flat_map(|d| bayes_posteriors(d.x, &trained))
            .collect();
        Ok((
            ProbabilityMatrix::new(CLASSES, rows)?,
            draws.iter().map(|d| d.y).collect(),
        ))
    };
    let (cal, cal_labels) = split(scenario.n)?;
    let (test, test_labels) = split(scenario.m)?;
    Ok(ScenarioDraw {
        cal,
        cal_labels,
        test,
        test_labels,
    })
}

fn og_sets(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<Reported> {
    let out = run_og_infosp(cal, labels, test, family, alpha, Method::ThresholdForm)?;
    Ok(out
        .sets
        .into_iter()
        .map(|(i, s)| (i, s.members().to_vec()))
        .collect())
}

fn cal_only_sets(
    cal: &ProbabilityMatrix,
    labels: &[u32],
    test: &ProbabilityMatrix,
    family: &InformativeFamily,
    alpha: f64,
) -> Result<Reported> {
    let rule = fit_cal_only(cal, labels, family, alpha)?;
    let mut out = Reported::new();
    for (i, row) in test.rows().enumerate() {
        if let Some(set) = apply_cal_only(&rule, row)? {
            out.insert(i, set.members().to_vec());
        }
    }
    Ok(out)
}

/// Calibration remainder and test sample after a shift correction fitted on
/// a seeded share of the calibration sample.
fn shift_corrected(
    draw: &ScenarioDraw,
    fraction: f64,
    seed: u64,
) -> Result<(ProbabilityMatrix, Vec<u32>, ProbabilityMatrix)> {
    let (fit_idx, rest_idx) = split_for_shift(draw.cal.len(), fraction, seed)?;
    let fit_labels: Vec<u32> = fit_idx.iter().map(|&i| draw.cal_labels[i]).collect();
    let coeffs = match fit_vector_scaling(
        &draw.cal.select(&fit_idx),
        &fit_labels,
        &FitOptions::default(),
    ) {
        Ok(c) => c,
        // A boxed fit is still the best available correction.
        Err(Error::DidNotConverge { best, .. }) => best,
        Err(e) => return Err(e),
    };
    let cal = apply_to_matrix(&draw.cal.select(&rest_idx), &coeffs)?;
    let labels = rest_idx.iter().map(|&i| draw.cal_labels[i]).collect();
    let test = apply_to_matrix(&draw.test, &coeffs)?;
    Ok((cal, labels, test))
}

/// Runs one method on one draw.
pub fn run_method(
    method: SimMethod,
    draw: &ScenarioDraw,
    family: &InformativeFamily,
    alpha: f64,
    shift_fraction: f64,
    shift_seed: u64,
) -> Result<Reported> {
    let (cal, labels, test) = if method.uses_shift() {
        let (c, l, t) = shift_corrected(draw, shift_fraction, shift_seed)?;
        (std::borrow::Cow::Owned(c), std::borrow::Cow::Owned(l), std::borrow::Cow::Owned(t))
    } else {
        (
            std::borrow::Cow::Borrowed(&draw.cal),
            std::borrow::Cow::Borrowed(&draw.cal_labels),
            std::borrow::Cow::Borrowed(&draw.test),
        )
    };
    match method {
        SimMethod::OgInfosp | SimMethod::OgInfospVs => og_sets(&cal, &labels, &test, family, alpha),
        SimMethod::OgInfospCalOnly | SimMethod::OgInfospCalOnlyVs => {
            cal_only_sets(&cal, &labels, &test, family, alpha)
        }
        SimMethod::Classic => Ok(run_classic_baseline(&cal, &labels, &test, family, alpha)?.sets),
        SimMethod::InfoSp => Ok(run_info_sp(&cal, &labels, &test, family, alpha)?.sets),
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean and standard error of the per-repetition difference `a - b` of a
/// metric, over repetitions where both methods succeeded.
pub fn paired_difference(
    rows: &[MetricsRow],
    scenario: &str,
    a: SimMethod,
    b: SimMethod,
    metric: impl Fn(&MetricsRow) -> f64,
) -> (f64, f64) {
    let pick = |method: SimMethod| -> BTreeMap<usize, f64> {
        rows.iter()
            .filter(|r| r.scenario == scenario && r.method == method && r.error.is_none())
            .map(|r| (r.rep, metric(r)))
            .collect()
    };
    let (left, right) = (pick(a), pick(b));
    let diffs: Vec<f64> = left
        .iter()
        .filter_map(|(rep, x)| right.get(rep).map(|y| x - y))
        .collect();
    mean_and_se(&diffs)
}

pub fn aggregate(rows: &[MetricsRow], scenario: &str, method: SimMethod) -> Aggregate {
    let mine: Vec<&MetricsRow> = rows
        .iter()
        .filter(|r| r.scenario == scenario && r.method == method)
        .collect();
    let ok: Vec<&&MetricsRow> = mine.iter().filter(|r| r.error.is_none()).collect();
    let (fcr, fcr_se) = mean_and_se(&ok.iter().map(|r| r.fcp).collect::<Vec<_>>());
    let (power, power_se) = mean_and_se(&ok.iter().map(|r| r.tcp).collect::<Vec<_>>());
    let (mean_selected, _) =
        mean_and_se(&ok.iter().map(|r| r.n_selected as f64).collect::<Vec<_>>());
    Aggregate {
        scenario: scenario.to_string(),
        method,
        reps: mine.len(),
        failures: mine.len() - ok.len(),
        fcr,
        fcr_se,
        power,
        power_se,
        mean_selected,
    }
}

/// Runs every scenario, repetition and method; repetitions run in parallel
/// and rows come back in `(scenario, rep, method)` order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    crate::envelope::check_alpha(config.alpha)?;
    if config.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let families = config
        .scenarios
        .iter()
        .map(|s| {
            MixtureSpec::new(s.snr, s.pi, 0)?;
            check_priors(&s.train_pi.unwrap_or(s.pi))?;
            parse_family_arg(&s.goal, CLASSES)
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..config.scenarios.len())
        .flat_map(|s| (0..config.reps).map(move |r| (s, r)))
        .collect();
    let rows: Vec<MetricsRow> = jobs
        .par_iter()
        .map(|&(s, rep)| {
            let scenario = &config.scenarios[s];
            let mut rng = rep_rng(config.seed, s, rep);
            let shift_seed = rng.next_u64();
            let failed = |method: SimMethod, e: &Error| MetricsRow {
                scenario: scenario.id.clone(),
                method,
                rep,
                fcp: f64::NAN,
                tcp: f64::NAN,
                n_selected: 0,
                error: Some(e.to_string()),
            };
            let draw = match draw_scenario(scenario, &mut rng) {
                Ok(d) => d,
                Err(e) => return config.methods.iter().map(|&m| failed(m, &e)).collect(),
            };
            config
                .methods
                .iter()
                .map(|&method| {
                    match run_method(
                        method,
                        &draw,
                        &families[s],
                        config.alpha,
                        scenario.shift_fraction,
                        shift_seed,
                    ) {
                        Ok(reported) => {
                            let (fcp, tcp, n_selected) =
                                compute_metrics(&reported, &draw.test_labels, inverse_cardinality);
                            MetricsRow {
                                scenario: scenario.id.clone(),
                                method,
                                rep,
                                fcp,
                                tcp,
                                n_selected,
                                error: None,
                            }
                        }
                        Err(e) => failed(method, &e),
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();

    let aggregates = config
        .scenarios
        .iter()
        .flat_map(|s| config.methods.iter().map(|&m| aggregate(&rows, &s.id, m)))
        .collect();
    Ok(ExperimentResult {
        generator: GENERATOR.to_string(),
        seed: config.seed,
        rows,
        aggregates,
    })
}

/// Metrics table as CSV with header
/// `scenario,method,rep,fcp,tcp,n_selected,error`.
pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricsRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "method", "rep", "fcp", "tcp", "n_selected", "error"])?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.rep.to_string(),
            r.fcp.to_string(),
            r.tcp.to_string(),
            r.n_selected.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
