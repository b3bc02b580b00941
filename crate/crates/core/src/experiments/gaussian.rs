//! Two-state Gaussian experiment with threshold-based refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, model_hash, CsvTable};
use crate::model::{derive_seed, EmissionModel, ModelSpec};
use crate::refine::{
    BunchSelection, ExitReason, Metrics, RefinementConfig, Refiner, ReplacementMode,
};

use super::protein::Method;

pub fn gaussian_model() -> ModelSpec {
    ModelSpec::new(
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![0.5, 0.5],
        EmissionModel::Gaussian {
            means: vec![0.0, 0.5],
            variances: vec![1.0, 1.0],
        },
    )
    .expect("static model is valid")
}

/// One refinement run on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub delta: f64,
    pub mode: ReplacementMode,
    pub method: Method,
    /// Replacements (bunch) or iterations (iterative).
    pub count: usize,
    /// Only set for iterative runs.
    pub exit: Option<ExitReason>,
    pub admissible: bool,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub viterbi: Metrics,
    pub pmap_errors: usize,
    pub runs: Vec<RunRecord>,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub delta: f64,
    pub mode: ReplacementMode,
    pub method: Method,
    pub count: MeanSd,
    pub errors: f64,
    /// Mean over runs whose pin set is admissible.
    pub expected_errors: f64,
    pub expected_errors_uncond: f64,
    pub rho_min_uncond: f64,
    /// Mean over runs whose pin set is admissible.
    pub rho_min_cond: f64,
    pub log_posterior: f64,
    pub inadmissible_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianResult {
    pub seed: u64,
    pub n: usize,
    pub deltas: Vec<f64>,
    /// Sorted by replicate index.
    pub replicates: Vec<ReplicateResult>,
    pub summary: Vec<SummaryRow>,
}

const MODES: [ReplacementMode; 2] = [ReplacementMode::PmapReplacement, ReplacementMode::Peeping];

fn run_replicate(
    spec: &ModelSpec,
    replicate: usize,
    n: usize,
    deltas: &[f64],
    seed: u64,
) -> Result<ReplicateResult> {
    let rep_seed = derive_seed(seed, replicate as u64);
    let (truth, obs) = spec.sample(n, rep_seed)?;
    let refiner = Refiner::new(spec, &obs)?;
    let viterbi = refiner.metrics(refiner.viterbi(), &Default::default(), Some(&truth))?;
    let pmap_errors = truth.hamming(&refiner.unconditional().pmap());
    let mut runs = Vec::new();
    for &delta in deltas {
        for mode in MODES {
            let out = refiner.bunch(BunchSelection::Threshold(delta), mode, Some(&truth))?;
            runs.push(RunRecord {
                delta,
                mode,
                method: Method::Bunch,
                count: out.pins.len(),
                exit: None,
                admissible: out.admissible,
                metrics: out.metrics,
            });
            let config = match mode {
                ReplacementMode::PmapReplacement => {
                    RefinementConfig::pmap(delta, n).with_truth(truth.clone())
                }
                ReplacementMode::Peeping => RefinementConfig::peeping(delta, n, truth.clone()),
            };
            let (_, trace) = refiner.iterative(&config)?;
            let count = trace.iterations.len();
            runs.push(RunRecord {
                delta,
                mode,
                method: Method::Iterative,
                count,
                exit: Some(trace.exit),
                admissible: true,
                metrics: trace.metrics_at(count).expect("last iteration").clone(),
            });
        }
    }
    Ok(ReplicateResult {
        replicate,
        seed: rep_seed,
        viterbi,
        pmap_errors,
        runs,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn summarize(replicates: &[ReplicateResult], deltas: &[f64]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &delta in deltas {
        for mode in MODES {
            for method in [Method::Bunch, Method::Iterative] {
                let runs: Vec<&RunRecord> = replicates
                    .iter()
                    .flat_map(|r| &r.runs)
                    .filter(|r| r.delta == delta && r.mode == mode && r.method == method)
                    .collect();
                let counts: Vec<f64> = runs.iter().map(|r| r.count as f64).collect();
                rows.push(SummaryRow {
                    delta,
                    mode,
                    method,
                    count: MeanSd::of(&counts),
                    errors: mean(
                        runs.iter()
                            .filter_map(|r| r.metrics.errors.map(|e| e as f64)),
                    ),
                    expected_errors: mean(runs.iter().filter_map(|r| r.metrics.expected_errors)),
                    expected_errors_uncond: mean(
                        runs.iter().map(|r| r.metrics.expected_errors_uncond),
                    ),
                    rho_min_uncond: mean(runs.iter().map(|r| r.metrics.rho_min_uncond)),
                    rho_min_cond: mean(runs.iter().filter_map(|r| r.metrics.rho_min_cond)),
                    log_posterior: mean(runs.iter().map(|r| r.metrics.log_posterior)),
                    inadmissible_runs: runs.iter().filter(|r| !r.admissible).count(),
                });
            }
        }
    }
    rows
}

/// Runs `replicates` independent sequences in parallel. Replicate `i` uses
/// seed `derive_seed(seed, i)`, so results do not depend on thread count.
pub fn run_gaussian_experiment(
    replicates: usize,
    n: usize,
    deltas: &[f64],
    seed: u64,
) -> Result<GaussianResult> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Config("sequence length must be positive".into()));
    }
    let spec = gaussian_model();
    let mut results = (0..replicates)
        .into_par_iter()
        .map(|i| run_replicate(&spec, i, n, deltas, seed))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|r| r.replicate);
    let summary = summarize(&results, deltas);
    Ok(GaussianResult {
        seed,
        n,
        deltas: deltas.to_vec(),
        replicates: results,
        summary,
    })
}

impl GaussianResult {
    /// Viterbi means: errors, expected errors, min probability, log posterior.
    pub fn viterbi_means(&self) -> [f64; 4] {
        let v = || self.replicates.iter().map(|r| &r.viterbi);
        [
            mean(v().filter_map(|m| m.errors.map(|e| e as f64))),
            mean(v().map(|m| m.expected_errors_uncond)),
            mean(v().map(|m| m.rho_min_uncond)),
            mean(v().map(|m| m.log_posterior)),
        ]
    }

    pub fn summary_row(
        &self,
        delta: f64,
        mode: ReplacementMode,
        method: Method,
    ) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.delta == delta && r.mode == mode && r.method == method)
    }

    fn header(&self, columns: &[&str]) -> Result<CsvTable> {
        Ok(CsvTable::new(columns.iter().copied())
            .meta("experiment", "gaussian")
            .meta("model_hash", model_hash(&gaussian_model())?)
            .meta("seed", self.seed)
            .meta("replicates", self.replicates.len())
            .meta("n", self.n)
            .meta("config", serde_json::to_string(&self.deltas)?))
    }

    pub fn summary_csv(&self) -> Result<CsvTable> {
        let [ve, vee, vrho, vlp] = self.viterbi_means();
        let mut table = self
            .header(&[
                "delta",
                "mode",
                "method",
                "count_mean",
                "count_sd",
                "errors",
                "expected_errors",
                "expected_errors_uncond",
                "rho_min_uncond",
                "rho_min_cond",
                "log_posterior",
                "inadmissible_runs",
            ])?
            .meta("viterbi_errors_mean", fmt_f64(ve))
            .meta("viterbi_expected_errors_mean", fmt_f64(vee))
            .meta("viterbi_rho_min_mean", fmt_f64(vrho))
            .meta("viterbi_log_posterior_mean", fmt_f64(vlp))
            .meta(
                "pmap_errors_mean",
                fmt_f64(mean(self.replicates.iter().map(|r| r.pmap_errors as f64))),
            );
        for r in &self.summary {
            table.push(vec![
                fmt_f64(r.delta),
                r.mode.label().into(),
                r.method.label().into(),
                fmt_f64(r.count.mean),
                fmt_f64(r.count.sd),
                fmt_f64(r.errors),
                fmt_f64(r.expected_errors),
                fmt_f64(r.expected_errors_uncond),
                fmt_f64(r.rho_min_uncond),
                fmt_f64(r.rho_min_cond),
                fmt_f64(r.log_posterior),
                r.inadmissible_runs.to_string(),
            ]);
        }
        Ok(table)
    }

    pub fn replicates_csv(&self) -> Result<CsvTable> {
        use crate::io::{fmt_opt, fmt_opt_f64};
        let mut table = self.header(&[
            "replicate",
            "seed",
            "delta",
            "mode",
            "method",
            "count",
            "admissible",
            "errors",
            "expected_errors",
            "expected_errors_uncond",
            "rho_min_uncond",
            "rho_min_cond",
            "log_posterior",
        ])?;
        for rep in &self.replicates {
            for r in &rep.runs {
                table.push(vec![
                    rep.replicate.to_string(),
                    rep.seed.to_string(),
                    fmt_f64(r.delta),
                    r.mode.label().into(),
                    r.method.label().into(),
                    r.count.to_string(),
                    r.admissible.to_string(),
                    fmt_opt(r.metrics.errors),
                    fmt_opt_f64(r.metrics.expected_errors),
                    fmt_f64(r.metrics.expected_errors_uncond),
                    fmt_f64(r.metrics.rho_min_uncond),
                    fmt_opt_f64(r.metrics.rho_min_cond),
                    fmt_f64(r.metrics.log_posterior),
                ]);
            }
        }
        Ok(table)
    }
}
