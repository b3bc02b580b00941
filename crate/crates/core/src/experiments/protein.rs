//! Six-state secondary-structure model over a 20-letter amino-acid alphabet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_opt, fmt_opt_f64, model_hash, CsvTable};
use crate::model::{EmissionModel, ModelSpec, ObservationSequence, StatePath};
use crate::refine::{BunchSelection, Metrics, RefinementConfig, Refiner, ReplacementMode};

pub const PROTEIN_LENGTH: usize = 1000;

/// A seed whose sampled sequence drives the bunch PMAP run to an
/// inadmissible pin set for some replacement count in [`DEFAULT_SCHEDULE`].
pub const PROTEIN_INADMISSIBLE_SEED: u64 = 0;

pub const DEFAULT_SCHEDULE: [usize; 19] = [
    0, 1, 2, 3, 4, 5, 10, 15, 20, 25, 30, 35, 40, 50, 60, 70, 78, 100, 140,
];

const TRANSITION: [[f64; 6]; 6] = [
    [0.8360, 0.0034, 0.1606, 0.0, 0.0, 0.0],
    [0.0022, 0.8282, 0.1668, 0.0028, 0.0, 0.0],
    [0.0175, 0.0763, 0.8607, 0.0455, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.7500, 0.2271, 0.0229],
    [0.0, 0.0, 0.0, 0.0, 0.8450, 0.1550],
    [0.0, 0.0018, 0.2481, 0.0, 0.0, 0.7501],
];

const INITIAL: [f64; 6] = [0.0016, 0.0041, 0.9929, 0.0014, 0.0, 0.0];

/// Rows are symbols, columns are states.
pub const EMISSION_TABLE: [[f64; 6]; 20] = [
    [0.1059, 0.0636, 0.0643, 0.1036, 0.1230, 0.1230],
    [0.0107, 0.0171, 0.0135, 0.0081, 0.0111, 0.0128],
    [0.0538, 0.0319, 0.0775, 0.0634, 0.0415, 0.0345],
    [0.0973, 0.0477, 0.0620, 0.1120, 0.0852, 0.0848],
    [0.0436, 0.0576, 0.0330, 0.0371, 0.0386, 0.0399],
    [0.0303, 0.0484, 0.1133, 0.0447, 0.0321, 0.0229],
    [0.0203, 0.0227, 0.0259, 0.0188, 0.0197, 0.0221],
    [0.0564, 0.1010, 0.0372, 0.0577, 0.0694, 0.0593],
    [0.0672, 0.0443, 0.0574, 0.0540, 0.0671, 0.0810],
    [0.1227, 0.1068, 0.0674, 0.0994, 0.1279, 0.1477],
    [0.0240, 0.0219, 0.0181, 0.0214, 0.0293, 0.0304],
    [0.0299, 0.0252, 0.0561, 0.0259, 0.0338, 0.0336],
    [0.0333, 0.0208, 0.0757, 0.0472, 0.0067, 0.0031],
    [0.0443, 0.0270, 0.0330, 0.0469, 0.0497, 0.0472],
    [0.0594, 0.0464, 0.0470, 0.0522, 0.0677, 0.0697],
    [0.0496, 0.0496, 0.0744, 0.0485, 0.0422, 0.0491],
    [0.0395, 0.0641, 0.0572, 0.0465, 0.0412, 0.0375],
    [0.0591, 0.1386, 0.0473, 0.0685, 0.0677, 0.0545],
    [0.0168, 0.0170, 0.0111, 0.0135, 0.0130, 0.0124],
    [0.0359, 0.0483, 0.0286, 0.0306, 0.0331, 0.0345],
];

/// Largest absolute change per state made when renormalizing the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Renormalization {
    pub column_sums: Vec<f64>,
    pub max_adjustment: Vec<f64>,
}

/// Transposes a symbol-by-state table into per-state distributions, scaling
/// each state to sum to 1. Fails if a state's mass is off by more than `1e-3`.
pub fn normalize_emission_columns(table: &[[f64; 6]]) -> Result<(Vec<Vec<f64>>, Renormalization)> {
    let mut rows = vec![Vec::new(); 6];
    let mut column_sums = Vec::with_capacity(6);
    let mut max_adjustment = Vec::with_capacity(6);
    for (s, row) in rows.iter_mut().enumerate() {
        let sum: f64 = table.iter().map(|r| r[s]).sum();
        if (sum - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidModel(vec![format!(
                "emission column {} sums to {sum}, more than 1e-3 from 1",
                s + 1
            )]));
        }
        let mut adj: f64 = 0.0;
        for r in table {
            let scaled = r[s] / sum;
            adj = adj.max((scaled - r[s]).abs());
            row.push(scaled);
        }
        column_sums.push(sum);
        max_adjustment.push(adj);
    }
    Ok((
        rows,
        Renormalization {
            column_sums,
            max_adjustment,
        },
    ))
}

pub fn protein_model() -> Result<(ModelSpec, Renormalization)> {
    let (probabilities, log) = normalize_emission_columns(&EMISSION_TABLE)?;
    let spec = ModelSpec::new(
        TRANSITION.iter().map(|r| r.to_vec()).collect(),
        INITIAL.to_vec(),
        EmissionModel::Categorical {
            alphabet: (1..=20).map(|i| format!("aa{i:02}")).collect(),
            probabilities,
        },
    )?;
    Ok((spec, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bunch,
    Iterative,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Bunch => "bunch",
            Method::Iterative => "iterative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProteinSchedule {
    /// Replacement counts; iterative runs are read off one long trace.
    Counts(Vec<usize>),
    /// A single classification-probability threshold.
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinRow {
    pub method: Method,
    pub mode: ReplacementMode,
    /// Number of replacements (bunch) or iterations (iterative).
    pub m: usize,
    pub admissible: bool,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProteinResult {
    pub seed: u64,
    pub truth: StatePath,
    pub observations: ObservationSequence,
    pub viterbi_errors: usize,
    pub pmap_errors: usize,
    pub pmap_log_posterior: f64,
    pub renormalization: Renormalization,
    pub rows: Vec<ProteinRow>,
}

/// Samples one sequence of length 1000 and runs bunch and iterative
/// refinement in every requested mode.
pub fn run_protein_experiment(
    seed: u64,
    schedule: &ProteinSchedule,
    modes: &[ReplacementMode],
) -> Result<ProteinResult> {
    let (spec, renormalization) = protein_model()?;
    let (truth, observations) = spec.sample(PROTEIN_LENGTH, seed)?;
    let refiner = Refiner::new(&spec, &observations)?;
    let pmap = refiner.unconditional().pmap();
    let pmap_log_posterior = refiner
        .metrics(&pmap, &Default::default(), None)?
        .log_posterior;

    let mut rows = Vec::new();
    for &mode in modes {
        let base = |delta: f64, max: usize| match mode {
            ReplacementMode::PmapReplacement => {
                RefinementConfig::pmap(delta, max).with_truth(truth.clone())
            }
            ReplacementMode::Peeping => RefinementConfig::peeping(delta, max, truth.clone()),
        };
        match schedule {
            ProteinSchedule::Counts(counts) => {
                for &m in counts {
                    let out = refiner.bunch(BunchSelection::Count(m), mode, Some(&truth))?;
                    rows.push(ProteinRow {
                        method: Method::Bunch,
                        mode,
                        m,
                        admissible: out.admissible,
                        metrics: out.metrics,
                    });
                }
                let max = counts.iter().copied().max().unwrap_or(0);
                if max > 0 {
                    let config = base(1.0, max).with_large_delta();
                    let (_, trace) = refiner.iterative(&config)?;
                    for &m in counts {
                        if let Some(metrics) = trace.metrics_at(m) {
                            rows.push(ProteinRow {
                                method: Method::Iterative,
                                mode,
                                m,
                                admissible: true,
                                metrics: metrics.clone(),
                            });
                        }
                    }
                }
            }
            ProteinSchedule::Threshold(delta) => {
                let out = refiner.bunch(BunchSelection::Threshold(*delta), mode, Some(&truth))?;
                rows.push(ProteinRow {
                    method: Method::Bunch,
                    mode,
                    m: out.pins.len(),
                    admissible: out.admissible,
                    metrics: out.metrics,
                });
                let (_, trace) = refiner.iterative(&base(*delta, PROTEIN_LENGTH))?;
                let m = trace.iterations.len();
                rows.push(ProteinRow {
                    method: Method::Iterative,
                    mode,
                    m,
                    admissible: true,
                    metrics: trace.metrics_at(m).expect("last iteration").clone(),
                });
            }
        }
    }

    Ok(ProteinResult {
        seed,
        viterbi_errors: truth.hamming(refiner.viterbi()),
        pmap_errors: truth.hamming(&pmap),
        pmap_log_posterior,
        truth,
        observations,
        renormalization,
        rows,
    })
}

impl ProteinResult {
    pub fn to_csv(&self, schedule: &ProteinSchedule) -> Result<CsvTable> {
        let (spec, _) = protein_model()?;
        let mut table = CsvTable::new([
            "method",
            "mode",
            "m",
            "admissible",
            "errors",
            "expected_errors",
            "expected_errors_uncond",
            "rho_min_uncond",
            "rho_min_cond",
            "log_posterior",
        ])
        .meta("experiment", "protein")
        .meta("model_hash", model_hash(&spec)?)
        .meta("seed", self.seed)
        .meta("n", PROTEIN_LENGTH)
        .meta("config", serde_json::to_string(schedule)?)
        .meta(
            "emission_renormalization_max_adjustment",
            serde_json::to_string(&self.renormalization.max_adjustment)?,
        )
        .meta("viterbi_errors", self.viterbi_errors)
        .meta("pmap_errors", self.pmap_errors)
        .meta("pmap_log_posterior", fmt_f64(self.pmap_log_posterior));
        for r in &self.rows {
            table.push(vec![
                r.method.label().into(),
                r.mode.label().into(),
                r.m.to_string(),
                r.admissible.to_string(),
                fmt_opt(r.metrics.errors),
                fmt_opt_f64(r.metrics.expected_errors),
                fmt_f64(r.metrics.expected_errors_uncond),
                fmt_f64(r.metrics.rho_min_uncond),
                fmt_opt_f64(r.metrics.rho_min_cond),
                fmt_f64(r.metrics.log_posterior),
            ]);
        }
        Ok(table)
    }
}
