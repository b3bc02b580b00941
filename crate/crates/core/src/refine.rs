//! Viterbi refinement by pinning low-confidence positions.
//!
//! Two strategies are provided. [`iterative_refine`] pins one position per
//! round (the one with the lowest conditional classification probability),
//! recomputes the conditional posteriors and the restricted Viterbi path, and
//! repeats. [`bunch_refine`] pins every low-probability position at once and
//! solves a single restricted Viterbi problem. Pinned states come from the
//! PMAP decision (`PmapReplacement`) or from a revealed true path (`Peeping`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Decoder, PinSet, PosteriorTables};
use crate::logspace::{argmax_first, argmin_first, NEG_INF};
use crate::model::{ModelSpec, ObservationSequence, StatePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementMode {
    PmapReplacement,
    Peeping,
}

impl ReplacementMode {
    pub fn label(self) -> &'static str {
        match self {
            ReplacementMode::PmapReplacement => "pmap",
            ReplacementMode::Peeping => "peep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub delta: f64,
    pub max_iterations: usize,
    pub mode: ReplacementMode,
    /// Revealed states in peeping mode; in PMAP mode only used to count errors.
    pub true_path: Option<StatePath>,
    /// Accept thresholds in `[1/K, 1]`. Off by default.
    #[serde(default)]
    pub allow_large_delta: bool,
}

impl RefinementConfig {
    pub fn pmap(delta: f64, max_iterations: usize) -> Self {
        RefinementConfig {
            delta,
            max_iterations,
            mode: ReplacementMode::PmapReplacement,
            true_path: None,
            allow_large_delta: false,
        }
    }

    pub fn peeping(delta: f64, max_iterations: usize, true_path: StatePath) -> Self {
        RefinementConfig {
            delta,
            max_iterations,
            mode: ReplacementMode::Peeping,
            true_path: Some(true_path),
            allow_large_delta: false,
        }
    }

    pub fn with_truth(mut self, true_path: StatePath) -> Self {
        self.true_path = Some(true_path);
        self
    }

    pub fn with_large_delta(mut self) -> Self {
        self.allow_large_delta = true;
        self
    }

    pub fn validate(&self, num_states: usize) -> Result<()> {
        let cap = 1.0 / num_states as f64;
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.allow_large_delta {
            if self.delta > 1.0 {
                return Err(Error::Config(format!(
                    "delta must not exceed 1, got {}",
                    self.delta
                )));
            }
        } else if self.delta >= cap {
            return Err(Error::Config(format!(
                "delta must satisfy 0 < delta < 1/K = {cap}, got {}",
                self.delta
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.mode == ReplacementMode::Peeping && self.true_path.is_none() {
            return Err(Error::Config("peeping mode requires a true path".into()));
        }
        Ok(())
    }
}

/// Summary characteristics of one alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Hamming distance to the true path, when known.
    pub errors: Option<usize>,
    /// `n` minus the pin-conditional accuracy. `None` when the pins are inadmissible.
    pub expected_errors: Option<f64>,
    /// `n` minus the unconditional accuracy.
    pub expected_errors_uncond: f64,
    pub rho_min_uncond: f64,
    pub rho_min_cond: Option<f64>,
    /// `ln P(Y^n = path | X^n)`, `-inf` for inadmissible paths.
    pub log_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Pinned time (0-based).
    pub time: usize,
    /// Pinned state (0-based).
    pub state: usize,
    /// Restricted Viterbi path after this iteration.
    pub path: StatePath,
    /// Conditional classification probabilities of `path` given all pins so far.
    pub rho: Vec<f64>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Threshold,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub initial_path: StatePath,
    pub initial_rho: Vec<f64>,
    pub initial_metrics: Metrics,
    pub iterations: Vec<IterationRecord>,
    pub exit: ExitReason,
}

impl RefinementTrace {
    /// Metrics after `m` iterations (`m = 0` is the unrestricted Viterbi).
    pub fn metrics_at(&self, m: usize) -> Option<&Metrics> {
        if m == 0 {
            Some(&self.initial_metrics)
        } else {
            self.iterations.get(m - 1).map(|r| &r.metrics)
        }
    }

    pub fn final_rho(&self) -> &[f64] {
        self.iterations.last().map_or(&self.initial_rho, |r| &r.rho)
    }

    pub fn pins(&self) -> PinSet {
        PinSet::from_pairs(self.iterations.iter().map(|r| (r.time, r.state)))
            .expect("trace times are distinct")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BunchSelection {
    /// Every position whose Viterbi classification probability is `<= delta`.
    Threshold(f64),
    /// The `m` positions with the smallest classification probabilities.
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BunchOutcome {
    pub pins: PinSet,
    /// Restricted Viterbi path, or for an inadmissible pin set the overlay
    /// "Viterbi outside the pinned times, pinned state on them".
    pub path: StatePath,
    pub admissible: bool,
    pub metrics: Metrics,
}

/// Unconditional quantities shared by every refinement run on one sequence.
#[derive(Debug, Clone)]
pub struct Refiner {
    decoder: Decoder,
    unconditional: PosteriorTables,
    viterbi: StatePath,
    viterbi_rho: Vec<f64>,
}

impl Refiner {
    pub fn new(spec: &ModelSpec, obs: &ObservationSequence) -> Result<Self> {
        let decoder = Decoder::new(spec, obs)?;
        let empty = PinSet::new();
        let unconditional = decoder.forward_backward(&empty)?;
        let viterbi = decoder.viterbi(&empty)?;
        let viterbi_rho = unconditional.classification_probabilities(&viterbi)?;
        Ok(Refiner {
            decoder,
            unconditional,
            viterbi,
            viterbi_rho,
        })
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn unconditional(&self) -> &PosteriorTables {
        &self.unconditional
    }

    pub fn viterbi(&self) -> &StatePath {
        &self.viterbi
    }

    pub fn viterbi_rho(&self) -> &[f64] {
        &self.viterbi_rho
    }

    fn log_posterior(&self, path: &StatePath) -> Result<f64> {
        let joint = self.decoder.joint_log_probability(path)?;
        Ok(if joint == NEG_INF {
            NEG_INF
        } else {
            joint - self.unconditional.log_likelihood
        })
    }

    fn check_truth(&self, truth: &StatePath) -> Result<()> {
        if truth.len() != self.decoder.len() {
            return Err(Error::LengthMismatch {
                expected: self.decoder.len(),
                got: truth.len(),
            });
        }
        if self.decoder.joint_log_probability(truth)? == NEG_INF {
            return Err(Error::Config(
                "true path has zero joint likelihood with the observations".into(),
            ));
        }
        Ok(())
    }

    fn metrics_with(
        &self,
        path: &StatePath,
        conditional: Option<&PosteriorTables>,
        truth: Option<&StatePath>,
    ) -> Result<Metrics> {
        let n = path.len() as f64;
        let uncond_rho = self.unconditional.classification_probabilities(path)?;
        let cond_rho = conditional
            .map(|tables| tables.classification_probabilities(path))
            .transpose()?;
        Ok(Metrics {
            errors: truth.map(|t| t.hamming(path)),
            expected_errors: cond_rho.as_ref().map(|r| n - r.iter().sum::<f64>()),
            expected_errors_uncond: n - uncond_rho.iter().sum::<f64>(),
            rho_min_uncond: min(&uncond_rho),
            rho_min_cond: cond_rho.as_ref().map(|r| min(r)),
            log_posterior: self.log_posterior(path)?,
        })
    }

    /// Metrics of `path`, conditioning the expected errors on `pins`.
    pub fn metrics(
        &self,
        path: &StatePath,
        pins: &PinSet,
        truth: Option<&StatePath>,
    ) -> Result<Metrics> {
        let conditional = if pins.is_empty() {
            Some(self.unconditional.clone())
        } else {
            match self.decoder.forward_backward(pins) {
                Ok(tables) => Some(tables),
                Err(Error::InadmissiblePins) => None,
                Err(e) => return Err(e),
            }
        };
        self.metrics_with(path, conditional.as_ref(), truth)
    }

    pub fn iterative(&self, config: &RefinementConfig) -> Result<(StatePath, RefinementTrace)> {
        config.validate(self.decoder.num_states())?;
        let truth = config.true_path.as_ref();
        if let Some(t) = truth {
            self.check_truth(t)?;
        }

        let mut pins = PinSet::new();
        let mut conditional = self.unconditional.clone();
        let mut path = self.viterbi.clone();
        let mut rho = self.viterbi_rho.clone();
        let initial_metrics = self.metrics_with(&path, Some(&conditional), truth)?;
        let mut iterations = Vec::new();

        for _ in 0..config.max_iterations {
            if min(&rho) >= config.delta {
                break;
            }
            let time = argmin_first(&rho);
            let state = match config.mode {
                ReplacementMode::PmapReplacement => argmax_first(&conditional.smoothing[time]),
                ReplacementMode::Peeping => truth.expect("validated")[time],
            };
            pins.push(time, state)?;
            conditional = self.decoder.forward_backward(&pins)?;
            path = self.decoder.viterbi(&pins)?;
            rho = conditional.classification_probabilities(&path)?;
            let metrics = self.metrics_with(&path, Some(&conditional), truth)?;
            iterations.push(IterationRecord {
                time,
                state,
                path: path.clone(),
                rho: rho.clone(),
                metrics,
            });
        }

        let exit = if min(&rho) >= config.delta {
            ExitReason::Threshold
        } else {
            ExitReason::MaxIterations
        };
        let trace = RefinementTrace {
            initial_path: self.viterbi.clone(),
            initial_rho: self.viterbi_rho.clone(),
            initial_metrics,
            iterations,
            exit,
        };
        Ok((path, trace))
    }

    /// Times selected for pinning, in selection order.
    pub fn bunch_times(&self, selection: BunchSelection) -> Result<Vec<usize>> {
        let n = self.viterbi_rho.len();
        match selection {
            BunchSelection::Threshold(delta) => {
                if !(delta > 0.0 && delta <= 1.0) {
                    return Err(Error::Config(format!(
                        "bunch threshold must lie in (0, 1], got {delta}"
                    )));
                }
                Ok((0..n).filter(|&t| self.viterbi_rho[t] <= delta).collect())
            }
            BunchSelection::Count(m) => {
                if m > n {
                    return Err(Error::Config(format!("cannot select {m} of {n} positions")));
                }
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    self.viterbi_rho[a]
                        .total_cmp(&self.viterbi_rho[b])
                        .then(a.cmp(&b))
                });
                order.truncate(m);
                Ok(order)
            }
        }
    }

    pub fn bunch(
        &self,
        selection: BunchSelection,
        mode: ReplacementMode,
        truth: Option<&StatePath>,
    ) -> Result<BunchOutcome> {
        if let Some(t) = truth {
            self.check_truth(t)?;
        }
        let pinned_states: Vec<usize> = match (mode, truth) {
            (ReplacementMode::PmapReplacement, _) => self.unconditional.pmap().0,
            (ReplacementMode::Peeping, Some(t)) => t.0.clone(),
            (ReplacementMode::Peeping, None) => {
                return Err(Error::Config("peeping mode requires a true path".into()))
            }
        };
        let times = self.bunch_times(selection)?;
        let pins = PinSet::from_pairs(times.iter().map(|&t| (t, pinned_states[t])))?;

        match self.decoder.forward_backward(&pins) {
            Ok(conditional) => {
                let path = self.decoder.viterbi(&pins)?;
                let metrics = self.metrics_with(&path, Some(&conditional), truth)?;
                Ok(BunchOutcome {
                    pins,
                    path,
                    admissible: true,
                    metrics,
                })
            }
            Err(Error::InadmissiblePins) => {
                let mut overlay = self.viterbi.clone();
                for &(t, w) in pins.iter() {
                    overlay.0[t] = w;
                }
                let metrics = self.metrics_with(&overlay, None, truth)?;
                Ok(BunchOutcome {
                    pins,
                    path: overlay,
                    admissible: false,
                    metrics,
                })
            }
            Err(e) => Err(e),
        }
    }
}

fn min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Iterative refinement; returns the final alignment and the full trace.
pub fn iterative_refine(
    spec: &ModelSpec,
    obs: &ObservationSequence,
    config: &RefinementConfig,
) -> Result<(StatePath, RefinementTrace)> {
    config.validate(spec.num_states())?;
    Refiner::new(spec, obs)?.iterative(config)
}

/// Bunch baseline: pin every selected position at once.
pub fn bunch_refine(
    spec: &ModelSpec,
    obs: &ObservationSequence,
    selection: BunchSelection,
    mode: ReplacementMode,
    true_path: Option<&StatePath>,
) -> Result<BunchOutcome> {
    Refiner::new(spec, obs)?.bunch(selection, mode, true_path)
}

pub fn compute_metrics(
    spec: &ModelSpec,
    obs: &ObservationSequence,
    path: &StatePath,
    pins: &PinSet,
    true_path: Option<&StatePath>,
) -> Result<Metrics> {
    Refiner::new(spec, obs)?.metrics(path, pins, true_path)
}
