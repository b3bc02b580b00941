//! Exact log-space posterior computation with optional pin constraints.
//!
//! Pins are realized by masking emissions: at a pinned time every state other
//! than the pinned one gets `ln f = -inf`. One recursion therefore serves the
//! conditional and the unconditional case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{self, argmax_first, log_sum_exp, strictly_greater, NEG_INF};
use crate::model::{ModelSpec, ObservationSequence, StatePath};

/// Time-indexed state constraints. Times are 0-based and pairwise distinct;
/// insertion order is preserved.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinSet {
    pins: Vec<(usize, usize)>,
}

impl PinSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = PinSet::new();
        for (t, w) in pairs {
            set.push(t, w)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, time: usize, state: usize) -> Result<()> {
        if self.state_at(time).is_some() {
            return Err(Error::InvalidPins(format!(
                "time {} pinned twice",
                time + 1
            )));
        }
        self.pins.push((time, state));
        Ok(())
    }

    pub fn state_at(&self, time: usize) -> Option<usize> {
        self.pins.iter().find(|(t, _)| *t == time).map(|&(_, w)| w)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pins.iter()
    }

    pub fn len(&self) -> usize {
        self.pins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pins.is_empty()
    }

    fn check_range(&self, n: usize, k: usize) -> Result<()> {
        for &(t, w) in &self.pins {
            if t >= n {
                return Err(Error::InvalidPins(format!(
                    "time {} outside 1..={n}",
                    t + 1
                )));
            }
            if w >= k {
                return Err(Error::InvalidPins(format!(
                    "state {} outside 1..={k}",
                    w + 1
                )));
            }
        }
        Ok(())
    }
}

/// Forward/backward trellises and smoothing probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTables {
    /// `log_forward[t][s] = ln alpha(x^t, s)` under the pins.
    pub log_forward: Vec<Vec<f64>>,
    /// `log_backward[t][s] = ln p(x_{t+1}^n | Y_t = s)` under the pins.
    pub log_backward: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// `smoothing[t][s] = P(Y_t = s | X^n = x^n, pins)`.
    pub smoothing: Vec<Vec<f64>>,
}

impl PosteriorTables {
    pub fn len(&self) -> usize {
        self.smoothing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothing.is_empty()
    }

    /// Pointwise argmax of the smoothing rows, smallest state on ties.
    pub fn pmap(&self) -> StatePath {
        StatePath(self.smoothing.iter().map(|row| argmax_first(row)).collect())
    }

    /// `rho_t = P(Y_t = path_t | X^n, pins)`.
    pub fn classification_probabilities(&self, path: &StatePath) -> Result<Vec<f64>> {
        if path.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: path.len(),
            });
        }
        Ok(self
            .smoothing
            .iter()
            .zip(path.iter())
            .map(|(row, &s)| row[s])
            .collect())
    }

    /// Expected number of correctly classified positions.
    pub fn accuracy(&self, path: &StatePath) -> Result<f64> {
        Ok(self.classification_probabilities(path)?.iter().sum())
    }
}

/// Log-space model parameters bound to one observation sequence.
#[derive(Debug, Clone)]
pub struct Decoder {
    log_initial: Vec<f64>,
    log_transition: Vec<Vec<f64>>,
    log_emission: Vec<Vec<f64>>,
}

impl Decoder {
    pub fn new(spec: &ModelSpec, obs: &ObservationSequence) -> Result<Self> {
        spec.ensure_valid()?;
        if obs.is_empty() {
            return Err(Error::InvalidObservation {
                position: 0,
                reason: "empty observation sequence".into(),
            });
        }
        Ok(Decoder {
            log_initial: spec.initial.iter().map(|&p| logspace::ln(p)).collect(),
            log_transition: spec
                .transition
                .iter()
                .map(|row| row.iter().map(|&p| logspace::ln(p)).collect())
                .collect(),
            log_emission: spec.log_emission_matrix(obs)?,
        })
    }

    pub fn len(&self) -> usize {
        self.log_emission.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_emission.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.log_initial.len()
    }

    fn masked_emission(&self, pins: &PinSet) -> Result<Vec<Vec<f64>>> {
        pins.check_range(self.len(), self.num_states())?;
        let mut emission = self.log_emission.clone();
        for &(t, w) in pins.iter() {
            for (s, v) in emission[t].iter_mut().enumerate() {
                if s != w {
                    *v = NEG_INF;
                }
            }
        }
        Ok(emission)
    }

    fn forward(&self, emission: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.num_states();
        let mut alpha = Vec::with_capacity(emission.len());
        alpha.push(
            (0..k)
                .map(|s| self.log_initial[s] + emission[0][s])
                .collect::<Vec<_>>(),
        );
        let mut terms = vec![0.0; k];
        for e in &emission[1..] {
            let prev = alpha.last().unwrap();
            let row = (0..k)
                .map(|s| {
                    if e[s] == NEG_INF {
                        return NEG_INF;
                    }
                    for (r, term) in terms.iter_mut().enumerate() {
                        *term = prev[r] + self.log_transition[r][s];
                    }
                    log_sum_exp(&terms) + e[s]
                })
                .collect();
            alpha.push(row);
        }
        alpha
    }

    fn backward(&self, emission: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.num_states();
        let n = emission.len();
        let mut beta = vec![vec![0.0; k]; n];
        let mut terms = vec![0.0; k];
        for t in (0..n - 1).rev() {
            for s in 0..k {
                for (r, term) in terms.iter_mut().enumerate() {
                    *term = self.log_transition[s][r] + emission[t + 1][r] + beta[t + 1][r];
                }
                beta[t][s] = log_sum_exp(&terms);
            }
        }
        beta
    }

    /// `ln p(x^n, pins)`; `-inf` when the pins are inadmissible.
    pub fn log_likelihood(&self, pins: &PinSet) -> Result<f64> {
        let emission = self.masked_emission(pins)?;
        Ok(log_sum_exp(self.forward(&emission).last().unwrap()))
    }

    pub fn forward_backward(&self, pins: &PinSet) -> Result<PosteriorTables> {
        let emission = self.masked_emission(pins)?;
        let log_forward = self.forward(&emission);
        let log_likelihood = log_sum_exp(log_forward.last().unwrap());
        if log_likelihood == NEG_INF {
            return Err(Error::InadmissiblePins);
        }
        let log_backward = self.backward(&emission);
        let mut smoothing: Vec<Vec<f64>> = log_forward
            .iter()
            .zip(&log_backward)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x + y - log_likelihood).exp().clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        for &(t, w) in pins.iter() {
            smoothing[t].iter_mut().enumerate().for_each(|(s, p)| {
                *p = if s == w { 1.0 } else { 0.0 };
            });
        }
        Ok(PosteriorTables {
            log_forward,
            log_backward,
            log_likelihood,
            smoothing,
        })
    }

    /// Maximum-posterior path among those consistent with `pins`.
    ///
    /// Ties are broken toward the smallest state index, both for the final
    /// state and at every backtracking step.
    pub fn viterbi(&self, pins: &PinSet) -> Result<StatePath> {
        let emission = self.masked_emission(pins)?;
        let k = self.num_states();
        let n = emission.len();
        let mut score: Vec<f64> = (0..k)
            .map(|s| self.log_initial[s] + emission[0][s])
            .collect();
        let mut backpointer = vec![vec![0usize; k]; n];
        let mut next = vec![NEG_INF; k];
        for t in 1..n {
            for s in 0..k {
                let mut best = 0;
                let mut best_score = score[0] + self.log_transition[0][s];
                for r in 1..k {
                    let candidate = score[r] + self.log_transition[r][s];
                    if strictly_greater(candidate, best_score) {
                        best = r;
                        best_score = candidate;
                    }
                }
                backpointer[t][s] = best;
                next[s] = best_score + emission[t][s];
            }
            std::mem::swap(&mut score, &mut next);
        }
        let last = argmax_first(&score);
        if score[last] == NEG_INF {
            return Err(Error::NoAdmissiblePath);
        }
        let mut path = vec![0; n];
        path[n - 1] = last;
        for t in (1..n).rev() {
            path[t - 1] = backpointer[t][path[t]];
        }
        Ok(StatePath(path))
    }

    pub fn pmap(&self, pins: &PinSet) -> Result<StatePath> {
        Ok(self.forward_backward(pins)?.pmap())
    }

    /// `ln p(x^n, y^n)` for a fixed path.
    pub fn joint_log_probability(&self, path: &StatePath) -> Result<f64> {
        if path.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: path.len(),
            });
        }
        if let Some(&bad) = path.iter().find(|&&s| s >= self.num_states()) {
            return Err(Error::InvalidPins(format!(
                "path state {} out of range",
                bad + 1
            )));
        }
        let mut total = self.log_initial[path[0]] + self.log_emission[0][path[0]];
        for t in 1..path.len() {
            total += self.log_transition[path[t - 1]][path[t]] + self.log_emission[t][path[t]];
        }
        Ok(if total.is_nan() { NEG_INF } else { total })
    }

    /// `ln P(Y^n = path | X^n = x^n)`; `-inf` iff the path is inadmissible.
    pub fn path_log_posterior(&self, path: &StatePath) -> Result<f64> {
        let joint = self.joint_log_probability(path)?;
        let evidence = self.log_likelihood(&PinSet::new())?;
        if joint == NEG_INF || evidence == NEG_INF {
            return Ok(NEG_INF);
        }
        Ok(joint - evidence)
    }
}

pub fn forward_backward(
    spec: &ModelSpec,
    obs: &ObservationSequence,
    pins: &PinSet,
) -> Result<PosteriorTables> {
    Decoder::new(spec, obs)?.forward_backward(pins)
}

pub fn log_likelihood(spec: &ModelSpec, obs: &ObservationSequence, pins: &PinSet) -> Result<f64> {
    Decoder::new(spec, obs)?.log_likelihood(pins)
}

pub fn viterbi(spec: &ModelSpec, obs: &ObservationSequence, pins: &PinSet) -> Result<StatePath> {
    Decoder::new(spec, obs)?.viterbi(pins)
}

pub fn pmap(spec: &ModelSpec, obs: &ObservationSequence, pins: &PinSet) -> Result<StatePath> {
    Decoder::new(spec, obs)?.pmap(pins)
}

pub fn classification_probabilities(
    tables: &PosteriorTables,
    path: &StatePath,
) -> Result<Vec<f64>> {
    tables.classification_probabilities(path)
}

pub fn accuracy(tables: &PosteriorTables, path: &StatePath) -> Result<f64> {
    tables.accuracy(path)
}

pub fn path_log_posterior(
    spec: &ModelSpec,
    obs: &ObservationSequence,
    path: &StatePath,
) -> Result<f64> {
    Decoder::new(spec, obs)?.path_log_posterior(path)
}
