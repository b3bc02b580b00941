//! HMM definitions: validation, stationary and time-reversed chains, sampling.
//!
//! States are 0-based in the Rust API. File formats and CSV reports use
//! 1-based state labels.

use std::collections::VecDeque;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace;

/// Tolerance for row sums of stochastic vectors.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Residual bound for the stationary distribution.
pub const STATIONARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmissionModel {
    /// `probabilities[s][a]` is the probability that state `s` emits symbol `a`.
    Categorical {
        alphabet: Vec<String>,
        probabilities: Vec<Vec<f64>>,
    },
    Gaussian {
        means: Vec<f64>,
        variances: Vec<f64>,
    },
    /// Nonnegative density values over named atoms. Rows need not normalize.
    Abstract {
        atoms: Vec<String>,
        densities: Vec<Vec<f64>>,
    },
}

impl EmissionModel {
    /// Symbol names for table kinds, `None` for Gaussian.
    pub fn alphabet(&self) -> Option<&[String]> {
        match self {
            EmissionModel::Categorical { alphabet, .. } => Some(alphabet),
            EmissionModel::Abstract { atoms, .. } => Some(atoms),
            EmissionModel::Gaussian { .. } => None,
        }
    }

    /// Per-state density table for the table kinds.
    pub fn table(&self) -> Option<&[Vec<f64>]> {
        match self {
            EmissionModel::Categorical { probabilities, .. } => Some(probabilities),
            EmissionModel::Abstract { densities, .. } => Some(densities),
            EmissionModel::Gaussian { .. } => None,
        }
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.alphabet()?.iter().position(|a| a == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub states: usize,
    /// Row-major `K x K` transition matrix.
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub emission: EmissionModel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// A hidden state sequence (0-based states).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatePath(pub Vec<usize>);

impl StatePath {
    pub fn new(states: Vec<usize>) -> Self {
        StatePath(states)
    }

    pub fn from_one_based(states: &[usize]) -> Result<Self> {
        states
            .iter()
            .map(|&s| {
                s.checked_sub(1)
                    .ok_or_else(|| Error::Parse("state labels are 1-based".into()))
            })
            .collect::<Result<Vec<_>>>()
            .map(StatePath)
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|s| s + 1).collect()
    }

    /// Number of positions where the two paths differ.
    pub fn hamming(&self, other: &StatePath) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl Deref for StatePath {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObservationSequence {
    /// Indices into the emission alphabet.
    Symbols(Vec<usize>),
    Reals(Vec<f64>),
}

impl ObservationSequence {
    pub fn len(&self) -> usize {
        match self {
            ObservationSequence::Symbols(v) => v.len(),
            ObservationSequence::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelSpec {
    pub fn new(
        transition: Vec<Vec<f64>>,
        initial: Vec<f64>,
        emission: EmissionModel,
    ) -> Result<Self> {
        let spec = ModelSpec {
            states: initial.len(),
            transition,
            initial,
            emission,
        };
        spec.ensure_valid()?;
        Ok(spec)
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    /// Lists every violated invariant. An empty report means the model is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let k = self.states;
        if k < 2 {
            issues.push(format!("at least 2 states required, got {k}"));
        }
        if self.transition.len() != k {
            issues.push(format!(
                "transition has {} rows, expected {k}",
                self.transition.len()
            ));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != k {
                issues.push(format!(
                    "row {} has {} entries, expected {k}",
                    i + 1,
                    row.len()
                ));
                continue;
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                issues.push(format!("row {} has negative or non-finite entries", i + 1));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                issues.push(format!("row {} not stochastic (sum {sum})", i + 1));
            }
        }
        if self.initial.len() != k {
            issues.push(format!(
                "initial has {} entries, expected {k}",
                self.initial.len()
            ));
        }
        if self.initial.iter().any(|p| !p.is_finite() || *p < 0.0) {
            issues.push("initial distribution has negative or non-finite entries".into());
        }
        let init_sum: f64 = self.initial.iter().sum();
        if (init_sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
            issues.push(format!(
                "initial distribution not stochastic (sum {init_sum})"
            ));
        }
        match &self.emission {
            EmissionModel::Categorical {
                alphabet,
                probabilities,
            } => {
                check_table(&mut issues, k, alphabet, probabilities, "categorical");
                for (s, row) in probabilities.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                        issues.push(format!("emission row {} not stochastic (sum {sum})", s + 1));
                    }
                }
            }
            EmissionModel::Abstract { atoms, densities } => {
                check_table(&mut issues, k, atoms, densities, "abstract");
            }
            EmissionModel::Gaussian { means, variances } => {
                if means.len() != k || variances.len() != k {
                    issues.push(format!("gaussian emission needs {k} means and variances"));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    issues.push("gaussian means must be finite".into());
                }
                if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    issues.push("variance must be positive".into());
                }
            }
        }
        ValidationReport { issues }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report.issues))
        }
    }

    /// `n x K` matrix of `ln f_s(x_t)`.
    pub fn log_emission_matrix(&self, obs: &ObservationSequence) -> Result<Vec<Vec<f64>>> {
        match (&self.emission, obs) {
            (EmissionModel::Gaussian { means, variances }, ObservationSequence::Reals(xs)) => xs
                .iter()
                .enumerate()
                .map(|(t, &x)| {
                    if !x.is_finite() {
                        return Err(Error::InvalidObservation {
                            position: t + 1,
                            reason: "non-finite value".into(),
                        });
                    }
                    Ok(means
                        .iter()
                        .zip(variances)
                        .map(|(&mu, &var)| gaussian_log_density(x, mu, var))
                        .collect())
                })
                .collect(),
            (EmissionModel::Gaussian { .. }, ObservationSequence::Symbols(_)) => {
                Err(Error::InvalidObservation {
                    position: 1,
                    reason: "gaussian emission requires real-valued observations".into(),
                })
            }
            (table_kind, ObservationSequence::Symbols(symbols)) => {
                let table = table_kind.table().expect("table emission");
                let width = table.first().map_or(0, Vec::len);
                symbols
                    .iter()
                    .enumerate()
                    .map(|(t, &a)| {
                        if a >= width {
                            return Err(Error::InvalidObservation {
                                position: t + 1,
                                reason: format!(
                                    "symbol index {a} outside alphabet of size {width}"
                                ),
                            });
                        }
                        Ok(table.iter().map(|row| logspace::ln(row[a])).collect())
                    })
                    .collect()
            }
            (_, ObservationSequence::Reals(_)) => Err(Error::InvalidObservation {
                position: 1,
                reason: "table emission requires symbol observations".into(),
            }),
        }
    }

    /// Stationary distribution `pi` with `pi' P = pi'`.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        self.ensure_valid()?;
        stationary_distribution(&self.transition)
    }

    /// Transition matrix of the time-reversed stationary chain,
    /// `q[s][s'] = p[s'][s] * pi[s'] / pi[s]`.
    pub fn reverse_chain(&self) -> Result<Vec<Vec<f64>>> {
        let pi = self.stationary_distribution()?;
        reverse_transition(&self.transition, &pi)
    }

    /// Draws a hidden path and observations, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(StatePath, ObservationSequence)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(StatePath, ObservationSequence)> {
        self.ensure_valid()?;
        if n == 0 {
            return Err(Error::Config("sample length must be at least 1".into()));
        }
        if matches!(self.emission, EmissionModel::Abstract { .. }) {
            return Err(Error::NonGenerativeEmission);
        }
        let initial = WeightedIndex::new(&self.initial)
            .map_err(|e| Error::Config(format!("initial distribution: {e}")))?;
        let rows = self
            .transition
            .iter()
            .map(WeightedIndex::new)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("transition row: {e}")))?;

        let mut states = Vec::with_capacity(n);
        let mut current = initial.sample(rng);
        states.push(current);
        for _ in 1..n {
            current = rows[current].sample(rng);
            states.push(current);
        }

        let obs = match &self.emission {
            EmissionModel::Categorical { probabilities, .. } => {
                let emit = probabilities
                    .iter()
                    .map(WeightedIndex::new)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("emission row: {e}")))?;
                ObservationSequence::Symbols(states.iter().map(|&s| emit[s].sample(rng)).collect())
            }
            EmissionModel::Gaussian { means, variances } => {
                let normals = means
                    .iter()
                    .zip(variances)
                    .map(|(&m, &v)| Normal::new(m, v.sqrt()))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("gaussian emission: {e}")))?;
                ObservationSequence::Reals(states.iter().map(|&s| normals[s].sample(rng)).collect())
            }
            EmissionModel::Abstract { .. } => unreachable!(),
        };
        Ok((StatePath(states), obs))
    }
}

fn check_table(
    issues: &mut Vec<String>,
    k: usize,
    names: &[String],
    table: &[Vec<f64>],
    kind: &str,
) {
    if table.len() != k {
        issues.push(format!(
            "{kind} emission has {} rows, expected {k}",
            table.len()
        ));
    }
    if names.is_empty() {
        issues.push(format!("{kind} emission alphabet is empty"));
    }
    for (s, row) in table.iter().enumerate() {
        if row.len() != names.len() {
            issues.push(format!(
                "emission row {} has {} entries, alphabet has {}",
                s + 1,
                row.len(),
                names.len()
            ));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            issues.push(format!(
                "emission row {} has negative or non-finite entries",
                s + 1
            ));
        }
    }
}

pub fn gaussian_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - z * z / (2.0 * variance)
}

/// Strong connectivity of the positive-entry graph.
pub fn is_irreducible(transition: &[Vec<f64>]) -> bool {
    let k = transition.len();
    if k == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; k];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..k {
                let p = if forward {
                    transition[i][j]
                } else {
                    transition[j][i]
                };
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn stationary_residual(transition: &[Vec<f64>], pi: &[f64]) -> f64 {
    let k = pi.len();
    (0..k)
        .map(|j| {
            let lhs: f64 = (0..k).map(|i| pi[i] * transition[i][j]).sum();
            (lhs - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Stationary distribution of an irreducible row-stochastic matrix.
///
/// Solves `(P' - I) pi = 0` with the last equation replaced by `sum(pi) = 1`,
/// falling back to averaged power iteration if the direct residual is too large.
pub fn stationary_distribution(transition: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = transition.len();
    if !is_irreducible(transition) {
        return Err(Error::NotIrreducible);
    }
    let mut a = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = transition[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;

    let direct = a
        .lu()
        .solve(&b)
        .map(|x| normalize(x.iter().map(|v| v.max(0.0)).collect()));
    if let Some(pi) = direct {
        if stationary_residual(transition, &pi) <= STATIONARY_TOLERANCE {
            return Ok(pi);
        }
    }

    // Cesaro averages converge for periodic chains too.
    let mut current = vec![1.0 / k as f64; k];
    let mut average = current.clone();
    for iter in 1..=200_000usize {
        let next: Vec<f64> = (0..k)
            .map(|j| (0..k).map(|i| current[i] * transition[i][j]).sum())
            .collect();
        current = next;
        for (avg, c) in average.iter_mut().zip(&current) {
            *avg += (c - *avg) / (iter as f64 + 1.0);
        }
        if iter % 64 == 0 {
            let pi = normalize(current.clone());
            if stationary_residual(transition, &pi) <= STATIONARY_TOLERANCE {
                return Ok(pi);
            }
            let pi = normalize(average.clone());
            if stationary_residual(transition, &pi) <= STATIONARY_TOLERANCE {
                return Ok(pi);
            }
        }
    }
    Err(Error::NotIrreducible)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

/// Reversed-chain transition matrix for a given stationary distribution.
pub fn reverse_transition(transition: &[Vec<f64>], pi: &[f64]) -> Result<Vec<Vec<f64>>> {
    if let Some(state) = pi.iter().position(|&p| p <= 0.0) {
        return Err(Error::DegenerateChain { state: state + 1 });
    }
    let k = pi.len();
    Ok((0..k)
        .map(|s| (0..k).map(|t| transition[t][s] * pi[t] / pi[s]).collect())
        .collect())
}

/// SplitMix64 mixing, used to derive independent per-replicate seeds.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
