//! Two small deterministic models with closed-form behaviour.
//!
//! The four-state model shows that a Viterbi classification probability can
//! be arbitrarily small when the transition matrix has zeros. The three-state
//! model shows that revealing one hidden state and re-decoding can lower the
//! expected accuracy of the alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Decoder, PinSet};
use crate::logspace::{ln, log_sum_exp};
use crate::model::{EmissionModel, ModelSpec, ObservationSequence, StatePath};

pub fn small_prob_model() -> ModelSpec {
    let third = 1.0 / 3.0;
    ModelSpec::new(
        vec![
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.0, third, third, third],
            vec![0.0, third, third, third],
        ],
        vec![0.25; 4],
        EmissionModel::Abstract {
            atoms: vec!["x".into(), "y".into(), "z".into()],
            densities: vec![
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0],
                vec![1.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0],
            ],
        },
    )
    .expect("static model is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallProbReport {
    pub m: usize,
    pub viterbi: StatePath,
    /// Smoothing probability of the Viterbi state at time `m`.
    pub probability: f64,
    /// `1 / (1 + (4/3)^m)`.
    pub closed_form: f64,
}

/// Decodes `x^m y` under [`small_prob_model`].
pub fn counterexample_small_prob(m: usize) -> Result<SmallProbReport> {
    if m < 2 {
        return Err(Error::Config(format!("m must be at least 2, got {m}")));
    }
    let spec = small_prob_model();
    let mut symbols = vec![0; m];
    symbols.push(1);
    let decoder = Decoder::new(&spec, &ObservationSequence::Symbols(symbols))?;
    let pins = PinSet::new();
    let viterbi = decoder.viterbi(&pins)?;
    let tables = decoder.forward_backward(&pins)?;
    let probability = tables.smoothing[m - 1][viterbi[m - 1]];
    Ok(SmallProbReport {
        m,
        viterbi,
        probability,
        closed_form: 1.0 / (1.0 + (4.0f64 / 3.0).powi(m as i32)),
    })
}

/// Parameters of the three-state peeping model: `m >= 3` middle length,
/// `epsilon` in `(0, 1/2)` and a density bump `delta > 0` with
/// `(1 + delta) * epsilon < 1 - epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleS4Config {
    pub m: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl CounterexampleS4Config {
    pub fn new(m: usize, epsilon: f64, delta: f64) -> Result<Self> {
        let c = CounterexampleS4Config { m, epsilon, delta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::Config(format!(
                "m must be at least 3, got {}",
                self.m
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1/2), got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Config(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if (1.0 + self.delta) * self.epsilon >= 1.0 - self.epsilon {
            return Err(Error::Config(format!(
                "need (1 + delta) * epsilon < 1 - epsilon, got delta = {}, epsilon = {}",
                self.delta, self.epsilon
            )));
        }
        Ok(())
    }

    /// Sequence length `m + 2`.
    pub fn n(&self) -> usize {
        self.m + 2
    }

    pub fn u(&self) -> f64 {
        2.0 / 3.0 * (1.0 - self.epsilon)
    }

    pub fn v(&self) -> f64 {
        2.0 / 3.0 * self.epsilon
    }

    pub fn transition(&self) -> Vec<Vec<f64>> {
        let (u, v) = (self.u(), self.v());
        vec![
            vec![u, v, 1.0 / 3.0],
            vec![v, u, 1.0 / 3.0],
            vec![0.5, 0.0, 0.5],
        ]
    }

    /// Stationary distribution in closed form.
    pub fn stationary(&self) -> [f64; 3] {
        let e = self.epsilon;
        let d = 1.0 + 4.0 * e;
        [0.6 * (1.0 + 2.0 * e) / d, 1.2 * e / d, 0.4]
    }

    pub fn model(&self) -> ModelSpec {
        let b = 1.0 + self.delta;
        ModelSpec::new(
            self.transition(),
            self.stationary().to_vec(),
            EmissionModel::Abstract {
                atoms: vec!["x".into(), "y".into(), "z".into(), "a".into()],
                densities: vec![
                    vec![1.0, 1.0, 1.0, 1.0],
                    vec![0.0, b, 1.0, 1.0],
                    vec![0.0, 1.0, 1.0, 0.0],
                ],
            },
        )
        .expect("validated configuration")
    }

    /// `x y z^(m-2) a x`.
    pub fn observations(&self) -> ObservationSequence {
        let mut symbols = vec![0, 1];
        symbols.extend(std::iter::repeat_n(2, self.m - 2));
        symbols.extend([3, 0]);
        ObservationSequence::Symbols(symbols)
    }

    /// Pin of state 2 at time `n - 1` (0-based: time `n - 2`, state 1).
    pub fn pin(&self) -> PinSet {
        PinSet::from_pairs([(self.n() - 2, 1)]).expect("single pin")
    }
}

/// `rows[t][i] = P(Y_{t+1} = i+1 | X^n, Y_{n-1} = 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub rows: Vec<[f64; 3]>,
}

impl QTable {
    /// Sum of `Q_t(state)` over the middle block `t = 2..=m` (1-based).
    pub fn middle_sum(&self, state: usize) -> f64 {
        let m = self.rows.len() - 2;
        self.rows[1..m].iter().map(|r| r[state]).sum()
    }

    pub fn lhs(&self) -> f64 {
        self.middle_sum(0)
    }

    pub fn rhs(&self) -> f64 {
        1.0 + self.middle_sum(1)
    }
}

/// Pinned posteriors from the explicit forward and restricted backward
/// recursions of the three-state model, in log space.
pub fn q_table(config: &CounterexampleS4Config) -> Result<QTable> {
    config.validate()?;
    let m = config.m;
    let p = config.transition();
    let lp: Vec<Vec<f64>> = p
        .iter()
        .map(|r| r.iter().map(|&x| ln(x)).collect())
        .collect();
    let pi1 = config.stationary()[0];
    let (u, v) = (config.u(), config.v());

    // forward, times 2..=m; only state 1 emits x at time 1 and z has density 1
    let mut alpha = vec![[0.0f64; 3]; m + 1];
    alpha[2] = [
        ln(pi1 * u),
        ln(pi1 * v * (1.0 + config.delta)),
        ln(pi1 / 3.0),
    ];
    for t in 3..=m {
        for j in 0..3 {
            let terms: Vec<f64> = (0..3).map(|i| alpha[t - 1][i] + lp[i][j]).collect();
            alpha[t][j] = log_sum_exp(&terms);
        }
    }
    // restricted backward: gamma_m(i) is proportional to p[i][2nd state]
    let mut gamma = vec![[0.0f64; 3]; m + 1];
    gamma[m] = [ln(v), ln(u), f64::NEG_INFINITY];
    for t in (2..m).rev() {
        for i in 0..3 {
            let terms: Vec<f64> = (0..3).map(|j| lp[i][j] + gamma[t + 1][j]).collect();
            gamma[t][i] = log_sum_exp(&terms);
        }
    }

    let mut rows = Vec::with_capacity(config.n());
    rows.push([1.0, 0.0, 0.0]);
    for t in 2..=m {
        let joint: Vec<f64> = (0..3).map(|i| alpha[t][i] + gamma[t][i]).collect();
        let z = log_sum_exp(&joint);
        rows.push([
            (joint[0] - z).exp(),
            (joint[1] - z).exp(),
            (joint[2] - z).exp(),
        ]);
    }
    rows.push([0.0, 1.0, 0.0]);
    rows.push([1.0, 0.0, 0.0]);
    Ok(QTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeepingReport {
    pub config: CounterexampleS4Config,
    /// `sum_{t=2}^m Q_t(1)`.
    pub lhs: f64,
    /// `1 + sum_{t=2}^m Q_t(2)`.
    pub rhs: f64,
    /// Whether peeping at `n - 1` lowers the expected accuracy.
    pub peeping_harmful: bool,
    pub viterbi: StatePath,
    pub viterbi_all_ones: bool,
    pub restricted: StatePath,
    /// Restricted path equals `1, 2, ..., 2, 1`.
    pub restricted_as_expected: bool,
    /// `P(Y_{n-1} = 2 | X^n)` at this `m`.
    pub pin_probability: f64,
    /// Its limit as `m` grows.
    pub pin_probability_limit: f64,
    /// Expected accuracy of the Viterbi path.
    pub accuracy_before: f64,
    /// Expected accuracy after peeping at `n - 1`, averaged over the revealed state.
    pub accuracy_after: f64,
    /// `accuracy_before - accuracy_after` from the two accuracies above.
    pub gap: f64,
    /// The same gap as `P(Y_{n-1} = 2 | X^n) * (lhs - rhs)`.
    pub gap_from_q: f64,
}

/// Limit of `P(Y_{n-1} = 2 | X^n)` as `m` grows.
pub fn pin_probability_limit(config: &CounterexampleS4Config) -> f64 {
    let [p1, p2, p3] = config.stationary();
    let (u, v) = (config.u(), config.v());
    let two = (p1 * v + p2 * u) * v;
    let one = (p1 * u + p2 * v + p3 / 2.0) * u;
    two / (one + two)
}

pub fn unsuccessful_peeping_report(config: &CounterexampleS4Config) -> Result<PeepingReport> {
    let q = q_table(config)?;
    let spec = config.model();
    let decoder = Decoder::new(&spec, &config.observations())?;
    let n = config.n();
    let empty = PinSet::new();
    let tables = decoder.forward_backward(&empty)?;
    let viterbi = decoder.viterbi(&empty)?;
    let accuracy_before = tables.accuracy(&viterbi)?;

    // average over the revealed state at time n - 1
    let mut accuracy_after = 0.0;
    for w in 0..3 {
        let weight = tables.smoothing[n - 2][w];
        if weight == 0.0 {
            continue;
        }
        let pins = PinSet::from_pairs([(n - 2, w)])?;
        let cond = decoder.forward_backward(&pins)?;
        let path = decoder.viterbi(&pins)?;
        accuracy_after += weight * cond.accuracy(&path)?;
    }

    let restricted = decoder.viterbi(&config.pin())?;
    let mut expected = vec![1; n];
    expected[0] = 0;
    expected[n - 1] = 0;
    let pin_probability = tables.smoothing[n - 2][1];
    let (lhs, rhs) = (q.lhs(), q.rhs());
    Ok(PeepingReport {
        config: *config,
        lhs,
        rhs,
        peeping_harmful: lhs > rhs,
        viterbi_all_ones: viterbi.iter().all(|&s| s == 0),
        viterbi,
        restricted_as_expected: restricted.0 == expected,
        restricted,
        pin_probability,
        pin_probability_limit: pin_probability_limit(config),
        accuracy_before,
        accuracy_after,
        gap: accuracy_before - accuracy_after,
        gap_from_q: pin_probability * (lhs - rhs),
    })
}
