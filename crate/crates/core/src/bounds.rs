//! Lower bounds for Viterbi classification probabilities and the cluster
//! machinery used to study them when the transition matrix has zeros.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{Decoder, PinSet};
use crate::model::{self, derive_seed, ModelSpec, ObservationSequence};

/// Row and column spread ratios of a transition matrix.
///
/// `sigma1 = min_s min_j p[s][j] / max_j p[s][j]` over rows and `sigma2` the
/// same over columns. Either is positive iff every transition is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaPair {
    pub sigma1: f64,
    pub sigma2: f64,
}

pub fn sigma(transition: &[Vec<f64>]) -> SigmaPair {
    let k = transition.len();
    let ratio = |values: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if hi > 0.0 {
            lo / hi
        } else {
            0.0
        }
    };
    let sigma1 = (0..k)
        .map(|s| ratio(&mut transition[s].iter().copied()))
        .fold(1.0, f64::min);
    let sigma2 = (0..k)
        .map(|s| ratio(&mut (0..k).map(|r| transition[r][s])))
        .fold(1.0, f64::min);
    SigmaPair { sigma1, sigma2 }
}

/// `a / (a + c)` with `0 / 0` read as 1 (a single admissible state).
fn ratio_bound(a: f64, competitors: usize) -> f64 {
    if competitors == 0 {
        1.0
    } else {
        a / (a + competitors as f64)
    }
}

/// Bounds valid when the initial distribution is stationary, using the
/// better of the forward and time-reversed spreads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryBounds {
    pub reversed: SigmaPair,
    pub interior_bound: f64,
    pub first_bound: f64,
    pub last_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub sigma: SigmaPair,
    /// Number of nonzero initial probabilities.
    pub k1: usize,
    pub interior_bound: f64,
    pub first_bound: f64,
    pub last_bound: f64,
    pub stationary_variant: Option<StationaryBounds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionClass {
    First,
    Interior,
    Last,
}

impl PositionClass {
    /// Class of 0-based time `t` in a sequence of length `n`.
    pub fn of(t: usize, n: usize) -> Self {
        if t == 0 {
            PositionClass::First
        } else if t + 1 == n {
            PositionClass::Last
        } else {
            PositionClass::Interior
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PositionClass::First => "first",
            PositionClass::Interior => "interior",
            PositionClass::Last => "last",
        }
    }
}

impl BoundsReport {
    /// The strongest bound that applies to the class, given whether the
    /// initial distribution is stationary.
    pub fn bound_for(&self, class: PositionClass, stationary_start: bool) -> f64 {
        let plain = match class {
            PositionClass::First => self.first_bound,
            PositionClass::Interior => self.interior_bound,
            PositionClass::Last => self.last_bound,
        };
        match (&self.stationary_variant, stationary_start) {
            (Some(st), true) => plain.max(match class {
                PositionClass::First => st.first_bound,
                PositionClass::Interior => st.interior_bound,
                PositionClass::Last => st.last_bound,
            }),
            _ => plain,
        }
    }
}

/// Data-independent lower bounds on Viterbi classification probabilities.
///
/// With `stationary` set, also computes the variant that holds under a
/// stationary start; this needs an irreducible chain.
pub fn viterbi_bounds(spec: &ModelSpec, stationary: bool) -> Result<BoundsReport> {
    spec.ensure_valid()?;
    let k = spec.num_states();
    let sig = sigma(&spec.transition);
    let k1 = spec.initial.iter().filter(|&&p| p != 0.0).count();
    let s12 = (sig.sigma1 * sig.sigma2).powi(2);
    let stationary_variant = if stationary {
        let pi = model::stationary_distribution(&spec.transition)?;
        let reversed = sigma(&model::reverse_transition(&spec.transition, &pi)?);
        let inner = (sig.sigma1 * sig.sigma2).max(reversed.sigma1 * reversed.sigma2);
        let first = sig.sigma1.max(reversed.sigma2);
        let last = sig.sigma2.max(reversed.sigma1);
        Some(StationaryBounds {
            reversed,
            interior_bound: ratio_bound(inner * inner, k - 1),
            first_bound: ratio_bound(first * first, k - 1),
            last_bound: ratio_bound(last * last, k - 1),
        })
    } else {
        None
    };
    Ok(BoundsReport {
        sigma: sig,
        k1,
        interior_bound: ratio_bound(s12, k - 1),
        first_bound: ratio_bound(sig.sigma1.powi(2), k1.saturating_sub(1)),
        last_bound: ratio_bound(sig.sigma2.powi(2), k - 1),
        stationary_variant,
    })
}

/// Whether `spec.initial` is the stationary distribution (within `1e-10`).
pub fn has_stationary_start(spec: &ModelSpec) -> bool {
    match model::stationary_distribution(&spec.transition) {
        Ok(pi) => pi
            .iter()
            .zip(&spec.initial)
            .all(|(a, b)| (a - b).abs() <= 1e-10),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub class: PositionClass,
    pub bound: f64,
    pub min_observed_rho: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsVerification {
    pub report: BoundsReport,
    pub stationary_start: bool,
    /// One entry per position class present in the sequence.
    pub classes: Vec<ClassCheck>,
    pub worst_margin: f64,
    pub violations: usize,
}

/// Decodes `obs` and compares every Viterbi classification probability with
/// the bound for its position class.
pub fn verify_bounds(spec: &ModelSpec, obs: &ObservationSequence) -> Result<BoundsVerification> {
    let stationary_start = has_stationary_start(spec);
    let report = viterbi_bounds(spec, stationary_start)?;
    let decoder = Decoder::new(spec, obs)?;
    let pins = PinSet::new();
    let tables = decoder.forward_backward(&pins)?;
    let path = decoder.viterbi(&pins)?;
    let rho = tables.classification_probabilities(&path)?;
    let n = rho.len();

    let mut classes: Vec<ClassCheck> = Vec::new();
    let mut violations = 0;
    for (t, &r) in rho.iter().enumerate() {
        let class = PositionClass::of(t, n);
        let bound = report.bound_for(class, stationary_start);
        if r < bound - 1e-12 {
            violations += 1;
        }
        match classes.iter_mut().find(|c| c.class == class) {
            Some(c) => c.min_observed_rho = c.min_observed_rho.min(r),
            None => classes.push(ClassCheck {
                class,
                bound,
                min_observed_rho: r,
                margin: 0.0,
            }),
        }
    }
    for c in &mut classes {
        c.margin = c.min_observed_rho - c.bound;
    }
    classes.sort_by_key(|c| c.class as u8);
    let worst_margin = classes
        .iter()
        .map(|c| c.margin)
        .fold(f64::INFINITY, f64::min);
    Ok(BoundsVerification {
        report,
        stationary_start,
        classes,
        worst_margin,
        violations,
    })
}

/// A state cluster with a detectable observation core and the primitivity
/// exponent of its transition block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// 0-based states in the cluster.
    pub states: Vec<usize>,
    /// Alphabet indices of the observable core.
    pub core: Vec<usize>,
    /// Smallest `r` with the `r`-th power of the cluster block entrywise positive.
    pub exponent: usize,
}

impl ClusterSpec {
    pub fn new(spec: &ModelSpec, states: &[usize], core: &[usize]) -> Result<Self> {
        match check_cluster(spec, states, core)? {
            (true, exponent) => Ok(ClusterSpec {
                states: states.to_vec(),
                core: core.to_vec(),
                exponent,
            }),
            _ => Err(Error::Config(
                "state set is not a primitive cluster for this core".into(),
            )),
        }
    }
}

/// Smallest `r <= (c-1)^2 + 1` such that the `r`-th boolean power of the
/// support matrix is all true, where `c` is its order.
pub fn primitivity_exponent(support: &[Vec<bool>]) -> Option<usize> {
    let c = support.len();
    if c == 0 {
        return None;
    }
    let limit = (c - 1) * (c - 1) + 1;
    let mut power = support.to_vec();
    for r in 1..=limit {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return Some(r);
        }
        power = (0..c)
            .map(|i| {
                (0..c)
                    .map(|j| (0..c).any(|l| power[i][l] && support[l][j]))
                    .collect()
            })
            .collect();
    }
    None
}

/// Checks the two density conditions on `core` and the primitivity of the
/// cluster's transition block. Returns `(true, r)` or `(false, 0)`.
pub fn check_cluster(spec: &ModelSpec, states: &[usize], core: &[usize]) -> Result<(bool, usize)> {
    spec.ensure_valid()?;
    let table = spec.emission.table().ok_or_else(|| {
        Error::Unsupported("cluster detection needs a table emission model".into())
    })?;
    let k = spec.num_states();
    let width = table[0].len();
    if states.iter().any(|&s| s >= k) {
        return Err(Error::Config("cluster state out of range".into()));
    }
    if core.iter().any(|&a| a >= width) {
        return Err(Error::Config("core symbol out of range".into()));
    }
    if states.is_empty() || core.is_empty() {
        return Ok((false, 0));
    }
    for &a in core {
        let inside = states.iter().all(|&s| table[s][a] > 0.0);
        let outside = (0..k)
            .filter(|s| !states.contains(s))
            .all(|s| table[s][a] == 0.0);
        if !inside || !outside {
            return Ok((false, 0));
        }
    }
    let support: Vec<Vec<bool>> = states
        .iter()
        .map(|&i| {
            states
                .iter()
                .map(|&j| spec.transition[i][j] > 0.0)
                .collect()
        })
        .collect();
    Ok(match primitivity_exponent(&support) {
        Some(r) => (true, r),
        None => (false, 0),
    })
}

/// For every time `t` (1-based), the pair `(w_t, u_t)`: the end of the first
/// core word of length `r + 1` completed strictly after `t + r` (or `n`), and
/// the start of the last such word starting strictly before `t - r` (or 1).
pub fn stopping_times(
    obs: &ObservationSequence,
    cluster: &ClusterSpec,
) -> Result<Vec<(usize, usize)>> {
    let symbols = match obs {
        ObservationSequence::Symbols(s) => s,
        ObservationSequence::Reals(_) => {
            return Err(Error::Unsupported(
                "stopping times need symbol observations".into(),
            ))
        }
    };
    let n = symbols.len();
    let r = cluster.exponent;
    // word_end[w]: x_{w-r..=w} all in the core (1-based w).
    let mut word_end = vec![false; n + 1];
    let mut run = 0usize;
    for (i, a) in symbols.iter().enumerate() {
        run = if cluster.core.contains(a) { run + 1 } else { 0 };
        word_end[i + 1] = run > r;
    }
    // next_end[w]: smallest word end >= w; prev_start[u]: largest word start <= u.
    let mut next_end = vec![usize::MAX; n + 2];
    for w in (1..=n).rev() {
        next_end[w] = if word_end[w] { w } else { next_end[w + 1] };
    }
    let mut prev_start = vec![0usize; n + 1];
    for u in 1..=n {
        let starts_here = u + r <= n && word_end[u + r];
        prev_start[u] = if starts_here { u } else { prev_start[u - 1] };
    }
    Ok((1..=n)
        .map(|t| {
            let lo = t + r + 1;
            let w = if lo <= n && next_end[lo] != usize::MAX {
                next_end[lo]
            } else {
                n
            };
            let u = if t > r + 1 && prev_start[t - r - 1] > 0 {
                prev_start[t - r - 1]
            } else {
                1
            };
            (w, u)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub samples: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `survival[k]` estimates `P(W*_1 - 1 > k)` for `k = 0..=horizon`.
    pub survival: Vec<f64>,
    /// Least-squares slope of `ln survival[k]` over the positive estimates
    /// with `k > r`; a qualitative decay diagnostic.
    pub log_slope: Option<f64>,
    pub censored_fraction: f64,
    /// Set when more than half of the samples never completed a core word.
    pub warning: bool,
}

/// Monte-Carlo survival function of the waiting time `W*_t - t` at `t = 1`.
pub fn empirical_tail(
    spec: &ModelSpec,
    cluster: &ClusterSpec,
    samples: usize,
    horizon: usize,
    seed: u64,
) -> Result<TailReport> {
    if samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let r = cluster.exponent;
    let len = horizon + 1;
    let mut waits = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let (_, obs) = spec.sample_with(len, &mut rng)?;
        let ObservationSequence::Symbols(symbols) = obs else {
            return Err(Error::Unsupported(
                "empirical tail needs a table emission model".into(),
            ));
        };
        // first w > 1 + r with a full core word ending at w (1-based)
        let mut run = 0usize;
        let mut wait = None;
        for (idx, a) in symbols.iter().enumerate().skip(1) {
            run = if cluster.core.contains(a) { run + 1 } else { 0 };
            if run > r {
                wait = Some(idx); // w - t with w = idx + 1, t = 1
                break;
            }
        }
        waits.push(wait);
    }
    let censored = waits.iter().filter(|w| w.is_none()).count();
    let survival: Vec<f64> = (0..=horizon)
        .map(|k| waits.iter().filter(|w| w.is_none_or(|d| d > k)).count() as f64 / samples as f64)
        .collect();
    let points: Vec<(f64, f64)> = survival
        .iter()
        .enumerate()
        .filter(|&(k, &s)| k > r && s > 0.0)
        .map(|(k, &s)| (k as f64, s.ln()))
        .collect();
    let log_slope = (points.len() >= 2).then(|| {
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    let censored_fraction = censored as f64 / samples as f64;
    Ok(TailReport {
        samples,
        horizon,
        seed,
        survival,
        log_slope,
        censored_fraction,
        warning: censored_fraction > 0.5,
    })
}
