//! Exhaustive-enumeration oracle and random instance generators shared by the
//! integration tests. Everything here works in plain probability space and
//! does not call the library's inference code.
#![allow(dead_code)]

use hmmseg::{EmissionModel, ModelSpec, ObservationSequence};
use rand::Rng;

/// Relative tolerance under which two path probabilities count as tied.
pub const ORACLE_TIE: f64 = 1e-12;

pub struct Enumeration {
    pub k: usize,
    pub n: usize,
    /// Every path with its joint probability `P(Y = path, X = obs)`.
    pub paths: Vec<(Vec<usize>, f64)>,
}

fn emission_density(spec: &ModelSpec, obs: &ObservationSequence, t: usize, s: usize) -> f64 {
    match (&spec.emission, obs) {
        (EmissionModel::Gaussian { means, variances }, ObservationSequence::Reals(xs)) => {
            let d = xs[t] - means[s];
            (-d * d / (2.0 * variances[s])).exp()
                / (2.0 * std::f64::consts::PI * variances[s]).sqrt()
        }
        (EmissionModel::Categorical { probabilities, .. }, ObservationSequence::Symbols(a)) => {
            probabilities[s][a[t]]
        }
        (EmissionModel::Abstract { densities, .. }, ObservationSequence::Symbols(a)) => {
            densities[s][a[t]]
        }
        _ => panic!("observation kind does not match emission"),
    }
}

impl Enumeration {
    pub fn new(spec: &ModelSpec, obs: &ObservationSequence) -> Self {
        let k = spec.transition.len();
        let n = obs.len();
        let mut paths = Vec::with_capacity(k.pow(n as u32));
        let mut path = vec![0usize; n];
        loop {
            let mut p = spec.initial[path[0]] * emission_density(spec, obs, 0, path[0]);
            for t in 1..n {
                p *=
                    spec.transition[path[t - 1]][path[t]] * emission_density(spec, obs, t, path[t]);
            }
            paths.push((path.clone(), p));
            // odometer increment, position 0 fastest
            let mut i = 0;
            while i < n {
                path[i] += 1;
                if path[i] < k {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
        Enumeration { k, n, paths }
    }

    fn consistent<'a>(
        &'a self,
        pins: &'a [(usize, usize)],
    ) -> impl Iterator<Item = &'a (Vec<usize>, f64)> + 'a {
        self.paths
            .iter()
            .filter(move |(p, _)| pins.iter().all(|&(t, s)| p[t] == s))
    }

    pub fn likelihood(&self, pins: &[(usize, usize)]) -> f64 {
        self.consistent(pins).map(|(_, p)| p).sum()
    }

    /// `P(Y_t = s | X, pins)`; `None` if the pins have zero probability.
    pub fn smoothing(&self, pins: &[(usize, usize)]) -> Option<Vec<Vec<f64>>> {
        let total = self.likelihood(pins);
        if total == 0.0 {
            return None;
        }
        let mut out = vec![vec![0.0; self.k]; self.n];
        for (path, p) in self.consistent(pins) {
            for (t, &s) in path.iter().enumerate() {
                out[t][s] += p / total;
            }
        }
        Some(out)
    }

    /// Most probable pin-consistent path; among tied paths the one that is
    /// smallest when compared from the last position backwards.
    pub fn viterbi(&self, pins: &[(usize, usize)]) -> Option<Vec<usize>> {
        let best = self
            .consistent(pins)
            .map(|(_, p)| *p)
            .fold(0.0f64, f64::max);
        if best == 0.0 {
            return None;
        }
        let threshold = (best.ln() - ORACLE_TIE * best.ln().abs().max(1.0)).exp();
        self.consistent(pins)
            .filter(|(_, p)| *p >= threshold)
            .map(|(path, _)| path.clone())
            .min_by(|a, b| a.iter().rev().cmp(b.iter().rev()))
    }

    /// Posterior probability of one path.
    pub fn posterior(&self, path: &[usize]) -> f64 {
        let total = self.likelihood(&[]);
        self.paths
            .iter()
            .find(|(p, _)| p == path)
            .map_or(0.0, |(_, p)| p / total)
    }
}

/// Per-position argmax, smallest index on ties within `1e-12`.
pub fn argmax_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    rows.iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] + 1e-12 {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn random_stochastic(rng: &mut impl Rng, len: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < zero_prob {
                    0.0
                } else {
                    rng.random_range(0.05..1.0)
                }
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            return raw.iter().map(|x| x / sum).collect();
        }
    }
}

/// A stochastic vector with dyadic entries, so that distinct products of
/// entries rarely coincide by accident but symmetric paths tie exactly.
fn dyadic_stochastic(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let choices: &[&[f64]] = match len {
        1 => &[&[1.0]],
        2 => &[
            &[0.5, 0.5],
            &[0.25, 0.75],
            &[0.75, 0.25],
            &[1.0, 0.0],
            &[0.0, 1.0],
        ],
        3 => &[
            &[0.5, 0.25, 0.25],
            &[0.25, 0.5, 0.25],
            &[0.25, 0.25, 0.5],
            &[0.5, 0.5, 0.0],
            &[0.0, 0.5, 0.5],
            &[0.5, 0.0, 0.5],
            &[0.25, 0.25, 0.5],
            &[1.0, 0.0, 0.0],
        ],
        _ => panic!("dyadic rows only for len <= 3"),
    };
    choices[rng.random_range(0..choices.len())].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Categorical,
    Gaussian,
    /// Dyadic parameters that produce many exact ties.
    Tied,
}

/// A random model with `k` states, zero-patterned transitions, and `n`
/// observations drawn from it.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    k: usize,
    n: usize,
    kind: InstanceKind,
) -> (ModelSpec, ObservationSequence) {
    let zero_prob = rng.random_range(0.0..0.45);
    let tied = kind == InstanceKind::Tied;
    let row = |rng: &mut R, len: usize, zp: f64| {
        if tied {
            dyadic_stochastic(rng, len)
        } else {
            random_stochastic(rng, len, zp)
        }
    };
    let transition: Vec<Vec<f64>> = (0..k).map(|_| row(rng, k, zero_prob)).collect();
    let initial = row(rng, k, zero_prob / 2.0);
    let emission = match kind {
        InstanceKind::Gaussian => EmissionModel::Gaussian {
            means: (0..k).map(|_| rng.random_range(-1.5..1.5)).collect(),
            variances: (0..k).map(|_| rng.random_range(0.3..2.0)).collect(),
        },
        InstanceKind::Categorical | InstanceKind::Tied => {
            let m = rng.random_range(2..=3);
            EmissionModel::Categorical {
                alphabet: (0..m).map(|i| format!("s{i}")).collect(),
                probabilities: (0..k).map(|_| row(rng, m, 0.2)).collect(),
            }
        }
    };
    let spec = ModelSpec::new(transition, initial, emission).expect("generated model is valid");
    let (_, obs) = spec.sample(n, rng.random()).expect("generative model");
    (spec, obs)
}

/// All-positive random model with Gaussian or categorical emissions.
pub fn random_positive_model(rng: &mut impl Rng, k: usize, stationary_start: bool) -> ModelSpec {
    let transition: Vec<Vec<f64>> = (0..k).map(|_| random_stochastic(rng, k, 0.0)).collect();
    let emission = if rng.random::<bool>() {
        EmissionModel::Gaussian {
            means: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
            variances: (0..k).map(|_| rng.random_range(0.3..2.0)).collect(),
        }
    } else {
        let m = rng.random_range(2..=4);
        EmissionModel::Categorical {
            alphabet: (0..m).map(|i| format!("s{i}")).collect(),
            probabilities: (0..k).map(|_| random_stochastic(rng, m, 0.0)).collect(),
        }
    };
    let initial = if stationary_start {
        hmmseg::model::stationary_distribution(&transition).unwrap()
    } else {
        random_stochastic(rng, k, 0.3)
    };
    ModelSpec::new(transition, initial, emission).unwrap()
}

/// Failures found when comparing the library with the oracle on one instance.
#[derive(Debug, Default)]
pub struct InstanceReport {
    /// Smoothing, likelihood, Viterbi, PMAP and restricted-Viterbi mismatches.
    pub decoding: Vec<String>,
    /// PMAP accuracy and classification-probability floor violations.
    pub optimality: Vec<String>,
    pub pinned_checks: usize,
}

/// Compares decoding on `(spec, obs)` with exhaustive enumeration, including
/// `pin_sets` random pin sets of one or two pins.
pub fn check_instance(
    rng: &mut impl Rng,
    spec: &ModelSpec,
    obs: &ObservationSequence,
    pin_sets: usize,
) -> InstanceReport {
    use hmmseg::{Decoder, Error, PinSet};
    let mut report = InstanceReport::default();
    let oracle = Enumeration::new(spec, obs);
    let decoder = Decoder::new(spec, obs).expect("decoder");
    let (k, n) = (oracle.k, oracle.n);
    let empty = PinSet::new();

    let Some(smooth) = oracle.smoothing(&[]) else {
        report
            .decoding
            .push("sampled observations have zero likelihood".into());
        return report;
    };
    let tables = match decoder.forward_backward(&empty) {
        Ok(t) => t,
        Err(e) => {
            report
                .decoding
                .push(format!("forward_backward failed: {e}"));
            return report;
        }
    };
    let max_diff = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .zip(b)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
            .fold(0.0f64, f64::max)
    };
    let d = max_diff(&tables.smoothing, &smooth);
    if d > 1e-9 {
        report.decoding.push(format!("smoothing differs by {d:e}"));
    }
    let ll = oracle.likelihood(&[]).ln();
    if (tables.log_likelihood - ll).abs() > 1e-9 * ll.abs().max(1.0) {
        report.decoding.push(format!(
            "log likelihood {} vs {}",
            tables.log_likelihood, ll
        ));
    }
    let viterbi = decoder.viterbi(&empty).expect("viterbi");
    let expected = oracle.viterbi(&[]).unwrap();
    if viterbi.0 != expected {
        report
            .decoding
            .push(format!("viterbi {:?} vs {:?}", viterbi.0, expected));
    }
    let post = decoder.path_log_posterior(&viterbi).unwrap();
    let oracle_post = oracle.posterior(&viterbi).ln();
    if (post - oracle_post).abs() > 1e-9 * oracle_post.abs().max(1.0) {
        report
            .decoding
            .push(format!("path posterior {post} vs {oracle_post}"));
    }
    let pmap = tables.pmap();
    let expected_pmap = argmax_rows(&smooth);
    if pmap.0 != expected_pmap {
        report
            .decoding
            .push(format!("pmap {:?} vs {:?}", pmap.0, expected_pmap));
    }

    // optimality properties
    let pmap_accuracy = tables.accuracy(&pmap).unwrap();
    for (path, _) in &oracle.paths {
        let acc: f64 = path.iter().enumerate().map(|(t, &s)| smooth[t][s]).sum();
        if acc > pmap_accuracy + 1e-12 {
            report.optimality.push(format!(
                "path {path:?} accuracy {acc} beats pmap {pmap_accuracy}"
            ));
            break;
        }
    }
    let rho_pmap = tables.classification_probabilities(&pmap).unwrap();
    if let Some(r) = rho_pmap.iter().find(|&&r| r < 1.0 / k as f64 - 1e-12) {
        report.optimality.push(format!("pmap rho {r} below 1/K"));
    }
    let rho_v = tables.classification_probabilities(&viterbi).unwrap();
    let floor = (k as f64).powi(-(n as i32));
    if let Some(r) = rho_v.iter().find(|&&r| r < floor * (1.0 - 1e-12)) {
        report
            .optimality
            .push(format!("viterbi rho {r} below K^-n"));
    }

    // restricted decoding
    for _ in 0..pin_sets {
        let count = if n >= 2 { rng.random_range(1..=2) } else { 1 };
        let mut pins: Vec<(usize, usize)> = Vec::new();
        while pins.len() < count {
            let t = rng.random_range(0..n);
            if pins.iter().all(|&(u, _)| u != t) {
                pins.push((t, rng.random_range(0..k)));
            }
        }
        let pin_set = PinSet::from_pairs(pins.clone()).unwrap();
        report.pinned_checks += 1;
        match (oracle.viterbi(&pins), decoder.viterbi(&pin_set)) {
            (Some(e), Ok(got)) if got.0 == e => {}
            (None, Err(Error::NoAdmissiblePath)) => {}
            (e, got) => report.decoding.push(format!(
                "restricted viterbi with {pins:?}: {got:?} vs {e:?}"
            )),
        }
        match (oracle.smoothing(&pins), decoder.forward_backward(&pin_set)) {
            (Some(e), Ok(got)) => {
                let d = max_diff(&got.smoothing, &e);
                if d > 1e-9 {
                    report
                        .decoding
                        .push(format!("pinned smoothing {pins:?} differs by {d:e}"));
                }
            }
            (None, Err(Error::InadmissiblePins)) => {}
            (e, got) => report.decoding.push(format!(
                "pinned smoothing admissibility with {pins:?}: oracle {} library {}",
                e.is_some(),
                got.is_ok()
            )),
        }
    }
    report
}

/// Violations of the iterative-refinement invariants in one trace.
#[allow(dead_code)]
pub fn trace_violations(
    trace: &hmmseg::RefinementTrace,
    final_path: &hmmseg::StatePath,
    delta: f64,
    max_iterations: usize,
) -> Vec<String> {
    let mut out = Vec::new();
    let mut previous = trace.initial_metrics.log_posterior;
    let mut seen = std::collections::BTreeSet::new();
    if trace.iterations.len() > max_iterations {
        out.push(format!(
            "{} iterations exceed M = {max_iterations}",
            trace.iterations.len()
        ));
    }
    for (m, it) in trace.iterations.iter().enumerate() {
        let lp = it.metrics.log_posterior;
        if lp == f64::NEG_INFINITY {
            out.push(format!("iteration {} has zero posterior", m + 1));
        }
        if lp > previous + 1e-9 * previous.abs().max(1.0) {
            out.push(format!(
                "log posterior rose from {previous} to {lp} at iteration {}",
                m + 1
            ));
        }
        previous = lp;
        if !seen.insert(it.time) {
            out.push(format!("time {} pinned twice", it.time));
        }
        for &t in &seen {
            if it.rho[t] != 1.0 {
                out.push(format!("pinned time {t} has conditional rho {}", it.rho[t]));
            }
        }
    }
    let last_path = trace
        .iterations
        .last()
        .map_or(&trace.initial_path, |r| &r.path);
    if last_path != final_path {
        out.push("returned path differs from the last trace entry".into());
    }
    let min_rho = trace
        .final_rho()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    match trace.exit {
        hmmseg::ExitReason::Threshold if min_rho < delta => {
            out.push(format!("threshold exit with min rho {min_rho} < {delta}"))
        }
        hmmseg::ExitReason::MaxIterations if trace.iterations.len() != max_iterations => {
            out.push("max-iteration exit before M iterations".into())
        }
        _ => {}
    }
    out
}

/// Random positive models checked against the Viterbi classification bounds.
/// Returns `(instances, violations, worst_margin)`.
#[allow(dead_code)]
pub fn bounds_batch(seed: u64, count: usize, n: usize) -> (usize, usize, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for i in 0..count {
        let k = [2, 3, 4][i % 3];
        let stationary = i % 2 == 0;
        let spec = random_positive_model(&mut rng, k, stationary);
        let (_, obs) = spec.sample_with(n, &mut rng).unwrap();
        let v = hmmseg::bounds::verify_bounds(&spec, &obs).unwrap();
        assert_eq!(v.stationary_start, stationary);
        violations += v.violations;
        worst = worst.min(v.worst_margin);
    }
    (count, violations, worst)
}
