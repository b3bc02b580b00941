//! Acceptance suite. Run with
//! `cargo test -p hmmseg --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

mod common;

use std::time::{Duration, Instant};

use common::{bounds_batch, check_instance, random_instance, trace_violations, InstanceKind};
use hmmseg::experiments::{
    counterexample_small_prob, gaussian_model, pin_probability_limit, q_table,
    run_gaussian_experiment, CounterexampleS4Config, Method,
};
use hmmseg::{BunchSelection, Decoder, PinSet, RefinementConfig, Refiner, ReplacementMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            summary
        } else {
            failures.join("; ")
        },
    }
}

fn within_time(failures: &mut Vec<String>, start: Instant, limit: Duration) {
    let elapsed = start.elapsed();
    if elapsed > limit {
        failures.push(format!("took {elapsed:.2?}, limit {limit:?}"));
    }
}

/// `(epsilon, m, lhs, rhs)` as published, rounded to two decimals.
const PEEPING_TABLE: [(f64, usize, f64, f64); 12] = [
    (0.2, 3, 0.79, 2.09),
    (0.2, 5, 1.80, 2.46),
    (0.2, 6, 2.29, 2.58),
    (0.2, 7, 2.78, 2.70),
    (0.2, 98, 45.26, 14.82),
    (0.2, 998, 465.26, 134.82),
    (0.01, 3, 0.77, 2.14),
    (0.01, 5, 1.82, 2.66),
    (0.01, 6, 2.38, 2.79),
    (0.01, 7, 2.96, 2.87),
    (0.01, 98, 56.52, 4.00),
    (0.01, 998, 586.13, 14.38),
];

fn peeping_table_rows() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (eps, m, lhs, rhs) in PEEPING_TABLE {
        let q = q_table(&CounterexampleS4Config::new(m, eps, 1.0).unwrap()).unwrap();
        if (q.lhs() - lhs).abs() > 0.01 || (q.rhs() - rhs).abs() > 0.01 {
            failures.push(format!(
                "eps={eps} m={m}: got {:.4}/{:.4}, want {lhs}/{rhs}",
                q.lhs(),
                q.rhs()
            ));
        }
    }
    within_time(&mut failures, start, Duration::from_secs(1));
    outcome(failures, "12 rows within 0.01".into())
}

fn pin_probability_limits() -> Outcome {
    let mut failures = Vec::new();
    let mut values = Vec::new();
    for (eps, want) in [(0.2, 0.066667), (0.01, 0.000198)] {
        let config = CounterexampleS4Config::new(10_000, eps, 1.0).unwrap();
        let limit = pin_probability_limit(&config);
        let tables = Decoder::new(&config.model(), &config.observations())
            .unwrap()
            .forward_backward(&PinSet::new())
            .unwrap();
        let finite = tables.smoothing[config.n() - 2][1];
        if (limit - want).abs() > 1e-6 {
            failures.push(format!("eps={eps}: closed form {limit:.7} vs {want}"));
        }
        if (finite - want).abs() > 1e-4 {
            failures.push(format!("eps={eps}: m=1e4 value {finite:.7} vs {want}"));
        }
        values.push(format!("{limit:.6}"));
    }
    outcome(failures, format!("limits {}", values.join(", ")))
}

fn vanishing_viterbi_probability() -> Outcome {
    let mut failures = Vec::new();
    for m in [5, 10, 20, 100] {
        let r = counterexample_small_prob(m).unwrap();
        let mut expected = vec![1; m];
        expected.push(2);
        if r.viterbi.to_one_based() != expected {
            failures.push(format!("m={m}: Viterbi {:?}", r.viterbi.to_one_based()));
        }
        let rel = (r.probability - r.closed_form).abs() / r.closed_form;
        if rel > 1e-12 {
            failures.push(format!("m={m}: relative error {rel:e}"));
        }
    }
    outcome(failures, "m = 5, 10, 20, 100 exact".into())
}

/// Shared instance batch for the oracle and optimality criteria.
fn oracle_batch() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let kinds = [
        InstanceKind::Categorical,
        InstanceKind::Gaussian,
        InstanceKind::Tied,
    ];
    let (mut decoding, mut optimality) = (Vec::new(), Vec::new());
    let mut pinned = 0;
    let count = 240;
    for i in 0..count {
        let k = rng.random_range(2..=3);
        let n = rng.random_range(1..=8);
        let (spec, obs) = random_instance(&mut rng, k, n, kinds[i % 3]);
        let report = check_instance(&mut rng, &spec, &obs, 3);
        pinned += report.pinned_checks;
        decoding.extend(
            report
                .decoding
                .into_iter()
                .map(|f| format!("instance {i}: {f}")),
        );
        optimality.extend(
            report
                .optimality
                .into_iter()
                .map(|f| format!("instance {i}: {f}")),
        );
    }
    within_time(&mut decoding, start, Duration::from_secs(30));
    (
        outcome(
            decoding,
            format!("{count} instances, {pinned} pinned checks"),
        ),
        outcome(optimality, format!("{count} instances")),
    )
}

fn classification_bounds() -> Outcome {
    let (count, violations, worst) = bounds_batch(31, 500, 50);
    let failures = if violations > 0 {
        vec![format!("{violations} violations, worst margin {worst:e}")]
    } else {
        Vec::new()
    };
    outcome(
        failures,
        format!("{count} models, worst margin {worst:.1e}"),
    )
}

fn refinement_invariants() -> Outcome {
    let spec = gaussian_model();
    let delta = 0.25;
    let n = 1000;
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let (truth, obs) = spec.sample(n, seed).unwrap();
        let refiner = Refiner::new(&spec, &obs).unwrap();
        for config in [
            RefinementConfig::pmap(delta, n).with_truth(truth.clone()),
            RefinementConfig::peeping(delta, n, truth.clone()),
        ] {
            let (path, trace) = refiner.iterative(&config).unwrap();
            if refiner
                .metrics(&path, &trace.pins(), None)
                .unwrap()
                .log_posterior
                == f64::NEG_INFINITY
            {
                failures.push(format!("seed {seed}: iterative output has zero posterior"));
            }
            for v in trace_violations(&trace, &path, delta, n) {
                failures.push(format!("seed {seed} {}: {v}", config.mode.label()));
            }
        }
        let peep = refiner
            .bunch(
                BunchSelection::Threshold(delta),
                ReplacementMode::Peeping,
                Some(&truth),
            )
            .unwrap();
        if peep.metrics.log_posterior == f64::NEG_INFINITY {
            failures.push(format!("seed {seed}: peeping bunch has zero posterior"));
        }
    }
    outcome(failures, "100 seeds per mode".into())
}

fn gaussian_bands() -> Outcome {
    let start = Instant::now();
    let delta = 0.25;
    let result = run_gaussian_experiment(100, 1000, &[delta], 2024).unwrap();
    let row = |mode, method| result.summary_row(delta, mode, method).unwrap();
    let pmap = ReplacementMode::PmapReplacement;
    let mut failures = Vec::new();
    let iterations = row(pmap, Method::Iterative).count.mean;
    let replacements = row(pmap, Method::Bunch).count.mean;
    if (iterations - 7.4).abs() > 0.25 * 7.4 {
        failures.push(format!(
            "mean iterations {iterations:.2} outside 7.4 +- 25%"
        ));
    }
    if (replacements - 19.7).abs() > 0.25 * 19.7 {
        failures.push(format!(
            "mean replacements {replacements:.2} outside 19.7 +- 25%"
        ));
    }
    for mode in [pmap, ReplacementMode::Peeping] {
        let (it, bu) = (
            row(mode, Method::Iterative).errors,
            row(mode, Method::Bunch).errors,
        );
        if it >= bu {
            failures.push(format!(
                "{}: iterative errors {it:.1} >= bunch errors {bu:.1}",
                mode.label()
            ));
        }
    }
    let it_rho = row(pmap, Method::Iterative).rho_min_cond;
    let bu_rho = row(pmap, Method::Bunch).rho_min_cond;
    if it_rho < delta || bu_rho >= delta {
        failures.push(format!(
            "min probabilities iterative {it_rho:.3}, bunch {bu_rho:.3}"
        ));
    }
    within_time(&mut failures, start, Duration::from_secs(300));
    outcome(
        failures,
        format!(
            "iterations {iterations:.2}, replacements {replacements:.2}, errors {:.1} < {:.1}, min rho {it_rho:.3} / {bu_rho:.3}",
            row(pmap, Method::Iterative).errors,
            row(pmap, Method::Bunch).errors
        ),
    )
}

#[test]
fn acceptance() {
    let (oracle, optimality) = oracle_batch();
    let results = [
        ("1 peeping table", peeping_table_rows()),
        ("2 pin probability limits", pin_probability_limits()),
        (
            "3 vanishing Viterbi probability",
            vanishing_viterbi_probability(),
        ),
        ("4 brute-force oracle", oracle),
        ("5 classification bounds", classification_bounds()),
        ("6 refinement invariants", refinement_invariants()),
        ("7 Gaussian experiment bands", gaussian_bands()),
        ("8 PMAP optimality", optimality),
    ];
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
