mod common;

use common::{random_instance, InstanceKind};
use hmmseg::logspace::log_sum_exp;
use hmmseg::{Decoder, PinSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind(i: u8) -> InstanceKind {
    match i % 3 {
        0 => InstanceKind::Categorical,
        1 => InstanceKind::Gaussian,
        _ => InstanceKind::Tied,
    }
}

fn instance(
    seed: u64,
    k: usize,
    n: usize,
    kind_id: u8,
) -> (hmmseg::ModelSpec, hmmseg::ObservationSequence) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance(&mut rng, k, n, kind(kind_id))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_rows_are_distributions(seed in any::<u64>(), k in 2usize..=4, n in 1usize..60, kid in 0u8..3) {
        let k = if kid == 2 { k.min(3) } else { k };
        let (spec, obs) = instance(seed, k, n, kid);
        let tables = Decoder::new(&spec, &obs).unwrap().forward_backward(&PinSet::new()).unwrap();
        for row in &tables.smoothing {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "row sum {}", s);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        prop_assert!(tables.log_likelihood.is_finite());
    }

    #[test]
    fn pins_only_restrict(seed in any::<u64>(), k in 2usize..=3, n in 2usize..40, t_frac in 0.0f64..1.0, s in 0usize..3, kid in 0u8..3) {
        let (spec, obs) = instance(seed, k, n, kid);
        let decoder = Decoder::new(&spec, &obs).unwrap();
        let free = decoder.viterbi(&PinSet::new()).unwrap();
        let free_score = decoder.joint_log_probability(&free).unwrap();
        let t = ((n as f64) * t_frac) as usize;
        let pins = PinSet::from_pairs([(t, s % k)]).unwrap();
        if let Ok(restricted) = decoder.viterbi(&pins) {
            prop_assert_eq!(restricted[t], s % k);
            let score = decoder.joint_log_probability(&restricted).unwrap();
            prop_assert!(score <= free_score + 1e-12 * free_score.abs().max(1.0));
            prop_assert!(score > f64::NEG_INFINITY);
        } else {
            prop_assert_eq!(decoder.log_likelihood(&pins).unwrap(), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn pinning_viterbi_states_keeps_the_path(seed in any::<u64>(), k in 2usize..=3, n in 1usize..30, t_frac in 0.0f64..1.0, kid in 0u8..3) {
        let (spec, obs) = instance(seed, k, n, kid);
        let decoder = Decoder::new(&spec, &obs).unwrap();
        let free = decoder.viterbi(&PinSet::new()).unwrap();
        let t = ((n as f64) * t_frac) as usize;
        let pins = PinSet::from_pairs([(t, free[t])]).unwrap();
        prop_assert_eq!(decoder.viterbi(&pins).unwrap(), free);
    }

    #[test]
    fn pinned_likelihoods_partition_the_total(seed in any::<u64>(), k in 2usize..=4, n in 1usize..40, t_frac in 0.0f64..1.0, kid in 0u8..2) {
        let (spec, obs) = instance(seed, k, n, kid);
        let decoder = Decoder::new(&spec, &obs).unwrap();
        let total = decoder.log_likelihood(&PinSet::new()).unwrap();
        let t = ((n as f64) * t_frac) as usize;
        let parts: Vec<f64> = (0..k)
            .map(|s| decoder.log_likelihood(&PinSet::from_pairs([(t, s)]).unwrap()).unwrap())
            .collect();
        prop_assert!((log_sum_exp(&parts) - total).abs() < 1e-9 * total.abs().max(1.0));
        let tables = decoder.forward_backward(&PinSet::new()).unwrap();
        for s in 0..k {
            let p = (parts[s] - total).exp();
            prop_assert!((p - tables.smoothing[t][s]).abs() < 1e-9);
        }
    }

    #[test]
    fn pinned_smoothing_is_one_hot(seed in any::<u64>(), n in 2usize..30, t_frac in 0.0f64..1.0, kid in 0u8..3) {
        let (spec, obs) = instance(seed, 3, n, kid);
        let decoder = Decoder::new(&spec, &obs).unwrap();
        let free = decoder.viterbi(&PinSet::new()).unwrap();
        let t = ((n as f64) * t_frac) as usize;
        let pins = PinSet::from_pairs([(t, free[t])]).unwrap();
        let tables = decoder.forward_backward(&pins).unwrap();
        for s in 0..3 {
            prop_assert_eq!(tables.smoothing[t][s], if s == free[t] { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn long_sequences_stay_finite() {
    let (spec, obs) = instance(99, 3, 20_000, 1);
    let decoder = Decoder::new(&spec, &obs).unwrap();
    let tables = decoder.forward_backward(&PinSet::new()).unwrap();
    assert!(tables.log_likelihood.is_finite());
    assert!(tables.smoothing.iter().flatten().all(|p| p.is_finite()));
    let path = decoder.viterbi(&PinSet::new()).unwrap();
    assert!(decoder.path_log_posterior(&path).unwrap().is_finite());
}
