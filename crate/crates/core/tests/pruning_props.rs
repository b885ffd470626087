use pqi_prune::data::{gen_synthetic, SyntheticSpec};
use pqi_prune::nn::{init_network, LayerSpec, Activation, ModelKind, TrainConfig};
use pqi_prune::pruning::{
    magnitude_prune, partition, run_pruning, sap_prune_count, AlgorithmKind, AlgorithmSpec,
    CountBasis, PruningMask, SapHyperParams, Scope,
};
use pqi_prune::sparsity::NormPair;
use proptest::prelude::*;

fn small_data() -> pqi_prune::data::SplitDataset {
    gen_synthetic(&SyntheticSpec {
        n_samples: 200,
        n_features: 6,
        seed: 11,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 40,
        ..TrainConfig::desk()
    }
}

proptest! {
    #[test]
    fn sap_count_respects_cap_and_size(
        d in 1usize..100_000,
        index in 0.0f64..1.0,
        eta in 0.0f64..3.0,
        gamma in 0.1f64..4.0,
        beta in 0.01f64..=1.0,
    ) {
        let hp = SapHyperParams { eta, gamma, beta, ..SapHyperParams::default() };
        let (retained, count) = sap_prune_count(d, index, &hp);
        prop_assert!(retained >= 0.0 && retained <= d as f64);
        prop_assert!(count as f64 <= (beta * d as f64).floor());
        prop_assert!(count <= d);
    }

    /// With eta = 0 and gamma = 1, SAP keeps at least the bound's r_t entries.
    #[test]
    fn sap_eta_zero_keeps_the_bound(d in 1usize..100_000, index in 0.0f64..1.0) {
        let hp = SapHyperParams { beta: 1.0, ..SapHyperParams::default() };
        let (retained, count) = sap_prune_count(d, index, &hp);
        prop_assert!((d - count) as f64 >= retained - 1e-9);
        prop_assert!(d - count <= retained.ceil() as usize + 1);
    }

    #[test]
    fn sap_prunes_more_for_sparser_groups(d in 10usize..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let hp = SapHyperParams { beta: 1.0, ..SapHyperParams::default() };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(sap_prune_count(d, lo, &hp).1 <= sap_prune_count(d, hi, &hp).1);
    }

    #[test]
    fn magnitude_pruning_keeps_the_largest(seed in 0u64..1000, count in 0usize..40) {
        let params = init_network(&[LayerSpec::dense(6, 5, Activation::None)], seed).unwrap();
        let mask = params.full_mask();
        let group = &partition(&params, &mask, Scope::Global).unwrap()[0];
        let out = magnitude_prune(group, &mask, count).unwrap();
        prop_assert_eq!(out.removed, count.min(30));
        prop_assert!(out.mask.is_subset_of(&mask));
        let w = &params.layers()[0].weights;
        let dropped_max = (0..30).filter(|&i| !out.mask.is_kept(0, i)).map(|i| w[i].abs()).fold(0.0, f64::max);
        let kept_min = (0..30).filter(|&i| out.mask.is_kept(0, i)).map(|i| w[i].abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(dropped_max <= kept_min);
    }
}

fn assert_monotone(kind: AlgorithmKind, scope: Scope) {
    let data = small_data();
    let layers = ModelKind::Mlp.layers(6, 2);
    let spec = AlgorithmSpec { kind, iterations: 4 };
    let rec = run_pruning(&spec, scope, &layers, &quick_train(), 5, &data).unwrap();
    assert!(rec.completed());
    assert_eq!(rec.iterations.len(), 5);
    for (t, pair) in rec.iterations.windows(2).enumerate() {
        assert_eq!(pair[0].t, t);
        assert!(pair[1].percent_remaining <= pair[0].percent_remaining);
        assert_eq!(pair[1].d_t, pair[0].d_t - pair[0].pruned_total);
    }
}

#[test]
fn remaining_weights_never_grow() {
    let lt = AlgorithmKind::LotteryTicket {
        ratio: 0.2,
        basis: CountBasis::Current,
    };
    let one = AlgorithmKind::OneShot {
        ratio: 0.3,
        basis: CountBasis::Original,
    };
    for scope in [Scope::Global, Scope::LayerWise, Scope::NeuronWise] {
        assert_monotone(lt, scope);
        assert_monotone(one, scope);
        assert_monotone(AlgorithmKind::Sap(SapHyperParams::default()), scope);
    }
}

#[test]
fn runs_are_deterministic() {
    let data = small_data();
    let layers = ModelKind::Mlp.layers(6, 2);
    let spec = AlgorithmSpec {
        kind: AlgorithmKind::Sap(SapHyperParams {
            norms: NormPair::new(1.0, 2.0).unwrap(),
            ..SapHyperParams::default()
        }),
        iterations: 3,
    };
    let a = run_pruning(&spec, Scope::LayerWise, &layers, &quick_train(), 1, &data).unwrap();
    let b = run_pruning(&spec, Scope::LayerWise, &layers, &quick_train(), 1, &data).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dropped_entries_stay_dropped() {
    let mut mask = PruningMask::full(&[(2, 3)]);
    assert!(mask.drop_entry(0, 4));
    assert!(!mask.drop_entry(0, 4));
    assert!(!mask.is_kept(0, 4));
    assert_eq!(mask.ones(), 5);
}
