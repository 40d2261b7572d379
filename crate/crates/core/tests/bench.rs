use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajex::bench::{
    random_baseline, rank_cost_curve, run_scenario, run_suite, segmentation_metrics,
    single_agent_record, spearman, topk_collision_rate, topk_single, SuiteConfig,
};
use trajex::config::{overlay, to_toml};
use trajex::exchange::{argsort, FusedRanking, Network, SENTINEL_SCORE};
use trajex::grid::Raster;
use trajex::sim::{sample_scenario, SensorConfig, Template};
use trajex::trajectory::{generate_dictionary, DictionaryConfig};
use trajex::Error;

fn ranking(scores: Vec<f64>) -> FusedRanking {
    FusedRanking {
        order: argsort(&scores),
        scores,
        contributing_agents: vec![0],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn topk_counts_hits_among_the_k_best(scores in proptest::collection::vec(0.0f64..10.0, 1..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = scores.len();
        let collided: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let r = ranking(scores.clone());
        let k = rng.gen_range(1..=n);
        // Oracle: repeatedly pull the smallest remaining score, lowest index first.
        let mut left: Vec<usize> = (0..n).collect();
        let mut hits = 0;
        for _ in 0..k {
            let pos = (0..left.len())
                .min_by(|&a, &b| scores[left[a]].total_cmp(&scores[left[b]]).then(left[a].cmp(&left[b])))
                .unwrap();
            hits += collided[left.remove(pos)] as usize;
        }
        let got = topk_single(&r, &collided, k).unwrap();
        prop_assert!((got - hits as f64 / k as f64).abs() < 1e-12);
        prop_assert!((topk_single(&r, &collided, n).unwrap() - random_baseline(&collided)).abs() < 1e-12);
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(x in proptest::collection::vec(-5.0f64..5.0, 2..30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = x.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(rho) = spearman(&x, &y) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
            prop_assert!((spearman(&y, &x).unwrap() - rho).abs() < 1e-12);
        }
        let monotone: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
        if let Some(rho) = spearman(&x, &monotone) {
            prop_assert!((rho - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn spearman_handles_ties_like_the_textbook() {
    // Average ranks: x -> [0.5, 0.5, 2, 3], y -> [0, 1, 2, 3]; Pearson on those.
    let rho = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let (rx, ry) = ([0.5, 0.5, 2.0, 3.0], [0.0, 1.0, 2.0, 3.0]);
    let (mx, my) = (1.5, 1.5);
    let sxy: f64 = rx.iter().zip(ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    assert!((rho - sxy / (sxx * syy).sqrt()).abs() < 1e-12);
    assert!(spearman(&[1.0, 1.0], &[0.0, 1.0]).is_none());
}

#[test]
fn metrics_validate_their_inputs() {
    let r = ranking(vec![0.0, 1.0]);
    assert!(matches!(
        topk_single(&r, &[false, true], 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        topk_single(&r, &[false, true], 3),
        Err(Error::Config(_))
    ));
    assert!(matches!(topk_single(&r, &[false], 1), Err(Error::Shape(_))));
    assert!(topk_collision_rate(std::slice::from_ref(&r), &[], 1).is_err());
    assert_eq!(topk_collision_rate(&[], &[], 1).unwrap(), 0.0);
}

#[test]
fn rank_curve_skips_sentinels_in_the_mean() {
    let rs = [ranking(vec![1.0, SENTINEL_SCORE]), ranking(vec![3.0, 2.0])];
    let curve = rank_cost_curve(&rs, &[vec![false, true], vec![true, false]]).unwrap();
    assert_eq!(curve[0].mean_score, Some(1.5));
    assert_eq!(curve[0].collision_frequency, 0.0);
    assert_eq!(curve[1].mean_score, Some(3.0));
    assert_eq!(curve[1].collision_frequency, 1.0);
}

#[test]
fn segmentation_counts_match_hand_tally() {
    let pred = Raster::from_vec(4, 1, vec![0u8, 2, 2, 1]).unwrap();
    let truth = Raster::from_vec(4, 1, vec![0u8, 2, 0, 0]).unwrap();
    let c = segmentation_metrics(&pred, &truth, None).unwrap();
    assert_eq!(c.accuracy(), Some(0.5));
    assert_eq!(c.iou(0), Some(1.0 / 3.0));
    assert_eq!(c.iou(2), Some(0.5));
    assert_eq!(c.iou(1), Some(0.0));
    let mask = Raster::from_vec(4, 1, vec![true, true, false, false]).unwrap();
    let m = segmentation_metrics(&pred, &truth, Some(&mask)).unwrap();
    assert_eq!(m.accuracy(), Some(1.0));
    assert_eq!(m.miou(), Some(1.0));
}

fn small_config() -> SuiteConfig {
    SuiteConfig {
        n_agents: 8,
        n_com: vec![1, 3],
        n_scenarios: 2,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn single_ego_suite_equals_direct_pipeline() {
    let cfg = small_config();
    let sensor = SensorConfig::default();
    let dict = Arc::new(generate_dictionary(&DictionaryConfig::default()).unwrap());
    for seed in cfg.scenario_seeds() {
        let s = Arc::new(sample_scenario(cfg.template, cfg.n_agents, 1, seed).unwrap());
        let records = run_scenario(&s, &cfg, &sensor, &dict, &Network::default()).unwrap();
        let solo: Vec<_> = records.iter().filter(|r| r.n_com == 1).collect();
        assert_eq!(solo.len(), 1);
        let direct = single_agent_record(&s, solo[0].ego, &cfg, &sensor, &dict).unwrap();
        assert_eq!(
            serde_json::to_string(solo[0]).unwrap(),
            serde_json::to_string(&direct).unwrap()
        );
        assert_eq!(solo[0].bytes_exchanged, 0);
        // Every other communicating agent answers each ego at n_com = 3.
        for r in records.iter().filter(|r| r.n_com == 3) {
            assert_eq!(r.responders.len(), 3);
            assert_eq!(r.bytes_exchanged, 2 * (29 + 10_810));
        }
    }
}

#[test]
fn suite_is_deterministic_and_summarized() {
    let cfg = small_config();
    let a = run_suite(&cfg).unwrap();
    let b = run_suite(&cfg).unwrap();
    assert_eq!(a.jsonl().unwrap(), b.jsonl().unwrap());
    assert_eq!(a.records.len(), 2 * (1 + 3));
    let g = &a.summary.by_n_com[&3];
    assert_eq!(g.n_records, 6);
    assert_eq!(g.rank_curve.len(), 80);
    assert!(a.summary.failed_seeds.is_empty());
    let seg = &g.segmentation;
    assert_eq!(seg.len(), cfg.forecast_horizon);
    assert!(seg
        .iter()
        .all(|s| s.accuracy.is_some_and(|a| (0.0..=1.0).contains(&a))));
}

#[test]
fn config_file_overrides_flags() {
    let flags = SuiteConfig {
        n_scenarios: 50,
        template: Template::BlindCorner,
        ..Default::default()
    };
    let cfg = overlay(&flags, "n_scenarios = 4\nforecaster = \"oracle\"\n").unwrap();
    assert_eq!(cfg.n_scenarios, 4);
    assert_eq!(cfg.template, Template::BlindCorner);
    assert_eq!(overlay(&cfg, &to_toml(&cfg).unwrap()).unwrap(), cfg);
    assert!(matches!(
        overlay(&flags, "n_com = [21]"),
        Err(Error::Config(_))
    ));
}
