use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajex::forecast::{cv_baseline_forecast, oracle_forecast, ForecastInput, ObservedFrame};
use trajex::geometry::Pose2;
use trajex::grid::{GridSpec, Raster, CLASS_ALLO, CLASS_EGO, CLASS_NULL};
use trajex::sim::{ground_truth_labels, sample_scenario, visibility_mask, SensorConfig, Template};

fn blobs(rng: &mut impl Rng, w: usize, h: usize, n: usize) -> Raster<u8> {
    let mut r = Raster::filled(w, h, CLASS_NULL as u8);
    for k in 0..n {
        let class = if k == 0 { CLASS_EGO } else { CLASS_ALLO } as u8;
        let (x0, y0) = (rng.gen_range(0..w - 4), rng.gen_range(0..h - 4));
        let (bw, bh) = (rng.gen_range(1..4), rng.gen_range(1..4));
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                r.set(x, y, class);
            }
        }
    }
    r
}

fn input(spec: GridSpec, frames: Vec<Raster<u8>>, horizon: usize) -> ForecastInput {
    ForecastInput {
        spec,
        horizon,
        frame_period: 0.5,
        history: frames
            .into_iter()
            .map(|labels| ObservedFrame {
                labels,
                pose: Pose2::identity(),
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cv_forecast_stays_on_the_simplex(seed in any::<u64>(), n in 1usize..6, horizon in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::centered(32, 24, 0.5).unwrap();
        let frames = vec![blobs(&mut rng, 32, 24, n), blobs(&mut rng, 32, 24, n)];
        let f = cv_baseline_forecast(&input(spec, frames, horizon), 0.4, 0.3).unwrap();
        prop_assert_eq!(f.horizon(), horizon);
        for plane in f.steps() {
            for p in plane.data() {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn still_scene_keeps_its_argmax(seed in any::<u64>(), n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::centered(32, 32, 0.5).unwrap();
        let frame = blobs(&mut rng, 32, 32, n);
        let f = cv_baseline_forecast(&input(spec, vec![frame.clone(), frame], 4), 0.4, 0.3).unwrap();
        for t in 1..4 {
            prop_assert_eq!(f.argmax(t).unwrap(), f.argmax(t + 1).unwrap());
        }
    }
}

#[test]
fn cv_forecast_rejects_bad_inputs() {
    let spec = GridSpec::centered(8, 8, 0.5).unwrap();
    let one = Raster::filled(8, 8, 0u8);
    assert!(cv_baseline_forecast(&input(spec, vec![one.clone()], 3), 0.4, 0.3).is_err());
    assert!(
        cv_baseline_forecast(&input(spec, vec![one.clone(), one.clone()], 0), 0.4, 0.3).is_err()
    );
    let wrong = Raster::filled(7, 8, 0u8);
    assert!(cv_baseline_forecast(&input(spec, vec![one, wrong], 3), 0.4, 0.3).is_err());
}

#[test]
fn oracle_matches_ground_truth_where_visible() {
    let sensor = SensorConfig::default();
    let s = sample_scenario(Template::CrissCross, 20, 1, 9).unwrap();
    for agent in [0, 7] {
        let t0 = 10;
        let f = oracle_forecast(&s, agent, t0, 5, &sensor).unwrap();
        let mask = visibility_mask(&s, agent, t0, &sensor).unwrap();
        for t in 1..=5 {
            let truth = ground_truth_labels(&s, agent, t0, t0 + t, &sensor).unwrap();
            let pred = f.argmax(t).unwrap();
            for i in 0..mask.data().len() {
                if mask.data()[i] {
                    assert_eq!(pred.data()[i], truth.data()[i]);
                } else {
                    assert_eq!(pred.data()[i], CLASS_NULL as u8);
                }
            }
        }
    }
    assert!(oracle_forecast(&s, 0, 55, 5, &sensor).is_err());
}
