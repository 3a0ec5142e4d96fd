use coopdrive::accident::{detect_collisions, footprint, intersects, min_distance, score, AgentPath, CollisionEvent};
use coopdrive::agents::gated_assignment;
use coopdrive::bev::{deformable_attention, BevFeature, DeformableAttnParams};
use coopdrive::fusion::V2xMessage;
use coopdrive::geometry::{warp_bev_with_mask, BevGrid, OrientedBox, Pose2D};
use coopdrive::harness::{generate_scenario, Config, Scenario, Template};
use coopdrive::tensor::{seeded_init, DenseTensor, InitScheme, RngSeed};
use coopdrive::verify::{dense_deformable_attention, exhaustive_assignment, point_box_distance};
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = OrientedBox> {
    (-5.0..5.0f64, -5.0..5.0f64, 0.3..5.0f64, 0.3..2.5f64, -3.2..3.2f64)
        .prop_map(|(x, y, l, w, yaw)| OrientedBox::new(x, y, l, w, yaw))
}

fn arb_pose() -> impl Strategy<Value = Pose2D> {
    (-20.0..20.0f64, -20.0..20.0f64, -3.2..3.2f64).prop_map(|(x, y, yaw)| Pose2D::new(x, y, yaw))
}

fn arb_cost() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (1..6usize, 1..6usize).prop_flat_map(|(r, c)| {
        (prop::collection::vec(prop::collection::vec(0.0..10.0f64, c), r), 0.5..10.0f64)
    })
}

fn event(t: u32, a: u32, b: u32, x: f64, y: f64) -> CollisionEvent {
    CollisionEvent {
        timestamp: t,
        id_a: a,
        id_b: b,
        position: [x, y],
        min_distance: 0.0,
    }
}

fn arb_events() -> impl Strategy<Value = Vec<CollisionEvent>> {
    prop::collection::vec((0..12u32, 0..4u32, 4..8u32, -10.0..10.0f64, -10.0..10.0f64), 0..8)
        .prop_map(|v| v.into_iter().map(|(t, a, b, x, y)| event(t, a, b, x, y)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gated_assignment_matches_exhaustive_search((cost, gate) in arb_cost()) {
        let pairs = gated_assignment(&cost, gate);
        let total: f64 = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
        let (n, best) = exhaustive_assignment(&cost, gate);
        prop_assert_eq!(pairs.len(), n);
        prop_assert!((total - best).abs() <= 1e-9);
        prop_assert!(pairs.iter().all(|&(i, j)| cost[i][j] <= gate));
        let mut cols: Vec<_> = pairs.iter().map(|p| p.1).collect();
        cols.dedup();
        prop_assert_eq!(cols.len(), pairs.len());
    }

    #[test]
    fn footprint_distance_is_rigid_invariant(a in arb_box(), b in arb_box(), t in arb_pose()) {
        let d = min_distance(&footprint(&a).unwrap(), &footprint(&b).unwrap());
        let dt = min_distance(&footprint(&a.transformed(&t)).unwrap(), &footprint(&b.transformed(&t)).unwrap());
        prop_assert!((d - dt).abs() <= 1e-9);
        prop_assert!(d >= 0.0);
        let touching = intersects(&footprint(&a).unwrap(), &footprint(&b).unwrap());
        prop_assert_eq!(touching, d == 0.0);
        // Every corner of b is at least d away from a.
        let pb = footprint(&b).unwrap();
        for p in &pb.vertices {
            prop_assert!(point_box_distance(*p, &a) >= d - 1e-9);
        }
    }

    #[test]
    fn collision_events_move_with_the_scene(
        boxes in prop::collection::vec((arb_box(), -1.0..1.0f64, -1.0..1.0f64), 2..5),
        t in arb_pose(),
    ) {
        let paths: Vec<AgentPath> = boxes.iter().enumerate().map(|(k, (b, vx, vy))| AgentPath {
            id: k as u32,
            boxes: (0..6).map(|s| OrientedBox::new(b.x + vx * s as f64, b.y + vy * s as f64, b.length, b.width, b.yaw)).collect(),
        }).collect();
        let moved: Vec<AgentPath> = paths.iter().map(|p| AgentPath {
            id: p.id,
            boxes: p.boxes.iter().map(|b| b.transformed(&t)).collect(),
        }).collect();
        let e = detect_collisions(&paths, 0.5, 0).unwrap();
        let m = detect_collisions(&moved, 0.5, 0).unwrap();
        prop_assert_eq!(e.len(), m.len());
        for (x, y) in e.iter().zip(&m) {
            prop_assert_eq!((x.timestamp, x.pair()), (y.timestamp, y.pair()));
            let p = x.transformed(&t).position;
            prop_assert!((p[0] - y.position[0]).abs() <= 1e-7 && (p[1] - y.position[1]).abs() <= 1e-7);
        }
    }

    #[test]
    fn score_counts_add_up(pred in arb_events(), gt in arb_events(), tol in 0..3u32, dist in 0.0..20.0f64) {
        let s = score(&pred, &gt, tol, dist);
        prop_assert_eq!(s.true_positives + s.false_positives, pred.len());
        prop_assert_eq!(s.true_positives + s.false_negatives, gt.len());
        prop_assert_eq!(s.matches.len(), s.true_positives);
        let self_score = score(&gt, &gt, 0, 0.0);
        prop_assert_eq!(self_score.true_positives, gt.len());
        for m in &s.matches {
            prop_assert!(m.time_error <= tol && m.position_error <= dist);
            prop_assert_eq!(pred[m.pred].pair(), gt[m.gt].pair());
        }
    }

    #[test]
    fn v2x_message_round_trips(vals in prop::collection::vec(-100.0..100.0f32, 4 * 3 * 2), p in arb_pose(), id in 0..10000u32, ts in 0..100u32) {
        let grid = BevGrid::new(4, 3, 0.5, p).unwrap();
        let data = DenseTensor::new([4, 3, 2], vals.iter().map(|&v| v as f64).collect()).unwrap();
        let feat = BevFeature::new(grid, data, id, ts).unwrap();
        let msg = V2xMessage::from_feature(&feat);
        let back = V2xMessage::decode(&msg.encode()).unwrap();
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(msg.encode().len(), msg.encoded_len());
        prop_assert_eq!(back.to_feature().unwrap(), feat);
    }

    #[test]
    fn integer_shift_warp_moves_cells(vals in prop::collection::vec(-1.0..1.0f64, 9 * 9), di in -3..4i32, dj in -3..4i32) {
        let grid = BevGrid::new(9, 9, 1.0, Pose2D::default()).unwrap();
        let feat = BevFeature::new(grid, DenseTensor::new([9, 9, 1], vals.clone()).unwrap(), 0, 0).unwrap();
        // Moving content by (dj, di) cells along +x, +y.
        let (out, mask) = warp_bev_with_mask(&feat, &Pose2D::new(dj as f64, di as f64, 0.0));
        for i in 0..9i32 {
            for j in 0..9i32 {
                let (si, sj) = (i - di, j - dj);
                let k = (i * 9 + j) as usize;
                if (0..9).contains(&si) && (0..9).contains(&sj) {
                    prop_assert_eq!(mask[k], 1.0);
                    prop_assert_eq!(out.data.data()[k], vals[(si * 9 + sj) as usize]);
                } else {
                    prop_assert_eq!(mask[k], 0.0);
                    prop_assert_eq!(out.data.data()[k], 0.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deformable_attention_matches_dense_form(seed in 0..u64::MAX, heads in 1..3usize, points in 1..4usize) {
        let c = 4;
        let params = DeformableAttnParams::seeded(c, heads, 2, points, RngSeed(seed)).unwrap();
        let maps = [
            seeded_init(&[4, 5, c], RngSeed(seed).derive("m0"), InitScheme::Uniform(1.0)).unwrap(),
            seeded_init(&[3, 3, c], RngSeed(seed).derive("m1"), InitScheme::Uniform(1.0)).unwrap(),
        ];
        let q = seeded_init(&[5, c], RngSeed(seed).derive("q"), InitScheme::Uniform(2.0)).unwrap();
        let refs: Vec<[f64; 2]> = (0..10)
            .map(|k| {
                let u = RngSeed(seed).derive("r").unit(k);
                let v = RngSeed(seed).derive("r").unit(k + 100);
                [u * 4.0 - 0.5, v * 5.0 - 0.5]
            })
            .collect();
        let fast = deformable_attention(&q, &[&maps[0], &maps[1]], &refs, &params).unwrap();
        let dense = dense_deformable_attention(&q, &[&maps[0], &maps[1]], &refs, &params).unwrap();
        prop_assert!(fast.max_abs() > 1e-3);
        prop_assert!(fast.sub(&dense).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn generated_scenarios_round_trip_and_keep_contracts(seed in 0..10_000u64, k in 0..6usize) {
        let cfg = Config::default();
        let t = Template::ALL[k];
        let s = generate_scenario(seed, t, &cfg).unwrap();
        prop_assert_eq!(Scenario::parse(&s.to_toml()).unwrap(), s.clone());
        prop_assert_eq!(generate_scenario(seed, t, &cfg).unwrap(), s.clone());
        prop_assert_eq!(s.ground_truth_events(cfg.accident.threshold).unwrap().len(), t.expected_collisions());
        prop_assert_eq!(t.name().parse::<Template>().unwrap(), t);
    }

    #[test]
    fn configs_round_trip(threshold in 0.05..3.0f64, v2x in any::<bool>(), frames in 4..30usize) {
        let mut cfg = Config::default();
        cfg.accident.threshold = threshold;
        cfg.run.v2x = v2x;
        cfg.scenario.frames = frames;
        let back = Config::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
