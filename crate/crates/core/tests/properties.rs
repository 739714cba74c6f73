use lanecrit_core::detect::{classify_double, detect, Criterion, DetectionParams, Direction};
use lanecrit_core::io::{read_events, read_trajectories, write_events, write_trajectories};
use lanecrit_core::metrics::{euclidean_distance, ttce_dce, ObjectState, Thresholds};
use lanecrit_core::perturb::Perturbation;
use lanecrit_core::pipeline::{detect_events, Preprocess};
use lanecrit_core::synth::{generate_corpus, scripted, ScriptedChange, SynthConfig};
use lanecrit_core::traj::{LaneLayout, VehicleClass, VehicleShape};
use lanecrit_core::w99::{w99_accel, Leader, W99Params};
use proptest::prelude::*;

fn object() -> impl Strategy<Value = ObjectState> {
    (
        -200.0..200.0f64,
        -10.0..10.0f64,
        0.0..45.0f64,
        -3.0..3.0f64,
        3.5..18.0f64,
        1.5..2.6f64,
    )
        .prop_map(|(s, y, vx, vy, length, width)| ObjectState {
            s,
            y,
            vx,
            vy,
            length,
            width,
        })
}

fn shape() -> impl Strategy<Value = VehicleShape> {
    prop_oneof![
        Just(VehicleShape::car()),
        Just(VehicleShape::new(16.0, 2.5, VehicleClass::Truck).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric_and_non_negative(a in object(), b in object()) {
        let d = euclidean_distance(&a, &b);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, euclidean_distance(&b, &a));
    }

    // The encounter time minimizes the center distance, so only for point
    // shapes is the footprint gap at that time bounded by the current one.
    #[test]
    fn closest_encounter_never_exceeds_current_distance(a in object(), b in object()) {
        let point = |o: ObjectState| ObjectState { length: 0.0, width: 0.0, ..o };
        let (a, b) = (point(a), point(b));
        let (ttce, dce) = ttce_dce(&a, &b);
        prop_assert!(ttce >= 0.0);
        prop_assert!(dce >= 0.0);
        prop_assert!(dce <= euclidean_distance(&a, &b) + 1e-9);
    }

    #[test]
    fn closest_encounter_is_symmetric(a in object(), b in object()) {
        let (t_ab, d_ab) = ttce_dce(&a, &b);
        let (t_ba, d_ba) = ttce_dce(&b, &a);
        prop_assert!((t_ab - t_ba).abs() <= 1e-9 * (1.0 + t_ab));
        prop_assert!((d_ab - d_ba).abs() <= 1e-9 * (1.0 + d_ab));
    }

    #[test]
    fn smaller_headway_stays_critical(x in 0.0..5.0f64, dx in 0.0..5.0f64) {
        let th = Thresholds::default();
        if th.thw_critical(x) {
            prop_assert!(th.thw_critical(x - dx));
        }
        if !th.thw_critical(x) {
            prop_assert!(!th.thw_critical(x + dx));
        }
    }

    #[test]
    fn dce_never_counts_outside_the_gate(dce in 0.0..5.0f64, ttce in 2.6..100.0f64) {
        prop_assert!(!Thresholds::default().dce_critical(dce, ttce));
    }

    #[test]
    fn peak_events_ignore_constant_bias(
        shape in shape(),
        t_mid in 15.0..45.0f64,
        duration in 3.0..10.0f64,
        left in any::<bool>(),
        bias in 0.0..1.5f64,
    ) {
        let layout = LaneLayout::default();
        let direction = if left { Direction::Left } else { Direction::Right };
        let traj = scripted(7, shape, &layout, 25.0, 60.0, 0.0, 30.0, 1, &[ScriptedChange { t_mid, duration, direction }])
            .unwrap();
        let pre = Preprocess::default();
        let params = DetectionParams::default();
        let run = |p: Option<&Perturbation>| {
            let ready = pre.run(&traj, &layout, p).unwrap();
            classify_double(&detect(Criterion::Peak, &ready, &layout, &params).unwrap(), &layout)
        };
        let clean = run(None);
        prop_assert_eq!(clean.len(), 1);
        prop_assert_eq!(clean, run(Some(&Perturbation::bias(bias))));
    }

    #[test]
    fn w99_acceleration_stays_bounded(
        v in 0.0..45.0f64,
        a_prev in -3.0..3.0f64,
        gap in 0.5..300.0f64,
        v_lead in 0.0..45.0f64,
    ) {
        let p = W99Params::default();
        let leader = Leader { gap, v: v_lead, a: 0.0 };
        let a = w99_accel(v, a_prev, Some(&leader), &p);
        prop_assert!(a.is_finite());
        prop_assert!(a <= p.a_max_out() + 1e-12);
    }

    #[test]
    fn trajectory_csv_round_trips_bit_exactly(seed in any::<u64>()) {
        let cfg = SynthConfig { vehicles_per_recording: 3, ..Default::default() };
        let corpus = generate_corpus(&cfg, 3, seed).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &corpus.trajectories).unwrap();
        let back = read_trajectories(buf.as_slice(), "mem").unwrap();
        prop_assert!(back.report.rejected_rows.is_empty());
        prop_assert_eq!(back.trajectories, corpus.trajectories);
    }
}

#[test]
fn corpus_and_noise_are_deterministic() {
    let cfg = SynthConfig::default();
    let a = generate_corpus(&cfg, 20, 9).unwrap();
    let b = generate_corpus(&cfg, 20, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.trajectories, generate_corpus(&cfg, 20, 10).unwrap().trajectories);
    let p = Perturbation::brownian(0.02, 5);
    let t = &a.trajectories[0];
    assert_eq!(p.apply(t).unwrap(), p.apply(t).unwrap());
}

#[test]
fn events_csv_round_trips() {
    let cfg = SynthConfig::default();
    let corpus = generate_corpus(&cfg, 20, 3).unwrap();
    let layout = LaneLayout::default();
    let mut events = Vec::new();
    for traj in &corpus.trajectories {
        for c in [Criterion::Gradient, Criterion::Distance, Criterion::Peak] {
            events
                .extend(detect_events(traj, c, &layout, &Preprocess::default(), &DetectionParams::default()).unwrap());
        }
    }
    assert!(!events.is_empty());
    let mut buf = Vec::new();
    write_events(&mut buf, &events).unwrap();
    assert_eq!(read_events(buf.as_slice(), "mem").unwrap(), events);
}
