use proptest::prelude::*;

use silcheck::episode::{run_closed_loop, ScriptedController};
use silcheck::function::TcId;
use silcheck::orchestrator::compute_pass_at_k;
use silcheck::protocol::{
    decode_control, decode_observation, encode_control, encode_observation_msg, ControlRequest, Observation,
};
use silcheck::scenario::{instantiate_tc, load_scenario, serialize_scenario, TcOverrides};
use silcheck::sim::{detect_collision, footprints_overlap, step_world, RoadSpec, VehicleState, WorldState, DT};

fn request() -> impl Strategy<Value = ControlRequest> {
    (any::<bool>(), proptest::option::of(-5.0..60.0f64), -1..=1i32).prop_map(|(brake, target_speed, switch_lane)| {
        ControlRequest {
            brake,
            target_speed,
            switch_lane,
        }
    })
}

fn vehicle(id: usize) -> impl Strategy<Value = VehicleState> {
    (-200.0..200.0f64, -4..=-2i32, 0.0..45.0f64, any::<bool>(), -8.0..3.0f64).prop_map(
        move |(s, lane, speed, oncoming, accel)| {
            let mut v = VehicleState::new(format!("v{id}"), s, lane, speed);
            v.oncoming = oncoming && id > 0;
            v.script_accel = accel;
            v
        },
    )
}

fn world() -> impl Strategy<Value = WorldState> {
    (vehicle(0), vehicle(1), vehicle(2))
        .prop_map(|(a, b, c)| WorldState::new(vec![a, b, c], RoadSpec::highway(), DT).unwrap())
}

fn roll(mut w: WorldState, requests: &[ControlRequest]) -> Vec<WorldState> {
    let mut out = Vec::with_capacity(requests.len());
    for r in requests {
        w = step_world(&w, r, DT);
        out.push(w.clone());
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-7
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn stepping_is_deterministic(w in world(), reqs in prop::collection::vec(request(), 1..120)) {
        prop_assert_eq!(roll(w.clone(), &reqs), roll(w, &reqs));
    }

    #[test]
    fn speeds_stay_non_negative(w in world(), reqs in prop::collection::vec(request(), 1..200)) {
        for state in roll(w, &reqs) {
            for v in &state.vehicles {
                prop_assert!(v.speed >= 0.0 && v.speed.is_finite(), "{} speed {}", v.id, v.speed);
            }
        }
    }

    #[test]
    fn overlap_is_symmetric(w in world()) {
        let road = &w.road;
        for a in &w.vehicles {
            for b in &w.vehicles {
                prop_assert_eq!(footprints_overlap(a, b, road), footprints_overlap(b, a, road));
            }
        }
        let mut reversed = w.clone();
        reversed.vehicles.reverse();
        prop_assert_eq!(detect_collision(&w).len(), detect_collision(&reversed).len());
    }

    #[test]
    fn lane_requests_compound(dirs in prop::collection::vec(prop_oneof![Just(-1), Just(1)], 1..6),
                              gaps in prop::collection::vec(0usize..50, 6)) {
        let mut w = WorldState::new(vec![VehicleState::new("ego", 0.0, -3, 20.0)], RoadSpec::highway(), DT).unwrap();
        for (dir, gap) in dirs.iter().zip(&gaps) {
            w = step_world(&w, &ControlRequest { switch_lane: *dir, ..ControlRequest::default() }, DT);
            for _ in 0..*gap {
                w = step_world(&w, &ControlRequest::default(), DT);
            }
        }
        for _ in 0..1000 {
            if w.ego().lane_change.is_none() {
                break;
            }
            w = step_world(&w, &ControlRequest::default(), DT);
        }
        let ego = w.ego();
        prop_assert!(ego.lane_change.is_none());
        prop_assert_eq!(ego.lane_id, -3 + dirs.iter().sum::<i32>());
        prop_assert!(ego.lat_offset.abs() < 1e-9);
    }

    #[test]
    fn control_round_trips(req in request()) {
        let (back, touched) = decode_control(encode_control(&req).as_bytes()).unwrap();
        prop_assert_eq!(back.brake, req.brake);
        prop_assert_eq!(back.switch_lane, req.switch_lane);
        prop_assert_eq!(back.target_speed.is_some(), req.target_speed.is_some());
        if let (Some(a), Some(b)) = (back.target_speed, req.target_speed) {
            prop_assert!(close(a, b));
        }
        prop_assert_eq!(touched, back.touched());
    }

    #[test]
    fn observation_round_trips(w in world(), steps in 0usize..60) {
        let w = roll(w.clone(), &vec![ControlRequest::default(); steps]).pop().unwrap_or(w);
        let obs = Observation::from_world(&w, "v0").unwrap();
        let line = encode_observation_msg(&obs);
        prop_assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        let back = decode_observation(&line).unwrap();
        prop_assert!(close(back.t, obs.t));
        prop_assert!(close(back.ego.s, obs.ego.s) && close(back.ego.speed, obs.ego.speed));
        prop_assert_eq!(back.others.len(), obs.others.len());
        for (a, b) in back.others.iter().zip(&obs.others) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert!(close(a.s, b.s) && close(a.speed, b.speed) && close(a.lat_offset, b.lat_offset));
        }
        prop_assert_eq!(encode_observation_msg(&back), line);
    }

    #[test]
    fn pass_at_k_is_monotone(n in 1u64..60, c_frac in 0.0..=1.0f64, k_frac in 0.0..=1.0f64) {
        let c = (c_frac * n as f64).floor() as u64;
        let k = 1 + (k_frac * (n - 1) as f64).floor() as u64;
        let p = compute_pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if k < n {
            prop_assert!(compute_pass_at_k(n, c, k + 1).unwrap() >= p - 1e-12);
        }
        if c < n {
            prop_assert!(compute_pass_at_k(n, c + 1, k).unwrap() >= p - 1e-12);
        }
    }

    #[test]
    fn scenarios_survive_serialization(tc in 0usize..TcId::ALL.len(), kph in 60.0..130.0f64) {
        let overrides = TcOverrides { ego_speed: Some(kph / 3.6), ..TcOverrides::default() };
        let Ok(sc) = instantiate_tc(TcId::ALL[tc], &overrides) else { return Ok(()) };
        let text = serialize_scenario(&sc);
        let loaded = load_scenario(&text).unwrap();
        prop_assert_eq!(serialize_scenario(&loaded.scenario), text);
        let passive = |sc| run_closed_loop(sc, &mut ScriptedController::new(|_: &Observation| ControlRequest::default()));
        prop_assert_eq!(passive(&sc).terminal, passive(&loaded.scenario).terminal);
    }
}
