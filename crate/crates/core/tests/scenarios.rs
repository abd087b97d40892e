mod support;

use silcheck::function::TcId;
use silcheck::scenario::{instantiate_tc, load_scenario, serialize_scenario, TcOverrides};
use support::fixture;

#[test]
fn checked_in_scenarios_match_the_catalog() {
    for tc in TcId::ALL {
        let path = fixture(&format!("scenarios/{}.scn", tc.name()));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let built = instantiate_tc(tc, &TcOverrides::default()).unwrap();
        assert_eq!(
            text,
            serialize_scenario(&built),
            "{tc} drifted; regenerate with `silcheck scenario {tc}`"
        );
        let loaded = load_scenario(&text).unwrap();
        // Only the oncoming car lives outside the ego's drivable lanes.
        assert_eq!(
            loaded.warnings.len(),
            usize::from(tc == TcId::Tc7),
            "{tc}: {:?}",
            loaded.warnings
        );
        assert_eq!(loaded.scenario, built);
    }
}

#[test]
fn malformed_scenarios_are_rejected() {
    let good = std::fs::read_to_string(fixture("scenarios/TC1.scn")).unwrap();
    for bad in [
        good.replace("lane = -3", "lane = left"),
        good.replace("action = hold", "action = teleport"),
        good.replace("agent = cutter", "agent = ghost"),
        good.replace("horizon = 30", "horizon = -1"),
        good.replace("[road]", "[road]\nfriction = 0.7"),
    ] {
        assert!(load_scenario(&bad).is_err(), "accepted:\n{bad}");
    }
}
