use reflect_core::scenario::{ScenarioConfig, BUILTIN_NAMES};

#[test]
fn shipped_scenario_files_match_builtins() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    for name in BUILTIN_NAMES {
        let file = format!("{dir}/{name}.json");
        let loaded = ScenarioConfig::load(&file).unwrap_or_else(|e| panic!("{file}: {e}"));
        let builtin = ScenarioConfig::builtin(name).unwrap();
        assert_eq!(loaded, builtin, "{name}");
        assert_eq!(loaded.hash(), builtin.hash());
    }
}
