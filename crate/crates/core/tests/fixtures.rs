//! The files under `fixtures/` are exactly what the zoo builders produce.

mod common;

use tinydeploy::graph::model_file::{load_model, model_to_json};
use tinydeploy::graph::{count_macs, count_params};
use tinydeploy::profile::{profile_to_json, read_profile};
use tinydeploy::zoo;

#[test]
fn model_files_match_builders() {
    for (stem, graph) in zoo::model_fixtures() {
        let on_disk = common::read_fixture(&format!("models/{stem}.json"));
        assert_eq!(on_disk, model_to_json(&graph), "{stem} is stale; rerun the gen_fixtures example");
    }
}

#[test]
fn profile_files_match_builders() {
    for (stem, profile) in zoo::profile_fixtures() {
        let on_disk = common::read_fixture(&format!("profiles/{stem}.json"));
        assert_eq!(on_disk, profile_to_json(&profile), "{stem} is stale; rerun the gen_fixtures example");
    }
}

#[test]
fn anchor_file_matches_builder() {
    let on_disk = common::read_fixture("models/ssdlite_mnv3_320x240.anchors.json");
    let built = serde_json::to_string_pretty(&zoo::ssdlite_anchor_spec()).unwrap() + "\n";
    assert_eq!(on_disk, built);
}

#[test]
fn fixtures_load_through_the_public_readers() {
    let dir = common::fixture_dir();
    for (stem, _) in zoo::model_fixtures() {
        let g = load_model(dir.join(format!("models/{stem}.json"))).unwrap();
        assert!(count_macs(&g).unwrap().total > 0);
        assert!(count_params(&g).unwrap().total > 0);
    }
    for (stem, _) in zoo::profile_fixtures() {
        read_profile(dir.join(format!("profiles/{stem}.json"))).unwrap();
    }
}
