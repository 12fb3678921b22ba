//! Regenerates `fixtures/` from the builders in `tinydeploy::zoo` and prints
//! a summary of every model on every profile.
//!
//! ```text
//! cargo run -p tinydeploy --example gen_fixtures [-- <out-dir>]
//! ```

use std::path::PathBuf;

use tinydeploy::graph::{count_macs, count_params, model_file};
use tinydeploy::planner::{plan_graph, Precision, KIB};
use tinydeploy::profile::profile_to_json;
use tinydeploy::zoo;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    std::fs::create_dir_all(root.join("models"))?;
    std::fs::create_dir_all(root.join("profiles"))?;

    let models = zoo::model_fixtures();
    let profiles = zoo::profile_fixtures();
    for (stem, g) in &models {
        model_file::write_model(g, root.join("models").join(format!("{stem}.json")))?;
    }
    for (stem, p) in &profiles {
        std::fs::write(root.join("profiles").join(format!("{stem}.json")), profile_to_json(p))?;
    }
    let anchors = serde_json::to_string_pretty(&zoo::ssdlite_anchor_spec())? + "\n";
    std::fs::write(root.join("models").join("ssdlite_mnv3_320x240.anchors.json"), anchors)?;

    for (stem, g) in &models {
        let macs = count_macs(g)?.total as f64 / 1e6;
        let params = count_params(g)?.total;
        println!("{stem}: {params} params, {macs:.3} MMAC");
        for (pname, p) in &profiles {
            for precision in [Precision::I8, Precision::F16, Precision::F32] {
                let plan = plan_graph(g, precision, p)?;
                println!(
                    "  {pname} {precision}: peak {:.1} KB at {} -> {:?}",
                    plan.peak_bytes as f64 / KIB as f64,
                    plan.peak_layer_id,
                    plan.verdict
                );
            }
        }
    }
    Ok(())
}
