//! Generates the default synthetic cohort and cross-validates every model.
//!
//! ```text
//! cargo run --release -p vitalsign-core --example cohort_run [seed]
//! ```

use std::time::Instant;

use vitalsign::evaluation::{cross_validate, Balance, CvConfig};
use vitalsign::imbalance::OversampleConfig;
use vitalsign::models::{ModelKind, ModelSpec};
use vitalsign::pipeline::cohort_features;
use vitalsign::preprocess::PreprocessConfig;
use vitalsign::synth::{default_config, generate_cohort};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(7);
    let start = Instant::now();
    let cfg = default_config();
    let (manifest, records) = generate_cohort(&cfg)?;
    let table = cohort_features(&manifest, &records, &PreprocessConfig::default())?;
    println!(
        "features for {} patients in {:.1?}",
        table.len(),
        start.elapsed()
    );

    let y = table.labels();
    let balance = Balance::Asuwo(OversampleConfig::default());
    let cv = CvConfig {
        seed,
        ..Default::default()
    };
    for kind in ModelKind::ALL {
        let t = Instant::now();
        let r = cross_validate(&table.x, &y, &ModelSpec::default_for(kind), &balance, &cv)?;
        println!(
            "{:<20} P {:.3}  R {:.3}  F1 {:.3}  AUC {:.3}  ({:.1?})",
            kind.name(),
            r.mean_precision,
            r.mean_recall,
            r.mean_f1,
            r.auc,
            t.elapsed()
        );
    }
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
