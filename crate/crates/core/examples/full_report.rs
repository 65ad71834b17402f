//! Every stage from records to the text report, in memory. Pass a directory
//! as the first argument to also write the artifacts and the manifest.

use std::path::PathBuf;

use serp_audit::ingest::Dataset;
use serp_audit::run::{self, RunConfig, Tables};
use serp_audit::synth::{self, CohortSpec, FaultRates};

fn main() -> serp_audit::Result<()> {
    let spec = CohortSpec {
        n_donors: 80,
        keys: Some((0..6).collect()),
        personalization_swaps: 2,
        include_news: true,
        faults: FaultRates { duplicate_id: 0.05, oversize_list: 0.05, ..Default::default() },
        ..Default::default()
    };
    let cohort = synth::generate(&spec)?;
    let cfg = RunConfig::default();
    let tables = Tables {
        languages: Some(cohort.languages.clone()),
        categories: cohort.categories.clone(),
        gazetteer: Some(cohort.gazetteer.clone()),
        points: Some(synth::synthetic_reach_points(100, &spec.reach, 1)),
        ..Default::default()
    };
    let artifacts = run::run_full(&cfg, &tables, Dataset::from_records(cohort.records), &Default::default())?;
    print!("{}", String::from_utf8_lossy(&artifacts["report.txt"]));
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        let manifest = run::Manifest::new("report", &cfg, vec![], vec![], &artifacts);
        run::write_artifacts(&dir, &artifacts, &manifest)?;
        println!("wrote {} artifacts to {}", artifacts.len(), dir.display());
    }
    Ok(())
}
