//! Cleaning a fault-injected synthetic corpus and comparing what was removed
//! with the generator's labels.

use std::collections::HashSet;

use serp_audit::cleanse::{self, CleanConfig};
use serp_audit::ingest::Dataset;
use serp_audit::synth::{self, CohortSpec, FaultRates, Outcome, RecordId};

fn main() -> serp_audit::Result<()> {
    let spec = CohortSpec {
        n_donors: 60,
        keys: Some((0..4).collect()),
        faults: FaultRates {
            duplicate_id: 0.05,
            repeated_url_list: 0.05,
            oversize_list: 0.05,
            redirect_stub: 0.05,
            foreign_list: 0.05,
            off_schedule: 0.05,
        },
        ..Default::default()
    };
    let cohort = synth::generate(&spec)?;
    println!("generated {} records, {} labeled faults", cohort.records.len(), cohort.truth.faults.len());

    let (kept, report) = cleanse::clean_records(
        Dataset::from_records(cohort.records.clone()),
        &CleanConfig::default(),
        &cohort.languages,
    )?;
    println!("{}", report.to_text());

    let kept_ids: HashSet<RecordId> = kept.iter().map(RecordId::of).collect();
    let labels = cohort.truth.fault_map();
    let mut missed = 0;
    let mut wrongly_removed = 0;
    for r in &cohort.records {
        let id = RecordId::of(r);
        let should_keep = labels.get(&id).is_none_or(|k| k.outcome() == Outcome::Repaired);
        match (should_keep, kept_ids.contains(&id)) {
            (false, true) => missed += 1,
            (true, false) => wrongly_removed += 1,
            _ => {}
        }
    }
    println!("faulty records kept: {missed}; clean records removed: {wrongly_removed}");
    Ok(())
}
