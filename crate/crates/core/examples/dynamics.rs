//! Daily series: share of lists with top stories, distinct hosts per search
//! time, and the share of party-editable results.

use serp_audit::cleanse::{self, CleanConfig};
use serp_audit::dynamics::{self, Scope};
use serp_audit::ingest::Dataset;
use serp_audit::model::{SearchTerm, SearchType, Segment};
use serp_audit::synth::{self, CohortSpec};

fn main() -> serp_audit::Result<()> {
    let spec = CohortSpec {
        n_donors: 40,
        terms: vec![SearchTerm::Merkel, SearchTerm::Schulz],
        keys: Some((0..12).collect()),
        personalization_swaps: 2,
        ..Default::default()
    };
    let cohort = synth::generate(&spec)?;
    let (lists, _) = cleanse::run_pipeline(
        Dataset::from_records(cohort.records),
        &CleanConfig::default(),
        &cohort.languages,
    )?;
    let series = [
        dynamics::topstory_share(&lists, Scope::Term(SearchTerm::Merkel)),
        dynamics::topstory_share(&lists, Scope::All),
    ];
    print!("{}", dynamics::series_table("topstory_share", &series).to_text());
    let distinct = dynamics::distinct_tld_count(&lists, Scope::All, SearchType::GoogleSearch, Segment::Organic);
    println!("\ndistinct organic hosts per search time: {:?}", distinct.values().collect::<Vec<_>>());
    let editable = dynamics::editable_share_series(&lists, Scope::All, SearchType::GoogleSearch, Segment::Organic, &cohort.categories);
    println!("editable share, first search time: {:?}", editable.points.first());
    Ok(())
}
