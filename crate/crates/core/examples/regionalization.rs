//! Regional branch sites inflate the number of non-shared links. Removing
//! hosts that carry a place name brings it back to the personalized part.

use std::collections::BTreeSet;

use serp_audit::cleanse::{self, CleanConfig};
use serp_audit::ingest::Dataset;
use serp_audit::model::{extract_tld, SearchType};
use serp_audit::overlap;
use serp_audit::regional;
use serp_audit::synth::{self, CohortSpec, RegionalSpec};

fn main() -> serp_audit::Result<()> {
    let spec = CohortSpec {
        n_donors: 200,
        personalization_swaps: 1,
        regional: Some(RegionalSpec {
            n_regions: 40,
            branch_urls: 2,
            donors_per_region: 5,
        }),
        keys: Some((0..3).collect()),
        ..Default::default()
    };
    let cohort = synth::generate(&spec)?;
    let (lists, _) = cleanse::run_pipeline(
        Dataset::from_records(cohort.records),
        &CleanConfig::default(),
        &cohort.languages,
    )?;
    let groups = overlap::build_groups(&lists, SearchType::GoogleSearch, false);
    let hosts: BTreeSet<String> = groups
        .iter()
        .flat_map(|g| g.urls.iter())
        .filter_map(|u| extract_tld(u).ok().map(|h| h.as_str().to_string()))
        .collect();
    let tags = regional::tag_regional(hosts.iter().map(String::as_str), &cohort.gazetteer, &cohort.categories);
    println!("{} hosts tagged regional, e.g. {:?}", tags.regional.len(), tags.regional.keys().next());
    let rows = regional::refine_by_term(&groups, &tags);
    print!("{}", regional::refinement_table(&rows).to_text());
    Ok(())
}
