//! Host extraction and classification: categories from a table, the top
//! hosts per term, and the editable share.

use serp_audit::catalog::{self, CategoryTable};
use serp_audit::model::{extract_tld, ResultList, SearchTerm, SearchType, Segment};
use serp_audit::synth::{self, CohortSpec};

fn main() -> serp_audit::Result<()> {
    for u in ["https://WWW.Spd.de/partei/", "http://user@de.wikipedia.org:80/wiki/FDP", "https://twitter.com/spdde"] {
        println!("{u} -> {}", extract_tld(u)?);
    }

    let cohort = synth::generate(&CohortSpec {
        n_donors: 30,
        keys: Some(vec![0, 1]),
        personalization_swaps: 3,
        ..Default::default()
    })?;
    let table: &CategoryTable = &cohort.categories;
    for h in ["www.spd.de", "de.wikipedia.org", "unknown.example"] {
        println!("{h}: {:?}", catalog::classify(h, table));
    }
    let lists: Vec<ResultList> = cohort.records.iter().filter_map(ResultList::from_record).collect();
    for (host, n) in catalog::top_tlds(&lists, SearchTerm::Spd, SearchType::GoogleSearch, Segment::Organic, 5) {
        println!("  {host:<28} {n}");
    }
    let urls = lists.iter().filter(|l| l.term == SearchTerm::Spd).flat_map(|l| l.organic.iter().map(|u| &**u));
    println!("editable share (SPD): {:?}", catalog::editable_share(urls, table));
    Ok(())
}
