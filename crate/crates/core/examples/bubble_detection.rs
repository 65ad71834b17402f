//! A small group of English-locale donors gets a partly foreign result page.
//! Popularity filtering, residual-overlap clustering and the distinctness
//! test single them out; their age strings give away the locale.

use std::sync::Arc;

use serp_audit::bubble::{self, BubbleParams, LocalePatterns, LocaleTag};
use serp_audit::cleanse::{self, CleanConfig};
use serp_audit::ingest::Dataset;
use serp_audit::model::{SearchTerm, SearchType};
use serp_audit::overlap;
use serp_audit::synth::{self, CohortSpec, LocaleSpec};

fn main() -> serp_audit::Result<()> {
    let spec = CohortSpec {
        n_donors: 200,
        terms: vec![SearchTerm::Merkel],
        keys: Some(vec![0, 1]),
        top_story_prob: 1.0,
        locale_mix: vec![
            LocaleSpec { fraction: 0.975, ..Default::default() },
            LocaleSpec {
                locale: "en".into(),
                fraction: 0.025,
                shared_urls: 4,
                own_urls: 3,
                pool_size: 50,
            },
        ],
        ..Default::default()
    };
    let cohort = synth::generate(&spec)?;
    // The foreign lists would fail the German-language filter.
    let cfg = CleanConfig { language_filter: false, ..Default::default() };
    let (lists, _) = cleanse::run_pipeline(Dataset::from_records(cohort.records), &cfg, &cohort.languages)?;
    let groups = overlap::build_groups(&lists, SearchType::GoogleSearch, false);

    let reports = bubble::detect_all(&groups, &BubbleParams::default());
    print!("{}", bubble::cluster_table(&reports).to_text());

    let locales = bubble::donor_locales(&lists, &LocalePatterns::default());
    let g = &groups[0];
    let m = bubble::locale_overlap_matrix(g, |d| {
        locales.get(&(Arc::from(d), g.time_key)).cloned().unwrap_or_else(LocaleTag::unknown)
    });
    let (de, en) = (LocaleTag::new("de"), LocaleTag::new("en"));
    println!("\nmean common links at {}:", g.time_key);
    println!("  de-de {:?}", m.block_mean(&de, &de));
    println!("  en-en {:?}", m.block_mean(&en, &en));
    println!("  de-en {:?}", m.block_mean(&de, &en));
    Ok(())
}
