//! Pairwise overlap of hand-written result lists: identical pairs, common
//! links, the histogram of common links, and the worked 100-list example.

use serp_audit::overlap::{self, PairGroup};
use serp_audit::table::fmt_percent;

fn main() {
    let lists = vec![
        vec!["https://www.spd.de/", "https://de.wikipedia.org/wiki/SPD", "https://www.vorwaerts.de/"],
        vec!["https://www.spd.de/", "https://de.wikipedia.org/wiki/SPD", "https://www.vorwaerts.de/"],
        vec!["https://www.spd.de/", "https://de.wikipedia.org/wiki/SPD", "https://www.spd-berlin.de/"],
        vec!["https://de.wikipedia.org/wiki/SPD", "https://www.spd.de/", "https://www.vorwaerts.de/"],
    ];
    let group = PairGroup::from_url_lists(&lists);
    let s = overlap::group_stats(&group);
    println!("lists: {}, pairs: {}", s.n_lists, s.n_pairs);
    println!("identical (as sets): {}%", fmt_percent(s.identical_fraction().unwrap()));
    println!("identical (in order): {}%", fmt_percent(s.identical_ordered_fraction().unwrap()));
    println!("mean common links: {:.3}", s.mean_common_links().unwrap());
    println!("scope for personalization: {:.3}", s.scope().unwrap());
    println!("pairs by number of common links: {:?}", s.histogram);

    // Two blocks of 5 and 6 identical lists among 100 otherwise distinct ones.
    let mut many: Vec<Vec<String>> = Vec::new();
    for block in [5, 6] {
        for _ in 0..block {
            many.push((0..9).map(|j| format!("https://block{block}.example/{j}")).collect());
        }
    }
    for i in 0..89 {
        many.push((0..9).map(|j| format!("https://own{i}.example/{j}")).collect());
    }
    let s = overlap::group_stats(&PairGroup::from_url_lists(&many));
    println!(
        "\n100 lists: {} of {} pairs identical = {}%",
        s.identical_pairs,
        s.n_pairs,
        fmt_percent(s.identical_fraction().unwrap())
    );
}
