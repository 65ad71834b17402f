//! Series over the 81 search times: top-story presence, distinct hosts
//! and editable share. Search times without lists are omitted.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{classify_url, CategoryTable};
use crate::model::{extract_tld, ResultList, SearchTerm, SearchTimeKey, SearchType, Segment};
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub label: String,
    pub points: Vec<(SearchTimeKey, f64)>,
    /// Mean of the point values, when the series has a reference line.
    pub grand_mean: Option<f64>,
}

impl TimeSeries {
    pub fn get(&self, key: SearchTimeKey) -> Option<f64> {
        self.points
            .binary_search_by(|(k, _)| k.cmp(&key))
            .ok()
            .map(|i| self.points[i].1)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|(_, v)| *v)
    }
}

/// Which lists a series covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Term(SearchTerm),
    All,
}

impl Scope {
    fn label(self) -> String {
        match self {
            Scope::Term(t) => t.text().to_string(),
            Scope::All => "all".to_string(),
        }
    }

    fn admits(self, l: &ResultList) -> bool {
        match self {
            Scope::Term(t) => l.term == t,
            Scope::All => true,
        }
    }
}

fn by_key<'a>(lists: &'a [ResultList], scope: Scope, search_type: SearchType) -> BTreeMap<SearchTimeKey, Vec<&'a ResultList>> {
    let mut m: BTreeMap<SearchTimeKey, Vec<&ResultList>> = BTreeMap::new();
    for l in lists.iter().filter(|l| l.search_type == search_type && scope.admits(l)) {
        m.entry(l.time_key).or_default().push(l);
    }
    m
}

/// Fraction of web-search lists with at least one top story.
pub fn topstory_share(lists: &[ResultList], scope: Scope) -> TimeSeries {
    let points = by_key(lists, scope, SearchType::GoogleSearch)
        .into_iter()
        .map(|(k, ls)| {
            let with = ls.iter().filter(|l| !l.top_stories.is_empty()).count();
            (k, with as f64 / ls.len() as f64)
        })
        .collect();
    TimeSeries {
        label: scope.label(),
        points,
        grand_mean: None,
    }
}

/// Number of distinct hosts delivered to at least one donor per key.
pub fn distinct_tld_count(lists: &[ResultList], scope: Scope, search_type: SearchType, segment: Segment) -> TimeSeries {
    let points = by_key(lists, scope, search_type)
        .into_iter()
        .map(|(k, ls)| {
            let mut hosts: HashSet<String> = HashSet::new();
            for l in ls {
                for u in l.urls(segment) {
                    if let Ok(h) = extract_tld(u) {
                        hosts.insert(h.as_str().to_string());
                    }
                }
            }
            (k, hosts.len() as f64)
        })
        .collect();
    TimeSeries {
        label: scope.label(),
        points,
        grand_mean: None,
    }
}

/// Editable URLs over all URLs delivered at each key, pooled; the grand
/// mean over keys is attached.
pub fn editable_share_series(
    lists: &[ResultList],
    scope: Scope,
    search_type: SearchType,
    segment: Segment,
    table: &CategoryTable,
) -> TimeSeries {
    let points: Vec<(SearchTimeKey, f64)> = by_key(lists, scope, search_type)
        .into_iter()
        .filter_map(|(k, ls)| {
            let (mut editable, mut total) = (0usize, 0usize);
            for l in ls {
                for u in l.urls(segment) {
                    total += 1;
                    if classify_url(u, table).main.is_editable() {
                        editable += 1;
                    }
                }
            }
            (total > 0).then(|| (k, editable as f64 / total as f64))
        })
        .collect();
    let grand_mean = (!points.is_empty()).then(|| points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64);
    TimeSeries {
        label: scope.label(),
        points,
        grand_mean,
    }
}

/// (series, term, date, slot, value) rows.
pub fn series_table(name: &str, series: &[TimeSeries]) -> Table {
    let mut t = Table::new(["series", "term", "date", "slot", "value", "grand_mean"]);
    for s in series {
        let gm = s.grand_mean.map(fmt_f64).unwrap_or_else(|| "NA".into());
        for (k, v) in &s.points {
            t.push([
                name.to_string(),
                s.label.clone(),
                k.date.to_string(),
                k.slot.label().to_string(),
                fmt_f64(*v),
                gm.clone(),
            ]);
        }
    }
    t
}
