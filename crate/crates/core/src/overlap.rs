//! Pairwise overlap of result lists that share term and search time:
//! identical-list fractions, mean common links, scope for personalization
//! and the common-link histogram.
//!
//! URLs are interned per group to small integers; each list keeps its
//! sequence (for order-sensitive identity) and a sorted set. All statistics
//! are kept as integer sums so results do not depend on how the pair loop
//! is split across threads.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ResultList, SearchTerm, SearchTimeKey, SearchType};
use crate::table::{fmt_f64, fmt_opt, fmt_percent, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub donor_id: Arc<str>,
    /// Index of the source list in the slice passed to [`build_groups`].
    pub source: usize,
    /// URL ids in rank order, duplicates removed.
    pub seq: Vec<u32>,
    /// The same ids, sorted.
    pub set: Vec<u32>,
}

/// All lists of one (term, search time), at most one per donor.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    pub term: SearchTerm,
    pub time_key: SearchTimeKey,
    pub search_type: SearchType,
    pub members: Vec<Member>,
    /// id -> URL text (trimmed).
    pub urls: Vec<Arc<str>>,
}

fn intern(urls: &mut Vec<Arc<str>>, index: &mut HashMap<Arc<str>, u32>, u: &Arc<str>) -> u32 {
    let trimmed = u.trim();
    if let Some(id) = index.get(trimmed) {
        return *id;
    }
    let key: Arc<str> = if trimmed.len() == u.len() { u.clone() } else { Arc::from(trimmed) };
    let id = urls.len() as u32;
    urls.push(key.clone());
    index.insert(key, id);
    id
}

fn member(donor_id: Arc<str>, source: usize, ids: impl Iterator<Item = u32>) -> Member {
    let mut seq: Vec<u32> = Vec::new();
    for id in ids {
        if !seq.contains(&id) {
            seq.push(id);
        }
    }
    let mut set = seq.clone();
    set.sort_unstable();
    Member {
        donor_id,
        source,
        seq,
        set,
    }
}

impl PairGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_pairs(&self) -> u64 {
        pairs(self.members.len())
    }

    pub fn url(&self, id: u32) -> &str {
        &self.urls[id as usize]
    }

    /// The group with every URL failing `keep` removed from every list.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> PairGroup {
        let kept: Vec<bool> = self.urls.iter().map(|u| keep(u)).collect();
        let members = self
            .members
            .iter()
            .map(|m| Member {
                donor_id: m.donor_id.clone(),
                source: m.source,
                seq: m.seq.iter().copied().filter(|id| kept[*id as usize]).collect(),
                set: m.set.iter().copied().filter(|id| kept[*id as usize]).collect(),
            })
            .collect();
        PairGroup {
            term: self.term,
            time_key: self.time_key,
            search_type: self.search_type,
            members,
            urls: self.urls.clone(),
        }
    }

    /// Builds a group directly from URL lists (donor ids are positions).
    pub fn from_url_lists<S: AsRef<str>>(lists: &[Vec<S>]) -> PairGroup {
        let mut urls = Vec::new();
        let mut index = HashMap::new();
        let members = lists
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let ids: Vec<u32> = l
                    .iter()
                    .map(|u| intern(&mut urls, &mut index, &Arc::from(u.as_ref())))
                    .collect();
                member(Arc::from(i.to_string()), i, ids.into_iter())
            })
            .collect();
        PairGroup {
            term: SearchTerm::Cdu,
            time_key: SearchTimeKey::all()[0],
            search_type: SearchType::GoogleSearch,
            members,
            urls,
        }
    }
}

pub fn pairs(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

/// Groups cleaned lists of one search type by (term, search time). Organic
/// URLs only unless `use_top_stories`. A donor with several uploads for one
/// key contributes only the earliest. Groups come out sorted by (term, key).
pub fn build_groups(lists: &[ResultList], search_type: SearchType, use_top_stories: bool) -> Vec<PairGroup> {
    let mut keyed: BTreeMap<(SearchTerm, SearchTimeKey), BTreeMap<Arc<str>, usize>> = BTreeMap::new();
    for (i, l) in lists.iter().enumerate() {
        if l.search_type != search_type {
            continue;
        }
        let donors = keyed.entry((l.term, l.time_key)).or_default();
        match donors.get(&l.donor_id) {
            Some(&j) if lists[j].timestamp <= l.timestamp => {}
            _ => {
                donors.insert(l.donor_id.clone(), i);
            }
        }
    }
    keyed
        .into_par_iter()
        .map(|((term, time_key), donors)| {
            let mut urls = Vec::new();
            let mut index = HashMap::new();
            let members = donors
                .into_iter()
                .map(|(donor, i)| {
                    let l = &lists[i];
                    let src: Vec<&Arc<str>> = if use_top_stories {
                        l.top_stories.iter().chain(l.organic.iter()).collect()
                    } else {
                        l.organic.iter().collect()
                    };
                    let ids: Vec<u32> = src.into_iter().map(|u| intern(&mut urls, &mut index, u)).collect();
                    member(donor, i, ids.into_iter())
                })
                .collect();
            PairGroup {
                term,
                time_key,
                search_type,
                members,
                urls,
            }
        })
        .collect()
}

/// Size of the intersection of two sorted id sets.
pub fn intersect_sorted(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Integer pair aggregates; the reported means are derived from these.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapStats {
    pub n_lists: u64,
    pub n_pairs: u64,
    pub identical_pairs: u64,
    pub identical_ordered_pairs: u64,
    /// Sum over pairs of the number of common URLs.
    pub common_sum: u64,
    /// Sum over pairs of |A| + |B|.
    pub length_pair_sum: u64,
    /// `histogram[b]` = pairs with exactly `b` common URLs.
    pub histogram: Vec<u64>,
}

impl OverlapStats {
    fn ratio(&self, num: u64) -> Option<f64> {
        (self.n_pairs > 0).then(|| num as f64 / self.n_pairs as f64)
    }

    /// Percent of pairs with equal URL sets.
    pub fn identical_fraction(&self) -> Option<f64> {
        self.ratio(self.identical_pairs).map(|x| 100.0 * x)
    }

    /// Percent of pairs with equal URL sequences.
    pub fn identical_ordered_fraction(&self) -> Option<f64> {
        self.ratio(self.identical_ordered_pairs).map(|x| 100.0 * x)
    }

    pub fn mean_common_links(&self) -> Option<f64> {
        self.ratio(self.common_sum)
    }

    /// Mean over pairs of the average length of the two lists. Within one
    /// group this is exactly the mean list length.
    pub fn mean_list_length(&self) -> Option<f64> {
        (self.n_pairs > 0).then(|| self.length_pair_sum as f64 / (2 * self.n_pairs) as f64)
    }

    /// Mean list length minus mean common links.
    pub fn scope(&self) -> Option<f64> {
        Some(self.mean_list_length()? - self.mean_common_links()?)
    }

    /// Adds another group's aggregates (pairs stay within their group).
    pub fn merge(&mut self, other: &OverlapStats) {
        self.n_lists += other.n_lists;
        self.n_pairs += other.n_pairs;
        self.identical_pairs += other.identical_pairs;
        self.identical_ordered_pairs += other.identical_ordered_pairs;
        self.common_sum += other.common_sum;
        self.length_pair_sum += other.length_pair_sum;
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
    }
}

fn equal_pairs<'a>(keys: impl Iterator<Item = &'a [u32]>) -> u64 {
    let mut counts: HashMap<&[u32], u64> = HashMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    counts.values().map(|&c| c * (c - 1) / 2).sum()
}

/// Pairwise intersection histogram; rows are processed in parallel and the
/// integer row histograms summed.
pub fn common_links_histogram(group: &PairGroup) -> Vec<u64> {
    let members = &group.members;
    let max_len = members.iter().map(|m| m.set.len()).max().unwrap_or(0);
    if members.len() < 2 {
        return Vec::new();
    }
    let width = max_len + 1;
    (0..members.len())
        .into_par_iter()
        .fold(
            || vec![0u64; width],
            |mut h, i| {
                let a = &members[i].set;
                for b in &members[i + 1..] {
                    h[intersect_sorted(a, &b.set)] += 1;
                }
                h
            },
        )
        .reduce(
            || vec![0u64; width],
            |mut x, y| {
                for (a, b) in x.iter_mut().zip(y) {
                    *a += b;
                }
                x
            },
        )
}

/// All pair aggregates of one group.
pub fn group_stats(group: &PairGroup) -> OverlapStats {
    let n = group.members.len();
    let histogram = common_links_histogram(group);
    let common_sum = histogram.iter().enumerate().map(|(b, c)| b as u64 * c).sum();
    let total_len: u64 = group.members.iter().map(|m| m.set.len() as u64).sum();
    OverlapStats {
        n_lists: n as u64,
        n_pairs: pairs(n),
        identical_pairs: equal_pairs(group.members.iter().map(|m| m.set.as_slice())),
        identical_ordered_pairs: equal_pairs(group.members.iter().map(|m| m.seq.as_slice())),
        common_sum,
        length_pair_sum: (n.saturating_sub(1)) as u64 * total_len,
        histogram,
    }
}

fn need_pairs(group: &PairGroup) -> Result<()> {
    if group.members.len() < 2 {
        return Err(Error::Undefined(format!(
            "{} list(s) for {} at {}; need at least 2",
            group.members.len(),
            group.term,
            group.time_key
        )));
    }
    Ok(())
}

/// Percent of pairs with identical lists (as sets, or as sequences when
/// `ordered`).
pub fn identical_fraction(group: &PairGroup, ordered: bool) -> Result<f64> {
    need_pairs(group)?;
    let matching = if ordered {
        equal_pairs(group.members.iter().map(|m| m.seq.as_slice()))
    } else {
        equal_pairs(group.members.iter().map(|m| m.set.as_slice()))
    };
    Ok(100.0 * matching as f64 / group.n_pairs() as f64)
}

/// Mean over pairs of common URLs. Uses document frequencies: a URL in `d`
/// lists is common to `d(d-1)/2` pairs.
pub fn mean_common_links(group: &PairGroup) -> Result<f64> {
    need_pairs(group)?;
    let mut df = vec![0u64; group.urls.len()];
    for m in &group.members {
        for &id in &m.set {
            df[id as usize] += 1;
        }
    }
    let sum: u64 = df.iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    Ok(sum as f64 / group.n_pairs() as f64)
}

pub fn scope_for_personalization(group: &PairGroup) -> Result<f64> {
    need_pairs(group)?;
    Ok(group_stats(group).scope().expect("at least one pair"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermOverlap {
    pub term: SearchTerm,
    pub search_type: SearchType,
    /// Pairs pooled over all search times (pairs only within a time).
    pub pooled: OverlapStats,
    pub n_groups: usize,
    /// Unweighted mean over search times with at least one pair.
    pub per_key_identical: Option<f64>,
    pub per_key_scope: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-term statistics from per-group statistics (same order as `groups`).
pub fn aggregate_by_term(groups: &[PairGroup], stats: &[OverlapStats]) -> Vec<TermOverlap> {
    let mut by_term: BTreeMap<(SearchTerm, SearchType), (OverlapStats, usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (g, s) in groups.iter().zip(stats) {
        let e = by_term.entry((g.term, g.search_type)).or_default();
        e.0.merge(s);
        e.1 += 1;
        if let (Some(i), Some(sc)) = (s.identical_fraction(), s.scope()) {
            e.2.push(i);
            e.3.push(sc);
        }
    }
    by_term
        .into_iter()
        .map(|((term, search_type), (pooled, n_groups, ids, scopes))| TermOverlap {
            term,
            search_type,
            pooled,
            n_groups,
            per_key_identical: mean(&ids),
            per_key_scope: mean(&scopes),
        })
        .collect()
}

/// Groups the lists of one search type and computes per-term statistics.
pub fn term_overlap(lists: &[ResultList], search_type: SearchType, use_top_stories: bool) -> Vec<TermOverlap> {
    let groups = build_groups(lists, search_type, use_top_stories);
    let stats: Vec<OverlapStats> = groups.par_iter().map(group_stats).collect();
    aggregate_by_term(&groups, &stats)
}

/// The same statistics for news lists (typically 20 entries each).
pub fn news_overlap(groups: &[PairGroup]) -> Vec<TermOverlap> {
    let news: Vec<PairGroup> = groups
        .iter()
        .filter(|g| g.search_type == SearchType::GoogleNews)
        .cloned()
        .collect();
    let stats: Vec<OverlapStats> = news.par_iter().map(group_stats).collect();
    aggregate_by_term(&news, &stats)
}

pub fn stats_table(rows: &[TermOverlap]) -> Table {
    let mut t = Table::new([
        "term",
        "search_type",
        "n_groups",
        "n_lists",
        "n_pairs",
        "identical_pct",
        "identical_ordered_pct",
        "mean_common",
        "mean_length",
        "scope",
        "per_key_identical_pct",
        "per_key_scope",
    ]);
    for r in rows {
        let p = &r.pooled;
        t.push([
            r.term.text().to_string(),
            r.search_type.label().to_string(),
            r.n_groups.to_string(),
            p.n_lists.to_string(),
            p.n_pairs.to_string(),
            p.identical_fraction().map(fmt_percent).unwrap_or_else(|| "NA".into()),
            p.identical_ordered_fraction().map(fmt_percent).unwrap_or_else(|| "NA".into()),
            fmt_opt(p.mean_common_links()),
            fmt_opt(p.mean_list_length()),
            fmt_opt(p.scope()),
            r.per_key_identical.map(fmt_percent).unwrap_or_else(|| "NA".into()),
            fmt_opt(r.per_key_scope),
        ]);
    }
    t
}

pub fn histogram_table(rows: &[TermOverlap]) -> Table {
    let mut t = Table::new(["term", "search_type", "common_links", "pairs", "fraction"]);
    for r in rows {
        let total = r.pooled.n_pairs.max(1) as f64;
        for (b, c) in r.pooled.histogram.iter().enumerate() {
            t.push([
                r.term.text().to_string(),
                r.search_type.label().to_string(),
                b.to_string(),
                c.to_string(),
                fmt_f64(*c as f64 / total),
            ]);
        }
    }
    t
}
