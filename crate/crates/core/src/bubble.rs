//! Deviant result-list clusters and locale partitions.
//!
//! Detection per (term, search time): URLs seen by at least a popularity
//! share of donors are removed from every list; donors whose residual lists
//! still share `min_shared` links are linked, and linked groups form
//! clusters. A cluster whose original lists share on average fewer than
//! `distinctness` links with every outsider is flagged.
//!
//! Locale comes from the publication-time strings attached to top stories
//! ("vor 4 Stunden", "1 hour ago", ...).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ResultList, SearchTerm, SearchTimeKey};
use crate::overlap::{intersect_sorted, PairGroup};
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    /// Connected components of the residual-overlap graph.
    Components,
    /// Maximal cliques, largest first, made disjoint greedily.
    MaximalCliques,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BubbleParams {
    pub popularity: f64,
    pub min_shared: usize,
    pub distinctness: f64,
    pub method: ClusterMethod,
}

impl Default for BubbleParams {
    fn default() -> Self {
        BubbleParams {
            popularity: 0.70,
            min_shared: 3,
            distinctness: 3.5,
            method: ClusterMethod::Components,
        }
    }
}

impl BubbleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.popularity > 0.0 && self.popularity <= 1.0) {
            return Err(Error::Config(format!("popularity threshold must be in (0, 1], got {}", self.popularity)));
        }
        if self.min_shared == 0 {
            return Err(Error::Config("min_shared must be at least 1".into()));
        }
        if !(self.distinctness >= 0.0) {
            return Err(Error::Config(format!("distinctness must be >= 0, got {}", self.distinctness)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualList {
    pub donor_id: Arc<str>,
    /// Position of the donor in the group.
    pub member: usize,
    /// Sorted URL ids that survived the popularity filter.
    pub residual: Vec<u32>,
}

/// Removes every URL present in at least `threshold` of the group's lists.
pub fn popularity_filter(group: &PairGroup, threshold: f64) -> Vec<ResidualList> {
    let n = group.members.len();
    let mut df = vec![0usize; group.urls.len()];
    for m in &group.members {
        for &id in &m.set {
            df[id as usize] += 1;
        }
    }
    let popular: Vec<bool> = df
        .iter()
        .map(|&d| n > 0 && d as f64 / n as f64 >= threshold)
        .collect();
    group
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| ResidualList {
            donor_id: m.donor_id.clone(),
            member: i,
            residual: m.set.iter().copied().filter(|id| !popular[*id as usize]).collect(),
        })
        .collect()
}

fn residual_graph(residuals: &[ResidualList], min_shared: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); residuals.len()];
    for i in 0..residuals.len() {
        if residuals[i].residual.len() < min_shared {
            continue;
        }
        for j in i + 1..residuals.len() {
            if intersect_sorted(&residuals[i].residual, &residuals[j].residual) >= min_shared {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

fn components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    let mut out = Vec::new();
    for start in 0..adj.len() {
        if seen[start] || adj[start].is_empty() {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn bron_kerbosch(
    adj: &[BTreeSet<usize>],
    r: &mut Vec<usize>,
    mut p: BTreeSet<usize>,
    mut x: BTreeSet<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        if r.len() >= 2 {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
        }
        return;
    }
    let pivot = *p.iter().chain(x.iter()).max_by_key(|u| adj[**u].intersection(&p).count()).unwrap();
    let candidates: Vec<usize> = p.difference(&adj[pivot]).copied().collect();
    for v in candidates {
        r.push(v);
        let np = p.intersection(&adj[v]).copied().collect();
        let nx = x.intersection(&adj[v]).copied().collect();
        bron_kerbosch(adj, r, np, nx, out);
        r.pop();
        p.remove(&v);
        x.insert(v);
    }
}

fn disjoint_cliques(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let sets: Vec<BTreeSet<usize>> = adj.iter().map(|a| a.iter().copied().collect()).collect();
    let p: BTreeSet<usize> = (0..adj.len()).filter(|v| !adj[*v].is_empty()).collect();
    let mut cliques = Vec::new();
    bron_kerbosch(&sets, &mut Vec::new(), p, BTreeSet::new(), &mut cliques);
    cliques.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut used = vec![false; adj.len()];
    let mut out = Vec::new();
    for c in cliques {
        let rest: Vec<usize> = c.into_iter().filter(|v| !used[*v]).collect();
        if rest.len() >= 2 {
            for v in &rest {
                used[*v] = true;
            }
            out.push(rest);
        }
    }
    out.sort();
    out
}

/// Disjoint clusters (positions into `residuals`) of size at least two,
/// ordered by their first member.
pub fn cluster_residuals(residuals: &[ResidualList], min_shared: usize, method: ClusterMethod) -> Vec<Vec<usize>> {
    let adj = residual_graph(residuals, min_shared);
    match method {
        ClusterMethod::Components => components(&adj),
        ClusterMethod::MaximalCliques => disjoint_cliques(&adj),
    }
}

/// Mean common links between the original lists of cluster members and of
/// all other donors in the group; flagged iff below `threshold`.
pub fn distinctness(cluster: &[usize], group: &PairGroup, threshold: f64) -> Result<(f64, bool)> {
    let inside: BTreeSet<usize> = cluster.iter().copied().collect();
    let outsiders = group.members.len() - inside.len();
    if outsiders == 0 || inside.is_empty() {
        return Err(Error::Undefined("cluster covers the whole group; no outsiders".into()));
    }
    let mut in_df = vec![0u64; group.urls.len()];
    let mut out_df = vec![0u64; group.urls.len()];
    for (i, m) in group.members.iter().enumerate() {
        let df = if inside.contains(&i) { &mut in_df } else { &mut out_df };
        for &id in &m.set {
            df[id as usize] += 1;
        }
    }
    let common: u64 = in_df.iter().zip(&out_df).map(|(a, b)| a * b).sum();
    let mean = common as f64 / (inside.len() * outsiders) as f64;
    Ok((mean, mean < threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<Arc<str>>,
    pub mean_internal_shared: f64,
    /// `None` when the cluster has no outsiders.
    pub distinctness: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub term: SearchTerm,
    pub time_key: SearchTimeKey,
    pub n_lists: usize,
    pub clusters: Vec<Cluster>,
    pub params: BubbleParams,
}

impl ClusterReport {
    pub fn flagged(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.flagged)
    }
}

pub fn detect(group: &PairGroup, params: &BubbleParams) -> ClusterReport {
    let residuals = popularity_filter(group, params.popularity);
    let clusters = cluster_residuals(&residuals, params.min_shared, params.method)
        .into_iter()
        .map(|c| {
            let mut shared = 0usize;
            let mut n = 0usize;
            for (a, &i) in c.iter().enumerate() {
                for &j in &c[a + 1..] {
                    shared += intersect_sorted(&residuals[i].residual, &residuals[j].residual);
                    n += 1;
                }
            }
            let d = distinctness(&c, group, params.distinctness).ok();
            Cluster {
                members: c.iter().map(|&i| residuals[i].donor_id.clone()).collect(),
                mean_internal_shared: shared as f64 / n.max(1) as f64,
                distinctness: d.map(|x| x.0),
                flagged: d.is_some_and(|x| x.1),
            }
        })
        .collect();
    ClusterReport {
        term: group.term,
        time_key: group.time_key,
        n_lists: group.members.len(),
        clusters,
        params: *params,
    }
}

pub fn detect_all(groups: &[PairGroup], params: &BubbleParams) -> Vec<ClusterReport> {
    groups.par_iter().map(|g| detect(g, params)).collect()
}

pub fn cluster_table(reports: &[ClusterReport]) -> Table {
    let mut t = Table::new([
        "term",
        "date",
        "slot",
        "n_lists",
        "cluster",
        "size",
        "members",
        "mean_internal_shared",
        "distinctness",
        "flagged",
    ]);
    for r in reports {
        for (i, c) in r.clusters.iter().enumerate() {
            let members: Vec<&str> = c.members.iter().map(|m| &**m).collect();
            t.push([
                r.term.text().to_string(),
                r.time_key.date.to_string(),
                r.time_key.slot.label().to_string(),
                r.n_lists.to_string(),
                i.to_string(),
                c.members.len().to_string(),
                members.join(","),
                fmt_f64(c.mean_internal_shared),
                c.distinctness.map(fmt_f64).unwrap_or_else(|| "NA".into()),
                c.flagged.to_string(),
            ]);
        }
    }
    t
}

/// Locale tag: "de", "en", "fr", "no", any tag from an extended pattern
/// table, or "unknown".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocaleTag(pub String);

impl LocaleTag {
    pub fn unknown() -> Self {
        LocaleTag("unknown".into())
    }

    pub fn new(s: &str) -> Self {
        LocaleTag(s.trim().to_lowercase())
    }

    pub fn is_unknown(&self) -> bool {
        self.0 == "unknown"
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LocaleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

const DEFAULT_PATTERNS: &[(&str, &str)] = &[
    ("de", r"^\s*vor\s+(\d+|einer|einem|eine)\s+(sek|sekunde|sekunden|min|minute|minuten|std|stunde|stunden|tag|tagen|woche|wochen)\b"),
    ("en", r"^\s*(\d+|an?|one)\s+(sec|secs|second|seconds|min|mins|minute|minutes|hour|hours|day|days|week|weeks)\s+ago\b"),
    ("fr", r"^\s*il\s+y\s+a\s+(\d+|une?)\s+(s|sec|seconde|secondes|min|minute|minutes|h|heure|heures|heurs|jour|jours|semaine|semaines)\b"),
    ("no", r"^\s*(for\s+)?(\d+|en|ett|ei)\s+(sekund|sekunder|min|minutt|minutter|time|timer|dag|dager|døgn|uke|uker)\s+siden\b"),
];

/// Ordered (locale, pattern) table; the first matching pattern wins.
#[derive(Debug, Clone)]
pub struct LocalePatterns {
    patterns: Vec<(LocaleTag, Regex)>,
}

impl Default for LocalePatterns {
    fn default() -> Self {
        let patterns = DEFAULT_PATTERNS
            .iter()
            .map(|(l, p)| (LocaleTag::new(l), build_regex(p).expect("built-in pattern")))
            .collect();
        LocalePatterns { patterns }
    }
}

fn build_regex(p: &str) -> std::result::Result<Regex, regex::Error> {
    RegexBuilder::new(p).case_insensitive(true).build()
}

impl LocalePatterns {
    /// Two tab-separated columns: locale and regular expression (matched
    /// case-insensitively). `#` starts a comment only at line start.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::Table {
                file: file.into(),
                line: i + 1,
                reason,
            };
            let (locale, pattern) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected locale<TAB>pattern".into()))?;
            let re = build_regex(pattern.trim()).map_err(|e| bad(e.to_string()))?;
            patterns.push((LocaleTag::new(locale), re));
        }
        Ok(LocalePatterns { patterns })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# locale\tpattern\n");
        for (l, re) in &self.patterns {
            s.push_str(&format!("{l}\t{}\n", re.as_str()));
        }
        s
    }

    pub fn match_age(&self, age: &str) -> Option<&LocaleTag> {
        self.patterns.iter().find(|(_, re)| re.is_match(age)).map(|(l, _)| l)
    }

    /// The first age string that matches any pattern decides.
    pub fn detect<'a, I>(&self, ages: I) -> LocaleTag
    where
        I: IntoIterator<Item = &'a str>,
    {
        ages.into_iter()
            .find_map(|a| self.match_age(a))
            .cloned()
            .unwrap_or_else(LocaleTag::unknown)
    }
}

pub fn detect_locale(list: &ResultList, patterns: &LocalePatterns) -> LocaleTag {
    patterns.detect(list.age_strings.iter().map(|a| &**a))
}

/// Each donor's locale per search time: the most frequent known tag over
/// all their lists at that time (ties to the smaller tag), else unknown.
pub fn donor_locales(lists: &[ResultList], patterns: &LocalePatterns) -> HashMap<(Arc<str>, SearchTimeKey), LocaleTag> {
    let tags: Vec<LocaleTag> = lists.par_iter().map(|l| detect_locale(l, patterns)).collect();
    let mut counts: HashMap<(Arc<str>, SearchTimeKey), BTreeMap<LocaleTag, usize>> = HashMap::new();
    for (l, t) in lists.iter().zip(tags) {
        let e = counts.entry((l.donor_id.clone(), l.time_key)).or_default();
        if !t.is_unknown() {
            *e.entry(t).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, c)| {
            let best = c
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .map(|x| x.0)
                .unwrap_or_else(LocaleTag::unknown);
            (k, best)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocaleMatrix {
    /// Row/column order: (locale, donor).
    pub order: Vec<(LocaleTag, Arc<str>)>,
    /// Common links per pair; the diagonal holds each list's length.
    pub values: Vec<Vec<usize>>,
}

impl LocaleMatrix {
    /// Mean off-diagonal value for pairs with the given locales.
    pub fn block_mean(&self, a: &LocaleTag, b: &LocaleTag) -> Option<f64> {
        let (mut sum, mut n) = (0usize, 0usize);
        for (i, (la, _)) in self.order.iter().enumerate() {
            for (j, (lb, _)) in self.order.iter().enumerate() {
                if i != j && la == a && lb == b {
                    sum += self.values[i][j];
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum as f64 / n as f64)
    }

    pub fn locales(&self) -> BTreeSet<LocaleTag> {
        self.order.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn table(&self) -> Table {
        let mut header = vec!["locale".to_string(), "donor".to_string()];
        header.extend(self.order.iter().map(|(l, d)| format!("{l}:{d}")));
        let mut t = Table::new(header);
        for (i, (l, d)) in self.order.iter().enumerate() {
            let mut row = vec![l.to_string(), d.to_string()];
            row.extend(self.values[i].iter().map(|v| v.to_string()));
            t.push(row);
        }
        t
    }
}

/// Pairwise common-link matrix with rows sorted by (locale, donor).
pub fn locale_overlap_matrix(group: &PairGroup, locale_of: impl Fn(&str) -> LocaleTag) -> LocaleMatrix {
    let mut idx: Vec<(LocaleTag, Arc<str>, usize)> = group
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| (locale_of(&m.donor_id), m.donor_id.clone(), i))
        .collect();
    idx.sort();
    let values = idx
        .iter()
        .map(|(_, _, i)| {
            idx.iter()
                .map(|(_, _, j)| {
                    let (a, b) = (&group.members[*i].set, &group.members[*j].set);
                    if i == j {
                        a.len()
                    } else {
                        intersect_sorted(a, b)
                    }
                })
                .collect()
        })
        .collect();
    LocaleMatrix {
        order: idx.into_iter().map(|(l, d, _)| (l, d)).collect(),
        values,
    }
}

/// Per (term, time, locale a, locale b) mean common links, computed
/// without materializing the full matrix.
pub fn locale_block_table(groups: &[PairGroup], locales: &HashMap<(Arc<str>, SearchTimeKey), LocaleTag>) -> Table {
    let rows: Vec<Vec<[String; 7]>> = groups
        .par_iter()
        .map(|g| {
            let tags: Vec<LocaleTag> = g
                .members
                .iter()
                .map(|m| locales.get(&(m.donor_id.clone(), g.time_key)).cloned().unwrap_or_else(LocaleTag::unknown))
                .collect();
            let mut blocks: BTreeMap<(LocaleTag, LocaleTag), (u64, u64)> = BTreeMap::new();
            for i in 0..g.members.len() {
                for j in i + 1..g.members.len() {
                    let (a, b) = if tags[i] <= tags[j] { (&tags[i], &tags[j]) } else { (&tags[j], &tags[i]) };
                    let e = blocks.entry((a.clone(), b.clone())).or_default();
                    e.0 += intersect_sorted(&g.members[i].set, &g.members[j].set) as u64;
                    e.1 += 1;
                }
            }
            blocks
                .into_iter()
                .map(|((a, b), (sum, n))| {
                    [
                        g.term.text().to_string(),
                        g.time_key.date.to_string(),
                        g.time_key.slot.label().to_string(),
                        a.to_string(),
                        b.to_string(),
                        n.to_string(),
                        fmt_f64(sum as f64 / n as f64),
                    ]
                })
                .collect()
        })
        .collect();
    let mut t = Table::new(["term", "date", "slot", "locale_a", "locale_b", "pairs", "mean_common"]);
    for r in rows.into_iter().flatten() {
        t.push(r);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(lists: Vec<Vec<String>>) -> PairGroup {
        PairGroup::from_url_lists(&lists)
    }

    fn base(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("https://base{i}.de/")).collect()
    }

    #[test]
    fn popularity_threshold_inclusive() {
        let mut lists = Vec::new();
        for i in 0..10 {
            let mut l = vec!["https://u80.de/".to_string()];
            if i >= 8 {
                l.clear();
            }
            if i < 6 {
                l.push("https://u60.de/".into());
            }
            if i < 7 {
                l.push("https://u70.de/".into());
            }
            lists.push(l);
        }
        let grp = g(lists);
        let res = popularity_filter(&grp, 0.7);
        let kept: BTreeSet<&str> = res.iter().flat_map(|r| r.residual.iter().map(|id| grp.url(*id))).collect();
        assert!(!kept.contains("https://u80.de/"));
        assert!(!kept.contains("https://u70.de/"));
        assert!(kept.contains("https://u60.de/"));
    }

    #[test]
    fn universal_links_leave_idiosyncratic_residuals() {
        let lists: Vec<Vec<String>> = (0..20)
            .map(|d| {
                let mut l = base(7);
                l.push(format!("https://own{d}a.de/"));
                l.push(format!("https://own{d}b.de/"));
                l
            })
            .collect();
        let res = popularity_filter(&g(lists), 0.7);
        assert!(res.iter().all(|r| r.residual.len() == 2));
    }

    fn planted(n: usize, cluster: usize, shared: usize, outward: usize) -> Vec<Vec<String>> {
        (0..n)
            .map(|d| {
                if d < cluster {
                    let mut l = base(outward);
                    l.extend((0..shared).map(|i| format!("https://foreign{i}.com/")));
                    l.extend((0..9 - outward - shared).map(|i| format!("https://solo{d}-{i}.com/")));
                    l
                } else {
                    base(9)
                }
            })
            .collect()
    }

    #[test]
    fn planted_cluster_found_and_flagged() {
        let grp = g(planted(40, 5, 4, 2));
        let rep = detect(&grp, &BubbleParams::default());
        assert_eq!(rep.clusters.len(), 1);
        let c = &rep.clusters[0];
        assert_eq!(c.members.len(), 5);
        assert_eq!(c.distinctness, Some(2.0));
        assert!(c.flagged);
        assert_eq!(c.mean_internal_shared, 4.0);
    }

    #[test]
    fn disjoint_residuals_no_clusters() {
        let lists: Vec<Vec<String>> = (0..10).map(|d| (0..9).map(|i| format!("https://d{d}x{i}.de/")).collect()).collect();
        assert!(detect(&g(lists), &BubbleParams::default()).clusters.is_empty());
    }

    #[test]
    fn regional_cluster_not_flagged() {
        let grp = g(planted(40, 5, 3, 6));
        let rep = detect(&grp, &BubbleParams::default());
        assert_eq!(rep.clusters.len(), 1);
        assert!(!rep.clusters[0].flagged);
        assert_eq!(rep.clusters[0].distinctness, Some(6.0));
    }

    #[test]
    fn whole_group_cluster_is_undefined() {
        let grp = g(planted(5, 5, 4, 2));
        let res = popularity_filter(&grp, 0.7);
        let clusters = cluster_residuals(&res, 3, ClusterMethod::Components);
        // foreign links are in all lists and so popular; nothing remains
        assert!(clusters.is_empty());
        assert!(matches!(distinctness(&[0, 1, 2, 3, 4], &grp, 3.5), Err(Error::Undefined(_))));
    }

    #[test]
    fn bridged_cliques_components_vs_cliques() {
        // A = {0,1,2}, B = {4,5,6}, bridge 3 shares with 2 and 4 only
        let mut lists: Vec<Vec<String>> = Vec::new();
        let a: Vec<String> = (0..3).map(|i| format!("https://a{i}.de/")).collect();
        let b: Vec<String> = (0..3).map(|i| format!("https://b{i}.de/")).collect();
        for _ in 0..3 {
            lists.push(a.clone());
        }
        let mut bridge = a.clone();
        bridge.extend(b.clone());
        lists.push(bridge);
        for _ in 0..3 {
            lists.push(b.clone());
        }
        for i in 0..20 {
            lists.push(vec![format!("https://x{i}.de/")]);
        }
        let grp = g(lists);
        let res = popularity_filter(&grp, 0.7);
        let comps = cluster_residuals(&res, 3, ClusterMethod::Components);
        assert_eq!(comps, vec![vec![0, 1, 2, 3, 4, 5, 6]]);
        let cliques = cluster_residuals(&res, 3, ClusterMethod::MaximalCliques);
        assert_eq!(cliques.len(), 2);
        assert!(cliques.iter().all(|c| c.len() >= 3));
        let all: Vec<usize> = cliques.concat();
        let unique: BTreeSet<usize> = all.iter().copied().collect();
        assert_eq!(all.len(), unique.len());
    }

    #[test]
    fn locale_strings() {
        let p = LocalePatterns::default();
        let cases = [
            ("Vor 1 Stunde", "de"),
            ("vor 4 Stunden", "de"),
            ("vor 12 Minuten", "de"),
            ("1 hour ago", "en"),
            ("54 minutes ago", "en"),
            ("3 hours ago", "en"),
            ("Il y a 2 heurs", "fr"),
            ("Il y a 2 heures", "fr"),
            ("il y a 1 jour", "fr"),
            ("for 2 timer siden", "no"),
            ("3 timer siden", "no"),
        ];
        for (s, want) in cases {
            assert_eq!(p.detect([s]).as_str(), want, "{s}");
        }
        assert!(p.detect([]).is_unknown());
        assert!(p.detect(["22.08.2017"]).is_unknown());
        assert_eq!(p.detect(["22.08.2017", "2 days ago"]).as_str(), "en");
    }

    #[test]
    fn pattern_file_extends() {
        let p = LocalePatterns::parse("# extra\nru\tназад\\s*$\nde\t^vor\\s+\\d+\n", "loc.tsv").unwrap();
        assert_eq!(p.detect(["3 часа назад"]).as_str(), "ru");
        assert_eq!(p.detect(["vor 3 Tagen"]).as_str(), "de");
        assert!(LocalePatterns::parse("ru\t(\n", "x").is_err());
        let roundtrip = LocalePatterns::parse(&LocalePatterns::default().to_text(), "x").unwrap();
        assert_eq!(roundtrip.detect(["Il y a 2 heurs"]).as_str(), "fr");
    }

    #[test]
    fn matrix_shapes() {
        let l = base(9);
        let grp = g(vec![l.clone(), l]);
        let m = locale_overlap_matrix(&grp, |_| LocaleTag::new("de"));
        assert_eq!(m.values, vec![vec![9, 9], vec![9, 9]]);
        let single = g(vec![base(3)]);
        let m = locale_overlap_matrix(&single, |_| LocaleTag::unknown());
        assert_eq!(m.values, vec![vec![3]]);
        assert_eq!(m.block_mean(&LocaleTag::unknown(), &LocaleTag::unknown()), None);
    }

    #[test]
    fn monotone_popularity() {
        let grp = g(planted(30, 5, 4, 2));
        let count = |t: f64| -> usize { popularity_filter(&grp, t).iter().map(|r| r.residual.len()).sum() };
        assert!(count(0.5) <= count(0.7));
        assert!(count(0.7) <= count(0.9));
    }
}
