//! Regional owned-content hosts (local branches, local politicians) and the
//! non-shared link count after deleting them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{classify, CategoryTable, MainCategory};
use crate::error::{Error, Result};
use crate::model::{extract_tld, SearchTerm, SearchType};
use crate::overlap::{group_stats, OverlapStats, PairGroup};
use crate::table::{fmt_opt, Table};

/// Place names shorter than this never match; short names over-match.
pub const MIN_PLACE_LEN: usize = 4;

fn strip_separators(s: &str) -> String {
    s.chars()
        .filter(|c| !matches!(c, '.' | '-' | '_' | ' ' | '\''))
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer {
    /// Original (lowercased) name -> separator-free form.
    places: BTreeMap<String, String>,
}

impl Gazetteer {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut places = BTreeMap::new();
        for n in names {
            let name = n.as_ref().trim().to_lowercase();
            if name.is_empty() {
                continue;
            }
            let stripped = strip_separators(&name);
            places.insert(name, stripped);
        }
        if places.is_empty() {
            return Err(Error::Config("gazetteer is empty".into()));
        }
        Ok(Gazetteer { places })
    }

    /// One place name per line; `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self> {
        Gazetteer::new(text.lines().map(|l| l.split('#').next().unwrap_or("").trim()))
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }

    /// Longest place name contained in the host (ties: alphabetical).
    pub fn find_in(&self, host: &str) -> Option<&str> {
        let h = strip_separators(host);
        self.places
            .iter()
            .filter(|(_, s)| s.chars().count() >= MIN_PLACE_LEN && h.contains(s.as_str()))
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then_with(|| b.0.cmp(a.0)))
            .map(|(name, _)| name.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for name in self.places.keys() {
            let _ = writeln!(out, "{name}");
        }
        out
    }
}

/// Regional hosts with the place name that triggered the flag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionalTagTable {
    pub regional: BTreeMap<String, String>,
}

impl RegionalTagTable {
    pub fn is_regional(&self, host: &str) -> bool {
        self.regional.contains_key(host)
    }

    pub fn is_regional_url(&self, url: &str) -> bool {
        extract_tld(url).is_ok_and(|h| self.is_regional(h.as_str()))
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["host", "place"]);
        for (h, p) in &self.regional {
            t.push([h, p]);
        }
        t
    }
}

/// Flags owned-content hosts that clearly reference a place.
pub fn tag_regional<'a, I>(hosts: I, gazetteer: &Gazetteer, categories: &CategoryTable) -> RegionalTagTable
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = RegionalTagTable::default();
    let unique: BTreeSet<String> = hosts.into_iter().map(|h| h.trim().to_lowercase()).collect();
    for host in unique {
        if classify(&host, categories).main != MainCategory::OwnedContent {
            continue;
        }
        if let Some(place) = gazetteer.find_in(&host) {
            out.regional.insert(host, place.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RefinedStats {
    pub raw: OverlapStats,
    /// Statistics after deleting regional URLs from both lists.
    pub refined: OverlapStats,
}

impl RefinedStats {
    pub fn raw_nonshared(&self) -> Option<f64> {
        self.raw.scope()
    }

    pub fn refined_nonshared(&self) -> Option<f64> {
        self.refined.scope()
    }

    /// Alternative reading: original list lengths, common links counted
    /// after deletion.
    pub fn refined_intersection_only(&self) -> Option<f64> {
        Some(self.raw.mean_list_length()? - self.refined.mean_common_links()?)
    }

    pub fn merge(&mut self, other: &RefinedStats) {
        self.raw.merge(&other.raw);
        self.refined.merge(&other.refined);
    }
}

pub fn refined_stats(group: &PairGroup, regional: &RegionalTagTable) -> RefinedStats {
    let reduced = group.filtered(|u| !regional.is_regional_url(u));
    RefinedStats {
        raw: group_stats(group),
        refined: group_stats(&reduced),
    }
}

/// (raw non-shared, non-regional non-shared) for one group.
pub fn refined_nonshared(group: &PairGroup, regional: &RegionalTagTable) -> Result<(f64, f64)> {
    if group.len() < 2 {
        return Err(Error::Undefined(format!("{} list(s); need at least 2", group.len())));
    }
    let s = refined_stats(group, regional);
    Ok((s.raw_nonshared().unwrap(), s.refined_nonshared().unwrap()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRefinement {
    pub term: SearchTerm,
    pub search_type: SearchType,
    pub stats: RefinedStats,
}

pub fn refine_by_term(groups: &[PairGroup], regional: &RegionalTagTable) -> Vec<TermRefinement> {
    let per_group: Vec<RefinedStats> = groups.par_iter().map(|g| refined_stats(g, regional)).collect();
    let mut by_term: BTreeMap<(SearchTerm, SearchType), RefinedStats> = BTreeMap::new();
    for (g, s) in groups.iter().zip(&per_group) {
        by_term.entry((g.term, g.search_type)).or_default().merge(s);
    }
    by_term
        .into_iter()
        .map(|((term, search_type), stats)| TermRefinement {
            term,
            search_type,
            stats,
        })
        .collect()
}

pub fn refinement_table(rows: &[TermRefinement]) -> Table {
    let mut t = Table::new([
        "term",
        "search_type",
        "n_pairs",
        "raw_nonshared",
        "refined_nonshared",
        "refined_intersection_only",
        "mean_length",
        "refined_mean_length",
    ]);
    for r in rows {
        t.push([
            r.term.text().to_string(),
            r.search_type.label().to_string(),
            r.stats.raw.n_pairs.to_string(),
            fmt_opt(r.stats.raw_nonshared()),
            fmt_opt(r.stats.refined_nonshared()),
            fmt_opt(r.stats.refined_intersection_only()),
            fmt_opt(r.stats.raw.mean_list_length()),
            fmt_opt(r.stats.refined.mean_list_length()),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::DomainCategory;

    fn setup() -> (Gazetteer, CategoryTable) {
        let g = Gazetteer::parse("Berlin\nKaiserslautern\nUlm\n# comment\n\nBad Homburg\n").unwrap();
        let mut c = CategoryTable::default();
        for h in ["afd.berlin", "www.spd.de", "spd-kaiserslautern.de", "www.spd-ulm.de", "spd-badhomburg.de"] {
            c.insert(h, DomainCategory::owned("X"));
        }
        c.insert("www.berliner-zeitung.de", DomainCategory::simple(MainCategory::Other));
        (g, c)
    }

    #[test]
    fn tagging_examples() {
        let (g, c) = setup();
        let t = tag_regional(
            [
                "afd.berlin",
                "www.spd.de",
                "spd-kaiserslautern.de",
                "www.spd-ulm.de",
                "www.berliner-zeitung.de",
                "spd-badhomburg.de",
            ],
            &g,
            &c,
        );
        assert_eq!(t.regional.get("afd.berlin").map(String::as_str), Some("berlin"));
        assert!(!t.is_regional("www.spd.de"));
        assert_eq!(t.regional["spd-kaiserslautern.de"], "kaiserslautern");
        // three-letter place names never match
        assert!(!t.is_regional("www.spd-ulm.de"));
        // not owned content
        assert!(!t.is_regional("www.berliner-zeitung.de"));
        assert_eq!(t.regional["spd-badhomburg.de"], "bad homburg");
    }

    #[test]
    fn tagging_is_case_insensitive() {
        let (g, c) = setup();
        let t = tag_regional(["AfD.Berlin"], &g, &c);
        assert!(t.is_regional("afd.berlin"));
    }

    #[test]
    fn empty_gazetteer_rejected() {
        assert!(Gazetteer::parse("\n  \n# x\n").is_err());
    }

    #[test]
    fn refined_examples() {
        let (g, c) = setup();
        let t = tag_regional(["afd.berlin", "spd-kaiserslautern.de"], &g, &c);
        let same = PairGroup::from_url_lists(&vec![vec!["https://a.de/", "https://b.de/"]; 2]);
        assert_eq!(refined_nonshared(&same, &t).unwrap(), (0.0, 0.0));

        let grp = PairGroup::from_url_lists(&[
            vec!["https://a.de/", "https://afd.berlin/", "https://p1.de/"],
            vec!["https://a.de/", "https://spd-kaiserslautern.de/", "https://p2.de/"],
        ]);
        let (raw, refined) = refined_nonshared(&grp, &t).unwrap();
        assert_eq!(raw, 2.0);
        assert_eq!(refined, 1.0);

        let nonregional = PairGroup::from_url_lists(&[vec!["https://a.de/", "https://x.de/"], vec!["https://a.de/", "https://y.de/"]]);
        let (raw, refined) = refined_nonshared(&nonregional, &t).unwrap();
        assert_eq!(raw, refined);

        let empty = RegionalTagTable::default();
        let (raw, refined) = refined_nonshared(&grp, &empty).unwrap();
        assert_eq!(raw, refined);
    }
}
