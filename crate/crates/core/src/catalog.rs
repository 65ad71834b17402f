//! Domain categories (owned content, social media, Wikipedia, media, ...)
//! and ranking/distribution statistics over result lists.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{extract_tld, ResultList, SearchTerm, SearchType, Segment};
use crate::table::{fmt_f64, parse_text_table, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainCategory {
    OwnedContent,
    SocialMedia,
    Wikipedia,
    Media,
    Freemail,
    PubliclyFunded,
    Other,
}

impl MainCategory {
    pub const ALL: [MainCategory; 7] = [
        MainCategory::OwnedContent,
        MainCategory::SocialMedia,
        MainCategory::Wikipedia,
        MainCategory::Media,
        MainCategory::Freemail,
        MainCategory::PubliclyFunded,
        MainCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MainCategory::OwnedContent => "owned_content",
            MainCategory::SocialMedia => "social_media",
            MainCategory::Wikipedia => "wikipedia",
            MainCategory::Media => "media",
            MainCategory::Freemail => "freemail",
            MainCategory::PubliclyFunded => "publicly_funded",
            MainCategory::Other => "other",
        }
    }

    /// Content the party or person can edit, in principle.
    pub fn is_editable(self) -> bool {
        matches!(
            self,
            MainCategory::OwnedContent | MainCategory::SocialMedia | MainCategory::Wikipedia
        )
    }
}

impl fmt::Display for MainCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MainCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MainCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaSub {
    Print,
    Tv,
    PublicService,
    OnlineOnly,
}

impl MediaSub {
    pub fn name(self) -> &'static str {
        match self {
            MediaSub::Print => "print",
            MediaSub::Tv => "tv",
            MediaSub::PublicService => "public_service",
            MediaSub::OnlineOnly => "online_only",
        }
    }
}

impl FromStr for MediaSub {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [MediaSub::Print, MediaSub::Tv, MediaSub::PublicService, MediaSub::OnlineOnly]
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown media sub-category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DomainCategory {
    pub main: MainCategory,
    pub media_sub: Option<MediaSub>,
    pub party_owner: Option<String>,
}

impl DomainCategory {
    /// Checks the field invariants: a media sub-category exactly for media,
    /// a party owner only for owned content.
    pub fn new(main: MainCategory, media_sub: Option<MediaSub>, party_owner: Option<String>) -> Result<Self> {
        if media_sub.is_some() != (main == MainCategory::Media) {
            return Err(Error::Config(format!(
                "media sub-category must be present iff main is media (main {main})"
            )));
        }
        if party_owner.is_some() && main != MainCategory::OwnedContent {
            return Err(Error::Config(format!("party owner on non-owned category {main}")));
        }
        Ok(DomainCategory {
            main,
            media_sub,
            party_owner,
        })
    }

    pub fn simple(main: MainCategory) -> Self {
        DomainCategory {
            main,
            media_sub: None,
            party_owner: None,
        }
    }

    pub fn media(sub: MediaSub) -> Self {
        DomainCategory {
            main: MainCategory::Media,
            media_sub: Some(sub),
            party_owner: None,
        }
    }

    pub fn owned(party: impl Into<String>) -> Self {
        DomainCategory {
            main: MainCategory::OwnedContent,
            media_sub: None,
            party_owner: Some(party.into()),
        }
    }
}

/// Host to category. Unlisted hosts are "other"; Wikipedia hosts are
/// always "wikipedia".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    map: HashMap<String, DomainCategory>,
}

pub fn is_wikipedia_host(host: &str) -> bool {
    host == "wikipedia.org" || host.ends_with(".wikipedia.org")
}

impl CategoryTable {
    pub fn insert(&mut self, host: &str, cat: DomainCategory) {
        self.map.insert(host.trim().to_lowercase(), cat);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DomainCategory)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn get(&self, host: &str) -> Option<&DomainCategory> {
        self.map.get(host)
    }

    /// Columns: host, main, media_sub, party_owner. Use `-` for an empty
    /// cell; trailing empty cells may be omitted.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut t = CategoryTable::default();
        let bad = |line, reason: String| Error::Table {
            file: file.into(),
            line,
            reason,
        };
        for (line, fields) in parse_text_table(text) {
            if fields.len() < 2 || fields.len() > 4 {
                return Err(bad(line, format!("expected 2-4 columns, got {}", fields.len())));
            }
            let cell = |i: usize| fields.get(i).copied().filter(|s| !s.is_empty() && *s != "-");
            let main: MainCategory = fields[1].parse().map_err(|e: Error| bad(line, e.to_string()))?;
            let sub = cell(2)
                .map(str::parse::<MediaSub>)
                .transpose()
                .map_err(|e| bad(line, e.to_string()))?;
            let owner = cell(3).map(str::to_string);
            let cat = DomainCategory::new(main, sub, owner).map_err(|e| bad(line, e.to_string()))?;
            t.insert(fields[0], cat);
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let sorted: BTreeMap<_, _> = self.map.iter().collect();
        let mut out = String::from("# host\tmain\tmedia_sub\tparty_owner\n");
        for (h, c) in sorted {
            let _ = writeln!(
                out,
                "{h}\t{}\t{}\t{}",
                c.main,
                c.media_sub.map(MediaSub::name).unwrap_or("-"),
                c.party_owner.as_deref().unwrap_or("-")
            );
        }
        out
    }
}

static OTHER: DomainCategory = DomainCategory {
    main: MainCategory::Other,
    media_sub: None,
    party_owner: None,
};

static WIKIPEDIA: DomainCategory = DomainCategory {
    main: MainCategory::Wikipedia,
    media_sub: None,
    party_owner: None,
};

pub fn classify<'a>(host: &str, table: &'a CategoryTable) -> &'a DomainCategory {
    if is_wikipedia_host(host) {
        return &WIKIPEDIA;
    }
    table.get(host).unwrap_or(&OTHER)
}

/// Category of a URL; URLs without a host count as "other".
pub fn classify_url<'a>(url: &str, table: &'a CategoryTable) -> &'a DomainCategory {
    match extract_tld(url) {
        Ok(host) => classify(host.as_str(), table),
        Err(_) => &OTHER,
    }
}

/// URL occurrences per host for one term, top `k`, ties broken by host.
pub fn top_tlds(
    lists: &[ResultList],
    term: SearchTerm,
    search_type: SearchType,
    segment: Segment,
    k: usize,
) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for l in lists.iter().filter(|l| l.term == term && l.search_type == search_type) {
        for u in l.urls(segment) {
            if let Ok(h) = extract_tld(u) {
                *counts.entry(h.as_str().to_string()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Same as [`top_tlds`] with the term given as text.
pub fn top_tlds_by_name(
    lists: &[ResultList],
    term: &str,
    search_type: SearchType,
    segment: Segment,
    k: usize,
) -> Result<Vec<(String, usize)>> {
    let term: SearchTerm = term.parse()?;
    Ok(top_tlds(lists, term, search_type, segment, k))
}

/// Per-list category shares averaged over the (non-empty) lists. Every
/// category is present in the output; the shares sum to one unless there
/// are no non-empty lists, in which case all are zero.
pub fn category_distribution<'a, I>(lists: I, segment: Segment, table: &CategoryTable) -> BTreeMap<MainCategory, f64>
where
    I: IntoIterator<Item = &'a ResultList>,
{
    let mut sums: BTreeMap<MainCategory, f64> = MainCategory::ALL.into_iter().map(|c| (c, 0.0)).collect();
    let mut n_lists = 0usize;
    for l in lists {
        let mut counts: BTreeMap<MainCategory, usize> = BTreeMap::new();
        let mut total = 0usize;
        for u in l.urls(segment) {
            *counts.entry(classify_url(u, table).main).or_default() += 1;
            total += 1;
        }
        if total == 0 {
            continue;
        }
        n_lists += 1;
        for (c, n) in counts {
            *sums.get_mut(&c).unwrap() += n as f64 / total as f64;
        }
    }
    if n_lists > 0 {
        for v in sums.values_mut() {
            *v /= n_lists as f64;
        }
    }
    sums
}

/// Editable entries over all entries, pooled over the given URLs.
pub fn editable_share<'a, I>(urls: I, table: &CategoryTable) -> Option<f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let (mut editable, mut total) = (0usize, 0usize);
    for u in urls {
        total += 1;
        if classify_url(u, table).main.is_editable() {
            editable += 1;
        }
    }
    (total > 0).then(|| editable as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TldCensus {
    pub distinct: usize,
    pub by_category: BTreeMap<MainCategory, usize>,
    pub by_party: BTreeMap<String, usize>,
}

/// Distinct hosts delivered overall, per category and per owning party.
pub fn distinct_tld_census<'a, I>(lists: I, segment: Segment, table: &CategoryTable) -> TldCensus
where
    I: IntoIterator<Item = &'a ResultList>,
{
    let mut hosts: BTreeSet<String> = BTreeSet::new();
    for l in lists {
        for u in l.urls(segment) {
            if let Ok(h) = extract_tld(u) {
                if !hosts.contains(h.as_str()) {
                    hosts.insert(h.as_str().to_string());
                }
            }
        }
    }
    let mut census = TldCensus {
        distinct: hosts.len(),
        ..Default::default()
    };
    for h in &hosts {
        let c = classify(h, table);
        *census.by_category.entry(c.main).or_default() += 1;
        if let Some(p) = &c.party_owner {
            *census.by_party.entry(p.clone()).or_default() += 1;
        }
    }
    census
}

pub fn ranking_table(rows: &[(SearchTerm, Vec<(String, usize)>)]) -> Table {
    let mut t = Table::new(["term", "rank", "host", "count"]);
    for (term, ranked) in rows {
        for (i, (h, n)) in ranked.iter().enumerate() {
            t.push([term.text().to_string(), (i + 1).to_string(), h.clone(), n.to_string()]);
        }
    }
    t
}

pub fn distribution_table(rows: &[(SearchTerm, BTreeMap<MainCategory, f64>)]) -> Table {
    let mut t = Table::new(["term", "category", "share"]);
    for (term, dist) in rows {
        for (c, v) in dist {
            t.push([term.text().to_string(), c.name().to_string(), fmt_f64(*v)]);
        }
    }
    t
}

pub fn census_table(c: &TldCensus) -> Table {
    let mut t = Table::new(["dimension", "value", "distinct_hosts"]);
    t.push(["total".to_string(), "all".to_string(), c.distinct.to_string()]);
    for (k, v) in &c.by_category {
        t.push(["category".to_string(), k.name().to_string(), v.to_string()]);
    }
    for (k, v) in &c.by_party {
        t.push(["party".to_string(), k.clone(), v.to_string()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SearchTimeKey, Slot};
    use chrono::NaiveDate;

    fn table() -> CategoryTable {
        CategoryTable::parse(
            "# sample\n\
             www.spiegel.de\tmedia\tprint\n\
             web.de\tfreemail\n\
             www.spd.de\towned_content\t-\tSPD\n\
             www.facebook.com\tsocial_media\n\
             www.bpb.de\tpublicly_funded\n",
            "cat.tsv",
        )
        .unwrap()
    }

    pub(crate) fn list(term: SearchTerm, organic: &[&str]) -> ResultList {
        let date = NaiveDate::from_ymd_opt(2017, 8, 21).unwrap();
        ResultList {
            donor_id: "d".into(),
            term,
            time_key: SearchTimeKey { date, slot: Slot::Noon },
            search_type: SearchType::GoogleSearch,
            timestamp: date.and_hms_opt(12, 0, 0).unwrap(),
            top_stories: vec![],
            organic: organic.iter().map(|s| (*s).into()).collect(),
            age_strings: vec![],
        }
    }

    #[test]
    fn classify_examples() {
        let t = table();
        assert_eq!(classify("de.wikipedia.org", &t).main, MainCategory::Wikipedia);
        assert_eq!(*classify("www.spiegel.de", &t), DomainCategory::media(MediaSub::Print));
        assert_eq!(classify("web.de", &t).main, MainCategory::Freemail);
        assert_eq!(classify("unknown.example", &t).main, MainCategory::Other);
    }

    #[test]
    fn wikipedia_overrides_table() {
        let mut t = table();
        t.insert("en.wikipedia.org", DomainCategory::simple(MainCategory::Other));
        assert_eq!(classify("en.wikipedia.org", &t).main, MainCategory::Wikipedia);
    }

    #[test]
    fn category_invariants() {
        assert!(DomainCategory::new(MainCategory::Media, None, None).is_err());
        assert!(DomainCategory::new(MainCategory::Other, Some(MediaSub::Tv), None).is_err());
        assert!(DomainCategory::new(MainCategory::Media, Some(MediaSub::Tv), Some("SPD".into())).is_err());
        assert!(CategoryTable::parse("x.de media\n", "f").is_err());
        assert!(CategoryTable::parse("x.de nonsense\n", "f").is_err());
    }

    #[test]
    fn table_text_roundtrip() {
        let t = table();
        assert_eq!(CategoryTable::parse(&t.to_text(), "f").unwrap(), t);
    }

    #[test]
    fn top_tlds_ranks_and_ties() {
        let lists = vec![
            list(SearchTerm::Spd, &["https://www.spd.de/", "https://www.spd.de/a", "https://b.de/", "https://a.de/"]),
            list(SearchTerm::Spd, &["https://www.spd.de/", "https://b.de/x", "https://a.de/y"]),
            list(SearchTerm::Cdu, &["https://z.de/"]),
        ];
        let r = top_tlds(&lists, SearchTerm::Spd, SearchType::GoogleSearch, Segment::Organic, 10);
        assert_eq!(
            r,
            vec![("www.spd.de".to_string(), 3), ("a.de".to_string(), 2), ("b.de".to_string(), 2)]
        );
        assert!(top_tlds(&[], SearchTerm::Spd, SearchType::GoogleSearch, Segment::Organic, 10).is_empty());
        assert!(top_tlds_by_name(&lists, "Horst", SearchType::GoogleSearch, Segment::Organic, 3).is_err());
    }

    #[test]
    fn distribution_and_editable() {
        let t = table();
        let owned = list(SearchTerm::Spd, &["https://www.spd.de/1", "https://www.spd.de/2"]);
        let d = category_distribution([&owned], Segment::Organic, &t);
        assert_eq!(d[&MainCategory::OwnedContent], 1.0);
        assert_eq!(d.len(), 7);

        let urls = [
            "https://www.spd.de/1",
            "https://www.spd.de/2",
            "https://www.spd.de/3",
            "https://www.facebook.com/spd",
            "https://de.wikipedia.org/wiki/SPD",
            "https://www.spiegel.de/1",
            "https://www.spiegel.de/2",
            "https://www.spiegel.de/3",
            "https://www.spiegel.de/4",
        ];
        assert_eq!(editable_share(urls, &t), Some(5.0 / 9.0));
        assert_eq!(editable_share(["https://www.spiegel.de/1"], &t), Some(0.0));
        assert_eq!(editable_share([], &t), None);
    }

    #[test]
    fn census() {
        let t = table();
        let lists = vec![
            list(SearchTerm::Spd, &["https://www.spd.de/", "https://a.de/"]),
            list(SearchTerm::Spd, &["https://b.de/", "https://c.de/"]),
            list(SearchTerm::Spd, &["https://d.de/", "https://a.de/z"]),
        ];
        let c = distinct_tld_census(&lists, Segment::Organic, &t);
        assert_eq!(c.distinct, 5);
        assert_eq!(c.by_party["SPD"], 1);
    }
}
