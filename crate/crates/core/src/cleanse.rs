//! Data preparation: shared-ID donors, oversize lists, degenerate lists,
//! foreign-language lists and off-schedule searches are removed in a fixed
//! stage order, with a per-stage removal report.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{extract_tld, time_key_of, DonationRecord, EntryKind, ResultList, SearchTimeKey, SearchType};
use crate::table::{fmt_f64, parse_text_table, Table};

pub const GERMAN: &str = "de";

/// Host to language tag. Hosts not listed are "unknown".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageTable {
    map: HashMap<String, String>,
}

impl LanguageTable {
    pub fn insert(&mut self, host: &str, lang: &str) {
        self.map.insert(host.trim().to_lowercase(), lang.trim().to_lowercase());
    }

    pub fn language_of(&self, host: &str) -> Option<&str> {
        self.map.get(host).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Two columns: host and language tag; `#` comments allowed.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut t = LanguageTable::default();
        for (line, fields) in parse_text_table(text) {
            match fields.as_slice() {
                [host, lang] => t.insert(host, lang),
                _ => {
                    return Err(Error::Table {
                        file: file.into(),
                        line,
                        reason: format!("expected 2 columns, got {}", fields.len()),
                    })
                }
            }
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let sorted: BTreeMap<_, _> = self.map.iter().collect();
        let mut out = String::from("# host\tlanguage\n");
        for (h, l) in sorted {
            let _ = writeln!(out, "{h}\t{l}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub blocklist: BTreeSet<String>,
    /// Flag donor IDs seen with several countries or browser languages
    /// within one search time.
    pub duplicate_id_heuristic: bool,
    pub language_filter: bool,
    /// A list is kept iff its German share is strictly above this value.
    pub german_share: f64,
    pub max_organic: usize,
    pub max_top_stories: usize,
    pub max_news: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            blocklist: BTreeSet::new(),
            duplicate_id_heuristic: true,
            language_filter: true,
            german_share: 0.5,
            max_organic: 10,
            max_top_stories: 3,
            max_news: 20,
        }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.german_share) {
            return Err(Error::Config(format!(
                "german_share must be in [0, 1), got {}",
                self.german_share
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DuplicateIds,
    Truncate,
    Degenerate,
    Language,
    Period,
}

impl Stage {
    pub const ORDER: [Stage; 5] = [
        Stage::DuplicateIds,
        Stage::Truncate,
        Stage::Degenerate,
        Stage::Language,
        Stage::Period,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::DuplicateIds => "duplicate_ids",
            Stage::Truncate => "truncate",
            Stage::Degenerate => "degenerate",
            Stage::Language => "language",
            Stage::Period => "period",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub records_in: usize,
    pub records_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReduction {
    pub records_in: usize,
    pub records_out: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub stages: Vec<StageReport>,
    pub reduction: BTreeMap<SearchType, TypeReduction>,
    /// Donors with records in the input and none in the output.
    pub dropped_donors: BTreeSet<Arc<str>>,
    /// Donor IDs removed by the duplicate-ID stage.
    pub flagged_ids: BTreeSet<Arc<str>>,
}

impl CleaningReport {
    pub fn records_out(&self) -> usize {
        self.stages
            .last()
            .map(|s| s.records_in - s.records_removed)
            .unwrap_or(0)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["stage", "records_in", "records_removed"]);
        for s in &self.stages {
            t.push([s.stage.name().to_string(), s.records_in.to_string(), s.records_removed.to_string()]);
        }
        t
    }

    pub fn reduction_table(&self) -> Table {
        let mut t = Table::new(["search_type", "records_in", "records_out", "reduction"]);
        for (st, r) in &self.reduction {
            t.push([st.label().to_string(), r.records_in.to_string(), r.records_out.to_string(), fmt_f64(r.fraction)]);
        }
        t
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("Cleaning report\n");
        for s in &self.stages {
            let _ = writeln!(
                out,
                "  {:<14} in {:>10}  removed {:>10}",
                s.stage.name(),
                s.records_in,
                s.records_removed
            );
        }
        for (st, r) in &self.reduction {
            let _ = writeln!(
                out,
                "  {}: {} -> {} records, reduced by {:.1}%",
                st.label(),
                r.records_in,
                r.records_out,
                100.0 * r.fraction
            );
        }
        let _ = writeln!(out, "  donors dropped entirely: {}", self.dropped_donors.len());
        let _ = writeln!(out, "  donor ids flagged as shared: {}", self.flagged_ids.len());
        out
    }
}

/// Donor IDs to remove: the blocklist, plus (heuristic) IDs that appear
/// with more than one country or browser language within one search time.
pub fn shared_donor_ids(
    records: &[DonationRecord],
    blocklist: &BTreeSet<String>,
    heuristic: bool,
) -> BTreeSet<Arc<str>> {
    let mut flagged: BTreeSet<Arc<str>> = records
        .iter()
        .filter(|r| blocklist.contains(&*r.donor_id))
        .map(|r| r.donor_id.clone())
        .collect();
    if heuristic {
        type Seen<'a> = (HashSet<&'a str>, HashSet<&'a str>);
        let mut seen: HashMap<(&str, SearchTimeKey), Seen<'_>> = HashMap::new();
        for r in records {
            if let Some(key) = r.time_key() {
                let e = seen.entry((&r.donor_id, key)).or_default();
                e.0.insert(&r.country);
                e.1.insert(&r.browser_language);
            }
        }
        for ((donor, _), (countries, langs)) in seen {
            if countries.len() > 1 || langs.len() > 1 {
                flagged.insert(Arc::from(donor));
            }
        }
    }
    flagged
}

pub fn drop_duplicate_id_donors(
    records: Vec<DonationRecord>,
    blocklist: &BTreeSet<String>,
    heuristic: bool,
) -> Vec<DonationRecord> {
    let flagged = shared_donor_ids(&records, blocklist, heuristic);
    records
        .into_iter()
        .filter(|r| !flagged.contains(&r.donor_id))
        .collect()
}

/// Keeps the first `max_organic` organic entries, `max_top_stories` top
/// stories and `max_news` news entries, by rank.
pub fn truncate_lists(mut rec: DonationRecord, config: &CleanConfig) -> DonationRecord {
    rec.entries.sort_by_key(|e| e.rank);
    let (mut organic, mut top, mut news) = (0, 0, 0);
    rec.entries.retain(|e| {
        let (count, max) = match e.kind {
            EntryKind::Organic => (&mut organic, config.max_organic),
            EntryKind::TopStory => (&mut top, config.max_top_stories),
            EntryKind::News => (&mut news, config.max_news),
        };
        *count += 1;
        *count <= max
    });
    rec
}

/// A link that only points back into the search engine: `google.xx/url...`
/// or the bare text "google".
pub fn is_redirect_stub(url: &str) -> bool {
    let u = url.trim().to_lowercase();
    if u == "google" {
        return true;
    }
    let rest = match u.find("://") {
        Some(i) => &u[i + 3..],
        None => &u,
    };
    let rest = rest.strip_prefix("www.").unwrap_or(rest);
    let Some(after) = rest.strip_prefix("google.") else {
        return false;
    };
    match after.find('/') {
        Some(slash) => {
            let tld = &after[..slash];
            !tld.is_empty()
                && tld.chars().all(|c| c.is_ascii_alphabetic() || c == '.')
                && after[slash..].starts_with("/url")
        }
        None => false,
    }
}

/// Removes redirect stubs in place, then decides: drop when every organic
/// URL is the same (two or more entries), or when stub removal emptied the
/// organic list. Top stories never trigger a drop.
pub fn drop_degenerate_lists(rec: &mut DonationRecord) -> bool {
    let organic_before = rec.organic().count();
    rec.entries.retain(|e| !is_redirect_stub(&e.url));
    let organic: Vec<&str> = rec.organic().map(|e| e.url.trim()).collect();
    if organic_before > 0 && organic.is_empty() {
        return false;
    }
    !(organic.len() >= 2 && organic.iter().all(|u| *u == organic[0]))
}

/// German entries over entries with any known language; `None` when no
/// entry has a known language.
pub fn german_share(rec: &DonationRecord, table: &LanguageTable) -> Option<f64> {
    let (mut german, mut known) = (0usize, 0usize);
    for e in &rec.entries {
        let Ok(host) = extract_tld(&e.url) else { continue };
        if let Some(lang) = table.language_of(host.as_str()) {
            known += 1;
            if lang == GERMAN {
                german += 1;
            }
        }
    }
    (known > 0).then(|| german as f64 / known as f64)
}

pub fn language_filter(rec: &DonationRecord, table: &LanguageTable, threshold: f64) -> bool {
    german_share(rec, table).is_some_and(|s| s > threshold)
}

pub fn restrict_period(records: Vec<DonationRecord>) -> Vec<DonationRecord> {
    records
        .into_iter()
        .filter(|r| time_key_of(r.timestamp).is_some())
        .collect()
}

enum Fate {
    Kept(DonationRecord),
    Removed(Stage),
}

fn per_record(mut rec: DonationRecord, config: &CleanConfig, table: &LanguageTable) -> Fate {
    rec = truncate_lists(rec, config);
    if !drop_degenerate_lists(&mut rec) {
        return Fate::Removed(Stage::Degenerate);
    }
    if config.language_filter && !language_filter(&rec, table, config.german_share) {
        return Fate::Removed(Stage::Language);
    }
    if time_key_of(rec.timestamp).is_none() {
        return Fate::Removed(Stage::Period);
    }
    Fate::Kept(rec)
}

/// Runs every stage and returns the surviving, cleaned records.
pub fn clean_records(
    dataset: Dataset,
    config: &CleanConfig,
    table: &LanguageTable,
) -> Result<(Vec<DonationRecord>, CleaningReport)> {
    config.validate()?;
    let records = dataset.records;
    let mut input_by_type: BTreeMap<SearchType, usize> = BTreeMap::new();
    let mut input_donors: BTreeSet<Arc<str>> = BTreeSet::new();
    for r in &records {
        *input_by_type.entry(r.search_type).or_default() += 1;
        input_donors.insert(r.donor_id.clone());
    }

    let n_in = records.len();
    let flagged = shared_donor_ids(&records, &config.blocklist, config.duplicate_id_heuristic);
    let records: Vec<DonationRecord> = records
        .into_iter()
        .filter(|r| !flagged.contains(&r.donor_id))
        .collect();
    let mut report = CleaningReport {
        flagged_ids: flagged,
        ..Default::default()
    };
    report.stages.push(StageReport {
        stage: Stage::DuplicateIds,
        records_in: n_in,
        records_removed: n_in - records.len(),
    });

    let fates: Vec<Fate> = records
        .into_par_iter()
        .map(|r| per_record(r, config, table))
        .collect();
    let mut removed: BTreeMap<Stage, usize> = BTreeMap::new();
    let mut kept = Vec::with_capacity(fates.len());
    for f in fates {
        match f {
            Fate::Kept(r) => kept.push(r),
            Fate::Removed(stage) => *removed.entry(stage).or_default() += 1,
        }
    }
    let mut remaining = n_in - report.stages[0].records_removed;
    for stage in &Stage::ORDER[1..] {
        let n = removed.get(stage).copied().unwrap_or(0);
        report.stages.push(StageReport {
            stage: *stage,
            records_in: remaining,
            records_removed: n,
        });
        remaining -= n;
    }

    let mut output_by_type: BTreeMap<SearchType, usize> = BTreeMap::new();
    let mut output_donors: HashSet<&str> = HashSet::new();
    for r in &kept {
        *output_by_type.entry(r.search_type).or_default() += 1;
        output_donors.insert(&r.donor_id);
    }
    for (st, n) in input_by_type {
        let out = output_by_type.get(&st).copied().unwrap_or(0);
        report.reduction.insert(
            st,
            TypeReduction {
                records_in: n,
                records_out: out,
                fraction: if n == 0 { 0.0 } else { 1.0 - out as f64 / n as f64 },
            },
        );
    }
    report.dropped_donors = input_donors
        .into_iter()
        .filter(|d| !output_donors.contains(&**d))
        .collect();
    Ok((kept, report))
}

/// Full preparation: cleaned result lists plus the removal report.
pub fn run_pipeline(
    dataset: Dataset,
    config: &CleanConfig,
    table: &LanguageTable,
) -> Result<(Vec<ResultList>, CleaningReport)> {
    let (records, report) = clean_records(dataset, config, table)?;
    let lists = records
        .par_iter()
        .map(|r| ResultList::from_record(r).expect("period stage keeps only keyed records"))
        .collect();
    Ok((lists, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResultEntry, SearchTerm};
    use chrono::NaiveDate;

    fn record(donor: &str, urls: &[&str]) -> DonationRecord {
        DonationRecord {
            donor_id: donor.into(),
            search_type: SearchType::GoogleSearch,
            term: SearchTerm::Spd,
            timestamp: NaiveDate::from_ymd_opt(2017, 8, 28)
                .unwrap()
                .and_hms_opt(12, 5, 0)
                .unwrap(),
            logged_in: false,
            browser_language: "de-DE".into(),
            lat: 49.4,
            lon: 7.7,
            country: "DE".into(),
            entries: urls
                .iter()
                .enumerate()
                .map(|(i, u)| ResultEntry::new(i as u32 + 1, *u, EntryKind::Organic))
                .collect(),
        }
    }

    fn table() -> LanguageTable {
        let mut t = LanguageTable::default();
        for i in 0..10 {
            t.insert(&format!("de{i}.de"), "de");
            t.insert(&format!("en{i}.com"), "en");
        }
        t
    }

    fn urls(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("https://{prefix}{i}.{}/p", if prefix == "de" { "de" } else { "com" })).collect()
    }

    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    #[test]
    fn shared_id_heuristic() {
        let mut a = record("shared", &["https://de0.de/"]);
        let mut b = a.clone();
        b.country = "FR".into();
        let c = record("clean", &["https://de0.de/"]);
        a.term = SearchTerm::Cdu;
        let out = drop_duplicate_id_donors(vec![a, b, c.clone()], &BTreeSet::new(), true);
        assert_eq!(out, vec![c.clone()]);

        let out = drop_duplicate_id_donors(vec![c.clone()], &BTreeSet::new(), true);
        assert_eq!(out.len(), 1);

        let x = record("X", &["https://de0.de/"]);
        let block: BTreeSet<String> = ["X".to_string()].into();
        let out = drop_duplicate_id_donors(vec![x, c.clone()], &block, false);
        assert_eq!(out, vec![c]);
    }

    #[test]
    fn truncation() {
        let cfg = CleanConfig::default();
        let many = urls("de", 200);
        let r = truncate_lists(record("a", &refs(&many)), &cfg);
        assert_eq!(r.entries.len(), 10);
        assert_eq!(&*r.entries[9].url, many[9].as_str());

        let nine = urls("de", 9);
        let r = truncate_lists(record("a", &refs(&nine)), &cfg);
        assert_eq!(r.entries.len(), 9);

        let mut news = record("a", &refs(&urls("de", 25)));
        news.search_type = SearchType::GoogleNews;
        for e in &mut news.entries {
            e.kind = EntryKind::News;
        }
        assert_eq!(truncate_lists(news, &cfg).entries.len(), 20);

        let mut with_top = record("a", &refs(&urls("de", 12)));
        for e in with_top.entries.iter_mut().take(5) {
            e.kind = EntryKind::TopStory;
        }
        let r = truncate_lists(with_top, &cfg);
        assert_eq!(r.top_stories().count(), 3);
        assert_eq!(r.organic().count(), 7);
    }

    #[test]
    fn degenerate() {
        let mut same = record("a", &["https://de0.de/x"; 10]);
        assert!(!drop_degenerate_lists(&mut same));

        let mut v = urls("de", 9);
        v.insert(4, "https://www.google.de/url?q=https://x".into());
        let mut r = record("a", &refs(&v));
        assert!(drop_degenerate_lists(&mut r));
        assert_eq!(r.entries.len(), 9);

        let mut g = record("a", &["google"]);
        assert!(!drop_degenerate_lists(&mut g));

        let mut normal = record("a", &refs(&urls("de", 10)));
        assert!(drop_degenerate_lists(&mut normal));
        assert_eq!(normal.entries.len(), 10);

        let mut single = record("a", &["https://de0.de/x"]);
        assert!(drop_degenerate_lists(&mut single));
    }

    #[test]
    fn stub_detection() {
        assert!(is_redirect_stub("google.de/url?q=x"));
        assert!(is_redirect_stub("https://www.google.com/url?sa=t"));
        assert!(is_redirect_stub(" Google "));
        assert!(!is_redirect_stub("https://www.google.de/search?q=x"));
        assert!(!is_redirect_stub("https://googlewatchblog.de/url"));
        assert!(!is_redirect_stub("https://de.wikipedia.org/wiki/Google"));
    }

    #[test]
    fn language_share_rule() {
        let t = table();
        let mut v = urls("de", 6);
        v.extend(urls("en", 4));
        let r = record("a", &refs(&v));
        assert_eq!(german_share(&r, &t), Some(0.6));
        assert!(language_filter(&r, &t, 0.5));

        let mut v = urls("de", 5);
        v.extend(urls("en", 5));
        assert!(!language_filter(&record("a", &refs(&v)), &t, 0.5));

        let mut v = urls("de", 4);
        v.extend(urls("en", 4));
        v.push("https://unknown1.org/".into());
        v.push("https://unknown2.org/".into());
        let r = record("a", &refs(&v));
        // unknown hosts leave the denominator; counting them would give 0.4
        assert_eq!(german_share(&r, &t), Some(0.5));
        let pooled = 4.0 / 10.0;
        assert!(pooled < 0.5);
        assert!(!language_filter(&r, &t, 0.5));

        let r = record("a", &["https://unknown1.org/"]);
        assert_eq!(german_share(&r, &t), None);
        assert!(!language_filter(&r, &t, 0.5));
    }

    #[test]
    fn period() {
        let mk = |y, m, d, h, min| {
            let mut r = record("a", &["https://de0.de/"]);
            r.timestamp = NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, min, 0).unwrap();
            r
        };
        let out = restrict_period(vec![mk(2017, 8, 28, 12, 5), mk(2017, 9, 2, 12, 5), mk(2017, 9, 24, 16, 10)]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn pipeline_report_reconciles() {
        let good = refs(&urls("de", 9)).iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut recs = vec![
            record("a", &refs(&good)),
            record("b", &["https://de0.de/x"; 10]),
            record("c", &refs(&urls("en", 9))),
        ];
        let mut off = record("d", &refs(&good));
        off.timestamp = off.timestamp.with_hour_fixed(14);
        recs.push(off);
        let (lists, report) = run_pipeline(Dataset::from_records(recs), &CleanConfig::default(), &table()).unwrap();
        assert_eq!(lists.len(), 1);
        let removed: Vec<usize> = report.stages.iter().map(|s| s.records_removed).collect();
        assert_eq!(removed, vec![0, 0, 1, 1, 1]);
        for w in report.stages.windows(2) {
            assert_eq!(w[1].records_in, w[0].records_in - w[0].records_removed);
        }
        assert_eq!(report.records_out(), 1);
        assert_eq!(report.dropped_donors.len(), 3);
        let r = &report.reduction[&SearchType::GoogleSearch];
        assert!((r.fraction - 0.75).abs() < 1e-12);
    }

    trait WithHour {
        fn with_hour_fixed(self, h: u32) -> Self;
    }
    impl WithHour for chrono::NaiveDateTime {
        fn with_hour_fixed(self, h: u32) -> Self {
            self.date().and_hms_opt(h, 30, 0).unwrap()
        }
    }

    #[test]
    fn language_table_file() {
        let t = LanguageTable::parse("# comment\nwww.spiegel.de de\nwww.bbc.co.uk\ten\n", "lang.tsv").unwrap();
        assert_eq!(t.language_of("www.spiegel.de"), Some("de"));
        assert_eq!(t.language_of("www.bbc.co.uk"), Some("en"));
        assert_eq!(t.language_of("x.fr"), None);
        assert!(LanguageTable::parse("a b c\n", "f").is_err());
        let again = LanguageTable::parse(&t.to_text(), "f").unwrap();
        assert_eq!(again, t);
    }
}
