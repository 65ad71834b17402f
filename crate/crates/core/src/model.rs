//! Shared domain types: search terms, the investigation calendar, donated
//! records, cleaned result lists and host extraction.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Party,
    Person,
}

/// One of the sixteen fixed queries issued by the donation plug-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SearchTerm {
    Cdu,
    Csu,
    Spd,
    Fdp,
    Gruene,
    Linke,
    Afd,
    Merkel,
    Schulz,
    Lindner,
    GoeringEckardt,
    Oezdemir,
    Wagenknecht,
    Bartsch,
    Weidel,
    Gauland,
}

impl SearchTerm {
    pub const ALL: [SearchTerm; 16] = [
        SearchTerm::Cdu,
        SearchTerm::Csu,
        SearchTerm::Spd,
        SearchTerm::Fdp,
        SearchTerm::Gruene,
        SearchTerm::Linke,
        SearchTerm::Afd,
        SearchTerm::Merkel,
        SearchTerm::Schulz,
        SearchTerm::Lindner,
        SearchTerm::GoeringEckardt,
        SearchTerm::Oezdemir,
        SearchTerm::Wagenknecht,
        SearchTerm::Bartsch,
        SearchTerm::Weidel,
        SearchTerm::Gauland,
    ];

    /// The query string exactly as the plug-in sent it.
    pub fn text(self) -> &'static str {
        match self {
            SearchTerm::Cdu => "CDU",
            SearchTerm::Csu => "CSU",
            SearchTerm::Spd => "SPD",
            SearchTerm::Fdp => "FDP",
            SearchTerm::Gruene => "Bündnis 90/Die Grünen",
            SearchTerm::Linke => "Die Linke",
            SearchTerm::Afd => "AfD",
            SearchTerm::Merkel => "Angela Merkel",
            SearchTerm::Schulz => "Martin Schulz",
            SearchTerm::Lindner => "Christian Lindner",
            SearchTerm::GoeringEckardt => "Katrin Göring-Eckardt",
            SearchTerm::Oezdemir => "Cem Özdemir",
            SearchTerm::Wagenknecht => "Sahra Wagenknecht",
            SearchTerm::Bartsch => "Dietmar Bartsch",
            SearchTerm::Weidel => "Alice Weidel",
            SearchTerm::Gauland => "Alexander Gauland",
        }
    }

    pub fn kind(self) -> TermKind {
        if (self as usize) < 7 {
            TermKind::Party
        } else {
            TermKind::Person
        }
    }

    /// ASCII identifier usable in hostnames and file names.
    pub fn slug(self) -> &'static str {
        match self {
            SearchTerm::Cdu => "cdu",
            SearchTerm::Csu => "csu",
            SearchTerm::Spd => "spd",
            SearchTerm::Fdp => "fdp",
            SearchTerm::Gruene => "gruene",
            SearchTerm::Linke => "die-linke",
            SearchTerm::Afd => "afd",
            SearchTerm::Merkel => "angela-merkel",
            SearchTerm::Schulz => "martin-schulz",
            SearchTerm::Lindner => "christian-lindner",
            SearchTerm::GoeringEckardt => "goering-eckardt",
            SearchTerm::Oezdemir => "cem-oezdemir",
            SearchTerm::Wagenknecht => "sahra-wagenknecht",
            SearchTerm::Bartsch => "dietmar-bartsch",
            SearchTerm::Weidel => "alice-weidel",
            SearchTerm::Gauland => "alexander-gauland",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SearchTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.text())
    }
}

fn fold_term(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .map(|c| match c {
            'ü' => 'u',
            'ö' => 'o',
            'ä' => 'a',
            c => c,
        })
        .collect()
}

impl FromStr for SearchTerm {
    type Err = Error;

    /// Accepts the exact query text, the slug, or the text with whitespace
    /// and umlauts folded ("Bündnis90/Die Grünen" and "Bündnis 90/Die Grünen"
    /// are the same term).
    fn from_str(s: &str) -> Result<Self> {
        let folded = fold_term(s);
        SearchTerm::ALL
            .into_iter()
            .find(|t| t.slug() == s.trim() || fold_term(t.text()) == folded)
            .ok_or_else(|| Error::UnknownTerm(s.to_string()))
    }
}

impl Serialize for SearchTerm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.text())
    }
}

impl<'de> Deserialize<'de> for SearchTerm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Daily search slot kept for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    #[serde(rename = "12:00")]
    Noon,
    #[serde(rename = "16:00")]
    Afternoon,
    #[serde(rename = "20:00")]
    Evening,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Noon, Slot::Afternoon, Slot::Evening];

    pub fn hour(self) -> u32 {
        match self {
            Slot::Noon => 12,
            Slot::Afternoon => 16,
            Slot::Evening => 20,
        }
    }

    pub fn from_hour(hour: u32) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.hour() == hour)
    }

    pub fn label(self) -> &'static str {
        match self {
            Slot::Noon => "12:00",
            Slot::Afternoon => "16:00",
            Slot::Evening => "20:00",
        }
    }
}

pub fn period_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 8, 21).unwrap()
}

pub fn period_end() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 9, 24).unwrap()
}

/// Weekdays of the investigation period plus the election weekend.
pub fn is_admissible_date(date: NaiveDate) -> bool {
    if date < period_start() || date > period_end() {
        return false;
    }
    let election_weekend = date >= NaiveDate::from_ymd_opt(2017, 9, 23).unwrap();
    election_weekend || !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

pub fn admissible_dates() -> Vec<NaiveDate> {
    period_start()
        .iter_days()
        .take_while(|d| *d <= period_end())
        .filter(|d| is_admissible_date(*d))
        .collect()
}

/// A (day, slot) search time inside the investigation period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SearchTimeKey {
    pub date: NaiveDate,
    pub slot: Slot,
}

impl SearchTimeKey {
    pub fn new(date: NaiveDate, slot: Slot) -> Option<Self> {
        is_admissible_date(date).then_some(SearchTimeKey { date, slot })
    }

    /// All 81 admissible keys in chronological order.
    pub fn all() -> Vec<SearchTimeKey> {
        admissible_dates()
            .into_iter()
            .flat_map(|date| Slot::ALL.into_iter().map(move |slot| SearchTimeKey { date, slot }))
            .collect()
    }

    /// Position of this key in the chronological list of admissible keys.
    pub fn index(self) -> usize {
        let day = admissible_dates()
            .iter()
            .position(|d| *d == self.date)
            .expect("key date is admissible");
        day * 3 + self.slot as usize
    }

    /// Wall-clock instant at which the slot fires.
    pub fn start(self) -> NaiveDateTime {
        self.date.and_hms_opt(self.slot.hour(), 0, 0).unwrap()
    }
}

impl fmt::Display for SearchTimeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.date, self.slot.label())
    }
}

/// Maps a timestamp to its search time. A slot admits `[S, S + 60 min)`.
pub fn time_key_of(ts: NaiveDateTime) -> Option<SearchTimeKey> {
    let slot = Slot::from_hour(ts.hour())?;
    SearchTimeKey::new(ts.date(), slot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchType {
    GoogleSearch,
    GoogleNews,
}

impl SearchType {
    pub fn label(self) -> &'static str {
        match self {
            SearchType::GoogleSearch => "google_search",
            SearchType::GoogleNews => "google_news",
        }
    }
}

impl FromStr for SearchType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "google_search" | "search" => Ok(SearchType::GoogleSearch),
            "google_news" | "news" => Ok(SearchType::GoogleNews),
            _ => Err(Error::Config(format!("unknown search type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    TopStory,
    Organic,
    News,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rank: u32,
    pub url: Arc<str>,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_text: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_string: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub medium: Option<Arc<str>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<Arc<str>>,
}

impl ResultEntry {
    pub fn new(rank: u32, url: impl Into<Arc<str>>, kind: EntryKind) -> Self {
        ResultEntry {
            rank,
            url: url.into(),
            kind,
            link_text: None,
            age_string: None,
            medium: None,
            title: None,
        }
    }

    pub fn with_age(mut self, age: impl Into<Arc<str>>) -> Self {
        self.age_string = Some(age.into());
        self
    }
}

/// One donated first result page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonationRecord {
    pub donor_id: Arc<str>,
    pub search_type: SearchType,
    pub term: SearchTerm,
    #[serde(with = "timestamp")]
    pub timestamp: NaiveDateTime,
    pub logged_in: bool,
    pub browser_language: Arc<str>,
    pub lat: f64,
    pub lon: f64,
    pub country: Arc<str>,
    pub entries: Vec<ResultEntry>,
}

impl DonationRecord {
    pub fn organic(&self) -> impl Iterator<Item = &ResultEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.kind, EntryKind::Organic | EntryKind::News))
    }

    pub fn top_stories(&self) -> impl Iterator<Item = &ResultEntry> {
        self.entries.iter().filter(|e| e.kind == EntryKind::TopStory)
    }

    pub fn time_key(&self) -> Option<SearchTimeKey> {
        time_key_of(self.timestamp)
    }
}

/// Timestamps are wall-clock. Offsets in the input are accepted and dropped.
pub mod timestamp {
    use chrono::{DateTime, NaiveDateTime};
    use serde::{Deserialize, Deserializer, Serializer};

    const FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

    pub fn parse(s: &str) -> Option<NaiveDateTime> {
        let s = s.trim();
        NaiveDateTime::parse_from_str(s, FORMAT)
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
            .ok()
            .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_local()))
    }

    pub fn serialize<S: Serializer>(ts: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&ts.format(FORMAT))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad timestamp {s:?}")))
    }
}

/// Cleaned list for one (donor, term, search time).
///
/// `organic` holds organic entries for web search and news entries for
/// news search. Both URL lists are deduplicated, first occurrence wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultList {
    pub donor_id: Arc<str>,
    pub term: SearchTerm,
    pub time_key: SearchTimeKey,
    pub search_type: SearchType,
    #[serde(with = "timestamp")]
    pub timestamp: NaiveDateTime,
    pub top_stories: Vec<Arc<str>>,
    pub organic: Vec<Arc<str>>,
    /// Publication-time strings of top stories and news entries, in rank order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub age_strings: Vec<Arc<str>>,
}

impl ResultList {
    /// Builds the list from an already cleaned record. Returns `None` when
    /// the timestamp is outside every search time.
    pub fn from_record(rec: &DonationRecord) -> Option<ResultList> {
        let time_key = rec.time_key()?;
        let mut entries: Vec<&ResultEntry> = rec.entries.iter().collect();
        entries.sort_by_key(|e| e.rank);
        let mut top_stories: Vec<Arc<str>> = Vec::new();
        let mut organic: Vec<Arc<str>> = Vec::new();
        let mut age_strings = Vec::new();
        for e in entries {
            let bucket = match e.kind {
                EntryKind::TopStory => &mut top_stories,
                EntryKind::Organic | EntryKind::News => &mut organic,
            };
            if !bucket.iter().any(|u| u.trim() == e.url.trim()) {
                bucket.push(e.url.clone());
            }
            if let Some(age) = &e.age_string {
                age_strings.push(age.clone());
            }
        }
        Some(ResultList {
            donor_id: rec.donor_id.clone(),
            term: rec.term,
            time_key,
            search_type: rec.search_type,
            timestamp: rec.timestamp,
            top_stories,
            organic,
            age_strings,
        })
    }

    pub fn urls(&self, segment: Segment) -> Box<dyn Iterator<Item = &Arc<str>> + '_> {
        match segment {
            Segment::Organic => Box::new(self.organic.iter()),
            Segment::TopStories => Box::new(self.top_stories.iter()),
            Segment::All => Box::new(self.top_stories.iter().chain(self.organic.iter())),
        }
    }
}

/// Which part of a result page a statistic looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Organic,
    TopStories,
    All,
}

impl FromStr for Segment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "organic" | "news" => Ok(Segment::Organic),
            "top_stories" | "top-stories" => Ok(Segment::TopStories),
            "all" => Ok(Segment::All),
            _ => Err(Error::Config(format!("unknown segment {s:?}"))),
        }
    }
}

/// Host part of a URL, lowercased. Named after the audit's own usage of
/// "top-level domain".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tld(String);

impl Tld {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Wraps an already extracted host. Lowercases; rejects scheme or path.
    pub fn new(host: &str) -> Result<Tld> {
        let h = host.trim().to_lowercase();
        if h.is_empty() || h.contains('/') || h.contains(char::is_whitespace) {
            return Err(Error::Classification(host.to_string()));
        }
        Ok(Tld(h))
    }
}

impl fmt::Display for Tld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Tld {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Host between the scheme separator and the first following `/`, `?` or
/// `#`, lowercased. Userinfo and port are not part of the host. Scheme-less
/// input is accepted when it starts with a dotted host.
pub fn extract_tld(url: &str) -> Result<Tld> {
    let raw = url.trim();
    let err = || Error::Classification(url.to_string());
    let rest = match raw.find("://") {
        Some(i) => {
            let scheme = &raw[..i];
            if scheme.is_empty()
                || !scheme
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
            {
                return Err(err());
            }
            &raw[i + 3..]
        }
        None => raw.strip_prefix("//").unwrap_or(raw),
    };
    let end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let mut authority = &rest[..end];
    if let Some(at) = authority.rfind('@') {
        authority = &authority[at + 1..];
    }
    let host = match authority.rfind(':') {
        Some(i) if authority[i + 1..].chars().all(|c| c.is_ascii_digit()) => &authority[..i],
        _ => authority,
    };
    if host.is_empty() || host.contains(char::is_whitespace) {
        return Err(err());
    }
    if !raw.contains("://") && !host.contains('.') {
        return Err(err());
    }
    Ok(Tld(host.to_lowercase()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn dt(y: i32, m: u32, d: u32, h: u32, min: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, min, 0)
            .unwrap()
    }

    #[test]
    fn faz_host() {
        let url = "http://www.faz.net/aktuell/wirtschaft/gruenen-chef-cem-oezdemir-will-gelaendewagen-bestrafen-wer-suv-faehrt-soll-die-kosten-fuer-die-umwelt-tragen-15201893.html";
        assert_eq!(extract_tld(url).unwrap().as_str(), "www.faz.net");
        assert_eq!(extract_tld("https://a.de/").unwrap().as_str(), "a.de");
        assert_eq!(
            extract_tld("https://de.wikipedia.org/wiki/Angela_Merkel").unwrap().as_str(),
            "de.wikipedia.org"
        );
    }

    #[test]
    fn host_edge_cases() {
        assert_eq!(extract_tld("HTTPS://WWW.Spiegel.DE").unwrap().as_str(), "www.spiegel.de");
        assert_eq!(extract_tld("https://x.de?q=1").unwrap().as_str(), "x.de");
        assert_eq!(extract_tld("https://x.de:8080/a").unwrap().as_str(), "x.de");
        assert_eq!(extract_tld("google.de/url?q=x").unwrap().as_str(), "google.de");
        assert_eq!(extract_tld("https://münchen.de/").unwrap().as_str(), "münchen.de");
        assert!(extract_tld("google").is_err());
        assert!(extract_tld("https:///path").is_err());
        assert!(extract_tld("").is_err());
        assert!(extract_tld("ht tp://x.de/").is_err());
    }

    #[test]
    fn extract_is_idempotent_on_own_output() {
        for url in ["http://www.faz.net/a", "https://afd.berlin/x?y", "https://a.de/"] {
            let t = extract_tld(url).unwrap();
            let again = extract_tld(&format!("https://{t}/")).unwrap();
            assert_eq!(t, again);
        }
    }

    #[test]
    fn eighty_one_keys() {
        let keys = SearchTimeKey::all();
        assert_eq!(admissible_dates().len(), 27);
        assert_eq!(keys.len(), 81);
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(k.index(), i);
        }
    }

    #[test]
    fn time_key_examples() {
        assert_eq!(
            time_key_of(dt(2017, 8, 28, 12, 3)),
            Some(SearchTimeKey {
                date: NaiveDate::from_ymd_opt(2017, 8, 28).unwrap(),
                slot: Slot::Noon
            })
        );
        assert_eq!(time_key_of(dt(2017, 8, 26, 12, 3)), None);
        assert_eq!(
            time_key_of(dt(2017, 9, 24, 20, 59)),
            Some(SearchTimeKey {
                date: NaiveDate::from_ymd_opt(2017, 9, 24).unwrap(),
                slot: Slot::Evening
            })
        );
        // window is half-open
        assert_eq!(time_key_of(dt(2017, 9, 24, 21, 0)), None);
        assert_eq!(time_key_of(dt(2017, 9, 22, 11, 59)), None);
        assert_eq!(time_key_of(dt(2017, 8, 20, 12, 0)), None);
        assert_eq!(time_key_of(dt(2017, 9, 25, 12, 0)), None);
    }

    #[test]
    fn terms() {
        assert_eq!(SearchTerm::ALL.len(), 16);
        assert_eq!(
            SearchTerm::ALL.iter().filter(|t| t.kind() == TermKind::Party).count(),
            7
        );
        for t in SearchTerm::ALL {
            assert_eq!(t.text().parse::<SearchTerm>().unwrap(), t);
            assert_eq!(t.slug().parse::<SearchTerm>().unwrap(), t);
        }
        assert_eq!(
            "Bündnis90/Die Grünen".parse::<SearchTerm>().unwrap(),
            SearchTerm::Gruene
        );
        assert!("Horst Seehofer".parse::<SearchTerm>().is_err());
    }

    #[test]
    fn list_from_record_dedups_and_splits() {
        let rec = DonationRecord {
            donor_id: "d".into(),
            search_type: SearchType::GoogleSearch,
            term: SearchTerm::Spd,
            timestamp: dt(2017, 8, 28, 16, 10),
            logged_in: false,
            browser_language: "de-DE".into(),
            lat: 50.0,
            lon: 8.0,
            country: "DE".into(),
            entries: vec![
                ResultEntry::new(2, "https://b.de/", EntryKind::Organic),
                ResultEntry::new(1, "https://n.de/1", EntryKind::TopStory).with_age("vor 1 Stunde"),
                ResultEntry::new(3, "https://b.de/", EntryKind::Organic),
                ResultEntry::new(4, "https://c.de/", EntryKind::Organic),
            ],
        };
        let list = ResultList::from_record(&rec).unwrap();
        assert_eq!(list.top_stories.len(), 1);
        assert_eq!(list.organic.len(), 2);
        assert_eq!(&*list.age_strings[0], "vor 1 Stunde");
        assert_eq!(list.urls(Segment::All).count(), 3);
    }
}
