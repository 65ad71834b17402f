//! Synthetic donation cohorts with labeled ground truth.
//!
//! Every (term, search time) has one base result page shared by all donors.
//! A donor's page is the base page with
//! * `k` personalization slots filled from a large URL pool,
//! * branch-site slots replaced by the donor's region,
//! * locale slots replaced by foreign URLs for foreign-locale donors, whose
//!   top stories also carry age strings in their language,
//!
//! after which faults are injected at the configured rates. Randomness is
//! drawn from independent per-entity streams derived from the seed, so the
//! clean part of a cohort does not depend on the fault rates or on the
//! number of worker threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{Duration, NaiveDateTime, Timelike};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubble::{BubbleParams, ClusterReport, LocaleTag};
use crate::catalog::{CategoryTable, DomainCategory, MainCategory, MediaSub};
use crate::cleanse::LanguageTable;
use crate::error::{Error, Result};
use crate::model::{DonationRecord, EntryKind, ResultEntry, ResultList, SearchTerm, SearchTimeKey, SearchType};
use crate::overlap::TermOverlap;
use crate::reach::{delivered_counts, Flagged, PanelRow, ReachFit, ReachPoint, Window};
use crate::regional::{Gazetteer, TermRefinement};
use crate::table::{fmt_f64, Table};

/// Where the personalization slots sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotMode {
    /// The same `k` positions for every donor of a (term, search time).
    Shared,
    /// Each donor's `k` positions are drawn independently.
    PerDonor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionalSpec {
    pub n_regions: usize,
    /// Branch-site URLs per regional page.
    pub branch_urls: usize,
    pub donors_per_region: usize,
}

impl Default for RegionalSpec {
    fn default() -> Self {
        RegionalSpec {
            n_regions: 40,
            branch_urls: 2,
            donors_per_region: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocaleSpec {
    pub locale: String,
    pub fraction: f64,
    /// Foreign URLs shared by all donors of the locale at a search time.
    pub shared_urls: usize,
    /// Foreign URLs unique to each donor.
    pub own_urls: usize,
    /// Size of the pool the shared foreign URLs are drawn from.
    pub pool_size: usize,
}

impl Default for LocaleSpec {
    fn default() -> Self {
        LocaleSpec {
            locale: "de".into(),
            fraction: 1.0,
            shared_urls: 0,
            own_urls: 0,
            pool_size: 50,
        }
    }
}

impl LocaleSpec {
    fn replaced(&self) -> usize {
        self.shared_urls + self.own_urls
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultRates {
    /// Per donor: a second device uploads under the same ID.
    pub duplicate_id: f64,
    pub repeated_url_list: f64,
    pub oversize_list: f64,
    pub redirect_stub: f64,
    pub foreign_list: f64,
    pub off_schedule: f64,
}

impl FaultRates {
    fn per_record(&self) -> [(FaultKind, f64); 5] {
        [
            (FaultKind::RepeatedUrlList, self.repeated_url_list),
            (FaultKind::OversizeList, self.oversize_list),
            (FaultKind::RedirectStub, self.redirect_stub),
            (FaultKind::ForeignList, self.foreign_list),
            (FaultKind::OffSchedule, self.off_schedule),
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.duplicate_id == 0.0 && self.per_record().iter().all(|(_, r)| *r == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachSpec {
    pub a: f64,
    pub b: f64,
    /// Half-width of the uniform multiplicative noise.
    pub noise: f64,
    /// Hosts whose reach is deflated so that they appear 20x over-delivered.
    pub overrepresented: usize,
}

impl Default for ReachSpec {
    fn default() -> Self {
        ReachSpec {
            a: 1.373,
            b: 0.9,
            noise: 0.1,
            overrepresented: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_donors: usize,
    pub terms: Vec<SearchTerm>,
    /// Indices into the 81 search times; all when absent.
    pub keys: Option<Vec<usize>>,
    pub list_length: usize,
    pub include_news: bool,
    pub news_length: usize,
    pub max_top_stories: usize,
    pub top_story_prob: f64,
    pub personalization_swaps: usize,
    pub slot_mode: SlotMode,
    pub personalization_pool: usize,
    /// Probability that a donor donates at a given search time.
    pub participation: f64,
    pub regional: Option<RegionalSpec>,
    pub locale_mix: Vec<LocaleSpec>,
    pub faults: FaultRates,
    pub reach: ReachSpec,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_donors: 100,
            terms: SearchTerm::ALL.to_vec(),
            keys: None,
            list_length: 9,
            include_news: false,
            news_length: 10,
            max_top_stories: 3,
            top_story_prob: 0.6,
            personalization_swaps: 0,
            slot_mode: SlotMode::Shared,
            personalization_pool: 10_000,
            participation: 1.0,
            regional: None,
            locale_mix: vec![LocaleSpec::default()],
            faults: FaultRates::default(),
            reach: ReachSpec::default(),
            seed: 1,
        }
    }
}

const MAX_ORGANIC: usize = 10;
const MAX_NEWS: usize = 20;
const OVERSIZE_LEN: usize = 200;

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Spec(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl CohortSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: CohortSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn time_keys(&self) -> Vec<SearchTimeKey> {
        let all = SearchTimeKey::all();
        match &self.keys {
            None => all,
            Some(idx) => idx.iter().map(|&i| all[i]).collect(),
        }
    }

    fn branch_slots(&self) -> usize {
        self.regional.as_ref().map_or(0, |r| r.branch_urls)
    }

    fn foreign_slots(&self) -> usize {
        self.locale_mix.iter().map(LocaleSpec::replaced).max().unwrap_or(0)
    }

    /// Positions available for personalization on a web page.
    pub fn free_slots(&self) -> usize {
        self.list_length.saturating_sub(self.branch_slots() + self.foreign_slots())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.personalization_swaps;
        let l = self.list_length;
        if self.n_donors == 0 {
            return Err(Error::Spec("n_donors must be positive".into()));
        }
        if self.terms.is_empty() {
            return Err(Error::Spec("at least one term is required".into()));
        }
        if self.terms.iter().collect::<BTreeSet<_>>().len() != self.terms.len() {
            return Err(Error::Spec("terms must be distinct".into()));
        }
        if let Some(keys) = &self.keys {
            if keys.is_empty() || keys.iter().any(|&i| i >= 81) {
                return Err(Error::Spec("keys must be a non-empty list of indices below 81".into()));
            }
            if keys.iter().collect::<BTreeSet<_>>().len() != keys.len() {
                return Err(Error::Spec("keys must be distinct".into()));
            }
        }
        let stub = usize::from(self.faults.redirect_stub > 0.0);
        if l == 0 || l + stub > MAX_ORGANIC {
            return Err(Error::Spec(format!(
                "list_length must be in 1..={} (one less with redirect stubs), got {l}",
                MAX_ORGANIC
            )));
        }
        if self.include_news && (self.news_length == 0 || self.news_length + stub > MAX_NEWS) {
            return Err(Error::Spec(format!("news_length must be in 1..={MAX_NEWS}, got {}", self.news_length)));
        }
        if self.faults.repeated_url_list > 0.0 && l < 2 {
            return Err(Error::Spec("repeated_url_list faults need list_length >= 2".into()));
        }
        if self.max_top_stories > 3 {
            return Err(Error::Spec("max_top_stories must be at most 3".into()));
        }
        unit("top_story_prob", self.top_story_prob)?;
        unit("participation", self.participation)?;
        unit("faults.duplicate_id", self.faults.duplicate_id)?;
        let mut total = 0.0;
        for (kind, r) in self.faults.per_record() {
            unit(&format!("faults.{}", kind.name()), r)?;
            total += r;
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::Spec(format!("per-record fault rates sum to {total} > 1")));
        }
        if k > l {
            return Err(Error::Spec(format!("personalization_swaps {k} exceeds list_length {l}")));
        }
        if self.branch_slots() + self.foreign_slots() + k > l {
            return Err(Error::Spec(format!(
                "{k} personalization + {} branch + {} foreign slots exceed list_length {l}",
                self.branch_slots(),
                self.foreign_slots()
            )));
        }
        if self.include_news && k > self.news_length {
            return Err(Error::Spec("personalization_swaps exceeds news_length".into()));
        }
        if k > 0 && self.personalization_pool < k {
            return Err(Error::Spec("personalization_pool must hold at least k URLs".into()));
        }
        if let Some(r) = &self.regional {
            if r.n_regions == 0 || r.branch_urls == 0 || r.donors_per_region == 0 {
                return Err(Error::Spec("regional parameters must be positive".into()));
            }
            if r.n_regions > place_names().len() {
                return Err(Error::Spec(format!("at most {} regions are supported", place_names().len())));
            }
            if r.n_regions * r.donors_per_region > self.n_donors {
                return Err(Error::Spec("n_regions * donors_per_region exceeds n_donors".into()));
            }
        }
        if self.locale_mix.is_empty() {
            return Err(Error::Spec("locale_mix must not be empty".into()));
        }
        let mut seen = BTreeSet::new();
        let mut sum = 0.0;
        for loc in &self.locale_mix {
            if locale_profile(&loc.locale).is_none() {
                return Err(Error::Spec(format!("unsupported locale {:?} (de, en, fr, no)", loc.locale)));
            }
            if !seen.insert(loc.locale.as_str()) {
                return Err(Error::Spec(format!("locale {:?} listed twice", loc.locale)));
            }
            unit(&format!("fraction of {}", loc.locale), loc.fraction)?;
            sum += loc.fraction;
            if loc.locale == "de" && loc.replaced() > 0 {
                return Err(Error::Spec("the German locale cannot carry foreign URLs".into()));
            }
            if loc.shared_urls > loc.pool_size {
                return Err(Error::Spec(format!("locale {}: shared_urls exceeds pool_size", loc.locale)));
            }
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("locale fractions sum to {sum}, expected 1")));
        }
        let rs = &self.reach;
        if !(rs.a > 0.0 && rs.a.is_finite() && rs.b.is_finite() && (0.0..1.0).contains(&rs.noise)) {
            return Err(Error::Spec("reach: a > 0, finite b and noise in [0, 1) required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    DuplicateId,
    RepeatedUrlList,
    OversizeList,
    RedirectStub,
    ForeignList,
    OffSchedule,
}

/// What correct cleaning does with a faulty record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Removed,
    /// Kept, and its result list equals the unfaulted one.
    Repaired,
}

impl FaultKind {
    pub fn name(self) -> &'static str {
        match self {
            FaultKind::DuplicateId => "duplicate_id",
            FaultKind::RepeatedUrlList => "repeated_url_list",
            FaultKind::OversizeList => "oversize_list",
            FaultKind::RedirectStub => "redirect_stub",
            FaultKind::ForeignList => "foreign_list",
            FaultKind::OffSchedule => "off_schedule",
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            FaultKind::OversizeList | FaultKind::RedirectStub => Outcome::Repaired,
            _ => Outcome::Removed,
        }
    }
}

/// Identity of a donated record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordId {
    pub donor_id: Arc<str>,
    pub search_type: SearchType,
    pub term: SearchTerm,
    #[serde(with = "crate::model::timestamp")]
    pub timestamp: NaiveDateTime,
}

impl RecordId {
    pub fn of(r: &DonationRecord) -> Self {
        RecordId {
            donor_id: r.donor_id.clone(),
            search_type: r.search_type,
            term: r.term,
            timestamp: r.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultLabel {
    pub record: RecordId,
    pub fault: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonorTruth {
    pub donor_id: Arc<str>,
    pub region: Option<usize>,
    pub locale: String,
    /// Another device uploads under this ID; all its records are faulty.
    pub duplicate_id: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalizedList {
    pub donor_id: Arc<str>,
    pub term: SearchTerm,
    pub search_type: SearchType,
    pub time_key: SearchTimeKey,
    pub urls: Vec<Arc<str>>,
}

/// Labels for everything the generator planted. Records without a fault
/// label are clean.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub donors: Vec<DonorTruth>,
    pub faults: Vec<FaultLabel>,
    pub personalized: Vec<PersonalizedList>,
    /// Host -> region place name.
    pub regional_hosts: BTreeMap<String, String>,
}

impl GroundTruth {
    pub fn fault_map(&self) -> HashMap<&RecordId, FaultKind> {
        self.faults.iter().map(|f| (&f.record, f.fault)).collect()
    }

    pub fn donor(&self, id: &str) -> Option<&DonorTruth> {
        self.donors.iter().find(|d| &*d.donor_id == id)
    }
}

/// A generated corpus with its ground truth and the lookup tables the
/// analyses need.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub records: Vec<DonationRecord>,
    pub truth: GroundTruth,
    pub categories: CategoryTable,
    pub languages: LanguageTable,
    pub gazetteer: Gazetteer,
}

// ---------------------------------------------------------------------------
// Random streams

mod tag {
    pub const BASE: u64 = 1;
    pub const DONOR: u64 = 2;
    pub const LIST: u64 = 3;
    pub const FAULT: u64 = 4;
    pub const DUPLICATE: u64 = 5;
    pub const ASSIGN: u64 = 6;
    pub const PLACES: u64 = 7;
    pub const REACH: u64 = 8;
    pub const TIME: u64 = 9;
    pub const PHANTOM: u64 = 10;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for t in tags {
        h = splitmix(h ^ t.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    ChaCha8Rng::seed_from_u64(h)
}

// ---------------------------------------------------------------------------
// Vocabulary

const PREFIX: [&str; 16] = [
    "alt", "bern", "dorn", "eich", "fels", "gold", "hain", "kirch", "lind", "mark", "neu", "ober", "rosen", "stein", "wald",
    "wies",
];
const MIDDLE: [&str; 4] = ["", "en", "er", "ing"];
const SUFFIX: [&str; 10] = ["bach", "berg", "burg", "dorf", "feld", "hagen", "hausen", "heim", "stadt", "tal"];
const CITIES: [&str; 10] = [
    "Berlin",
    "Hamburg",
    "München",
    "Köln",
    "Frankfurt",
    "Stuttgart",
    "Dresden",
    "Leipzig",
    "Kaiserslautern",
    "Bad Homburg",
];

/// Synthetic place names, all distinct and at least 7 characters long.
pub fn place_names() -> Vec<String> {
    let mut out = Vec::with_capacity(PREFIX.len() * MIDDLE.len() * SUFFIX.len());
    for p in PREFIX {
        for m in MIDDLE {
            for s in SUFFIX {
                out.push(format!("{p}{m}{s}"));
            }
        }
    }
    out
}

struct LocaleProfile {
    country: &'static str,
    language: &'static str,
    tld: &'static str,
    lat: f64,
    lon: f64,
}

fn locale_profile(locale: &str) -> Option<LocaleProfile> {
    let p = match locale {
        "de" => LocaleProfile { country: "DE", language: "de", tld: "de", lat: 51.0, lon: 10.0 },
        "en" => LocaleProfile { country: "US", language: "en", tld: "com", lat: 39.0, lon: -98.0 },
        "fr" => LocaleProfile { country: "FR", language: "fr", tld: "fr", lat: 46.5, lon: 2.5 },
        "no" => LocaleProfile { country: "NO", language: "no", tld: "no", lat: 61.0, lon: 9.0 },
        _ => return None,
    };
    Some(p)
}

/// Publication-time string for a top story or news entry.
pub fn age_string(locale: &str, hours: u32) -> String {
    let one = hours == 1;
    match locale {
        "en" => format!("{hours} hour{} ago", if one { "" } else { "s" }),
        "fr" => format!("Il y a {hours} heure{}", if one { "" } else { "s" }),
        "no" => format!("for {hours} time{} siden", if one { "" } else { "r" }),
        _ => format!("vor {hours} Stunde{}", if one { "" } else { "n" }),
    }
}

const MEDIA_A: [&str; 10] = ["tages", "abend", "morgen", "wochen", "stadt", "land", "rund", "netz", "nord", "sued"];
const MEDIA_B: [&str; 4] = ["blatt", "kurier", "bote", "rundschau"];
const SOCIAL: [&str; 4] = ["twitter.com", "www.facebook.com", "www.youtube.com", "www.instagram.com"];
const PUBLIC: [&str; 3] = ["www.bundestag.de", "www.bpb.de", "www.bundesregierung.de"];
const N_OTHER: usize = 12;
const N_POOL_HOSTS: usize = 25;
const N_FOREIGN_HOSTS: usize = 10;

struct Vocabulary {
    media: Vec<Arc<str>>,
    content: Vec<Arc<str>>,
    pool_hosts: Vec<Arc<str>>,
    foreign_hosts: BTreeMap<String, Vec<Arc<str>>>,
    regions: Vec<String>,
}

impl Vocabulary {
    fn new(spec: &CohortSpec) -> Self {
        let media: Vec<Arc<str>> = (0..MEDIA_A.len() * MEDIA_B.len())
            .map(|i| format!("www.{}{}.de", MEDIA_A[i % MEDIA_A.len()], MEDIA_B[i / MEDIA_A.len()]).into())
            .collect();
        let mut content = media.clone();
        content.extend(SOCIAL.iter().chain(PUBLIC.iter()).map(|h| Arc::from(*h)));
        content.extend((0..N_OTHER).map(|i| Arc::from(format!("www.verein{i:02}-info.de"))));
        let pool_hosts = (0..N_POOL_HOSTS).map(|i| Arc::from(format!("www.stimme{i:02}-blog.de"))).collect();
        let foreign_hosts = ["en", "fr", "no"]
            .iter()
            .map(|l| {
                let tld = locale_profile(l).unwrap().tld;
                let hosts = (0..N_FOREIGN_HOSTS).map(|i| Arc::from(format!("www.{l}-press{i}.{tld}"))).collect();
                (l.to_string(), hosts)
            })
            .collect();
        let mut names = place_names();
        names.shuffle(&mut stream(spec.seed, &[tag::PLACES]));
        let n = spec.regional.as_ref().map_or(0, |r| r.n_regions);
        Vocabulary {
            media,
            content,
            pool_hosts,
            foreign_hosts,
            regions: names.into_iter().take(n).collect(),
        }
    }

    fn owned_host(term: SearchTerm) -> String {
        format!("www.{}.de", term.slug())
    }

    fn branch_host(&self, term: SearchTerm, region: usize) -> String {
        format!("{}-{}.de", term.slug(), self.regions[region])
    }

    fn pool_url(&self, id: usize) -> Arc<str> {
        format!("https://{}/p/{id}", self.pool_hosts[id % self.pool_hosts.len()]).into()
    }

    fn tables(&self, spec: &CohortSpec) -> Result<(CategoryTable, LanguageTable, Gazetteer, BTreeMap<String, String>)> {
        let mut cat = CategoryTable::default();
        let mut lang = LanguageTable::default();
        let subs = [MediaSub::Print, MediaSub::Tv, MediaSub::PublicService, MediaSub::OnlineOnly];
        for (i, h) in self.media.iter().enumerate() {
            cat.insert(h, DomainCategory::media(subs[i % subs.len()]));
            lang.insert(h, "de");
        }
        for h in SOCIAL {
            cat.insert(h, DomainCategory::simple(MainCategory::SocialMedia));
        }
        for h in PUBLIC {
            cat.insert(h, DomainCategory::simple(MainCategory::PubliclyFunded));
            lang.insert(h, "de");
        }
        for h in self.content.iter().chain(&self.pool_hosts) {
            if cat.get(h).is_none() {
                cat.insert(h, DomainCategory::simple(MainCategory::Other));
                lang.insert(h, "de");
            }
        }
        lang.insert("de.wikipedia.org", "de");
        for (l, hosts) in &self.foreign_hosts {
            for h in hosts {
                lang.insert(h, l);
                cat.insert(h, DomainCategory::media(MediaSub::OnlineOnly));
            }
        }
        let mut regional = BTreeMap::new();
        for &t in &spec.terms {
            let h = Self::owned_host(t);
            cat.insert(&h, DomainCategory::owned(t.text()));
            lang.insert(&h, "de");
            for r in 0..self.regions.len() {
                let h = self.branch_host(t, r);
                cat.insert(&h, DomainCategory::owned(t.text()));
                lang.insert(&h, "de");
                regional.insert(h, self.regions[r].clone());
            }
        }
        let mut names: Vec<String> = CITIES.iter().map(|c| c.to_string()).collect();
        names.extend(self.regions.iter().cloned());
        let gazetteer = Gazetteer::new(names)?;
        Ok((cat, lang, gazetteer, regional))
    }
}

// ---------------------------------------------------------------------------
// Base pages

struct Base {
    organic: Vec<Arc<str>>,
    top: Vec<(Arc<str>, u32)>,
    news: Vec<(Arc<str>, u32)>,
    branch_slots: Vec<usize>,
    foreign_slots: Vec<usize>,
    /// Positions free for personalization; the shared slots are a prefix.
    free: Vec<usize>,
    news_order: Vec<usize>,
    branch: Vec<Vec<Arc<str>>>,
    foreign_shared: Vec<Vec<Arc<str>>>,
}

fn build_base(spec: &CohortSpec, vocab: &Vocabulary, term: SearchTerm, key: SearchTimeKey) -> Base {
    let mut rng = stream(spec.seed, &[tag::BASE, term.index() as u64, key.index() as u64]);
    let l = spec.list_length;
    let ki = key.index();
    let slug = term.slug();
    let mut organic: Vec<Arc<str>> = vec![format!("https://{}/", Vocabulary::owned_host(term)).into()];
    if l > 1 {
        organic.push(format!("https://de.wikipedia.org/wiki/{slug}").into());
    }
    let hosts: Vec<&Arc<str>> = vocab.content.choose_multiple(&mut rng, l.saturating_sub(2)).collect();
    for (j, h) in hosts.into_iter().enumerate() {
        organic.push(format!("https://{h}/{slug}/{ki}-{j}").into());
    }

    let mut top = Vec::new();
    if spec.max_top_stories > 0 && rng.gen_bool(spec.top_story_prob) {
        let n = rng.gen_range(1..=spec.max_top_stories);
        for (j, h) in vocab.media.choose_multiple(&mut rng, n).enumerate() {
            top.push((format!("https://{h}/news/{slug}-{ki}-{j}").into(), rng.gen_range(1..=12)));
        }
    }
    let mut news = Vec::new();
    if spec.include_news {
        for (j, h) in vocab.media.choose_multiple(&mut rng, spec.news_length.min(vocab.media.len())).enumerate() {
            news.push((format!("https://{h}/artikel/{slug}-{ki}-{j}").into(), rng.gen_range(1..=48)));
        }
        while news.len() < spec.news_length {
            let j = news.len();
            news.push((format!("https://{}/artikel/{slug}-{ki}-{j}", vocab.media[j % vocab.media.len()]).into(), 1));
        }
    }

    // Slot order: shuffled positions from 2 on, then the wikipedia and
    // owned slots, which are only used when nothing else is left.
    let mut order: Vec<usize> = (2.min(l)..l).collect();
    order.shuffle(&mut rng);
    order.extend((0..2.min(l)).rev());
    let b = spec.branch_slots();
    let f = spec.foreign_slots();
    let branch_slots = order[..b].to_vec();
    let foreign_slots = order[b..b + f].to_vec();
    let free = order[b + f..].to_vec();
    let mut news_order: Vec<usize> = (0..spec.news_length).collect();
    news_order.shuffle(&mut rng);

    let branch = (0..vocab.regions.len())
        .map(|r| {
            let h = vocab.branch_host(term, r);
            (0..b).map(|j| Arc::from(format!("https://{h}/{ki}/{j}"))).collect()
        })
        .collect();
    let foreign_shared = spec
        .locale_mix
        .iter()
        .map(|loc| match vocab.foreign_hosts.get(&loc.locale) {
            Some(hosts) if loc.shared_urls > 0 => index::sample(&mut rng, loc.pool_size, loc.shared_urls)
                .into_iter()
                .map(|id| Arc::from(format!("https://{}/story/{id}", hosts[id % hosts.len()])))
                .collect(),
            _ => Vec::new(),
        })
        .collect();
    Base {
        organic,
        top,
        news,
        branch_slots,
        foreign_slots,
        free,
        news_order,
        branch,
        foreign_shared,
    }
}

// ---------------------------------------------------------------------------
// Donors

#[derive(Debug, Clone)]
struct Donor {
    id: Arc<str>,
    region: Option<usize>,
    locale: usize,
    lat: f64,
    lon: f64,
    logged_in: bool,
}

/// Exact per-locale counts by largest remainder.
fn locale_counts(spec: &CohortSpec) -> Vec<usize> {
    let n = spec.n_donors as f64;
    let raw: Vec<f64> = spec.locale_mix.iter().map(|l| l.fraction * n).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut rest = spec.n_donors - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for i in order.into_iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

fn donors(spec: &CohortSpec) -> Vec<Donor> {
    let n = spec.n_donors;
    let mut rng = stream(spec.seed, &[tag::ASSIGN]);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut locale = vec![0usize; n];
    let mut at = 0;
    for (li, c) in locale_counts(spec).into_iter().enumerate() {
        for &d in &perm[at..at + c] {
            locale[d] = li;
        }
        at += c;
    }
    perm.shuffle(&mut rng);
    let mut region = vec![None; n];
    if let Some(r) = &spec.regional {
        for (i, &d) in perm[..r.n_regions * r.donors_per_region].iter().enumerate() {
            region[d] = Some(i / r.donors_per_region);
        }
    }
    (0..n)
        .map(|d| {
            let mut rng = stream(spec.seed, &[tag::DONOR, d as u64]);
            let p = locale_profile(&spec.locale_mix[locale[d]].locale).unwrap();
            Donor {
                id: format!("d{d:05}").into(),
                region: region[d],
                locale: locale[d],
                lat: p.lat + rng.gen_range(-2.0..2.0),
                lon: p.lon + rng.gen_range(-3.0..3.0),
                logged_in: rng.gen_bool(0.35),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Generation

struct Ctx<'a> {
    spec: &'a CohortSpec,
    vocab: &'a Vocabulary,
    keys: &'a [SearchTimeKey],
    bases: &'a HashMap<(SearchTerm, SearchTimeKey), Base>,
    ages: &'a HashMap<(usize, u32), Arc<str>>,
    country: Vec<(Arc<str>, Arc<str>)>,
}

struct DonorOutput {
    records: Vec<DonationRecord>,
    faults: Vec<FaultLabel>,
    personalized: Vec<PersonalizedList>,
}

fn personalize(
    spec: &CohortSpec,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
    urls: &mut [Arc<str>],
    free: &[usize],
) -> Vec<Arc<str>> {
    let k = spec.personalization_swaps;
    if k == 0 {
        return Vec::new();
    }
    let positions: Vec<usize> = match spec.slot_mode {
        SlotMode::Shared => free[..k].to_vec(),
        SlotMode::PerDonor => index::sample(rng, free.len(), k).into_iter().map(|i| free[i]).collect(),
    };
    let ids = index::sample(rng, spec.personalization_pool, k);
    positions
        .into_iter()
        .zip(ids)
        .map(|(pos, id)| {
            let u = vocab.pool_url(id);
            urls[pos] = u.clone();
            u
        })
        .collect()
}

impl Ctx<'_> {
    fn timestamp(&self, donor: usize, key: SearchTimeKey, phantom: bool) -> NaiveDateTime {
        let mut rng = stream(self.spec.seed, &[tag::TIME, donor as u64, key.index() as u64]);
        let own: i64 = rng.gen_range(0..3600);
        // a second device never uploads at the very same second
        let offset = if phantom { (own + rng.gen_range(1..3600)) % 3600 } else { own };
        key.start() + Duration::seconds(offset)
    }

    fn participates(&self, donor: usize, key: SearchTimeKey) -> bool {
        self.spec.participation >= 1.0
            || stream(self.spec.seed, &[tag::TIME, donor as u64, key.index() as u64, 7]).gen_bool(self.spec.participation)
    }

    /// The unfaulted web and news records of one donor at one search time.
    fn clean_records(
        &self,
        d: usize,
        donor: &Donor,
        key: SearchTimeKey,
        phantom: bool,
        out: &mut Vec<(DonationRecord, Vec<Arc<str>>)>,
    ) {
        let spec = self.spec;
        let loc = &spec.locale_mix[donor.locale];
        let ts = self.timestamp(d, key, phantom);
        let (country, lang) = if phantom {
            (Arc::from("AT"), Arc::from("de-AT"))
        } else {
            self.country[donor.locale].clone()
        };
        for &term in &spec.terms {
            let base = &self.bases[&(term, key)];
            let mut rng = stream(spec.seed, &[tag::LIST, d as u64, term.index() as u64, key.index() as u64, phantom as u64]);
            let mut organic = base.organic.clone();
            if let Some(r) = donor.region {
                for (j, &pos) in base.branch_slots.iter().enumerate() {
                    organic[pos] = base.branch[r][j].clone();
                }
            }
            if loc.replaced() > 0 {
                let hosts = &self.vocab.foreign_hosts[&loc.locale];
                for (j, &pos) in base.foreign_slots.iter().enumerate() {
                    if j < loc.shared_urls {
                        organic[pos] = base.foreign_shared[donor.locale][j].clone();
                    } else if j < loc.replaced() {
                        let h = &hosts[j % hosts.len()];
                        organic[pos] = format!("https://{h}/{}/{}-{}-{j}", donor.id, term.slug(), key.index()).into();
                    }
                }
            }
            let personal = personalize(spec, self.vocab, &mut rng, &mut organic, &base.free);
            let mut entries = Vec::with_capacity(base.top.len() + organic.len());
            for (i, (u, h)) in base.top.iter().enumerate() {
                entries.push(ResultEntry::new(i as u32 + 1, u.clone(), EntryKind::TopStory).with_age(self.ages[&(donor.locale, *h)].clone()));
            }
            let t = entries.len() as u32;
            for (i, u) in organic.into_iter().enumerate() {
                entries.push(ResultEntry::new(t + i as u32 + 1, u, EntryKind::Organic));
            }
            let rec = DonationRecord {
                donor_id: donor.id.clone(),
                search_type: SearchType::GoogleSearch,
                term,
                timestamp: ts,
                logged_in: donor.logged_in,
                browser_language: lang.clone(),
                lat: donor.lat,
                lon: donor.lon,
                country: country.clone(),
                entries,
            };
            out.push((rec, personal));

            if spec.include_news {
                let mut urls: Vec<Arc<str>> = base.news.iter().map(|n| n.0.clone()).collect();
                let personal = personalize(spec, self.vocab, &mut rng, &mut urls, &base.news_order);
                let entries = urls
                    .into_iter()
                    .zip(&base.news)
                    .enumerate()
                    .map(|(i, (u, (_, h)))| ResultEntry::new(i as u32 + 1, u, EntryKind::News).with_age(self.ages[&(donor.locale, *h)].clone()))
                    .collect();
                out.push((
                    DonationRecord {
                        search_type: SearchType::GoogleNews,
                        entries,
                        ..out.last().unwrap().0.clone()
                    },
                    personal,
                ));
            }
        }
    }

    fn inject(&self, d: usize, rec: &mut DonationRecord) -> Option<FaultKind> {
        let mut rng = stream(
            self.spec.seed,
            &[tag::FAULT, d as u64, rec.term.index() as u64, rec.search_type as u64, rec.timestamp.and_utc().timestamp() as u64],
        );
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let kind = self.spec.faults.per_record().into_iter().find_map(|(k, r)| {
            acc += r;
            (r > 0.0 && u < acc).then_some(k)
        })?;
        let list_kind = match rec.search_type {
            SearchType::GoogleSearch => EntryKind::Organic,
            SearchType::GoogleNews => EntryKind::News,
        };
        let first = rec.entries.iter().position(|e| e.kind == list_kind).unwrap_or(rec.entries.len());
        match kind {
            FaultKind::RepeatedUrlList => {
                let url = rec.entries[first].url.clone();
                for e in &mut rec.entries[first..] {
                    e.url = url.clone();
                }
            }
            FaultKind::OversizeList => {
                let list: Vec<ResultEntry> = rec.entries[first..].to_vec();
                let mut rank = rec.entries.last().map_or(0, |e| e.rank);
                for i in 0..OVERSIZE_LEN - list.len() {
                    rank += 1;
                    let mut e = list[i % list.len()].clone();
                    e.rank = rank;
                    rec.entries.push(e);
                }
            }
            FaultKind::RedirectStub => {
                let pos = rng.gen_range(first..=rec.entries.len());
                let target = rec.entries.get(pos).unwrap_or(&rec.entries[first]).url.clone();
                let stub = ResultEntry::new(0, format!("https://www.google.de/url?q={target}&sa=U"), list_kind);
                rec.entries.insert(pos, stub);
                for (i, e) in rec.entries.iter_mut().enumerate() {
                    e.rank = i as u32 + 1;
                }
            }
            FaultKind::ForeignList => {
                let hosts = &self.vocab.foreign_hosts["en"];
                for (i, e) in rec.entries.iter_mut().enumerate() {
                    e.url = format!("https://{}/world/{}-{i}", hosts[i % hosts.len()], rec.donor_id).into();
                }
            }
            FaultKind::OffSchedule => {
                let minute = rec.timestamp.minute();
                rec.timestamp = rec.timestamp.date().and_hms_opt(14, minute, 0).unwrap();
            }
            FaultKind::DuplicateId => unreachable!(),
        }
        Some(kind)
    }

    fn donor(&self, d: usize, donor: &Donor) -> DonorOutput {
        let duplicate = self.spec.faults.duplicate_id > 0.0
            && stream(self.spec.seed, &[tag::DUPLICATE, d as u64]).gen_bool(self.spec.faults.duplicate_id);
        let mut out = DonorOutput {
            records: Vec::new(),
            faults: Vec::new(),
            personalized: Vec::new(),
        };
        let mut phantom_rng = stream(self.spec.seed, &[tag::PHANTOM, d as u64]);
        let mut first_shared = true;
        for &key in self.keys {
            if !self.participates(d, key) {
                continue;
            }
            let mut recs = Vec::new();
            self.clean_records(d, donor, key, false, &mut recs);
            if duplicate && (first_shared || phantom_rng.gen_bool(0.5)) {
                first_shared = false;
                self.clean_records(d, donor, key, true, &mut recs);
            }
            for (mut rec, personal) in recs {
                let fault = if duplicate { Some(FaultKind::DuplicateId) } else { self.inject(d, &mut rec) };
                if let Some(fault) = fault {
                    out.faults.push(FaultLabel {
                        record: RecordId::of(&rec),
                        fault,
                    });
                }
                if !personal.is_empty() {
                    out.personalized.push(PersonalizedList {
                        donor_id: rec.donor_id.clone(),
                        term: rec.term,
                        search_type: rec.search_type,
                        time_key: key,
                        urls: personal,
                    });
                }
                out.records.push(rec);
            }
        }
        out
    }
}

/// Generates the cohort. Output is a pure function of the spec.
pub fn generate(spec: &CohortSpec) -> Result<Cohort> {
    spec.validate()?;
    let vocab = Vocabulary::new(spec);
    let (categories, languages, gazetteer, regional_hosts) = vocab.tables(spec)?;
    let keys = spec.time_keys();
    let pairs: Vec<(SearchTerm, SearchTimeKey)> = spec.terms.iter().flat_map(|&t| keys.iter().map(move |&k| (t, k))).collect();
    let bases: HashMap<(SearchTerm, SearchTimeKey), Base> = pairs
        .par_iter()
        .map(|&(t, k)| ((t, k), build_base(spec, &vocab, t, k)))
        .collect();
    let mut ages = HashMap::new();
    for (li, loc) in spec.locale_mix.iter().enumerate() {
        for h in 1..=48 {
            ages.insert((li, h), Arc::from(age_string(&loc.locale, h)));
        }
    }
    let country = spec
        .locale_mix
        .iter()
        .map(|l| {
            let p = locale_profile(&l.locale).unwrap();
            (Arc::from(p.country), Arc::from(p.language))
        })
        .collect();
    let ds = donors(spec);
    let ctx = Ctx {
        spec,
        vocab: &vocab,
        keys: &keys,
        bases: &bases,
        ages: &ages,
        country,
    };
    let outputs: Vec<DonorOutput> = ds.par_iter().enumerate().map(|(i, d)| ctx.donor(i, d)).collect();

    let mut truth = GroundTruth {
        regional_hosts,
        ..Default::default()
    };
    let mut records = Vec::new();
    for (d, o) in ds.iter().zip(outputs) {
        truth.donors.push(DonorTruth {
            donor_id: d.id.clone(),
            region: d.region,
            locale: spec.locale_mix[d.locale].locale.clone(),
            duplicate_id: o.faults.iter().any(|f| f.fault == FaultKind::DuplicateId),
        });
        truth.faults.extend(o.faults);
        truth.personalized.extend(o.personalized);
        records.extend(o.records);
    }
    Ok(Cohort {
        records,
        truth,
        categories,
        languages,
        gazetteer,
    })
}

// ---------------------------------------------------------------------------
// Closed-form expectations

/// Expected pooled statistics of web-search groups, raw and after deleting
/// regional URLs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOverlap {
    pub mean_common: f64,
    pub mean_length: f64,
    pub scope: f64,
    pub refined_mean_common: f64,
    pub refined_mean_length: f64,
    pub refined_scope: f64,
}

/// Expected common personalized-or-base links on the free positions.
pub fn expected_free_common(spec: &CohortSpec) -> f64 {
    let m = spec.free_slots() as f64;
    let k = spec.personalization_swaps as f64;
    let p = spec.personalization_pool as f64;
    if k == 0.0 {
        return m;
    }
    match spec.slot_mode {
        SlotMode::Shared => m - k + k * k / p,
        SlotMode::PerDonor => m - 2.0 * k + k * k / m + k * k / p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Class {
    region: Option<usize>,
    locale: usize,
}

fn pair_expectation(spec: &CohortSpec, a: Class, b: Class) -> (f64, f64, f64, f64) {
    let l = spec.list_length as f64;
    let bs = spec.branch_slots() as f64;
    let mut common = expected_free_common(spec);
    let mut refined = common;
    if a.region == b.region {
        common += bs;
    }
    if a.region.is_none() && b.region.is_none() {
        refined += bs;
    }
    let (la, lb) = (&spec.locale_mix[a.locale], &spec.locale_mix[b.locale]);
    for j in 0..spec.foreign_slots() {
        let both_base = j >= la.replaced() && j >= lb.replaced();
        let same_shared = a.locale == b.locale && j < la.shared_urls;
        if both_base || same_shared {
            common += 1.0;
            refined += 1.0;
        }
    }
    let rl = |c: Class| if c.region.is_some() { l - bs } else { l };
    (common, l, refined, (rl(a) + rl(b)) / 2.0)
}

/// Exact expectation over all pairs of clean donors, assuming every donor
/// donates at every search time.
pub fn expected_overlap(spec: &CohortSpec, truth: &GroundTruth) -> ExpectedOverlap {
    let locale_index: HashMap<&str, usize> = spec.locale_mix.iter().enumerate().map(|(i, l)| (l.locale.as_str(), i)).collect();
    let mut classes: BTreeMap<Class, f64> = BTreeMap::new();
    for d in truth.donors.iter().filter(|d| !d.duplicate_id) {
        let c = Class {
            region: d.region,
            locale: locale_index[d.locale.as_str()],
        };
        *classes.entry(c).or_default() += 1.0;
    }
    let cls: Vec<(Class, f64)> = classes.into_iter().collect();
    let (mut pairs, mut sc, mut sl, mut rc, mut rl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &(a, na)) in cls.iter().enumerate() {
        for &(b, nb) in &cls[i..] {
            let n = if a == b { na * (na - 1.0) / 2.0 } else { na * nb };
            if n == 0.0 {
                continue;
            }
            let (c, l, r, rlen) = pair_expectation(spec, a, b);
            pairs += n;
            sc += n * c;
            sl += n * l;
            rc += n * r;
            rl += n * rlen;
        }
    }
    let pairs = pairs.max(1.0);
    ExpectedOverlap {
        mean_common: sc / pairs,
        mean_length: sl / pairs,
        scope: (sl - sc) / pairs,
        refined_mean_common: rc / pairs,
        refined_mean_length: rl / pairs,
        refined_scope: (rl - rc) / pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCluster {
    pub members: Vec<Arc<str>>,
    pub flagged: bool,
}

/// Clusters the detector should find in every complete web-search group:
/// donors linked through planted shared URLs (regional branch sites or
/// shared foreign URLs) that survive the popularity filter.
pub fn expected_clusters(spec: &CohortSpec, truth: &GroundTruth, params: &BubbleParams) -> Vec<ExpectedCluster> {
    let donors: Vec<&DonorTruth> = truth.donors.iter().filter(|d| !d.duplicate_id).collect();
    let n = donors.len();
    let locale_index: HashMap<&str, usize> = spec.locale_mix.iter().enumerate().map(|(i, l)| (l.locale.as_str(), i)).collect();
    // planted tokens: (kind, group, count)
    let tokens: Vec<Vec<(u8, usize, usize)>> = donors
        .iter()
        .map(|d| {
            let mut t = Vec::new();
            if let Some(r) = d.region {
                t.push((0u8, r, spec.branch_slots()));
            }
            let li = locale_index[d.locale.as_str()];
            if spec.locale_mix[li].shared_urls > 0 {
                t.push((1u8, li, spec.locale_mix[li].shared_urls));
            }
            t
        })
        .collect();
    let mut df: HashMap<(u8, usize), usize> = HashMap::new();
    for t in &tokens {
        for &(k, g, _) in t {
            *df.entry((k, g)).or_default() += 1;
        }
    }
    let surviving = |t: &[(u8, usize, usize)]| -> Vec<(u8, usize, usize)> {
        t.iter().copied().filter(|(k, g, _)| (df[&(*k, *g)] as f64 / n as f64) < params.popularity).collect()
    };
    let residual: Vec<Vec<(u8, usize, usize)>> = tokens.iter().map(|t| surviving(t)).collect();
    let shared = |a: usize, b: usize| -> usize {
        residual[a].iter().filter(|x| residual[b].contains(x)).map(|x| x.2).sum()
    };
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut x: usize) -> usize {
        while c[x] != x {
            c[x] = c[c[x]];
            x = c[x];
        }
        x
    }
    let mut linked = vec![false; n];
    for a in 0..n {
        for b in a + 1..n {
            if shared(a, b) >= params.min_shared {
                linked[a] = true;
                linked[b] = true;
                let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
                comp[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for d in (0..n).filter(|&d| linked[d]) {
        let r = root(&mut comp, d);
        groups.entry(r).or_default().push(d);
    }
    let class = |d: &DonorTruth| Class {
        region: d.region,
        locale: locale_index[d.locale.as_str()],
    };
    groups
        .into_values()
        .map(|members| {
            let inside: BTreeSet<usize> = members.iter().copied().collect();
            let (mut s, mut c) = (0.0, 0.0);
            for &m in &members {
                for o in (0..n).filter(|o| !inside.contains(o)) {
                    s += pair_expectation(spec, class(donors[m]), class(donors[o])).0;
                    c += 1.0;
                }
            }
            ExpectedCluster {
                members: members.iter().map(|&m| donors[m].donor_id.clone()).collect(),
                flagged: c > 0.0 && s / c < params.distinctness,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reach panels

/// `n` points on `a * reach^b` with uniform multiplicative noise; reach is
/// log-uniform on [10, 1e5].
pub fn synthetic_reach_points(n: usize, reach: &ReachSpec, seed: u64) -> Vec<ReachPoint> {
    let mut rng = stream(seed, &[tag::REACH]);
    (0..n)
        .map(|i| {
            let x = 10f64.powf(rng.gen_range(1.0..5.0));
            let eps = if reach.noise > 0.0 { rng.gen_range(-reach.noise..reach.noise) } else { 0.0 };
            let y = (reach.a * x.powf(reach.b) * (1.0 + eps)).round().max(1.0);
            ReachPoint::new(&format!("host{i:03}.example"), x, y as u64)
        })
        .collect()
}

/// A reach panel consistent with the cohort's delivered top-story counts:
/// reach is chosen so that counts follow the power law with noise, except
/// for a few hosts that are over-delivered 20-fold. Returns the panel and
/// the over-delivered hosts.
pub fn reach_panel_for(lists: &[ResultList], window: &Window, reach: &ReachSpec, seed: u64) -> (Vec<PanelRow>, BTreeSet<String>) {
    let counts = delivered_counts(lists, window);
    let mut rng = stream(seed, &[tag::REACH, 1]);
    let mut hosts: Vec<&String> = counts.keys().collect();
    hosts.shuffle(&mut rng);
    let over: BTreeSet<String> = hosts.iter().take(reach.overrepresented).map(|h| (*h).clone()).collect();
    let period = window.from.format("%Y-%m").to_string();
    let rows = counts
        .iter()
        .map(|(h, &c)| {
            let factor = if over.contains(h) {
                20.0
            } else if reach.noise > 0.0 {
                1.0 + rng.gen_range(-reach.noise..reach.noise)
            } else {
                1.0
            };
            PanelRow {
                tld: h.clone(),
                active_reach: (c as f64 / (reach.a * factor)).powf(1.0 / reach.b),
                period: period.clone(),
            }
        })
        .collect();
    (rows, over)
}

// ---------------------------------------------------------------------------
// Oracle report

/// Analysis outputs to compare against ground truth; absent parts are
/// skipped.
#[derive(Debug, Clone, Default)]
pub struct Measurements {
    pub overlap: Option<Vec<TermOverlap>>,
    pub refinement: Option<Vec<TermRefinement>>,
    pub clusters: Option<(Vec<ClusterReport>, BubbleParams)>,
    pub locales: Option<HashMap<(Arc<str>, SearchTimeKey), LocaleTag>>,
    pub reach_fit: Option<ReachFit>,
    pub reach_flags: Option<(Vec<Flagged>, BTreeSet<String>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub expected: String,
    pub measured: String,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: impl Into<String>, expected: String, measured: String, tolerance: String, pass: bool) {
        self.checks.push(OracleCheck {
            name: name.into(),
            expected,
            measured,
            tolerance,
            pass,
        });
    }

    fn close(&mut self, name: String, expected: f64, measured: Option<f64>, tol: f64) {
        let pass = measured.is_some_and(|m| (m - expected).abs() <= tol);
        self.push(
            name,
            fmt_f64(expected),
            measured.map(fmt_f64).unwrap_or_else(|| "NA".into()),
            format!("±{tol}"),
            pass,
        );
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["check", "expected", "measured", "tolerance", "result"]);
        for c in &self.checks {
            t.push([
                c.name.clone(),
                c.expected.clone(),
                c.measured.clone(),
                c.tolerance.clone(),
                if c.pass { "PASS".into() } else { "FAIL".into() },
            ]);
        }
        t
    }
}

fn is_plain(spec: &CohortSpec) -> bool {
    spec.personalization_swaps == 0 && spec.regional.is_none() && spec.locale_mix.iter().all(|l| l.replaced() == 0)
}

pub fn oracle_report(spec: &CohortSpec, truth: &GroundTruth, m: &Measurements) -> OracleReport {
    let mut r = OracleReport::default();
    let exp = expected_overlap(spec, truth);
    if let Some(rows) = &m.overlap {
        let tol = if is_plain(spec) { 0.0 } else { 0.1 };
        for row in rows.iter().filter(|x| x.search_type == SearchType::GoogleSearch) {
            r.close(format!("scope {}", row.term), exp.scope, row.pooled.scope(), tol);
        }
    }
    if let Some(rows) = &m.refinement {
        for row in rows.iter().filter(|x| x.search_type == SearchType::GoogleSearch) {
            r.close(format!("raw non-shared {}", row.term), exp.scope, row.stats.raw_nonshared(), 0.15);
            r.close(format!("refined non-shared {}", row.term), exp.refined_scope, row.stats.refined_nonshared(), 0.15);
        }
    }
    if let Some((reports, params)) = &m.clusters {
        let expected = expected_clusters(spec, truth, params);
        let want: BTreeSet<Vec<Arc<str>>> = expected.iter().filter(|c| c.flagged).map(|c| c.members.clone()).collect();
        let all: BTreeSet<Vec<Arc<str>>> = expected.iter().map(|c| c.members.clone()).collect();
        let n_donors = truth.donors.iter().filter(|d| !d.duplicate_id).count();
        let (mut wrong, mut checked, mut extra) = (0usize, 0usize, 0usize);
        for rep in reports.iter().filter(|x| x.n_lists == n_donors) {
            checked += 1;
            let got: BTreeSet<Vec<Arc<str>>> = rep.flagged().map(|c| c.members.clone()).collect();
            let found: BTreeSet<Vec<Arc<str>>> = rep.clusters.iter().map(|c| c.members.clone()).collect();
            // Chance coincidences can link a few more donors; those must
            // not be flagged.
            if got != want || !found.is_superset(&all) {
                wrong += 1;
            }
            extra += found.difference(&all).count();
        }
        r.push(
            "cluster membership",
            format!("{} cluster(s), {} flagged, in each complete group", all.len(), want.len()),
            format!("{wrong} of {checked} complete group(s) differ; {extra} unflagged chance cluster(s)"),
            "exact".into(),
            wrong == 0 && checked > 0,
        );
    }
    if let Some(tags) = &m.locales {
        let truth_locale: HashMap<&str, &str> = truth.donors.iter().map(|d| (&*d.donor_id, d.locale.as_str())).collect();
        let (mut known, mut wrong) = (0usize, 0usize);
        for ((donor, _), tag) in tags {
            if tag.is_unknown() {
                continue;
            }
            known += 1;
            if truth_locale.get(&**donor) != Some(&tag.as_str()) {
                wrong += 1;
            }
        }
        r.push(
            "locale tags",
            "all known tags equal the planted locale".into(),
            format!("{wrong} wrong of {known} known ({} unknown)", tags.len() - known),
            "exact".into(),
            wrong == 0 && known > 0,
        );
    }
    if let Some(fit) = &m.reach_fit {
        r.close("reach exponent b".into(), spec.reach.b, Some(fit.b), 0.05);
        let rel = fit.a / spec.reach.a - 1.0;
        r.push(
            "reach scale a",
            fmt_f64(spec.reach.a),
            fmt_f64(fit.a),
            "±15%".into(),
            rel.abs() <= 0.15,
        );
    }
    if let Some((flags, planted)) = &m.reach_flags {
        let over: BTreeSet<String> = flags
            .iter()
            .filter(|f| f.direction == crate::reach::Direction::Over)
            .map(|f| f.tld.clone())
            .collect();
        r.push(
            "over-delivered hosts",
            format!("{planted:?}"),
            format!("{over:?}"),
            "exact".into(),
            &over == planted,
        );
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CohortSpec {
        CohortSpec {
            n_donors: 20,
            terms: vec![SearchTerm::Spd, SearchTerm::Merkel],
            keys: Some(vec![0, 1, 2]),
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.truth, b.truth);
        let c = generate(&CohortSpec { seed: 2, ..small() }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn record_count_and_keys() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.records.len(), 20 * 2 * 3);
        assert!(c.records.iter().all(|r| r.time_key().is_some()));
        let news = generate(&CohortSpec { include_news: true, ..small() }).unwrap();
        assert_eq!(news.records.len(), 2 * 20 * 2 * 3);
    }

    #[test]
    fn plain_lists_identical() {
        let c = generate(&small()).unwrap();
        let mut by: HashMap<(SearchTerm, SearchTimeKey), BTreeSet<Vec<Arc<str>>>> = HashMap::new();
        for r in &c.records {
            by.entry((r.term, r.time_key().unwrap())).or_default().insert(r.entries.iter().map(|e| e.url.clone()).collect());
        }
        assert!(by.values().all(|s| s.len() == 1));
        assert!(c.truth.faults.is_empty());
    }

    #[test]
    fn party_site_leads() {
        let c = generate(&CohortSpec { personalization_swaps: 3, ..small() }).unwrap();
        for r in &c.records {
            let first = r.organic().next().unwrap();
            assert!(first.url.contains(&format!("www.{}.de", r.term.slug())));
        }
    }

    #[test]
    fn spec_errors() {
        let bad = |s: CohortSpec| matches!(s.validate(), Err(Error::Spec(_)));
        assert!(bad(CohortSpec { personalization_swaps: 10, ..small() }));
        assert!(bad(CohortSpec {
            locale_mix: vec![LocaleSpec { fraction: 0.5, ..Default::default() }],
            ..small()
        }));
        assert!(bad(CohortSpec {
            faults: FaultRates { duplicate_id: 1.5, ..Default::default() },
            ..small()
        }));
        assert!(bad(CohortSpec {
            list_length: 10,
            faults: FaultRates { redirect_stub: 0.1, ..Default::default() },
            ..small()
        }));
        assert!(small().validate().is_ok());
    }

    #[test]
    fn toml_roundtrip() {
        let s = CohortSpec {
            regional: Some(RegionalSpec::default()),
            n_donors: 200,
            ..small()
        };
        assert_eq!(CohortSpec::from_toml(&s.to_toml()).unwrap(), s);
        let parsed = CohortSpec::from_toml("n_donors = 7\nterms = [\"SPD\"]\n[faults]\nduplicate_id = 0.1\n").unwrap();
        assert_eq!(parsed.n_donors, 7);
        assert!(CohortSpec::from_toml("n_donorz = 7\n").is_err());
    }

    #[test]
    fn locale_counts_exact() {
        let s = CohortSpec {
            n_donors: 200,
            locale_mix: vec![
                LocaleSpec { fraction: 0.975, ..Default::default() },
                LocaleSpec {
                    locale: "en".into(),
                    fraction: 0.025,
                    ..Default::default()
                },
            ],
            ..small()
        };
        assert_eq!(locale_counts(&s), vec![195, 5]);
    }

    #[test]
    fn age_strings() {
        assert_eq!(age_string("de", 1), "vor 1 Stunde");
        assert_eq!(age_string("en", 1), "1 hour ago");
        assert_eq!(age_string("fr", 3), "Il y a 3 heures");
        assert_eq!(age_string("no", 2), "for 2 timer siden");
    }

    #[test]
    fn closed_forms() {
        let s = CohortSpec {
            personalization_swaps: 2,
            personalization_pool: 100,
            ..small()
        };
        assert!((expected_free_common(&s) - (9.0 - 2.0 + 0.04)).abs() < 1e-12);
        let p = CohortSpec { slot_mode: SlotMode::PerDonor, ..s };
        assert!((expected_free_common(&p) - (9.0 - 4.0 + 4.0 / 9.0 + 0.04)).abs() < 1e-12);
    }

    #[test]
    fn regional_tables() {
        let s = CohortSpec {
            n_donors: 40,
            regional: Some(RegionalSpec {
                n_regions: 4,
                branch_urls: 2,
                donors_per_region: 10,
            }),
            ..small()
        };
        let c = generate(&s).unwrap();
        assert_eq!(c.truth.regional_hosts.len(), 4 * 2);
        let tags = crate::regional::tag_regional(c.truth.regional_hosts.keys().map(String::as_str), &c.gazetteer, &c.categories);
        assert_eq!(tags.regional.len(), 8);
        // owned party sites are not regional
        let owned = crate::regional::tag_regional(["www.spd.de", "www.angela-merkel.de"], &c.gazetteer, &c.categories);
        assert!(owned.regional.is_empty());
    }

    #[test]
    fn faults_are_labeled() {
        let s = CohortSpec {
            n_donors: 50,
            faults: FaultRates {
                duplicate_id: 0.1,
                repeated_url_list: 0.05,
                oversize_list: 0.05,
                redirect_stub: 0.05,
                foreign_list: 0.05,
                off_schedule: 0.05,
            },
            ..small()
        };
        let c = generate(&s).unwrap();
        let kinds: BTreeSet<FaultKind> = c.truth.faults.iter().map(|f| f.fault).collect();
        assert_eq!(kinds.len(), 6);
        let ids: BTreeSet<RecordId> = c.records.iter().map(RecordId::of).collect();
        assert_eq!(ids.len(), c.records.len());
        assert!(c.truth.faults.iter().all(|f| ids.contains(&f.record)));
    }
}
