//! Batch runs: configuration, table loading, per-subcommand artifact
//! production and the run manifest.
//!
//! Artifacts are produced in memory as `name -> bytes` and written by the
//! caller, so identical inputs can be compared byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bubble::{self, BubbleParams, LocalePatterns, LocaleTag};
use crate::catalog::{self, CategoryTable};
use crate::cleanse::{self, CleanConfig, CleaningReport, LanguageTable};
use crate::dynamics::{self, Scope};
use crate::error::{Error, Result};
use crate::ingest::{self, Dataset, FileRejects};
use crate::model::{ResultList, SearchTerm, SearchTimeKey, SearchType, Segment};
use crate::overlap::{self, PairGroup, TermOverlap};
use crate::reach::{self, PanelRow, ReachFit, ReachPoint, Window};
use crate::regional::{self, Gazetteer};
use crate::synth::{self, CohortSpec, Measurements};
use crate::table::{fmt_f64, fmt_opt, fmt_percent, Table};

pub type Artifacts = BTreeMap<String, Vec<u8>>;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Spec(_) => 2,
        Error::Undefined(_) | Error::Fit(_) | Error::Domain(_) => 4,
        _ => 3,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablePaths {
    pub language: Option<PathBuf>,
    pub category: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    /// Reach panel: host, active reach, period.
    pub reach: Option<PathBuf>,
    /// Direct observations: host, active reach, delivered count.
    pub reach_points: Option<PathBuf>,
    pub locale_patterns: Option<PathBuf>,
    /// One donor ID per line.
    pub blocklist: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    pub factor: f64,
    pub window: Window,
    /// Use this fit instead of estimating one.
    pub fixed_a: Option<f64>,
    pub fixed_b: Option<f64>,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig {
            factor: 5.0,
            window: Window::default(),
            fixed_a: None,
            fixed_b: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub clean: CleanConfig,
    pub bubble: BubbleParams,
    pub reach: ReachConfig,
    pub tables: TablePaths,
    /// Entries per term in host rankings.
    pub top_k: usize,
    /// Export one full locale overlap matrix per group.
    pub full_matrices: bool,
    pub seed: u64,
    pub cohort: CohortSpec,
    /// Worker threads; never part of the manifest since it cannot change
    /// outputs.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            out: PathBuf::from("out"),
            clean: CleanConfig::default(),
            bubble: BubbleParams::default(),
            reach: ReachConfig::default(),
            tables: TablePaths::default(),
            top_k: 10,
            full_matrices: false,
            seed: 1,
            cohort: CohortSpec::default(),
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.clean.validate()?;
        self.bubble.validate()?;
        if !(self.reach.factor > 1.0) || !self.reach.factor.is_finite() {
            return Err(Error::Config(format!("overrepresentation factor must be > 1, got {}", self.reach.factor)));
        }
        if self.reach.window.from > self.reach.window.to {
            return Err(Error::Config("reach window starts after it ends".into()));
        }
        if self.reach.fixed_a.is_some() != self.reach.fixed_b.is_some() {
            return Err(Error::Config("fixed_a and fixed_b must be given together".into()));
        }
        if self.reach.fixed_a.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("fixed_a must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

/// Runs `f` on a dedicated pool when a thread count is given.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Lookup tables referenced by the configuration.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub languages: Option<LanguageTable>,
    pub categories: CategoryTable,
    pub gazetteer: Option<Gazetteer>,
    pub panel: Option<Vec<PanelRow>>,
    pub points: Option<Vec<ReachPoint>>,
    pub patterns: LocalePatterns,
    pub blocklist: BTreeSet<String>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Tables {
    /// Loads every configured table; returns the digests of the files read.
    pub fn load(paths: &TablePaths) -> Result<(Tables, Vec<FileDigest>)> {
        let mut t = Tables::default();
        let mut digests = Vec::new();
        let mut load = |p: &Option<PathBuf>| -> Result<Option<(String, String)>> {
            let Some(p) = p else { return Ok(None) };
            let text = read_text(p)?;
            digests.push(FileDigest {
                path: p.display().to_string(),
                sha256: ingest::hex(&Sha256::digest(text.as_bytes())),
            });
            Ok(Some((text, p.display().to_string())))
        };
        if let Some((s, f)) = load(&paths.language)? {
            t.languages = Some(LanguageTable::parse(&s, &f)?);
        }
        if let Some((s, f)) = load(&paths.category)? {
            t.categories = CategoryTable::parse(&s, &f)?;
        }
        if let Some((s, _)) = load(&paths.gazetteer)? {
            t.gazetteer = Some(Gazetteer::parse(&s)?);
        }
        if let Some((s, f)) = load(&paths.reach)? {
            t.panel = Some(reach::parse_panel(&s, &f)?);
        }
        if let Some((s, f)) = load(&paths.reach_points)? {
            t.points = Some(reach::parse_points(&s, &f)?);
        }
        if let Some((s, f)) = load(&paths.locale_patterns)? {
            t.patterns = LocalePatterns::parse(&s, &f)?;
        }
        if let Some((s, _)) = load(&paths.blocklist)? {
            t.blocklist = s
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
        }
        Ok((t, digests))
    }
}

fn put(a: &mut Artifacts, name: &str, t: &Table) {
    a.insert(name.to_string(), t.to_tsv());
}

fn jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

// ---------------------------------------------------------------------------
// Stages

pub fn ingest_stage(dataset: &Dataset, rejects: &FileRejects) -> Artifacts {
    let mut a = Artifacts::new();
    let s = ingest::summarize(dataset);
    put(&mut a, "ingest/daily.tsv", &s.daily_table());
    put(&mut a, "ingest/counts.tsv", &s.counts_table());
    put(&mut a, "ingest/locations.tsv", &ingest::locations_table(&ingest::export_locations(dataset, None, 1)));
    let mut t = Table::new(["file", "line", "reason"]);
    for (p, r) in rejects {
        t.push([p.display().to_string(), r.line.to_string(), r.reason.clone()]);
    }
    put(&mut a, "ingest/rejects.tsv", &t);
    a
}

fn clean_config(cfg: &RunConfig, tables: &Tables) -> Result<CleanConfig> {
    let mut c = cfg.clean.clone();
    c.blocklist.extend(tables.blocklist.iter().cloned());
    if c.language_filter && tables.languages.is_none() {
        return Err(Error::Config(
            "the language filter needs a language table (or disable the filter)".into(),
        ));
    }
    Ok(c)
}

/// Cleans the dataset; returns lists, report and the artifacts describing
/// the cleaning (lists themselves are not included).
pub fn clean_stage(cfg: &RunConfig, tables: &Tables, dataset: Dataset) -> Result<(Vec<ResultList>, CleaningReport, Artifacts)> {
    let config = clean_config(cfg, tables)?;
    let empty = LanguageTable::default();
    // Locations only need coordinates; keep the copy small.
    let before = Dataset::from_records(
        dataset
            .records
            .iter()
            .map(|r| crate::model::DonationRecord {
                entries: Vec::new(),
                ..r.clone()
            })
            .collect(),
    );
    let (lists, report) = cleanse::run_pipeline(dataset, &config, tables.languages.as_ref().unwrap_or(&empty))?;
    let mut a = Artifacts::new();
    put(&mut a, "clean/stages.tsv", &report.table());
    put(&mut a, "clean/reduction.tsv", &report.reduction_table());
    a.insert("clean/report.txt".into(), report.to_text().into_bytes());
    let locations = ingest::export_locations(&before, Some(&report.dropped_donors), 1);
    put(&mut a, "clean/locations.tsv", &ingest::locations_table(&locations));
    let mut flagged = Table::new(["donor_id"]);
    for d in &report.flagged_ids {
        flagged.push([d.to_string()]);
    }
    put(&mut a, "clean/flagged_ids.tsv", &flagged);
    Ok((lists, report, a))
}

fn terms_present(lists: &[ResultList]) -> Vec<SearchTerm> {
    let set: BTreeSet<SearchTerm> = lists.iter().map(|l| l.term).collect();
    set.into_iter().collect()
}

pub fn classify_stage(cfg: &RunConfig, tables: &Tables, lists: &[ResultList]) -> (Artifacts, String) {
    let mut a = Artifacts::new();
    let terms = terms_present(lists);
    let mut text = String::new();
    for (st, seg, name) in [
        (SearchType::GoogleSearch, Segment::Organic, "organic"),
        (SearchType::GoogleSearch, Segment::TopStories, "top_stories"),
        (SearchType::GoogleNews, Segment::Organic, "news"),
    ] {
        let rows: Vec<(SearchTerm, Vec<(String, usize)>)> = terms
            .par_iter()
            .map(|&t| (t, catalog::top_tlds(lists, t, st, seg, cfg.top_k)))
            .filter(|(_, r)| !r.is_empty())
            .collect();
        put(&mut a, &format!("classify/top_tlds_{name}.tsv"), &catalog::ranking_table(&rows));
        if name == "organic" {
            let _ = writeln!(text, "Leading host per term (web search, organic):");
            for (t, r) in &rows {
                let _ = writeln!(text, "  {:<24} {} ({})", t.text(), r[0].0, r[0].1);
            }
        }
    }
    let dist: Vec<_> = terms
        .par_iter()
        .map(|&t| {
            let ls = lists.iter().filter(|l| l.term == t && l.search_type == SearchType::GoogleSearch);
            (t, catalog::category_distribution(ls, Segment::Organic, &tables.categories))
        })
        .collect();
    put(&mut a, "classify/categories.tsv", &catalog::distribution_table(&dist));
    let mut editable = Table::new(["term", "editable_share"]);
    for &t in &terms {
        let urls = lists
            .iter()
            .filter(|l| l.term == t && l.search_type == SearchType::GoogleSearch)
            .flat_map(|l| l.organic.iter().map(|u| &**u));
        editable.push([t.text().to_string(), fmt_opt(catalog::editable_share(urls, &tables.categories))]);
    }
    put(&mut a, "classify/editable.tsv", &editable);
    let web: Vec<&ResultList> = lists.iter().filter(|l| l.search_type == SearchType::GoogleSearch).collect();
    let census = catalog::distinct_tld_census(web.iter().copied(), Segment::All, &tables.categories);
    let _ = writeln!(text, "Distinct hosts (web search): {}", census.distinct);
    put(&mut a, "classify/census.tsv", &catalog::census_table(&census));
    (a, text)
}

pub struct Groups {
    pub web: Vec<PairGroup>,
    pub news: Vec<PairGroup>,
}

impl Groups {
    pub fn build(lists: &[ResultList]) -> Self {
        Groups {
            web: overlap::build_groups(lists, SearchType::GoogleSearch, false),
            news: overlap::build_groups(lists, SearchType::GoogleNews, false),
        }
    }
}

pub fn overlap_stage(groups: &Groups) -> (Artifacts, String, Vec<TermOverlap>) {
    let mut rows = Vec::new();
    for g in [&groups.web, &groups.news] {
        let stats: Vec<_> = g.par_iter().map(overlap::group_stats).collect();
        rows.extend(overlap::aggregate_by_term(g, &stats));
    }
    let mut a = Artifacts::new();
    let table = overlap::stats_table(&rows);
    put(&mut a, "overlap/stats.tsv", &table);
    put(&mut a, "overlap/histogram.tsv", &overlap::histogram_table(&rows));
    let mut summary = Table::new(["term", "type", "identical_%", "mean_common", "scope"]);
    for r in &rows {
        summary.push([
            r.term.text().to_string(),
            r.search_type.label().to_string(),
            r.pooled.identical_fraction().map(fmt_percent).unwrap_or_else(|| "NA".into()),
            fmt_opt(r.pooled.mean_common_links()),
            fmt_opt(r.pooled.scope()),
        ]);
    }
    (a, summary.to_text(), rows)
}

pub fn region_stage(tables: &Tables, groups: &Groups) -> Result<(Artifacts, String, Vec<regional::TermRefinement>)> {
    let gazetteer = tables
        .gazetteer
        .as_ref()
        .ok_or_else(|| Error::Config("regional refinement needs a gazetteer".into()))?;
    let hosts: BTreeSet<String> = groups
        .web
        .iter()
        .flat_map(|g| g.urls.iter())
        .filter_map(|u| crate::model::extract_tld(u).ok().map(|h| h.as_str().to_string()))
        .collect();
    let tags = regional::tag_regional(hosts.iter().map(String::as_str), gazetteer, &tables.categories);
    let rows = regional::refine_by_term(&groups.web, &tags);
    let mut a = Artifacts::new();
    put(&mut a, "region/regional_hosts.tsv", &tags.table());
    let t = regional::refinement_table(&rows);
    put(&mut a, "region/refinement.tsv", &t);
    Ok((a, t.to_text(), rows))
}

pub fn dynamics_stage(tables: &Tables, lists: &[ResultList]) -> (Artifacts, String) {
    let mut scopes: Vec<Scope> = terms_present(lists).into_iter().map(Scope::Term).collect();
    scopes.push(Scope::All);
    let top: Vec<_> = scopes.par_iter().map(|&s| dynamics::topstory_share(lists, s)).collect();
    let mut a = Artifacts::new();
    put(&mut a, "dynamics/topstory_share.tsv", &dynamics::series_table("topstory_share", &top));
    let mut distinct = Vec::new();
    for (st, seg, name) in [
        (SearchType::GoogleSearch, Segment::Organic, "organic"),
        (SearchType::GoogleSearch, Segment::TopStories, "top_stories"),
        (SearchType::GoogleNews, Segment::Organic, "news"),
    ] {
        let s: Vec<_> = scopes.par_iter().map(|&sc| dynamics::distinct_tld_count(lists, sc, st, seg)).collect();
        distinct.push((name, s));
    }
    let mut t = Table::new(["segment", "series", "term", "date", "slot", "value", "grand_mean"]);
    for (name, series) in &distinct {
        for row in dynamics::series_table("distinct_hosts", series).rows {
            let mut r = vec![name.to_string()];
            r.extend(row);
            t.push(r);
        }
    }
    put(&mut a, "dynamics/distinct_hosts.tsv", &t);
    let editable: Vec<_> = scopes
        .par_iter()
        .map(|&s| dynamics::editable_share_series(lists, s, SearchType::GoogleSearch, Segment::Organic, &tables.categories))
        .collect();
    put(&mut a, "dynamics/editable_share.tsv", &dynamics::series_table("editable_share", &editable));
    let mut text = String::new();
    if let Some(all) = top.last() {
        let n = all.points.len().max(1) as f64;
        let _ = writeln!(
            text,
            "Search times: {}; mean top-story share: {}",
            all.points.len(),
            fmt_f64(all.values().sum::<f64>() / n)
        );
    }
    (a, text)
}

pub struct DetectOutput {
    pub artifacts: Artifacts,
    pub text: String,
    pub reports: Vec<bubble::ClusterReport>,
    pub locales: HashMap<(Arc<str>, SearchTimeKey), LocaleTag>,
}

pub fn detect_stage(cfg: &RunConfig, tables: &Tables, lists: &[ResultList], groups: &Groups) -> DetectOutput {
    let reports = bubble::detect_all(&groups.web, &cfg.bubble);
    let locales = bubble::donor_locales(lists, &tables.patterns);
    let mut a = Artifacts::new();
    put(&mut a, "detect/clusters.tsv", &bubble::cluster_table(&reports));
    let mut sorted: Vec<(&(Arc<str>, SearchTimeKey), &LocaleTag)> = locales.iter().collect();
    sorted.sort_by(|x, y| (x.0 .1, &x.0 .0).cmp(&(y.0 .1, &y.0 .0)));
    let mut t = Table::new(["date", "slot", "donor_id", "locale"]);
    for ((d, k), l) in sorted {
        t.push([k.date.to_string(), k.slot.label().to_string(), d.to_string(), l.to_string()]);
    }
    put(&mut a, "detect/locales.tsv", &t);
    put(&mut a, "detect/locale_blocks.tsv", &bubble::locale_block_table(&groups.web, &locales));
    if cfg.full_matrices {
        let mats: Vec<(String, Vec<u8>)> = groups
            .web
            .par_iter()
            .map(|g| {
                let m = bubble::locale_overlap_matrix(g, |d| {
                    locales
                        .get(&(Arc::from(d), g.time_key))
                        .cloned()
                        .unwrap_or_else(LocaleTag::unknown)
                });
                (
                    format!("detect/matrices/{}_{}_{}.tsv", g.term.slug(), g.time_key.date, g.time_key.slot.hour()),
                    m.table().to_tsv(),
                )
            })
            .collect();
        a.extend(mats);
    }
    let flagged: usize = reports.iter().map(|r| r.flagged().count()).sum();
    let total: usize = reports.iter().map(|r| r.clusters.len()).sum();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in locales.values() {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let mut text = format!("Clusters: {total} found, {flagged} flagged, over {} groups\nLocale tags (donor x search time):", reports.len());
    for (l, n) in counts {
        let _ = write!(text, " {l}={n}");
    }
    text.push('\n');
    DetectOutput {
        artifacts: a,
        text,
        reports,
        locales,
    }
}

pub struct ReachOutput {
    pub artifacts: Artifacts,
    pub text: String,
    pub fit: ReachFit,
    pub flagged: Vec<reach::Flagged>,
}

pub fn reach_stage(cfg: &RunConfig, tables: &Tables, lists: &[ResultList]) -> Result<ReachOutput> {
    let points = match (&tables.points, &tables.panel) {
        (Some(p), _) => p.clone(),
        (None, Some(panel)) => reach::join_points(panel, &reach::delivered_counts(lists, &cfg.reach.window)),
        (None, None) => return Err(Error::Config("reach needs a reach panel or a points table".into())),
    };
    let fit = match (cfg.reach.fixed_a, cfg.reach.fixed_b) {
        (Some(a), Some(b)) => ReachFit {
            a,
            b,
            n_points: 0,
            residual_variance: f64::NAN,
        },
        _ => reach::fit_loglog(&points)?,
    };
    let flagged = reach::overrepresentation(&points, &fit, cfg.reach.factor);
    let mut a = Artifacts::new();
    let mut pt = Table::new(["tld", "active_reach", "delivered_count", "expected"]);
    for p in &points {
        let e = reach::expected_count(&fit, p.active_reach).ok();
        pt.push([p.tld.clone(), fmt_f64(p.active_reach), p.delivered_count.to_string(), fmt_opt(e)]);
    }
    put(&mut a, "reach/points.tsv", &pt);
    put(&mut a, "reach/fit.tsv", &reach::fit_table(&fit));
    let ft = reach::flagged_table(&flagged);
    put(&mut a, "reach/flagged.tsv", &ft);
    let text = format!(
        "Fit: count = {} * reach^{} ({} points)\n{}",
        fmt_f64(fit.a),
        fmt_f64(fit.b),
        fit.n_points,
        ft.to_text()
    );
    Ok(ReachOutput {
        artifacts: a,
        text,
        fit,
        flagged,
    })
}

// ---------------------------------------------------------------------------
// Whole runs

fn section(out: &mut String, title: &str, body: &str) {
    let _ = writeln!(out, "== {title} ==\n{}", body.trim_end());
    out.push('\n');
}

/// Every stage from records to the text report. Regional refinement and
/// reach are skipped (and noted) when their tables are missing.
pub fn run_full(cfg: &RunConfig, tables: &Tables, dataset: Dataset, rejects: &FileRejects) -> Result<Artifacts> {
    cfg.validate()?;
    let mut a = ingest_stage(&dataset, rejects);
    let (lists, report, clean) = clean_stage(cfg, tables, dataset)?;
    a.extend(clean);
    let mut text = String::new();
    section(&mut text, "Cleaning", &report.to_text());
    let (c, t) = classify_stage(cfg, tables, &lists);
    a.extend(c);
    section(&mut text, "Hosts", &t);
    let groups = Groups::build(&lists);
    let (o, t, _) = overlap_stage(&groups);
    a.extend(o);
    section(&mut text, "Overlap", &t);
    match region_stage(tables, &groups) {
        Ok((r, t, _)) => {
            a.extend(r);
            section(&mut text, "Regional refinement", &t);
        }
        Err(Error::Config(why)) => section(&mut text, "Regional refinement", &format!("skipped: {why}")),
        Err(e) => return Err(e),
    }
    let (d, t) = dynamics_stage(tables, &lists);
    a.extend(d);
    section(&mut text, "Dynamics", &t);
    let det = detect_stage(cfg, tables, &lists, &groups);
    a.extend(det.artifacts);
    section(&mut text, "Cluster detection", &det.text);
    match reach_stage(cfg, tables, &lists) {
        Ok(r) => {
            a.extend(r.artifacts);
            section(&mut text, "Reach", &r.text);
        }
        Err(Error::Config(why)) => section(&mut text, "Reach", &format!("skipped: {why}")),
        Err(e) => return Err(e),
    }
    a.insert("report.txt".into(), text.into_bytes());
    Ok(a)
}

/// Generates a cohort, writes it with its tables and ground truth, runs the
/// analyses on it and compares them with the ground truth.
pub fn simulate(cfg: &RunConfig) -> Result<Artifacts> {
    let spec = &cfg.cohort;
    let cohort = synth::generate(spec)?;
    let mut a = Artifacts::new();
    a.insert("simulate/records.jsonl".into(), jsonl(&cohort.records)?);
    a.insert("simulate/truth.json".into(), serde_json::to_vec_pretty(&cohort.truth)?);
    a.insert("simulate/spec.toml".into(), spec.to_toml().into_bytes());
    a.insert("simulate/categories.tsv".into(), cohort.categories.to_text().into_bytes());
    a.insert("simulate/languages.tsv".into(), cohort.languages.to_text().into_bytes());
    a.insert("simulate/gazetteer.txt".into(), cohort.gazetteer.to_text().into_bytes());
    a.insert("simulate/locale_patterns.tsv".into(), LocalePatterns::default().to_text().into_bytes());

    let tables = Tables {
        languages: Some(cohort.languages.clone()),
        categories: cohort.categories.clone(),
        gazetteer: Some(cohort.gazetteer.clone()),
        ..Default::default()
    };
    let (lists, _, _) = clean_stage(cfg, &tables, Dataset::from_records(cohort.records.clone()))?;
    let (panel, planted) = synth::reach_panel_for(&lists, &cfg.reach.window, &spec.reach, spec.seed);
    a.insert("simulate/reach_panel.tsv".into(), reach::panel_to_text(&panel).into_bytes());

    let groups = Groups::build(&lists);
    let (_, _, overlap) = overlap_stage(&groups);
    let (_, _, refinement) = region_stage(&tables, &groups)?;
    let det = detect_stage(cfg, &tables, &lists, &groups);
    // Cohort counts span a narrow range, so over-delivery is judged against
    // the planted model; the estimator is checked on wide-range points.
    let tables = Tables {
        panel: Some(panel),
        ..tables
    };
    let planted_model = RunConfig {
        reach: ReachConfig {
            fixed_a: Some(spec.reach.a),
            fixed_b: Some(spec.reach.b),
            ..cfg.reach.clone()
        },
        ..cfg.clone()
    };
    let flags = reach_stage(&planted_model, &tables, &lists).ok().map(|r| (r.flagged, planted));
    let cohort_fit = reach_stage(cfg, &tables, &lists).ok().map(|r| r.fit);
    let wide_fit = reach::fit_loglog(&synth::synthetic_reach_points(200, &spec.reach, spec.seed)).ok();
    let m = Measurements {
        overlap: Some(overlap),
        refinement: spec.regional.as_ref().map(|_| refinement),
        clusters: Some((det.reports, cfg.bubble)),
        locales: Some(det.locales),
        reach_fit: wide_fit,
        reach_flags: flags,
    };
    let report = synth::oracle_report(spec, &cohort.truth, &m);
    let mut text = report.table().to_text();
    if let Some(f) = cohort_fit {
        let _ = writeln!(text, "reach fit on the cohort panel (informational): a={} b={}", fmt_f64(f.a), fmt_f64(f.b));
    }
    put(&mut a, "simulate/oracle.tsv", &report.table());
    a.insert("simulate/oracle.txt".into(), text.into_bytes());
    Ok(a)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: String,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub tables: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, inputs: Vec<FileDigest>, tables: Vec<FileDigest>, artifacts: &Artifacts) -> Self {
        let config = cfg.to_toml();
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: ingest::hex(&Sha256::digest(config.as_bytes())),
            config,
            inputs,
            tables,
            artifacts: artifacts
                .iter()
                .map(|(k, v)| FileDigest {
                    path: k.clone(),
                    sha256: ingest::hex(&Sha256::digest(v)),
                })
                .collect(),
        }
    }
}

pub fn input_digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: ingest::sha256_file(p)?,
            })
        })
        .collect()
}

/// Writes artifacts and `manifest.json` under `out`.
pub fn write_artifacts(out: &Path, artifacts: &Artifacts, manifest: &Manifest) -> Result<()> {
    for (name, bytes) in artifacts {
        let path = out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Clean,
    Classify,
    Overlap,
    Region,
    Dynamics,
    Detect,
    Reach,
    Simulate,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Clean => "clean",
            Command::Classify => "classify",
            Command::Overlap => "overlap",
            Command::Region => "region",
            Command::Dynamics => "dynamics",
            Command::Detect => "detect",
            Command::Reach => "reach",
            Command::Simulate => "simulate",
            Command::Report => "report",
        }
    }
}

fn load_lists(paths: &[PathBuf]) -> Result<Vec<ResultList>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(ingest::read_jsonl_path::<ResultList>(p)?);
    }
    Ok(out)
}

/// Executes one subcommand and writes its artifacts and manifest. Record
/// files feed `ingest`, `clean` and `report`; the analysis subcommands read
/// the `clean/lists.jsonl` produced by `clean`.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let needs_input = !matches!(command, Command::Simulate) && !(command == Command::Reach && cfg.tables.reach_points.is_some());
    if needs_input && cfg.inputs.is_empty() {
        return Err(Error::Config(format!("{} needs at least one --input", command.name())));
    }
    let (tables, table_digests) = Tables::load(&cfg.tables)?;
    let inputs = input_digests(&cfg.inputs)?;
    let artifacts = with_threads(cfg.threads, || -> Result<Artifacts> {
        Ok(match command {
            Command::Simulate => simulate(cfg)?,
            Command::Ingest | Command::Clean | Command::Report => {
                let (dataset, rejects) = ingest::load_files(&cfg.inputs)?;
                match command {
                    Command::Ingest => ingest_stage(&dataset, &rejects),
                    Command::Clean => {
                        let (lists, _, mut a) = clean_stage(cfg, &tables, dataset)?;
                        a.insert("clean/lists.jsonl".into(), jsonl(&lists)?);
                        a
                    }
                    _ => run_full(cfg, &tables, dataset, &rejects)?,
                }
            }
            _ => {
                let lists = load_lists(&cfg.inputs)?;
                match command {
                    Command::Classify => classify_stage(cfg, &tables, &lists).0,
                    Command::Overlap => overlap_stage(&Groups::build(&lists)).0,
                    Command::Region => region_stage(&tables, &Groups::build(&lists))?.0,
                    Command::Dynamics => dynamics_stage(&tables, &lists).0,
                    Command::Detect => detect_stage(cfg, &tables, &lists, &Groups::build(&lists)).artifacts,
                    Command::Reach => reach_stage(cfg, &tables, &lists)?.artifacts,
                    _ => unreachable!(),
                }
            }
        })
    })??;
    let manifest = Manifest::new(command.name(), cfg, inputs, table_digests, &artifacts);
    write_artifacts(&cfg.out, &artifacts, &manifest)?;
    Ok(artifacts)
}
