//! Power-law model of delivered top-story counts against audience reach.
//!
//! Fit `count = a * reach^b` by least squares on log10 values and flag
//! sources whose delivered count deviates from the model by a factor.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{extract_tld, ResultList, SearchType};
use crate::table::{fmt_f64, parse_text_table, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachPoint {
    pub tld: String,
    /// Share of users who visited the host at least once, in percent.
    pub active_reach: f64,
    pub delivered_count: u64,
}

impl ReachPoint {
    pub fn new(tld: &str, active_reach: f64, delivered_count: u64) -> Self {
        ReachPoint {
            tld: tld.to_string(),
            active_reach,
            delivered_count,
        }
    }

    fn fittable(&self) -> bool {
        self.active_reach > 0.0 && self.active_reach.is_finite() && self.delivered_count > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachFit {
    pub a: f64,
    pub b: f64,
    pub n_points: usize,
    /// Residual variance in log10 space (n - 2 degrees of freedom).
    pub residual_variance: f64,
}

impl ReachFit {
    pub fn expected(&self, reach: f64) -> Result<f64> {
        expected_count(self, reach)
    }
}

/// OLS of log10(count) on log10(reach). Points with zero reach or zero
/// count are skipped; at least three remaining points with two or more
/// distinct reach values are required.
pub fn fit_loglog(points: &[ReachPoint]) -> Result<ReachFit> {
    let raw: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.fittable())
        .map(|p| (p.active_reach, p.delivered_count as f64))
        .collect();
    fit_power_law(&raw)
}

/// The same estimator on real-valued (reach, count) pairs; non-positive or
/// non-finite pairs are skipped.
pub fn fit_power_law(raw: &[(f64, f64)]) -> Result<ReachFit> {
    let xy: Vec<(f64, f64)> = raw
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let n = xy.len();
    if n < 3 {
        return Err(Error::Fit(format!("{n} usable point(s); need at least 3")));
    }
    let nf = n as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * nf * (1.0 + mx * mx) {
        return Err(Error::Fit("reach values are not distinct".into()));
    }
    let b = sxy / sxx;
    let intercept = my - b * mx;
    let rss: f64 = xy.iter().map(|p| (p.1 - intercept - b * p.0).powi(2)).sum();
    Ok(ReachFit {
        a: 10f64.powf(intercept),
        b,
        n_points: n,
        residual_variance: rss / (nf - 2.0),
    })
}

pub fn expected_count(fit: &ReachFit, reach: f64) -> Result<f64> {
    if !(reach > 0.0) || !reach.is_finite() {
        return Err(Error::Domain(format!("reach must be positive, got {reach}")));
    }
    Ok(fit.a * reach.powf(fit.b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Over,
    Under,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Over => "over",
            Direction::Under => "under",
        }
    }
}

/// Deviation of an observed count from its expectation. The ratio is
/// observed / expected (infinite when nothing was expected).
pub fn flag_deviation(observed: f64, expected: f64, factor: f64) -> Option<(Direction, f64)> {
    if expected <= 0.0 {
        return (observed >= factor).then_some((Direction::Over, f64::INFINITY));
    }
    if observed <= 0.0 {
        return (expected >= factor).then_some((Direction::Under, 0.0));
    }
    let ratio = observed / expected;
    if ratio >= factor {
        Some((Direction::Over, ratio))
    } else if ratio <= 1.0 / factor {
        Some((Direction::Under, ratio))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub tld: String,
    pub active_reach: f64,
    pub observed: u64,
    pub expected: f64,
    pub ratio: f64,
    pub direction: Direction,
}

/// Flagged points sorted by decreasing ratio (over first, then under from
/// mildest to strongest), ties by host.
pub fn overrepresentation(points: &[ReachPoint], fit: &ReachFit, factor: f64) -> Vec<Flagged> {
    let mut out: Vec<Flagged> = points
        .iter()
        .filter_map(|p| {
            let expected = if p.active_reach > 0.0 {
                expected_count(fit, p.active_reach).ok()?
            } else {
                0.0
            };
            let (direction, ratio) = flag_deviation(p.delivered_count as f64, expected, factor)?;
            Some(Flagged {
                tld: p.tld.clone(),
                active_reach: p.active_reach,
                observed: p.delivered_count,
                expected,
                ratio,
                direction,
            })
        })
        .collect();
    out.sort_by(|x, y| y.ratio.total_cmp(&x.ratio).then_with(|| x.tld.cmp(&y.tld)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub tld: String,
    pub active_reach: f64,
    pub period: String,
}

/// Reach panel: columns host, active reach in percent, period label
/// (e.g. `2017-08`). A header line starting with `tld` is skipped.
pub fn parse_panel(text: &str, file: &str) -> Result<Vec<PanelRow>> {
    let mut rows = Vec::new();
    for (line, fields) in parse_text_table(text) {
        if line == 1 && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("tld") || f.eq_ignore_ascii_case("host")) {
            continue;
        }
        let bad = |reason: String| Error::Table {
            file: file.into(),
            line,
            reason,
        };
        if fields.len() < 2 {
            return Err(bad("expected tld, active_reach[, period]".into()));
        }
        let reach: f64 = fields[1].replace(',', ".").parse().map_err(|_| bad(format!("bad reach {:?}", fields[1])))?;
        if !(reach >= 0.0) || !reach.is_finite() {
            return Err(bad(format!("reach must be a non-negative number, got {reach}")));
        }
        rows.push(PanelRow {
            tld: fields[0].to_lowercase(),
            active_reach: reach,
            period: fields.get(2).map(|s| s.to_string()).unwrap_or_default(),
        });
    }
    Ok(rows)
}

/// Observed points given directly: host, active reach, delivered count.
pub fn parse_points(text: &str, file: &str) -> Result<Vec<ReachPoint>> {
    let mut out = Vec::new();
    for (line, fields) in parse_text_table(text) {
        if line == 1 && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("tld") || f.eq_ignore_ascii_case("host")) {
            continue;
        }
        let bad = |reason: String| Error::Table {
            file: file.into(),
            line,
            reason,
        };
        if fields.len() != 3 {
            return Err(bad("expected tld, active_reach, delivered_count".into()));
        }
        let reach: f64 = fields[1].parse().map_err(|_| bad(format!("bad reach {:?}", fields[1])))?;
        let count: u64 = fields[2].parse().map_err(|_| bad(format!("bad count {:?}", fields[2])))?;
        if !(reach >= 0.0) || !reach.is_finite() {
            return Err(bad(format!("reach must be a non-negative number, got {reach}")));
        }
        out.push(ReachPoint::new(&fields[0].to_lowercase(), reach, count));
    }
    Ok(out)
}

pub fn points_to_text(points: &[ReachPoint]) -> String {
    let mut s = String::from("tld\tactive_reach\tdelivered_count\n");
    for p in points {
        s.push_str(&format!("{}\t{}\t{}\n", p.tld, p.active_reach, p.delivered_count));
    }
    s
}

pub fn panel_to_text(rows: &[PanelRow]) -> String {
    let mut s = String::from("tld\tactive_reach\tperiod\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{}\n", r.tld, r.active_reach, r.period));
    }
    s
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl Default for Window {
    fn default() -> Self {
        Window {
            from: NaiveDate::from_ymd_opt(2017, 8, 1).unwrap(),
            to: NaiveDate::from_ymd_opt(2017, 8, 31).unwrap(),
        }
    }
}

impl Window {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.from <= d && d <= self.to
    }
}

/// Top-story URL deliveries per host in the window (web search only).
pub fn delivered_counts(lists: &[ResultList], window: &Window) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for l in lists {
        if l.search_type != SearchType::GoogleSearch || !window.contains(l.time_key.date) {
            continue;
        }
        for u in &l.top_stories {
            if let Ok(h) = extract_tld(u) {
                *counts.entry(h.as_str().to_string()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Joins the panel with delivered counts. Panel hosts without deliveries
/// get count 0; delivered hosts missing from the panel get reach 0.
pub fn join_points(panel: &[PanelRow], counts: &BTreeMap<String, u64>) -> Vec<ReachPoint> {
    let reach: HashMap<&str, f64> = panel.iter().map(|r| (r.tld.as_str(), r.active_reach)).collect();
    let mut hosts: Vec<&str> = reach.keys().copied().chain(counts.keys().map(String::as_str)).collect();
    hosts.sort_unstable();
    hosts.dedup();
    hosts
        .into_iter()
        .map(|h| ReachPoint::new(h, reach.get(h).copied().unwrap_or(0.0), counts.get(h).copied().unwrap_or(0)))
        .collect()
}

pub fn fit_table(fit: &ReachFit) -> Table {
    let mut t = Table::new(["a", "b", "n_points", "residual_variance"]);
    t.push([fmt_f64(fit.a), fmt_f64(fit.b), fit.n_points.to_string(), fmt_f64(fit.residual_variance)]);
    t
}

pub fn flagged_table(rows: &[Flagged]) -> Table {
    let mut t = Table::new(["tld", "active_reach", "observed", "expected", "ratio", "direction"]);
    for r in rows {
        t.push([
            r.tld.clone(),
            fmt_f64(r.active_reach),
            r.observed.to_string(),
            fmt_f64(r.expected),
            fmt_f64(r.ratio),
            r.direction.label().to_string(),
        ]);
    }
    t
}
