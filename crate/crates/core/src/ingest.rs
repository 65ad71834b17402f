//! Canonical line-oriented record format: parsing, writing, summaries.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DonationRecord, EntryKind, SearchTerm, SearchType};
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileProvenance {
    pub path: PathBuf,
    pub sha256: String,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub files: Vec<FileProvenance>,
    pub loaded_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<DonationRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn from_records(records: Vec<DonationRecord>) -> Self {
        Dataset {
            records,
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

/// Shares identical strings between records; a donated corpus repeats the
/// same few thousand URLs millions of times.
#[derive(Default)]
pub struct Interner {
    set: HashSet<Arc<str>>,
}

impl Interner {
    pub fn intern(&mut self, s: &Arc<str>) -> Arc<str> {
        if let Some(found) = self.set.get(s) {
            return found.clone();
        }
        self.set.insert(s.clone());
        s.clone()
    }

    fn intern_opt(&mut self, s: &mut Option<Arc<str>>) {
        if let Some(v) = s {
            *v = self.intern(v);
        }
    }

    pub fn intern_record(&mut self, rec: &mut DonationRecord) {
        rec.donor_id = self.intern(&rec.donor_id);
        rec.browser_language = self.intern(&rec.browser_language);
        rec.country = self.intern(&rec.country);
        for e in &mut rec.entries {
            e.url = self.intern(&e.url);
            self.intern_opt(&mut e.age_string);
            self.intern_opt(&mut e.medium);
            self.intern_opt(&mut e.link_text);
            self.intern_opt(&mut e.title);
        }
    }
}

fn reject_reason(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return format!("missing {}", &rest[..end]);
        }
    }
    match msg.find(" at line ") {
        Some(p) => msg[..p].to_string(),
        None => msg,
    }
}

fn validate(rec: &DonationRecord) -> std::result::Result<(), String> {
    if rec.donor_id.is_empty() {
        return Err("empty donor_id".into());
    }
    for e in &rec.entries {
        if e.rank == 0 {
            return Err("rank must be >= 1".into());
        }
        if e.url.trim().is_empty() {
            return Err("missing url".into());
        }
        if e.kind == EntryKind::Organic && e.age_string.is_some() {
            return Err("age_string on organic entry".into());
        }
    }
    Ok(())
}

/// Parses newline-delimited records. Malformed lines become rejects; only an
/// unreadable stream is fatal.
pub fn parse_records<R: Read>(stream: R) -> Result<(Dataset, Vec<Reject>)> {
    let mut interner = Interner::default();
    parse_with(stream, &mut interner)
}

fn parse_with<R: Read>(stream: R, interner: &mut Interner) -> Result<(Dataset, Vec<Reject>)> {
    let reader = BufReader::new(stream);
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DonationRecord>(&line) {
            Ok(mut rec) => match validate(&rec) {
                Ok(()) => {
                    rec.entries.sort_by_key(|e| e.rank);
                    interner.intern_record(&mut rec);
                    records.push(rec);
                }
                Err(reason) => rejects.push(Reject { line: i + 1, reason }),
            },
            Err(e) => rejects.push(Reject {
                line: i + 1,
                reason: reject_reason(&e),
            }),
        }
    }
    Ok((Dataset::from_records(records), rejects))
}

pub fn is_gzip_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Opens `.jsonl` or `.jsonl.gz` for reading.
pub fn open_input(path: &Path) -> Result<Box<dyn Read + Send>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_gzip_path(path) {
        Ok(Box::new(MultiGzDecoder::new(BufReader::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rejects tagged with the file they came from.
pub type FileRejects = Vec<(PathBuf, Reject)>;

/// Loads several files in parallel; records are merged in argument order.
pub fn load_files(paths: &[PathBuf]) -> Result<(Dataset, FileRejects)> {
    let parsed: Vec<Result<(Dataset, Vec<Reject>, String)>> = paths
        .par_iter()
        .map(|p| {
            let (ds, rejects) = parse_records(open_input(p)?).map_err(|e| match e {
                Error::Stream(io) => Error::io(p, io),
                other => other,
            })?;
            Ok((ds, rejects, sha256_file(p)?))
        })
        .collect();
    let mut dataset = Dataset::default();
    let mut all_rejects = Vec::new();
    let mut interner = Interner::default();
    for (path, res) in paths.iter().zip(parsed) {
        let (ds, rejects, sha256) = res?;
        dataset.provenance.files.push(FileProvenance {
            path: path.clone(),
            sha256,
            accepted: ds.records.len(),
            rejected: rejects.len(),
        });
        for mut r in ds.records {
            interner.intern_record(&mut r);
            dataset.records.push(r);
        }
        all_rejects.extend(rejects.into_iter().map(|r| (path.clone(), r)));
    }
    dataset.provenance.loaded_at = Some(chrono::Local::now().to_rfc3339());
    Ok((dataset, all_rejects))
}

/// Writes records one JSON object per line.
pub fn write_records<W: Write>(mut w: W, records: &[DonationRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes any serializable rows as JSON lines, gzip-compressed when the
/// path ends in `.gz`.
pub fn write_jsonl_path<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w: Box<dyn Write> = if is_gzip_path(path) {
        Box::new(GzEncoder::new(BufWriter::new(f), flate2::Compression::default()))
    } else {
        Box::new(BufWriter::new(f))
    };
    let res: Result<()> = (|| {
        for r in rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| match e {
        Error::Stream(io) => Error::io(path, io),
        other => other,
    })
}

/// Reads JSON lines of any deserializable type, failing on the first bad line.
pub fn read_jsonl_path<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(open_input(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Table {
            file: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayCounts {
    pub donors: usize,
    pub logged_in: usize,
    pub logged_out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total_records: usize,
    pub total_donors: usize,
    pub daily: BTreeMap<NaiveDate, DayCounts>,
    pub by_search_type: BTreeMap<SearchType, usize>,
    /// Distinct donors seen from each country.
    pub by_country: BTreeMap<String, usize>,
    pub by_term: BTreeMap<SearchTerm, usize>,
}

/// Per-day donor counts, split by each donor's majority login state that
/// day (ties count as logged out), plus record tallies.
pub fn summarize(dataset: &Dataset) -> DatasetSummary {
    let mut summary = DatasetSummary {
        total_records: dataset.records.len(),
        ..Default::default()
    };
    // (day, donor) -> (logged_in records, logged_out records)
    let mut per_day: HashMap<(NaiveDate, &str), (usize, usize)> = HashMap::new();
    let mut countries: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut donors: HashSet<&str> = HashSet::new();
    for r in &dataset.records {
        let e = per_day
            .entry((r.timestamp.date(), &r.donor_id))
            .or_default();
        if r.logged_in {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
        *summary.by_search_type.entry(r.search_type).or_default() += 1;
        *summary.by_term.entry(r.term).or_default() += 1;
        countries.insert((&r.country, &r.donor_id));
        donors.insert(&r.donor_id);
    }
    for ((day, _), (inn, out)) in per_day {
        let d = summary.daily.entry(day).or_default();
        d.donors += 1;
        if inn > out {
            d.logged_in += 1;
        } else {
            d.logged_out += 1;
        }
    }
    for (country, _) in countries {
        *summary.by_country.entry(country.to_string()).or_default() += 1;
    }
    summary.total_donors = donors.len();
    summary
}

impl DatasetSummary {
    pub fn daily_table(&self) -> Table {
        let mut t = Table::new(["date", "donors", "logged_in", "logged_out"]);
        for (d, c) in &self.daily {
            t.push([d.to_string(), c.donors.to_string(), c.logged_in.to_string(), c.logged_out.to_string()]);
        }
        t
    }

    pub fn counts_table(&self) -> Table {
        let mut t = Table::new(["dimension", "value", "count"]);
        t.push(["total", "records", &self.total_records.to_string()]);
        t.push(["total", "donors", &self.total_donors.to_string()]);
        for (k, v) in &self.by_search_type {
            t.push(["search_type", k.label(), &v.to_string()]);
        }
        for (k, v) in &self.by_term {
            t.push(["term", k.text(), &v.to_string()]);
        }
        for (k, v) in &self.by_country {
            t.push(["country_donors", k.as_str(), &v.to_string()]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRow {
    pub lat: f64,
    pub lon: f64,
    pub country: String,
    pub donors: usize,
    /// `None` when no cleaning outcome was supplied.
    pub retained: Option<bool>,
}

fn round_to(x: f64, decimals: u32) -> i64 {
    (x * 10f64.powi(decimals as i32)).round() as i64
}

/// One row per distinct rounded coordinate (and country, and retention
/// state); `dropped` lists donors removed entirely by cleaning.
pub fn export_locations(
    dataset: &Dataset,
    dropped: Option<&BTreeSet<Arc<str>>>,
    decimals: u32,
) -> Vec<LocationRow> {
    let mut cells: BTreeMap<(i64, i64, &str, Option<bool>), BTreeSet<&str>> = BTreeMap::new();
    for r in &dataset.records {
        let retained = dropped.map(|d| !d.contains(&r.donor_id));
        cells
            .entry((round_to(r.lat, decimals), round_to(r.lon, decimals), &r.country, retained))
            .or_default()
            .insert(&r.donor_id);
    }
    let scale = 10f64.powi(decimals as i32);
    cells
        .into_iter()
        .map(|((lat, lon, country, retained), donors)| LocationRow {
            lat: lat as f64 / scale,
            lon: lon as f64 / scale,
            country: country.to_string(),
            donors: donors.len(),
            retained,
        })
        .collect()
}

pub fn locations_table(rows: &[LocationRow]) -> Table {
    let mut t = Table::new(["lat", "lon", "country", "donors", "retained"]);
    for r in rows {
        t.push([
            fmt_f64(r.lat),
            fmt_f64(r.lon),
            r.country.clone(),
            r.donors.to_string(),
            r.retained.map(|b| b.to_string()).unwrap_or_else(|| "NA".into()),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResultEntry, SearchTerm};
    use chrono::NaiveDate;

    fn rec(donor: &str, day: u32, hour: u32, logged_in: bool, lat: f64) -> DonationRecord {
        DonationRecord {
            donor_id: donor.into(),
            search_type: SearchType::GoogleSearch,
            term: SearchTerm::Cdu,
            timestamp: NaiveDate::from_ymd_opt(2017, 8, day)
                .unwrap()
                .and_hms_opt(hour, 5, 0)
                .unwrap(),
            logged_in,
            browser_language: "de-DE".into(),
            lat,
            lon: 8.0,
            country: "DE".into(),
            entries: vec![ResultEntry::new(1, "https://www.cdu.de/", EntryKind::Organic)],
        }
    }

    fn to_bytes(recs: &[DonationRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_records(&mut buf, recs).unwrap();
        buf
    }

    #[test]
    fn three_valid_lines() {
        let recs = vec![rec("a", 21, 12, true, 50.0), rec("b", 21, 12, false, 50.0), rec("c", 22, 16, false, 51.0)];
        let (ds, rejects) = parse_records(&to_bytes(&recs)[..]).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(rejects.is_empty());
        assert_eq!(ds.records, recs);
    }

    #[test]
    fn missing_url_is_rejected_with_reason() {
        let good = String::from_utf8(to_bytes(&[rec("a", 21, 12, true, 50.0)])).unwrap();
        let bad = good.replace("\"url\":\"https://www.cdu.de/\",", "");
        let input = format!("{good}{bad}not json\n");
        let (ds, rejects) = parse_records(input.as_bytes()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(rejects.len(), 2);
        assert_eq!(rejects[0], Reject { line: 2, reason: "missing url".into() });
        assert_eq!(rejects[1].line, 3);
    }

    #[test]
    fn summary_majority_login() {
        let recs = vec![
            rec("a", 21, 12, true, 50.0),
            rec("a", 21, 16, true, 50.0),
            rec("a", 21, 20, false, 50.0),
            rec("b", 21, 12, true, 50.0),
            rec("b", 21, 16, false, 50.0),
            rec("b", 22, 16, true, 50.0),
        ];
        let s = summarize(&Dataset::from_records(recs));
        let d21 = s.daily[&NaiveDate::from_ymd_opt(2017, 8, 21).unwrap()];
        assert_eq!(d21, DayCounts { donors: 2, logged_in: 1, logged_out: 1 });
        let d22 = s.daily[&NaiveDate::from_ymd_opt(2017, 8, 22).unwrap()];
        assert_eq!(d22, DayCounts { donors: 1, logged_in: 1, logged_out: 0 });
        assert_eq!(s.by_country["DE"], 2);
        assert_eq!(s.total_records, 6);
    }

    #[test]
    fn empty_summary_and_locations() {
        let ds = Dataset::default();
        let s = summarize(&ds);
        assert_eq!(s.total_records, 0);
        assert!(s.daily.is_empty());
        assert!(export_locations(&ds, None, 1).is_empty());
    }

    #[test]
    fn locations_group_by_rounded_coordinate() {
        let ds = Dataset::from_records(vec![
            rec("a", 21, 12, true, 50.01),
            rec("b", 21, 12, true, 49.98),
            rec("c", 21, 12, true, 52.5),
        ]);
        let rows = export_locations(&ds, None, 1);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].donors, 2);
        let dropped: BTreeSet<Arc<str>> = [Arc::from("c")].into_iter().collect();
        let rows = export_locations(&ds, Some(&dropped), 1);
        assert_eq!(rows.iter().find(|r| r.lat == 52.5).unwrap().retained, Some(false));
        assert_eq!(rows[0].retained, Some(true));
    }
}
