//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! test harness so the lines always reach the output; exits non-zero when
//! any criterion fails.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serp_audit::bubble::{self, BubbleParams, LocalePatterns};
use serp_audit::cleanse::{self, CleanConfig};
use serp_audit::ingest::Dataset;
use serp_audit::model::{ResultList, SearchTerm, SearchType};
use serp_audit::overlap::{self, OverlapStats, PairGroup};
use serp_audit::reach::{self, ReachPoint};
use serp_audit::regional;
use serp_audit::run::{self, RunConfig, Tables};
use serp_audit::synth::{self, CohortSpec, FaultKind, FaultRates, LocaleSpec, Outcome, RecordId, RegionalSpec};
use serp_audit::table::fmt_percent;

struct Outcomes(Vec<(u32, String, bool, Duration, String)>);

impl Outcomes {
    fn run(&mut self, id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Result<String, String>) {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let took = t.elapsed();
        let (ok, detail) = match r {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(e) => (false, e),
        };
        println!("{} criterion {id:>2} {name}: {detail} [{:.2?}]", if ok { "PASS" } else { "FAIL" }, took);
        self.0.push((id, name.into(), ok, took, detail));
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn clean(cohort: &synth::Cohort, language_filter: bool) -> Vec<ResultList> {
    let cfg = CleanConfig {
        language_filter,
        ..Default::default()
    };
    cleanse::run_pipeline(Dataset::from_records(cohort.records.clone()), &cfg, &cohort.languages)
        .unwrap()
        .0
}

fn pooled(groups: &[PairGroup]) -> OverlapStats {
    let mut s = OverlapStats::default();
    for g in groups {
        s.merge(&overlap::group_stats(g));
    }
    s
}

// Brute force over raw URL lists: dedup, then compare every pair.
fn brute_force(lists: &[Vec<String>]) -> (u64, u64, u64, u64, u64) {
    let seqs: Vec<Vec<&str>> = lists
        .iter()
        .map(|l| {
            let mut seen = HashSet::new();
            l.iter().map(|s| s.trim()).filter(|s| seen.insert(*s)).collect()
        })
        .collect();
    let sets: Vec<HashSet<&str>> = seqs.iter().map(|s| s.iter().copied().collect()).collect();
    let (mut pairs, mut ident, mut ordered, mut common, mut lens) = (0, 0, 0, 0, 0);
    for i in 0..lists.len() {
        for j in i + 1..lists.len() {
            pairs += 1;
            ident += (sets[i] == sets[j]) as u64;
            ordered += (seqs[i] == seqs[j]) as u64;
            common += sets[i].intersection(&sets[j]).count() as u64;
            lens += (sets[i].len() + sets[j].len()) as u64;
        }
    }
    (pairs, ident, ordered, common, lens)
}

fn criterion_1() -> Result<String, String> {
    let mut lists: Vec<Vec<String>> = Vec::new();
    for _ in 0..5 {
        lists.push((0..9).map(|j| format!("https://a.example/{j}")).collect());
    }
    for _ in 0..6 {
        lists.push((0..9).map(|j| format!("https://b.example/{j}")).collect());
    }
    for i in 0..89 {
        lists.push((0..9).map(|j| format!("https://u{i}.example/{j}")).collect());
    }
    let s = overlap::group_stats(&PairGroup::from_url_lists(&lists));
    ensure(s.identical_pairs == 25 && s.n_pairs == 4950, || format!("{}/{} pairs", s.identical_pairs, s.n_pairs))?;
    let shown = fmt_percent(s.identical_fraction().unwrap());
    ensure(shown == "0.51", || format!("rendered {shown}"))?;
    Ok(format!("{}/{} identical pairs = {shown}%", s.identical_pairs, s.n_pairs))
}

fn criterion_2() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for g in 0..100 {
        let n = rng.gen_range(0..=50);
        let vocab = rng.gen_range(1..=25);
        let lists: Vec<Vec<String>> = (0..n)
            .map(|_| {
                let len = rng.gen_range(0..=10);
                (0..len).map(|_| format!("https://h{}.example/", rng.gen_range(0..vocab))).collect()
            })
            .collect();
        let s = overlap::group_stats(&PairGroup::from_url_lists(&lists));
        let (pairs, ident, ordered, common, lens) = brute_force(&lists);
        let got = (s.n_pairs, s.identical_pairs, s.identical_ordered_pairs, s.common_sum, s.length_pair_sum);
        ensure(got == (pairs, ident, ordered, common, lens), || {
            format!("group {g}: optimized {got:?} vs brute force {:?}", (pairs, ident, ordered, common, lens))
        })?;
        ensure(s.histogram.iter().sum::<u64>() == pairs, || format!("group {g}: histogram total"))?;
    }
    Ok("100 random groups equal the brute-force counts".into())
}

fn criterion_3() -> Result<String, String> {
    let mut out = Vec::new();
    for k in 0..=3usize {
        let spec = CohortSpec {
            n_donors: 200,
            list_length: 9,
            personalization_swaps: k,
            keys: Some((0..8).collect()),
            seed: 30 + k as u64,
            ..Default::default()
        };
        let cohort = synth::generate(&spec).map_err(|e| e.to_string())?;
        let lists = clean(&cohort, true);
        let groups = overlap::build_groups(&lists, SearchType::GoogleSearch, false);
        let scope = pooled(&groups).scope().unwrap();
        let p = spec.personalization_pool as f64;
        let expected = k as f64 - (k * k) as f64 / p;
        if k == 0 {
            ensure(scope == 0.0, || format!("k=0 scope {scope}"))?;
        }
        ensure((scope - expected).abs() <= 0.1, || format!("k={k}: scope {scope:.4} vs {expected:.4}"))?;
        out.push(format!("k={k}:{scope:.3}"));
    }
    Ok(out.join(" "))
}

fn criterion_4() -> Result<String, String> {
    let spec = CohortSpec {
        n_donors: 200,
        personalization_swaps: 1,
        regional: Some(RegionalSpec {
            n_regions: 40,
            branch_urls: 2,
            donors_per_region: 5,
        }),
        keys: Some((0..6).collect()),
        seed: 4,
        ..Default::default()
    };
    let cohort = synth::generate(&spec).map_err(|e| e.to_string())?;
    let lists = clean(&cohort, true);
    let groups = overlap::build_groups(&lists, SearchType::GoogleSearch, false);
    let hosts: BTreeSet<String> = groups
        .iter()
        .flat_map(|g| g.urls.iter())
        .filter_map(|u| serp_audit::model::extract_tld(u).ok().map(|h| h.as_str().to_string()))
        .collect();
    let tags = regional::tag_regional(hosts.iter().map(String::as_str), &cohort.gazetteer, &cohort.categories);
    let mut detail = Vec::new();
    for row in regional::refine_by_term(&groups, &tags) {
        let raw = row.stats.raw_nonshared().unwrap();
        let refined = row.stats.refined_nonshared().unwrap();
        ensure((raw - 3.0).abs() <= 0.15 && (refined - 1.0).abs() <= 0.15, || {
            format!("{}: raw {raw:.3}, refined {refined:.3}", row.term)
        })?;
        if row.term == SearchTerm::Gruene {
            detail.push(format!("{}: raw {raw:.3}, refined {refined:.3}", row.term));
        }
    }
    Ok(detail.join("; "))
}

fn criterion_5() -> Result<String, String> {
    let rates = FaultRates {
        duplicate_id: 0.05,
        repeated_url_list: 0.05,
        oversize_list: 0.05,
        redirect_stub: 0.05,
        foreign_list: 0.05,
        off_schedule: 0.05,
    };
    let spec = CohortSpec {
        n_donors: 120,
        keys: Some((0..6).collect()),
        faults: rates,
        seed: 5,
        ..Default::default()
    };
    let faulty = synth::generate(&spec).map_err(|e| e.to_string())?;
    let pristine = synth::generate(&CohortSpec {
        faults: FaultRates::default(),
        ..spec.clone()
    })
    .map_err(|e| e.to_string())?;
    ensure(faulty.records.len() >= 10_000, || format!("{} records", faulty.records.len()))?;
    let labels = faulty.truth.fault_map();
    let kinds: BTreeSet<FaultKind> = labels.values().copied().collect();
    ensure(kinds.len() == 6, || format!("fault classes present: {kinds:?}"))?;

    let cfg = CleanConfig::default();
    let (records, _) = cleanse::clean_records(Dataset::from_records(faulty.records.clone()), &cfg, &faulty.languages)
        .map_err(|e| e.to_string())?;
    let kept: HashMap<RecordId, &serp_audit::model::DonationRecord> = records.iter().map(|r| (RecordId::of(r), r)).collect();
    let reference: HashMap<RecordId, &serp_audit::model::DonationRecord> =
        pristine.records.iter().map(|r| (RecordId::of(r), r)).collect();

    let mut removed_faulty = 0;
    let mut repaired = 0;
    for r in &faulty.records {
        let id = RecordId::of(r);
        match labels.get(&id).map(|k| k.outcome()) {
            Some(Outcome::Removed) => {
                ensure(!kept.contains_key(&id), || format!("faulty record kept: {id:?} ({:?})", labels[&id]))?;
                removed_faulty += 1;
            }
            Some(Outcome::Repaired) => {
                let k = kept.get(&id).ok_or_else(|| format!("repairable record removed: {id:?}"))?;
                let want = ResultList::from_record(reference[&id]);
                ensure(ResultList::from_record(k) == want, || format!("repair of {id:?} differs"))?;
                repaired += 1;
            }
            None => ensure(kept.contains_key(&id), || format!("clean record removed: {id:?}"))?,
        }
    }
    let (again, _) = cleanse::clean_records(Dataset::from_records(records.clone()), &cfg, &faulty.languages)
        .map_err(|e| e.to_string())?;
    ensure(again == records, || "cleaning is not idempotent".into())?;
    Ok(format!(
        "{} records, {removed_faulty} faulty removed, {repaired} repaired, {} clean kept, idempotent",
        faulty.records.len(),
        records.len() - repaired
    ))
}

fn criterion_6() -> Result<String, String> {
    let params = BubbleParams::default();
    let spec = CohortSpec {
        n_donors: 200,
        terms: vec![SearchTerm::Merkel, SearchTerm::Afd],
        keys: Some((0..4).collect()),
        top_story_prob: 1.0,
        locale_mix: vec![
            LocaleSpec {
                fraction: 0.975,
                ..Default::default()
            },
            LocaleSpec {
                locale: "en".into(),
                fraction: 0.025,
                shared_urls: 4,
                own_urls: 3,
                pool_size: 50,
            },
        ],
        seed: 6,
        ..Default::default()
    };
    let cohort = synth::generate(&spec).map_err(|e| e.to_string())?;
    let planted: BTreeSet<Arc<str>> = cohort
        .truth
        .donors
        .iter()
        .filter(|d| d.locale == "en")
        .map(|d| d.donor_id.clone())
        .collect();
    ensure(planted.len() == 5, || format!("{} planted donors", planted.len()))?;
    let lists = clean(&cohort, false);
    let groups = overlap::build_groups(&lists, SearchType::GoogleSearch, false);
    let mut worst: f64 = 0.0;
    for r in bubble::detect_all(&groups, &params) {
        let flagged: Vec<_> = r.flagged().collect();
        ensure(flagged.len() == 1, || format!("{} at {}: {} flagged clusters", r.term, r.time_key, flagged.len()))?;
        let members: BTreeSet<Arc<str>> = flagged[0].members.iter().cloned().collect();
        ensure(members == planted, || format!("{} at {}: members {members:?}", r.term, r.time_key))?;
        let d = flagged[0].distinctness.unwrap();
        ensure(d < 3.5, || format!("distinctness {d}"))?;
        worst = worst.max(d);
    }

    let control = synth::generate(&CohortSpec {
        locale_mix: vec![LocaleSpec::default()],
        ..spec.clone()
    })
    .map_err(|e| e.to_string())?;
    let groups = overlap::build_groups(&clean(&control, true), SearchType::GoogleSearch, false);
    let false_pos: usize = bubble::detect_all(&groups, &params).iter().map(|r| r.flagged().count()).sum();
    ensure(false_pos == 0, || format!("{false_pos} flagged clusters on the single-locale cohort"))?;
    Ok(format!(
        "planted cluster recovered in all {} groups (max distinctness {worst:.2}); 0 false positives",
        groups.len()
    ))
}

fn criterion_7() -> Result<String, String> {
    let p = LocalePatterns::default();
    let fixture = [
        ("Vor 1 Stunde", "de"),
        ("vor 4 Stunden", "de"),
        ("vor 35 Minuten", "de"),
        ("1 hour ago", "en"),
        ("5 hours ago", "en"),
        ("20 mins ago", "en"),
        ("Il y a 2 heurs", "fr"),
        ("Il y a 1 heure", "fr"),
        ("il y a 3 heures", "fr"),
        ("for 2 timer siden", "no"),
        ("for 1 time siden", "no"),
    ];
    for (s, want) in fixture {
        let got = p.detect([s]);
        ensure(got.as_str() == want, || format!("{s:?} tagged {got}"))?;
    }
    ensure(p.detect(std::iter::empty::<&str>()).is_unknown(), || "empty input not unknown".into())?;
    ensure(p.detect(["gestern"]).is_unknown(), || "unmatched string not unknown".into())?;
    Ok(format!("{} strings tagged correctly; absent strings unknown", fixture.len()))
}

fn criterion_8() -> Result<String, String> {
    let spec = synth::ReachSpec::default();
    let noisy = synth::synthetic_reach_points(200, &spec, 8);
    let fit = reach::fit_loglog(&noisy).map_err(|e| e.to_string())?;
    ensure((fit.b - 0.9).abs() <= 0.05, || format!("b = {}", fit.b))?;
    ensure((fit.a / 1.373 - 1.0).abs() <= 0.15, || format!("a = {}", fit.a))?;

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let exact: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let x = 10f64.powf(rng.gen_range(1.0..5.0));
            (x, 1.373 * x.powf(0.9))
        })
        .collect();
    let fe = reach::fit_power_law(&exact).map_err(|e| e.to_string())?;
    ensure((fe.b - 0.9).abs() < 1e-12 && (fe.a / 1.373 - 1.0).abs() < 1e-12, || {
        format!("exact fit a={} b={}", fe.a, fe.b)
    })?;

    // Scaling reach by c multiplies a by c^-b and leaves b unchanged.
    let c = 37.5;
    let scaled: Vec<ReachPoint> = noisy
        .iter()
        .map(|p| ReachPoint::new(&p.tld, p.active_reach * c, p.delivered_count))
        .collect();
    let fs = reach::fit_loglog(&scaled).map_err(|e| e.to_string())?;
    let db = (fs.b - fit.b).abs();
    let da = (fs.a.log10() - (fit.a.log10() - fit.b * c.log10())).abs();
    ensure(db < 1e-9 && da < 1e-9, || format!("equivariance off by {db:e} / {da:e}"))?;
    Ok(format!("noisy a={:.4} b={:.4}; exact case to 1e-12; equivariance to 1e-9", fit.a, fit.b))
}

fn criterion_9() -> Result<String, String> {
    let listed = [
        ("epochtimes.de", 240_004u64, 840.0),
        ("chiemgau24.de", 1_905, 22.0),
        ("jungewelt.de", 1_595, 81.0),
        ("stimme.de", 5_259, 274.0),
        ("ka-news.de", 4_047, 218.0),
        ("tichyseinblick.de", 4_302, 235.0),
        ("welt.de", 131_793, 8_120.0),
        ("uebermedien.de", 2_102, 131.0),
        ("cicero.de", 2_785, 174.0),
        ("butenunbinnen.de", 2_058, 131.0),
    ];
    let fit = reach::ReachFit {
        a: 1.373,
        b: 0.9,
        n_points: 0,
        residual_variance: 0.0,
    };
    let points: Vec<ReachPoint> = listed
        .iter()
        .map(|(h, obs, exp)| ReachPoint::new(h, (exp / 1.373f64).powf(1.0 / 0.9), *obs))
        .collect();
    let flags = reach::overrepresentation(&points, &fit, 5.0);
    let over: BTreeSet<&str> = flags
        .iter()
        .filter(|f| f.direction == reach::Direction::Over)
        .map(|f| f.tld.as_str())
        .collect();
    ensure(over.len() == 10, || format!("{} of 10 flagged over", over.len()))?;
    for (_, _, exp) in &listed {
        ensure(reach::flag_deviation(*exp, *exp, 5.0).is_none(), || format!("observed = expected = {exp} flagged"))?;
    }
    let min = flags.iter().map(|f| f.ratio).fold(f64::INFINITY, f64::min);
    Ok(format!("10/10 flagged over at factor 5 (smallest ratio {min:.2}); equality never flagged"))
}

fn criterion_10() -> Result<String, String> {
    let spec = CohortSpec {
        n_donors: 500,
        personalization_swaps: 2,
        seed: 10,
        ..Default::default()
    };
    let n_threads = 4;
    let mut digests = Vec::new();
    let mut n_records = 0;
    for threads in [1, n_threads] {
        let cohort = synth::generate(&spec).map_err(|e| e.to_string())?;
        n_records = cohort.records.len();
        let cfg = RunConfig {
            threads: Some(threads),
            cohort: spec.clone(),
            ..Default::default()
        };
        let tables = Tables {
            languages: Some(cohort.languages.clone()),
            categories: cohort.categories.clone(),
            gazetteer: Some(cohort.gazetteer.clone()),
            points: Some(synth::synthetic_reach_points(200, &spec.reach, spec.seed)),
            ..Default::default()
        };
        let dataset = Dataset::from_records(cohort.records);
        let artifacts = run::with_threads(cfg.threads, || run::run_full(&cfg, &tables, dataset, &Default::default()))
            .map_err(|e| e.to_string())?
            .map_err(|e| e.to_string())?;
        let manifest = run::Manifest::new("report", &cfg, vec![], vec![], &artifacts);
        digests.push((manifest, artifacts.len()));
    }
    ensure(n_records == 500 * 81 * 16, || format!("{n_records} records"))?;
    ensure(digests[0] == digests[1], || "artifacts differ between thread counts".into())?;
    Ok(format!(
        "{n_records} records, {} artifacts byte-identical at 1 and {n_threads} threads",
        digests[0].1
    ))
}

fn main() {
    let mut o = Outcomes(Vec::new());
    let s = Duration::from_secs;
    o.run(1, "identical-pair worked example", s(1), criterion_1);
    o.run(2, "brute-force overlap equivalence", s(10), criterion_2);
    o.run(3, "personalization oracle", s(30), criterion_3);
    o.run(4, "regionalization oracle", s(30), criterion_4);
    o.run(5, "cleaning fidelity", s(30), criterion_5);
    o.run(6, "cluster detection", s(30), criterion_6);
    o.run(7, "locale detection", s(1), criterion_7);
    o.run(8, "regression recovery", s(1), criterion_8);
    o.run(9, "overrepresentation", s(1), criterion_9);
    o.run(10, "determinism and scale", s(600), criterion_10);
    println!("SKIP criterion 11 real-data reproduction: needs the public donation dump, not bundled");
    let failed: Vec<_> = o.0.iter().filter(|r| !r.2).map(|r| r.0).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
