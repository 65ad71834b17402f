//! Generate a cohort with known personalization, regional branches and a
//! foreign-locale group, run the analyses and check them against the
//! generator's ground truth.

use serp_audit::run::{self, RunConfig};
use serp_audit::synth::{CohortSpec, LocaleSpec, RegionalSpec};

fn main() -> serp_audit::Result<()> {
    let cohort = CohortSpec {
        n_donors: 200,
        keys: Some(vec![0, 1, 2]),
        personalization_swaps: 1,
        regional: Some(RegionalSpec::default()),
        locale_mix: vec![
            LocaleSpec { fraction: 0.975, ..Default::default() },
            LocaleSpec {
                locale: "en".into(),
                fraction: 0.025,
                shared_urls: 3,
                own_urls: 2,
                pool_size: 50,
            },
        ],
        ..Default::default()
    };
    let mut cfg = RunConfig { cohort, ..Default::default() };
    cfg.clean.language_filter = false;
    let artifacts = run::simulate(&cfg)?;
    print!("{}", String::from_utf8_lossy(&artifacts["simulate/oracle.txt"]));
    Ok(())
}
