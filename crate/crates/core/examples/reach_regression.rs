//! Power-law fit of delivered counts against audience reach and the hosts
//! delivered far more or less often than their reach predicts.

use serp_audit::reach::{self, ReachPoint};
use serp_audit::synth::{self, ReachSpec};

fn main() -> serp_audit::Result<()> {
    let mut points = synth::synthetic_reach_points(150, &ReachSpec::default(), 42);
    // Two hosts far above the trend and one far below.
    points.push(ReachPoint::new("loud.example", 20.0, 900));
    points.push(ReachPoint::new("louder.example", 3.0, 400));
    points.push(ReachPoint::new("quiet.example", 20_000.0, 40));

    let fit = reach::fit_loglog(&points)?;
    println!("count = {:.4} * reach^{:.4}  (n = {}, residual variance {:.4})", fit.a, fit.b, fit.n_points, fit.residual_variance);
    let flagged = reach::overrepresentation(&points, &fit, 5.0);
    print!("{}", reach::flagged_table(&flagged).to_text());
    Ok(())
}
