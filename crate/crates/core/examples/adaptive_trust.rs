//! One expectation-maximization step of the trust factors on the banana
//! problem, single and multifidelity.
//!
//! cargo run --release --example adaptive_trust

use mfengmf::adapt::{em_adapt_step, em_objective, EmConfig, PriorInputs, TrustState};
use mfengmf::filters::{FilterConfig, FilterVariant};
use mfengmf::mixture::gm_sample;
use mfengmf::models::{banana_problem, CouplingMap};
use mfengmf::RngStream;

fn main() -> mfengmf::Result<()> {
    let p = banana_problem()?;
    let mut rng = RngStream::new(11, 0);
    let ex = gm_sample(&p.prior, 25, &mut rng)?;
    let eu = gm_sample(&p.prior, 50, &mut rng)?.map(|m| p.coupling.encode(&m.into_owned()))?;
    let em = EmConfig::banana();

    let single = PriorInputs::Single { ensemble: &ex };
    let cfg = FilterConfig::new(FilterVariant::Engmf);
    let r = em_adapt_step(&single, &p.observation, &p.y, TrustState::single(1.0), &cfg, &em, &mut rng)?;
    report("AEnGMF", &r.objective_trace, r.after);
    let j = em_objective(r.after, &r.samples, &single, &p.observation, &p.y, &cfg)?;
    println!("  J at the updated trust {j:.4}");

    let multi = PriorInputs::Multi {
        theory: &ex,
        reduced: &eu,
        coupling: &p.coupling,
    };
    let cfg = FilterConfig::new(FilterVariant::Mfengmf);
    let r = em_adapt_step(&multi, &p.observation, &p.y, TrustState::multi(1.0, 1.0), &cfg, &em, &mut rng)?;
    report("AMFEnGMF", &r.objective_trace, r.after);
    let distinct = r.sample_hashes.iter().collect::<std::collections::BTreeSet<_>>().len();
    println!("  {} objective evaluations, {distinct} distinct sample hash", r.sample_hashes.len());
    Ok(())
}

fn report(name: &str, trace: &[f64], after: TrustState) {
    println!("{name}: J {:.4} -> {:.4} over {} ascent steps", trace[0], trace[trace.len() - 1], trace.len());
    match after.s_u {
        Some(s_u) => println!("  s_X = {:.4}, s_U = {:.4}", after.s_x, s_u),
        None => println!("  s_X = {:.4}", after.s_x),
    }
}
