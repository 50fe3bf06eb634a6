//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, at the
//! stated tolerance. Exits non-zero when any criterion fails.

use std::time::Instant;

use ghast_core::confirm::{partial_risk, reg_inc_beta, RiskQuery};
use ghast_sim::events::format_log;
use ghast_sim::{run_scenario, ScenarioConfig};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn cfg(text: &str) -> ScenarioConfig {
    ScenarioConfig::parse(text).unwrap_or_else(|e| panic!("acceptance config: {e}"))
}

/// Production-scale parameters, null adversary, confirmation on.
fn fast_confirmation() -> Outcome {
    let c = cfg("[sim]\nnodes = 32\nbeta = 0\ndelay = 1\nlambda = 60\nhorizon = 20000\nseed = 1\n\
         [protocol]\neta_w = 600\neta_a = 1800\neta_t = 360\neta_b = 160\n\
         [confirm]\nenabled = true\ntarget_risk = 2e-5\nbeta = 0.1\n");
    let start = Instant::now();
    let out = run_scenario(&c).expect("criterion 1 run");
    let secs = start.elapsed().as_secs_f64();
    let mut lat: Vec<u64> = out
        .metrics
        .blocks
        .iter()
        .filter(|b| b.creator == "honest")
        .filter_map(|b| b.exposure_round.map(|e| b.confirm_round.map_or(u64::MAX, |r| r.saturating_sub(e))))
        .collect();
    lat.sort_unstable();
    let median = lat[(lat.len() - 1) / 2];
    let bound = 5 * c.sim.d.max(1);
    Outcome {
        pass: median <= bound && secs <= 600.0,
        detail: format!(
            "median confirmation latency {median} rounds (bound {bound}) over {} honest blocks, {} confirmed, {} unconfirmable pivot blocks, {secs:.0} s (budget 600 s)",
            lat.len(),
            out.metrics.agg.confirmed_blocks,
            out.metrics.agg.unconfirmable
        ),
    }
}

fn balance_text(mode: &str) -> String {
    format!(
        "[sim]\nnodes = 20\nbeta = 0.2\ndelay = 4\neta_d = 5\nhorizon = 400\nmode = {mode}\n\
         [protocol]\neta_w = 8\neta_a = 24\neta_t = 4\neta_b = 4\n\
         [adversary]\nkind = balance\n"
    )
}

/// Balance attack, same seeds in both modes, 100·d rounds.
fn balance_contrast() -> Outcome {
    let runs = 100;
    let (mut stalled, mut resolved) = (0, 0);
    for seed in 0..runs {
        let mut plain = cfg(&balance_text("plain_ghost"));
        plain.sim.seed = seed;
        if run_scenario(&plain).expect("plain run").metrics.agg.contest_round.is_none() {
            stalled += 1;
        }
        let mut ghast = cfg(&balance_text("ghast"));
        ghast.sim.seed = seed;
        let a = run_scenario(&ghast).expect("ghast run").metrics.agg;
        if a.contest_round.is_some() && a.con_rounds > 0 {
            resolved += 1;
        }
    }
    Outcome {
        pass: stalled * 2 >= runs && resolved * 10 >= runs * 9,
        detail: format!(
            "plain GHOST stalled in {stalled}/{runs} runs (need >= 50%), GHAST resolved with adapt=con in {resolved}/{runs} (need >= 90%)"
        ),
    }
}

/// Oracle on 21 runs of at least 10^5 events over three adversaries.
fn oracle_suite() -> Outcome {
    let kinds = ["null", "withhold\nrelease_lead = 3", "balance"];
    let (mut runs, mut short, mut violations, mut events, mut potential) = (0, 0, 0u64, 0u64, 0u64);
    let mut names = std::collections::BTreeSet::new();
    for seed in 0..7u64 {
        for kind in kinds {
            let c = cfg(&format!(
                "[sim]\nnodes = 12\nbeta = 0.25\ndelay = 2\neta_d = 1.5\nhorizon = 8000\nseed = {seed}\n\
                 [protocol]\neta_w = 240\neta_a = 700\neta_t = 8\neta_b = 6\n\
                 [adversary]\nkind = {kind}\n[oracle]\nenabled = true\n"
            ));
            let r = run_scenario(&c).expect("oracle run").report;
            runs += 1;
            if r.events_checked < 100_000 {
                short += 1;
            }
            violations += r.violation_count;
            events += r.events_checked;
            potential += r.potential_checks;
            names.extend(r.violations.iter().map(|v| v.invariant_name.clone()));
        }
    }
    Outcome {
        pass: violations == 0 && short == 0 && runs >= 20,
        detail: format!(
            "{runs} runs, {events} events, {potential} potential-step checks, {violations} violations {names:?}, {short} runs under 10^5 events"
        ),
    }
}

/// Exact `Pr[Bin(n, x) ≥ a]` for `a ∈ 0..=n`, with `x` as an exact dyadic.
fn exact_binomial_tails(n: u64, x: f64) -> Vec<f64> {
    let xr = BigRational::from_float(x).expect("finite");
    let (p, q) = (xr.numer().clone(), xr.denom().clone());
    let r = &q - &p;
    let mut terms = Vec::with_capacity(n as usize + 1);
    let mut binom = BigInt::one();
    for j in 0..=n {
        terms.push(&binom * num_traits::pow(p.clone(), j as usize) * num_traits::pow(r.clone(), (n - j) as usize));
        binom = binom * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    let den = num_traits::pow(q, n as usize);
    let mut out = vec![0.0; n as usize + 1];
    let mut acc = BigInt::zero();
    for a in (0..=n as usize).rev() {
        acc += &terms[a];
        out[a] = BigRational::new(acc.clone(), den.clone()).to_f64().expect("in range");
    }
    out
}

/// Walk from `gap`: `θ̃` unit steps, then steps of `η_w` with probability
/// `1/η_w` (zero steps skipped); down with probability β. Ruin is `≤ 0`.
/// The ceiling sits where the chance of coming back is below 1e-7.
fn walk_ruin(gap: i64, theta_tilde: u64, beta: f64, eta_w: u64, samples: u64, rng: &mut ChaCha8Rng) -> f64 {
    let units = (1e-7f64.ln() / (beta / (1.0 - beta)).ln()).ceil() as i64 + 1;
    let ceiling = gap + theta_tilde as i64 + units * eta_w as i64;
    let mut hits = 0u64;
    for _ in 0..samples {
        let mut x = gap;
        for _ in 0..theta_tilde {
            x += if rng.gen_bool(beta) { -1 } else { 1 };
            if x <= 0 {
                break;
            }
        }
        while x > 0 && x < ceiling {
            x += if rng.gen_bool(beta) { -(eta_w as i64) } else { eta_w as i64 };
        }
        hits += u64::from(x <= 0);
    }
    hits as f64 / samples as f64
}

fn risk_numerics() -> Outcome {
    let mut worst = 0.0f64;
    for &x in &[0.1, 0.25, 0.5, 0.7, 0.93] {
        for n in 1..=99u64 {
            let tails = exact_binomial_tails(n, x);
            for a in 1..=n.min(50) {
                let b = n + 1 - a;
                if b > 50 {
                    continue;
                }
                let want = tails[a as usize];
                let got = reg_inc_beta(x, a as f64, b as f64).expect("domain");
                worst = worst.max((got - want).abs() / want.max(f64::MIN_POSITIVE));
            }
        }
    }
    let q = RiskQuery { m: 10, n: 12, theta: 200, t: 50, beta: 0.2, eta_w: 6 };
    let exact_one = partial_risk(12, 50, &q).expect("partial risk") == 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (configs, samples) = (100, 1_000_000u64);
    let mut under = 0;
    for _ in 0..configs {
        let gap = rng.gen_range(1..7i64);
        let tt = rng.gen_range(0..12u64);
        let beta = rng.gen_range(0.05..0.35);
        let eta_w = rng.gen_range(1..7u64);
        let q = RiskQuery { m: 0, n: gap as u64, theta: tt, t: 0, beta, eta_w };
        let bound = partial_risk(0, 0, &q).expect("partial risk");
        let emp = walk_ruin(gap, tt, beta, eta_w, samples, &mut rng);
        let sd = (emp * (1.0 - emp) / samples as f64).sqrt().max(1.0 / samples as f64);
        if bound < emp - 3.0 * sd {
            under += 1;
        }
    }
    Outcome {
        pass: worst <= 1e-10 && exact_one && under == 0,
        detail: format!(
            "reg_inc_beta worst relative error {worst:.2e} (tolerance 1e-10), p(n,T) = 1 exactly: {exact_one}, {under}/{configs} configs underestimate a {samples}-sample Monte Carlo beyond 3 sigma"
        ),
    }
}

fn determinism() -> Outcome {
    let texts = [
        "[sim]\nnodes = 8\nbeta = 0\ndelay = 1\nlambda = 4\nhorizon = 300\nseed = 3\n[confirm]\nenabled = true\n".to_string(),
        "[sim]\nnodes = 12\nbeta = 0.25\ndelay = 2\neta_d = 1.5\nhorizon = 500\nseed = 9\n\
         [protocol]\neta_w = 240\neta_a = 700\neta_t = 8\neta_b = 6\n\
         [adversary]\nkind = withhold\nrelease_lead = 2\n[oracle]\nenabled = true\n"
            .to_string(),
        balance_text("ghast"),
    ];
    let mut same = 0;
    for t in &texts {
        let c = cfg(t);
        let a = run_scenario(&c).expect("first run");
        let b = run_scenario(&c).expect("second run");
        let bytes = |o: &ghast_sim::RunOutput| {
            (format_log(&o.events), o.metrics.to_csv().unwrap(), o.metrics.to_json().unwrap(), o.report.to_json())
        };
        if bytes(&a) == bytes(&b) {
            same += 1;
        }
    }
    Outcome {
        pass: same == texts.len(),
        detail: format!("{same}/{} configs give byte-identical event logs, block tables, metrics and reports", texts.len()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 5] = [
        ("1 fast confirmation without attack", fast_confirmation),
        ("2 balance attack contrast", balance_contrast),
        ("3 oracle inequality suite", oracle_suite),
        ("4 risk toolkit numerics", risk_numerics),
        ("5 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        failed += usize::from(!o.pass);
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "criterion 6 scope statement: PASS (the asymptotic latency bound and the supporting probability bounds are proof \
         content and are not reproduced at desk scale; criteria 2 to 4 cover them with property and oracle substitutes)"
    );
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
