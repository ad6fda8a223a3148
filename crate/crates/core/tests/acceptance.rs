//! Acceptance suite: one PASS/FAIL line per criterion. Criteria listed in
//! `KNOWN_RED` are reported but do not fail the run.

use std::process::Command;
use std::time::Instant;

use qfreq::blowup::{average_free_part, average_part, hardt_simon_check, singularity_degree, BlowupConfig};
use qfreq::curve::{homogeneous_branches, homogeneous_map, make_multigraph, CurveSpec};
use qfreq::excess::{excess_decay_fit, lower_bound_violations, ExcessDefinition};
use qfreq::frequency::{annulus_energy, frequency_limit, frequency_profile, variation_residuals, Cutoff};
use qfreq::qvalue::{metric_g, metric_g_exhaustive};
use qfreq::scale_track::{
    bv_negative_variation, intervals_of_flattening, universal_frequency, ScaleConfig, StoppingRule, UniversalProfile, UniversalRecord,
};
use qfreq::synthetic::{random_qfunction, random_qpoint};
use qfreq::{PolarGrid, QFunction64, QPoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SPECS: [(usize, usize); 5] = [(2, 3), (2, 5), (3, 4), (3, 5), (4, 5)];
const ORIGIN: [f64; 2] = [0.0, 0.0];
const KNOWN_RED: &[&str] = &["10c"];

type Criterion = (&'static str, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn curve(q: usize, p: usize) -> QFunction64 {
    make_multigraph(&CurveSpec::plain(q, p).unwrap(), PolarGrid::default()).unwrap()
}

fn grid_radii(lo: f64, hi: f64) -> Vec<f64> {
    PolarGrid::default().radii().into_iter().filter(|&r| r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)).collect()
}

fn c1_degree() -> Outcome {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut lines = Vec::new();
    let mut converged = true;
    for (q, p) in SPECS {
        let start = Instant::now();
        let est = singularity_degree(&curve(q, p), &BlowupConfig::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let target = p as f64 / q as f64;
        worst.0 = worst.0.max((est.value - target).abs() / target);
        worst.1 = worst.1.max(est.spread / target);
        worst.2 = worst.2.max(secs);
        converged &= est.converged;
        lines.push(format!("({q},{p})={:.6}", est.value));
    }
    Outcome {
        pass: worst.0 < 0.02 && worst.1 < 0.02 && worst.2 < 60.0 && converged,
        detail: format!("{} rel_err={:.2e} spread={:.2e} max_secs={:.2}", lines.join(" "), worst.0, worst.1, worst.2),
    }
}

fn c2_homogeneity() -> Outcome {
    let radii = grid_radii(0.25, 1.0);
    let mut worst = 0.0f64;
    for alpha in [0.5, 1.0, 1.5, 2.0, 5.0 / 3.0] {
        let f: QFunction64 = homogeneous_branches(alpha, PolarGrid::default()).unwrap();
        let prof = frequency_profile(&f, ORIGIN, &radii, Cutoff::Linear).unwrap();
        for rec in &prof.records {
            worst = worst.max((rec.values.as_ref().unwrap().i - alpha).abs());
        }
    }
    Outcome { pass: worst < 1e-3, detail: format!("max |I-alpha| = {worst:.3e} over {} radii", radii.len()) }
}

fn c3_cutoff() -> Outcome {
    let radii = grid_radii(2f64.powi(-8), 1.0);
    let mut worst = 0.0f64;
    for (q, p) in SPECS {
        let f = curve(q, p);
        let a = frequency_limit(&frequency_profile(&f, ORIGIN, &radii, Cutoff::Linear).unwrap()).unwrap().estimate;
        let b = frequency_limit(&frequency_profile(&f, ORIGIN, &radii, Cutoff::Sharp).unwrap()).unwrap().estimate;
        worst = worst.max((a - b).abs() / a);
    }
    Outcome { pass: worst < 0.01, detail: format!("max relative gap = {worst:.3e}") }
}

fn c4_monotonicity() -> Outcome {
    let radii = grid_radii(2f64.powi(-12), 1.0);
    let mut worst = f64::INFINITY;
    for (q, p) in SPECS {
        let prof = frequency_profile(&curve(q, p), ORIGIN, &radii, Cutoff::Linear).unwrap();
        let is: Vec<f64> = prof.records.iter().map(|r| r.values.as_ref().unwrap().i).collect();
        // min over pairs r1 < r2 of I(r2) - I(r1): running max from the inside
        let mut running = f64::NEG_INFINITY;
        for &i in &is {
            if running.is_finite() {
                worst = worst.min(i - running);
            }
            running = running.max(i);
        }
    }
    Outcome { pass: worst >= -1e-3, detail: format!("min pairwise increment = {worst:.3e}") }
}

fn c5_matching() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for q in 1..=6 {
        for _ in 0..1000 {
            let a: QPoint<f64> = random_qpoint(&mut rng, q, 2);
            let b: QPoint<f64> = random_qpoint(&mut rng, q, 2);
            if metric_g(&a, &b).unwrap() != metric_g_exhaustive(&a, &b).unwrap() {
                mismatches += 1;
            }
        }
    }
    Outcome { pass: mismatches == 0, detail: format!("{mismatches} mismatches in 6000 pairs") }
}

fn c6_energy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = PolarGrid::new(1.0, 4, 6, 128).unwrap();
    let mut worst = 0.0f64;
    for t in 0..100 {
        let branched = t % 2 == 0;
        let n = if branched { 2 } else { 1 + t % 3 };
        let f: QFunction64 = random_qfunction(&mut rng, grid, 2 + t % 4, n, branched).unwrap();
        let whole = annulus_energy(&f, 1.0).unwrap();
        let free = annulus_energy(&average_free_part(&f), 1.0).unwrap();
        let avg = annulus_energy(&average_part(&f), 1.0).unwrap();
        worst = worst.max((whole - free - f.q() as f64 * avg).abs() / whole);
    }
    Outcome { pass: worst < 1e-10, detail: format!("max relative defect = {worst:.3e}") }
}

fn c7_variation() -> Outcome {
    let radii = grid_radii(2f64.powi(-8), 1.0);
    let mut worst = 0.0f64;
    for (q, p) in SPECS {
        let f = curve(q, p);
        for &r in &radii {
            let (o, i) = variation_residuals(&f, ORIGIN, r, Cutoff::Linear).unwrap();
            worst = worst.max(o.unwrap()).max(i.unwrap());
        }
    }
    // +-|z| e1: a Lipschitz two-valued graph that is not Dir-minimizing
    let cone: QFunction64 = homogeneous_map(1.0, |_| QPoint::from_sheets(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap(), PolarGrid::default()).unwrap();
    let (_, power) = variation_residuals(&cone, ORIGIN, 0.5, Cutoff::Linear).unwrap();
    let power = power.unwrap();
    Outcome { pass: worst < 1e-3 && power > 1e-2, detail: format!("max residual = {worst:.3e}; non-minimizer residual_inner = {power:.3e}") }
}

fn c8_hardt_simon() -> Outcome {
    let hs = |alpha: f64| {
        let f: QFunction64 = homogeneous_branches(alpha, PolarGrid::default()).unwrap();
        hardt_simon_check(&f, 2f64.powi(-12), Some(alpha)).unwrap()
    };
    let polar = [1.5, 5.0 / 3.0].map(|a| hs(a).polar_identity_residual.unwrap()).into_iter().fold(0.0f64, f64::max);
    let low = hs(0.8);
    let linear = hs(1.0).integral.abs();
    Outcome {
        pass: polar < 0.01 && low.diverges && linear < 1e-10,
        detail: format!(
            "polar residual = {polar:.3e}; alpha=0.8 diverges={} growth={:.3}; alpha=1 integral = {linear:.3e}",
            low.diverges,
            low.growth_exponent.unwrap_or(f64::NAN)
        ),
    }
}

fn c9_excess() -> Outcome {
    let radii = grid_radii(2f64.powi(-8), 1.0);
    let mut worst = 0.0f64;
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for (q, p) in [(2, 3), (3, 4)] {
        let target = 2.0 * (p as f64 / q as f64 - 1.0);
        let fit = excess_decay_fit(&curve(q, p), &radii, ExcessDefinition::Cylindrical).unwrap();
        worst = worst.max((fit.exponent - target).abs() / target);
        let gamma = target + 0.1;
        violations += lower_bound_violations(&fit.records, gamma, 0.25).len();
        for rec in fit.records.iter().filter(|r| r.r < 0.25) {
            min_ratio = min_ratio.min(rec.excess / rec.r.powf(gamma));
        }
    }
    Outcome {
        pass: worst < 0.1 && violations == 0 && min_ratio > 0.0,
        detail: format!("exponent rel_err = {worst:.3e}; lower-bound violations = {violations}; min E/r^gamma = {min_ratio:.3e}"),
    }
}

fn c10_bv() -> Outcome {
    let cfg = ScaleConfig::default();
    let mut worst = 0.0f64;
    for (q, p) in SPECS {
        let f = curve(q, p);
        let iv = intervals_of_flattening(&f, &cfg).unwrap();
        let prof = universal_frequency(&f, &iv, cfg.cutoff).unwrap();
        worst = worst.max(bv_negative_variation(&prof, cfg.gamma4).unwrap().total);
    }
    Outcome { pass: worst < 0.01, detail: format!("max negative variation = {worst:.3e}") }
}

fn c10_dips() -> Outcome {
    // a smooth increasing baseline with two injected dips
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 64;
        let rs: Vec<f64> = (0..n).map(|k| 2f64.powf(-8.0 + 8.0 * k as f64 / (n - 1) as f64)).collect();
        let mut is: Vec<f64> = rs.iter().map(|r| 1.5 + 0.1 * r).collect();
        let mut expected = 0.0;
        for _ in 0..2 {
            let k = rand::Rng::gen_range(&mut rng, 5..n - 5);
            let depth = rand::Rng::gen_range(&mut rng, 1e-3..0.3);
            is[k] = is[k - 1] - depth;
        }
        for w in is.windows(2) {
            expected += ((w[0] + 1.0).ln() - (w[1] + 1.0).ln()).max(0.0);
        }
        let prof = UniversalProfile {
            records: rs.iter().zip(&is).map(|(&r, &i)| UniversalRecord { r, j: 0, i, tilt: Vec::new(), jump: false }).collect(),
            jumps: Vec::new(),
            m0: vec![1e-3],
        };
        let got = bv_negative_variation(&prof, 0.25).unwrap().total;
        worst = worst.max((got - expected).abs());
    }
    Outcome { pass: worst < 1e-12, detail: format!("max recovery error = {worst:.3e}") }
}

fn c10_jumps() -> Outcome {
    let spec = CurveSpec::with_perturbation(2, 5, "z^2").unwrap();
    let f: QFunction64 = make_multigraph(&spec, PolarGrid::default()).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for cfg in [ScaleConfig::default(), ScaleConfig { stopping: StoppingRule::ExcessDecay { c_e: 1.01 }, ..ScaleConfig::default() }] {
        let iv = intervals_of_flattening(&f, &cfg).unwrap();
        let prof = universal_frequency(&f, &iv, cfg.cutoff).unwrap();
        let mut jumps: Vec<(f64, f64)> = prof.jumps.iter().map(|j| (j.m0, (j.i_left - j.i_right).abs())).collect();
        jumps.sort_by(|a, b| b.0.total_cmp(&a.0));
        let nonzero = jumps.iter().filter(|j| j.1 > 1e-12).count();
        let monotone = jumps.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
        // the claim needs at least two genuine jumps to be observable
        pass &= nonzero >= 2 && monotone;
        details.push(format!(
            "{}: {} intervals, {} jumps, {} nonzero",
            match cfg.stopping {
                StoppingRule::TiltDrift { .. } => "tilt rule",
                StoppingRule::ExcessDecay { .. } => "decay rule",
            },
            iv.intervals.len(),
            jumps.len(),
            nonzero
        ));
    }
    Outcome { pass, detail: details.join("; ") }
}

fn c11_determinism() -> Outcome {
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_qfreq")).args(["selfcheck", "--seed", "11", "--threads", threads]).output().unwrap();
        (out.status.code(), out.stdout)
    };
    let (c1, a) = run("1");
    let (c4, b) = run("4");
    Outcome {
        pass: c1 == Some(0) && c4 == Some(0) && a == b && !a.is_empty(),
        detail: format!("exit codes {c1:?}/{c4:?}, {} vs {} bytes, identical = {}", a.len(), b.len(), a == b),
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1", "singularity degree", c1_degree),
        ("2", "homogeneity and frequency", c2_homogeneity),
        ("3", "cutoff independence", c3_cutoff),
        ("4", "monotonicity", c4_monotonicity),
        ("5", "matching oracle", c5_matching),
        ("6", "energy decomposition", c6_energy),
        ("7", "variation identities", c7_variation),
        ("8", "Hardt-Simon", c8_hardt_simon),
        ("9", "excess decay", c9_excess),
        ("10a", "BV tracker: negative variation", c10_bv),
        ("10b", "BV tracker: injected dips", c10_dips),
        ("10c", "BV tracker: jump monotonicity on (2,5)+z^2", c10_jumps),
        ("11", "determinism", c11_determinism),
    ];
    let mut hard_failures = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        let note = if !outcome.pass && KNOWN_RED.contains(&id) { " [known red]" } else { "" };
        println!("{tag} criterion {id} ({name}): {} [{:.1}s]{note}", outcome.detail, start.elapsed().as_secs_f64());
        if !outcome.pass && !KNOWN_RED.contains(&id) {
            hard_failures.push(id);
        }
    }
    if !hard_failures.is_empty() {
        eprintln!("failed criteria: {}", hard_failures.join(", "));
        std::process::exit(1);
    }
}
