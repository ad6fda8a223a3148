//! Command-line front end: option merging, input construction, commands,
//! atomic output and exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::blowup::{hardt_simon_check, singularity_degree, write_degree_json, BlowupConfig, Normalization};
use crate::curve::{analytic_degree, homogeneous_branches, make_multigraph, CurveSpec};
use crate::error::Error;
use crate::excess::{excess_decay_fit, spherical_excess, write_excess_csv, ExcessDefinition, Plane};
use crate::frequency::{frequency_limit, frequency_profile, smoothed_i, variation_residuals, write_profile_csv, Cutoff};
use crate::grid::PolarGrid;
use crate::qfile::read_qfunction;
use crate::qfunction::QFunction;
use crate::qvalue::{metric_g, metric_g_exhaustive};
use crate::scalar::{fmt_sig17, json_num};
use crate::scale_track::{
    bv_negative_variation, intervals_of_flattening, universal_frequency, write_intervals_csv, write_jumps_csv,
    write_profile_csv as write_universal_csv, Jump, ScaleConfig, StoppingRule, UniversalProfile, UniversalRecord,
};
use crate::synthetic::{random_qfunction, random_qpoint};

#[derive(Debug, Parser)]
#[command(name = "qfreq", version, about = "Frequency, blow-up and excess analysis of Q-valued graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smoothed frequency profile as CSV.
    Frequency(Opts),
    /// Singularity degree from normalized blow-ups, as JSON.
    Degree(Opts),
    /// Optimal-plane excess table as CSV and the decay fit.
    ExcessDecay(Opts),
    /// Universal frequency profile and its negative variation.
    BvTrack(Opts),
    /// Hardt-Simon integral and divergence check, as JSON.
    HardtSimon(Opts),
    /// Intervals of flattening as CSV.
    Intervals(Opts),
    /// Runs the built-in oracle checks.
    Selfcheck(Opts),
}

/// Every option is also a key of the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path (written atomically); standard output when absent.
    #[arg(long)]
    pub out: Option<String>,
    /// Worker threads; defaults to the machine parallelism.
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Curve `q,p` for `w^q = z^p`.
    #[arg(long)]
    pub curve: Option<String>,
    /// Polynomial `h` added to every sheet, e.g. `z^2 - 0.5*z^4`.
    #[arg(long)]
    pub perturb: Option<String>,
    /// Exponent `p/q` of the harmonic map with the branches of `z^{p/q}`.
    #[arg(long)]
    pub homogeneous: Option<String>,
    /// Sampled Q-function file.
    #[arg(long)]
    pub file: Option<String>,
    /// `a..b` (grid radii in range, bounds like `2^-8`) or a comma list.
    #[arg(long)]
    pub radii: Option<String>,
    /// `phi` or `sharp`.
    #[arg(long)]
    pub cutoff: Option<String>,
    /// Base point `x,y`.
    #[arg(long)]
    pub center: Option<String>,
    #[arg(long)]
    pub n_theta: Option<String>,
    #[arg(long)]
    pub rings_per_octave: Option<String>,
    #[arg(long)]
    pub octaves: Option<String>,
    #[arg(long)]
    pub eps3: Option<String>,
    #[arg(long)]
    pub eps_bar: Option<String>,
    #[arg(long)]
    pub delta2: Option<String>,
    /// `tilt` or `decay`.
    #[arg(long)]
    pub stopping: Option<String>,
    #[arg(long)]
    pub c_e: Option<String>,
    #[arg(long)]
    pub tilt_jump: Option<String>,
    #[arg(long)]
    pub gamma4: Option<String>,
    /// Inner radius of the Hardt-Simon integral.
    #[arg(long)]
    pub rho: Option<String>,
    /// Known exponent for the Hardt-Simon closed form.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub scale_factor: Option<String>,
    #[arg(long)]
    pub max_steps: Option<String>,
    /// `l2` or `excess`.
    #[arg(long)]
    pub normalization: Option<String>,
    #[arg(long)]
    pub convergence_tol: Option<String>,
    /// `cylindrical` or `ball`.
    #[arg(long)]
    pub definition: Option<String>,
    /// Path for the jump table of `bv-track`.
    #[arg(long)]
    pub jumps: Option<String>,
}

/// Accepted configuration keys, in flag spelling.
pub const KEYS: &[&str] = &[
    "out",
    "threads",
    "seed",
    "curve",
    "perturb",
    "homogeneous",
    "file",
    "radii",
    "cutoff",
    "center",
    "n-theta",
    "rings-per-octave",
    "octaves",
    "eps3",
    "eps-bar",
    "delta2",
    "stopping",
    "c-e",
    "tilt-jump",
    "gamma4",
    "rho",
    "alpha",
    "scale-factor",
    "max-steps",
    "normalization",
    "convergence-tol",
    "definition",
    "jumps",
];

impl Opts {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("out", &self.out),
            ("threads", &self.threads),
            ("seed", &self.seed),
            ("curve", &self.curve),
            ("perturb", &self.perturb),
            ("homogeneous", &self.homogeneous),
            ("file", &self.file),
            ("radii", &self.radii),
            ("cutoff", &self.cutoff),
            ("center", &self.center),
            ("n-theta", &self.n_theta),
            ("rings-per-octave", &self.rings_per_octave),
            ("octaves", &self.octaves),
            ("eps3", &self.eps3),
            ("eps-bar", &self.eps_bar),
            ("delta2", &self.delta2),
            ("stopping", &self.stopping),
            ("c-e", &self.c_e),
            ("tilt-jump", &self.tilt_jump),
            ("gamma4", &self.gamma4),
            ("rho", &self.rho),
            ("alpha", &self.alpha),
            ("scale-factor", &self.scale_factor),
            ("max-steps", &self.max_steps),
            ("normalization", &self.normalization),
            ("convergence-tol", &self.convergence_tol),
            ("definition", &self.definition),
            ("jumps", &self.jumps),
        ]
    }
}

/// A failed run: exit code and a one-line reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub reason: String,
}

impl Failure {
    pub fn config(reason: impl Into<String>) -> Self {
        Failure { code: 2, kind: "config", reason: reason.into() }
    }

    pub fn internal(reason: impl Into<String>) -> Self {
        Failure { code: 4, kind: "internal", reason: reason.into() }
    }

    /// `error kind=<kind> code=<code> reason=<json string>`.
    pub fn line(&self) -> String {
        let reason = serde_json::to_string(&self.reason.replace('\n', " ")).unwrap_or_else(|_| "\"?\"".into());
        format!("error kind={} code={} reason={}", self.kind, self.code, reason)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let reason = e.to_string();
        if e.is_numeric() {
            Failure { code: 3, kind: "numeric", reason }
        } else if matches!(e, Error::Io(_)) {
            Failure::internal(reason)
        } else {
            Failure::config(reason)
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Failure::config(format!("config line {}: expected key = value", no + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(Failure::config(format!("config line {}: unknown key {key:?}", no + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Failure::config(format!("config line {}: duplicate key {key:?}", no + 1)));
        }
    }
    Ok(map)
}

/// Typed view of the merged options.
#[derive(Debug, Clone)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_opts(opts: &Opts) -> CliResult<Self> {
        let mut map = match &opts.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("config {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in opts.flags() {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        Ok(RunConfig { map })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.get(key).map(|v| v.parse::<T>().map_err(|_| Failure::config(format!("{key}: cannot parse {v:?}")))).transpose()
    }

    fn positive(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.parse::<f64>(key)?.unwrap_or(default);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Failure::config(format!("{key} = {v} must be positive")));
        }
        Ok(v)
    }

    pub fn threads(&self) -> CliResult<Option<usize>> {
        match self.parse::<usize>("threads")? {
            Some(0) => Err(Failure::config("threads must be at least 1")),
            t => Ok(t),
        }
    }

    pub fn seed(&self) -> CliResult<u64> {
        Ok(self.parse::<u64>("seed")?.unwrap_or(0))
    }

    pub fn grid(&self) -> CliResult<PolarGrid> {
        let d = PolarGrid::default();
        let n_theta = self.parse::<usize>("n-theta")?.unwrap_or(d.n_theta);
        let rpo = self.parse::<usize>("rings-per-octave")?.unwrap_or(d.rings_per_octave);
        let octaves = self.parse::<usize>("octaves")?.unwrap_or(d.octaves);
        Ok(PolarGrid::new(1.0, rpo, octaves, n_theta)?)
    }

    pub fn cutoff(&self) -> CliResult<Cutoff> {
        match self.get("cutoff").unwrap_or("phi") {
            "phi" => Ok(Cutoff::Linear),
            "sharp" => Ok(Cutoff::Sharp),
            v => Err(Failure::config(format!("cutoff {v:?}: expected phi or sharp"))),
        }
    }

    pub fn definition(&self) -> CliResult<ExcessDefinition> {
        match self.get("definition").unwrap_or("cylindrical") {
            "cylindrical" => Ok(ExcessDefinition::Cylindrical),
            "ball" => Ok(ExcessDefinition::SphericalBall),
            v => Err(Failure::config(format!("definition {v:?}: expected cylindrical or ball"))),
        }
    }

    pub fn center(&self) -> CliResult<[f64; 2]> {
        match self.get("center") {
            None => Ok([0.0, 0.0]),
            Some(v) => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Failure::config(format!("center {v:?}")))?;
                match parts.as_slice() {
                    [x, y] if x.is_finite() && y.is_finite() => Ok([*x, *y]),
                    _ => Err(Failure::config(format!("center {v:?}: expected x,y"))),
                }
            }
        }
    }

    pub fn blowup(&self) -> CliResult<BlowupConfig> {
        let d = BlowupConfig::default();
        let normalization = match self.get("normalization").unwrap_or("l2") {
            "l2" => Normalization::L2Norm,
            "excess" => Normalization::ExcessSqrt,
            v => return Err(Failure::config(format!("normalization {v:?}: expected l2 or excess"))),
        };
        let cfg = BlowupConfig {
            scale_factor: self.positive("scale-factor", d.scale_factor)?,
            max_steps: self.parse::<usize>("max-steps")?.unwrap_or(d.max_steps),
            normalization,
            convergence_tol: self.positive("convergence-tol", d.convergence_tol)?,
            cutoff: self.cutoff()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scale(&self) -> CliResult<ScaleConfig> {
        let d = ScaleConfig::default();
        let stopping = match self.get("stopping").unwrap_or("tilt") {
            "tilt" => StoppingRule::TiltDrift { tilt_jump: self.positive("tilt-jump", 0.1)? },
            "decay" => StoppingRule::ExcessDecay { c_e: self.positive("c-e", 16.0)? },
            v => return Err(Failure::config(format!("stopping {v:?}: expected tilt or decay"))),
        };
        let cfg = ScaleConfig {
            eps3_sq: self.positive("eps3", d.eps3_sq)?,
            eps_bar: self.positive("eps-bar", d.eps_bar)?,
            delta2: self.positive("delta2", d.delta2)?,
            stopping,
            cutoff: self.cutoff()?,
            gamma4: self.positive("gamma4", d.gamma4)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Radii from `a..b` (grid radii in the closed range) or a comma list.
    pub fn radii(&self, grid: &PolarGrid, default: &str) -> CliResult<Vec<f64>> {
        let spec = self.get("radii").unwrap_or(default);
        let radii: Vec<f64> = if let Some((a, b)) = spec.split_once("..") {
            let (lo, hi) = (parse_radius(a)?, parse_radius(b)?);
            if !(lo < hi) {
                return Err(Failure::config(format!("radii {spec:?}: empty range")));
            }
            grid.radii().into_iter().filter(|&r| r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)).collect()
        } else {
            let mut v = spec.split(',').map(parse_radius).collect::<CliResult<Vec<f64>>>()?;
            v.sort_by(|a, b| a.total_cmp(b));
            v
        };
        if radii.is_empty() {
            return Err(Failure::config(format!("radii {spec:?}: no grid radius in range")));
        }
        Ok(radii)
    }
}

/// `0.25`, `2^-3` or `2^(-3)`.
pub fn parse_radius(s: &str) -> CliResult<f64> {
    let s = s.trim();
    let v = if let Some(e) = s.strip_prefix("2^") {
        let e = e.trim_start_matches('(').trim_end_matches(')');
        e.parse::<f64>().map(|e| 2f64.powf(e))
    } else {
        s.parse::<f64>()
    };
    match v {
        Ok(r) if r > 0.0 && r.is_finite() => Ok(r),
        _ => Err(Failure::config(format!("bad radius {s:?}"))),
    }
}

/// The input object and, for curves, its spec.
pub struct Source {
    pub f: QFunction<f64>,
    pub spec: Option<CurveSpec>,
}

pub fn build_source(cfg: &RunConfig) -> CliResult<Source> {
    let given: Vec<&str> = ["curve", "homogeneous", "file"].into_iter().filter(|k| cfg.get(k).is_some()).collect();
    if given.len() != 1 {
        return Err(Failure::config(format!("exactly one of --curve, --homogeneous, --file is required (got {})", given.len())));
    }
    if cfg.get("perturb").is_some() && cfg.get("curve").is_none() {
        return Err(Failure::config("--perturb requires --curve"));
    }
    let grid = cfg.grid()?;
    match given[0] {
        "curve" => {
            let text = cfg.get("curve").unwrap();
            let (q, p) = text
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| Failure::config(format!("curve {text:?}: expected q,p")))?;
            let spec = match cfg.get("perturb") {
                Some(expr) => CurveSpec::with_perturbation(q, p, expr)?,
                None => CurveSpec::plain(q, p)?,
            };
            Ok(Source { f: make_multigraph(&spec, grid)?, spec: Some(spec) })
        }
        "homogeneous" => {
            let alpha = cfg.positive("homogeneous", 1.0)?;
            Ok(Source { f: homogeneous_branches(alpha, grid)?, spec: None })
        }
        _ => {
            let path = cfg.get("file").unwrap();
            let file = fs::File::open(path).map_err(|e| Failure::config(format!("file {path}: {e}")))?;
            Ok(Source { f: read_qfunction(BufReader::new(file))?, spec: None })
        }
    }
}

/// What a command produced: the main document and an optional summary.
pub struct Output {
    pub main: Vec<u8>,
    pub summary: Option<String>,
    pub extra: Vec<(String, Vec<u8>)>,
    /// Nonzero when the command ran but a check failed.
    pub status: i32,
}

impl Output {
    fn main(main: Vec<u8>) -> Self {
        Output { main, summary: None, extra: Vec::new(), status: 0 }
    }
}

fn summary_json<S: Serialize>(s: &S) -> String {
    serde_json::to_string(s).unwrap_or_default()
}

pub fn cmd_frequency(cfg: &RunConfig) -> CliResult<Output> {
    let src = build_source(cfg)?;
    let radii = cfg.radii(src.f.grid(), "2^-8..1")?;
    let profile = frequency_profile(&src.f, cfg.center()?, &radii, cfg.cutoff()?)?;
    let mut buf = Vec::new();
    write_profile_csv(&profile, &mut buf)?;
    let mut out = Output::main(buf);
    if let Ok(lim) = frequency_limit(&profile) {
        out.summary = Some(format!("{{\"limit\":{},\"spread\":{}}}", fmt_sig17(lim.estimate), fmt_sig17(lim.spread)));
    }
    Ok(out)
}

pub fn cmd_degree(cfg: &RunConfig) -> CliResult<Output> {
    let src = build_source(cfg)?;
    let est = singularity_degree(&src.f, &cfg.blowup()?)?;
    let reference = src.spec.as_ref().map(analytic_degree).filter(|d| d.reference).map(|d| *d.value.numer() as f64 / *d.value.denom() as f64);
    let mut buf = Vec::new();
    write_degree_json(&est, reference, &mut buf)?;
    Ok(Output::main(buf))
}

#[derive(Serialize)]
struct FitSummary {
    exponent: Box<RawValue>,
    constant: Box<RawValue>,
    r2: Box<RawValue>,
}

pub fn cmd_excess_decay(cfg: &RunConfig) -> CliResult<Output> {
    let src = build_source(cfg)?;
    let radii = cfg.radii(src.f.grid(), "2^-8..1")?;
    let fit = excess_decay_fit(&src.f, &radii, cfg.definition()?)?;
    let mut buf = Vec::new();
    write_excess_csv(&fit.records, &mut buf)?;
    let mut out = Output::main(buf);
    out.summary = Some(summary_json(&FitSummary { exponent: json_num(fit.exponent), constant: json_num(fit.constant), r2: json_num(fit.r2) }));
    Ok(out)
}

#[derive(Serialize)]
struct BvJson {
    total: Box<RawValue>,
    ac_part: Box<RawValue>,
    jump_part: Box<RawValue>,
    budget_constant: Box<RawValue>,
    intervals: usize,
    jumps: usize,
}

pub fn cmd_bv_track(cfg: &RunConfig) -> CliResult<Output> {
    let src = build_source(cfg)?;
    let scale = cfg.scale()?;
    let iv = intervals_of_flattening(&src.f, &scale)?;
    if iv.empty {
        return Err(Error::Data("no radius below the excess threshold".into()).into());
    }
    let profile = universal_frequency(&src.f, &iv, scale.cutoff)?;
    let bv = bv_negative_variation(&profile, scale.gamma4)?;
    let mut buf = Vec::new();
    write_universal_csv(&profile, &mut buf)?;
    let mut out = Output::main(buf);
    if let Some(path) = cfg.get("jumps") {
        let mut jumps = Vec::new();
        write_jumps_csv(&profile, &mut jumps)?;
        out.extra.push((path.to_string(), jumps));
    }
    out.summary = Some(summary_json(&BvJson {
        total: json_num(bv.total),
        ac_part: json_num(bv.ac_part),
        jump_part: json_num(bv.jump_part),
        budget_constant: json_num(bv.budget_constant),
        intervals: iv.intervals.len(),
        jumps: profile.jumps.len(),
    }));
    Ok(out)
}

pub fn cmd_intervals(cfg: &RunConfig) -> CliResult<Output> {
    let src = build_source(cfg)?;
    let iv = intervals_of_flattening(&src.f, &cfg.scale()?)?;
    let mut buf = Vec::new();
    write_intervals_csv(&iv, &mut buf)?;
    let mut out = Output::main(buf);
    out.summary = Some(format!("{{\"intervals\":{},\"min_ratio\":{},\"empty\":{}}}", iv.intervals.len(), fmt_sig17(iv.min_ratio()), iv.empty));
    Ok(out)
}

#[derive(Serialize)]
struct HsJson {
    integral: Box<RawValue>,
    polar_identity_residual: Option<Box<RawValue>>,
    growth_exponent: Option<Box<RawValue>>,
    diverges: bool,
}

pub fn cmd_hardt_simon(cfg: &RunConfig) -> CliResult<Output> {
    let src = build_source(cfg)?;
    let rho = cfg.get("rho").map(parse_radius).transpose()?.unwrap_or(2f64.powi(-12));
    let alpha = cfg.parse::<f64>("alpha")?.or_else(|| src.spec.as_ref().filter(|s| s.h_order().is_none()).map(|s| s.p() as f64 / s.q() as f64));
    let hs = hardt_simon_check(&src.f, rho, alpha)?;
    let doc = HsJson {
        integral: json_num(hs.integral),
        polar_identity_residual: hs.polar_identity_residual.map(json_num),
        growth_exponent: hs.growth_exponent.map(json_num),
        diverges: hs.diverges,
    };
    let mut buf = serde_json::to_vec_pretty(&doc).map_err(|e| Failure::internal(e.to_string()))?;
    buf.push(b'\n');
    Ok(Output::main(buf))
}

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
}

/// Fast oracle suites on small grids; one CSV row per check.
pub fn cmd_selfcheck(cfg: &RunConfig) -> CliResult<Output> {
    let seed = cfg.seed()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut mismatch = 0.0f64;
    for q in 1..=6 {
        for _ in 0..50 {
            let a = random_qpoint::<f64, _>(&mut rng, q, 2);
            let b = random_qpoint::<f64, _>(&mut rng, q, 2);
            mismatch = mismatch.max((metric_g(&a, &b)? - metric_g_exhaustive(&a, &b)?).abs());
        }
    }
    checks.push(Check { name: "matching_vs_exhaustive", value: mismatch, tol: 0.0 });

    let small = PolarGrid::new(1.0, 4, 4, 64)?;
    let mut worst = 0.0f64;
    for t in 0..6 {
        let f: QFunction<f64> = random_qfunction(&mut rng, small, 2 + t % 3, 2, t % 2 == 1)?;
        let whole = crate::frequency::annulus_energy(&f, 1.0)?;
        let free = crate::frequency::annulus_energy(&crate::blowup::average_free_part(&f), 1.0)?;
        let avg = crate::frequency::annulus_energy(&crate::blowup::average_part(&f), 1.0)?;
        worst = worst.max((whole - free - f.q() as f64 * avg).abs() / whole);
    }
    checks.push(Check { name: "energy_decomposition", value: worst, tol: 1e-10 });

    let grid = PolarGrid::new(1.0, 8, 6, 256)?;
    let curve: QFunction<f64> = make_multigraph(&CurveSpec::plain(2, 3)?, grid)?;
    checks.push(Check { name: "frequency_2_3", value: (smoothed_i(&curve, [0.0, 0.0], 0.5, Cutoff::Linear)? - 1.5).abs(), tol: 1e-3 });
    let (ro, ri) = variation_residuals(&curve, [0.0, 0.0], 0.5, Cutoff::Linear)?;
    checks.push(Check { name: "outer_residual_2_3", value: ro.unwrap_or(f64::NAN), tol: 1e-3 });
    checks.push(Check { name: "inner_residual_2_3", value: ri.unwrap_or(f64::NAN), tol: 1e-3 });
    let hom: QFunction<f64> = homogeneous_branches(5.0 / 3.0, grid)?;
    checks.push(Check {
        name: "frequency_homogeneous_5_3",
        value: (smoothed_i(&hom, [0.0, 0.0], 0.5, Cutoff::Linear)? - 5.0 / 3.0).abs(),
        tol: 1e-3,
    });
    let e = spherical_excess(&curve, 0.5, &Plane::horizontal(2), ExcessDefinition::Cylindrical)?.excess;
    checks.push(Check { name: "excess_2_3", value: (e - 0.75).abs() / 0.75, tol: 1e-3 });
    let lin: QFunction<f64> = homogeneous_branches(1.0, grid)?;
    checks.push(Check { name: "hardt_simon_linear", value: hardt_simon_check(&lin, 2f64.powi(-3), None)?.integral.abs(), tol: 1e-10 });

    let rec = |r: f64, i: f64| UniversalRecord { r, j: 0, i, tilt: Vec::new(), jump: false };
    let dip = UniversalProfile { records: vec![rec(0.1, 1.5), rec(0.2, 1.3), rec(0.3, 1.5)], jumps: Vec::<Jump>::new(), m0: vec![1e-3] };
    let bv = bv_negative_variation(&dip, 0.25)?.total;
    checks.push(Check { name: "bv_dip", value: (bv - (2.5f64.ln() - 2.3f64.ln())).abs(), tol: 1e-12 });

    let mut buf = Vec::new();
    writeln!(buf, "check,status,value,tolerance").map_err(|e| Failure::internal(e.to_string()))?;
    let mut failed = 0;
    for c in &checks {
        let ok = c.value <= c.tol;
        failed += usize::from(!ok);
        writeln!(buf, "{},{},{},{}", c.name, if ok { "pass" } else { "fail" }, fmt_sig17(c.value), fmt_sig17(c.tol))
            .map_err(|e| Failure::internal(e.to_string()))?;
    }
    let mut out = Output::main(buf);
    out.summary = Some(format!("{{\"seed\":{seed},\"checks\":{},\"failed\":{failed}}}", checks.len()));
    out.status = if failed > 0 { 3 } else { 0 };
    Ok(out)
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn dispatch(command: &Command, cfg: &RunConfig) -> CliResult<Output> {
    match command {
        Command::Frequency(_) => cmd_frequency(cfg),
        Command::Degree(_) => cmd_degree(cfg),
        Command::ExcessDecay(_) => cmd_excess_decay(cfg),
        Command::BvTrack(_) => cmd_bv_track(cfg),
        Command::HardtSimon(_) => cmd_hardt_simon(cfg),
        Command::Intervals(_) => cmd_intervals(cfg),
        Command::Selfcheck(_) => cmd_selfcheck(cfg),
    }
}

fn opts_of(command: &Command) -> &Opts {
    match command {
        Command::Frequency(o)
        | Command::Degree(o)
        | Command::ExcessDecay(o)
        | Command::BvTrack(o)
        | Command::HardtSimon(o)
        | Command::Intervals(o)
        | Command::Selfcheck(o) => o,
    }
}

/// Runs a parsed command line and returns the exit code. With `--out` the
/// main document goes to that file and the summary to standard output;
/// otherwise the document goes to standard output and the summary to
/// standard error.
pub fn run(cli: &Cli) -> i32 {
    let result = (|| -> CliResult<i32> {
        let cfg = RunConfig::from_opts(opts_of(&cli.command))?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.threads()? {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Failure::internal(e.to_string()))?;
        let output = pool.install(|| dispatch(&cli.command, &cfg))?;
        for (path, bytes) in &output.extra {
            write_atomic(Path::new(path), bytes).map_err(|e| Failure::internal(format!("{path}: {e}")))?;
        }
        match cfg.get("out") {
            Some(path) => {
                write_atomic(Path::new(path), &output.main).map_err(|e| Failure::internal(format!("{path}: {e}")))?;
                if let Some(s) = &output.summary {
                    println!("{s}");
                }
            }
            None => {
                std::io::stdout().write_all(&output.main).map_err(|e| Failure::internal(e.to_string()))?;
                if let Some(s) = &output.summary {
                    eprintln!("summary {s}");
                }
            }
        }
        Ok(output.status)
    })();
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.line());
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let m = parse_config("# run\ncurve = 2,3\nn_theta = 256  # finer\n\n").unwrap();
        assert_eq!(m.get("curve").map(String::as_str), Some("2,3"));
        assert_eq!(m.get("n-theta").map(String::as_str), Some("256"));
        assert_eq!(parse_config("bogus = 1").unwrap_err().code, 2);
        assert_eq!(parse_config("curve 2,3").unwrap_err().code, 2);
        assert_eq!(parse_config("seed=1\nseed=2").unwrap_err().code, 2);
    }

    #[test]
    fn radius_parsing() {
        assert_eq!(parse_radius("2^-3").unwrap(), 0.125);
        assert_eq!(parse_radius("2^(-1)").unwrap(), 0.5);
        assert_eq!(parse_radius("0.25").unwrap(), 0.25);
        assert!(parse_radius("-1").is_err() && parse_radius("x").is_err());
        let cfg = RunConfig { map: [("radii".to_string(), "2^-2..1".to_string())].into() };
        let r = cfg.radii(&PolarGrid::default(), "").unwrap();
        assert_eq!(r.len(), 17);
        assert_eq!((r[0], r[16]), (0.25, 1.0));
    }

    #[test]
    fn error_mapping() {
        assert_eq!(Failure::from(Error::DegenerateHeight("x".into())).code, 3);
        assert_eq!(Failure::from(Error::Spec("x".into())).code, 2);
        assert_eq!(Failure::from(Error::Io("x".into())).code, 4);
        let line = Failure::config("bad \"thing\"\nhere").line();
        assert_eq!(line, "error kind=config code=2 reason=\"bad \\\"thing\\\" here\"");
    }
}
