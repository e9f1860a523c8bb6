//! Command-line front end.
//!
//! Every subcommand reads `--model` (a file path or a bundled name) and
//! writes headed CSV files into `--out-dir`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, load_model, read_orbit_cache, write_csv, write_orbit_cache};
use crate::lfunc::{find_pole, strip_scan, PoleOptions};
use crate::model::{cyclic_birkhoff, validate_model, ShiftModel, Word};
use crate::numbers::{diophantine_diagnostic, lattice_test, DiophantineConfig, LatticeVerdict};
use crate::orbits::{enumerate_sharded, prime_count_check, shard_plan, CachedOrbits, EnumConfig, OrbitRecord};
use crate::stats::{
    default_delta, length_spectrum_lattice, require_clt_hypotheses, KsOptions, OrbitStatistics, RangeSpec, Scaling,
    Selection, StatsPlan, MIXING_TOL, MIXING_WORDS,
};
use crate::suite::{collect_sharded, lfunc_checks, run_all, uniform_grid, write_report, LfuncCheckConfig, ReportRow, Status, SuiteConfig};
use crate::thermo::{clt_parameters, flow_pressure, CltParameters};
use crate::tolerance::Tolerances;

/// A list of reals given as `lo:hi:step` or `a,b,c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| format!("not a number: {p:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [lo, hi, step] => {
                let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(format!("bad range {s:?}: need lo <= hi and step > 0"));
                }
                uniform_grid(lo, hi, step)
            }
            [_] => s.split(',').map(num).collect::<std::result::Result<_, _>>()?,
            _ => return Err(format!("expected lo:hi:step or a comma list, got {s:?}")),
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(format!("empty or non-finite grid {s:?}"));
        }
        Ok(Grid(values))
    }
}

impl Grid {
    fn increasing(&self, what: &str) -> Result<&[f64]> {
        if self.0.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!("{what} must be strictly increasing")));
        }
        Ok(&self.0)
    }

    fn positive_increasing(&self, what: &str) -> Result<&[f64]> {
        if self.0.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("{what} must be positive")));
        }
        self.increasing(what)
    }
}

#[derive(Debug, Parser)]
#[command(name = "orbitclt", version, about = "Periodic orbit statistics on suspension flows over subshifts of finite type")]
pub struct RunConfig {
    /// Model file, or one of m-gold, m-arith, coin-flip, golden-mean-shift.
    #[arg(long, global = true, default_value = "m-gold")]
    pub model: String,

    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Multiplies every numerical tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub tol: f64,

    /// Enumeration workers.
    #[arg(long, global = true, default_value_t = 1)]
    pub shards: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check primitivity and report structural diagnostics.
    Validate,
    /// Write every prime orbit up to a word length as an orbit cache.
    Enumerate(EnumerateArgs),
    /// Flow pressure curve and CLT parameters.
    Pressure(PressureArgs),
    /// Track the leading pole s(t).
    Pole(PoleArgs),
    /// Determinant, Euler product, residue and pole expansion checks.
    LfuncCheck(LfuncCheckArgs),
    /// Scan |det(I - M(s, t))| on a rectangle left of the pole.
    Strip(StripArgs),
    /// Prime orbit counting ratios.
    Counts(CountsArgs),
    /// Characteristic function and KS distance of normalized orbit weights.
    Clt(CltArgs),
    /// Lattice test on orbit lengths.
    CheckMixing(MixingArgs),
    /// Continued-fraction diagnostic of three orbit lengths.
    Diophantine(DiophantineArgs),
    /// Full acceptance suite into report.csv.
    RunAll(RunAllArgs),
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long, default_value_t = 12)]
    pub n_max: usize,
    /// Keep only orbits of length at most this.
    #[arg(long)]
    pub max_length: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PressureArgs {
    #[arg(long, default_value = "-1:1:0.1")]
    pub theta: Grid,
}

#[derive(Debug, Args)]
pub struct PoleArgs {
    #[arg(long, default_value = "0:1:0.05")]
    pub t: Grid,
}

#[derive(Debug, Args)]
pub struct LfuncCheckArgs {
    /// Euler product truncation.
    #[arg(long, default_value_t = 30)]
    pub n_max: usize,
    /// Evaluation point Re s = h + offset.
    #[arg(long, default_value_t = 0.5)]
    pub offset: f64,
    #[arg(long, default_value_t = 0.3)]
    pub t: f64,
}

#[derive(Debug, Args)]
pub struct StripArgs {
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// Real parts to scan; default h-0.5 .. h in steps of 0.1.
    #[arg(long)]
    pub sigma: Option<Grid>,
    #[arg(long, default_value_t = 10.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 161)]
    pub tau_points: usize,
}

#[derive(Debug, Args)]
pub struct CountsArgs {
    #[arg(long, default_value = "16:28:1")]
    pub t_grid: Grid,
    /// Read orbits from a cache written by `enumerate` instead of enumerating.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingChoice {
    PerWindow,
    PerOrbit,
    Both,
}

impl ScalingChoice {
    fn scalings(self) -> Vec<Scaling> {
        match self {
            ScalingChoice::PerWindow => vec![Scaling::PerWindow],
            ScalingChoice::PerOrbit => vec![Scaling::PerOrbit],
            ScalingChoice::Both => vec![Scaling::PerWindow, Scaling::PerOrbit],
        }
    }
}

#[derive(Debug, Args)]
pub struct CltArgs {
    #[arg(long, default_value = "16:28:2")]
    pub t_grid: Grid,
    /// Frequencies of the characteristic function.
    #[arg(long, default_value = "-3:3:0.25")]
    pub freq: Grid,
    /// Window width; defaults to 1/h.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = ScalingChoice::Both)]
    pub scaling: ScalingChoice,
    /// Largest KS sample kept in memory.
    #[arg(long, default_value_t = 10_000_000)]
    pub sample_cap: usize,
    /// Switch to a binned KS estimate instead of failing beyond the cap.
    #[arg(long)]
    pub streaming_ks: bool,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MixingArgs {
    /// Orbit cache to read lengths from.
    #[arg(long, conflicts_with = "lengths")]
    pub cache: Option<PathBuf>,
    /// Comma-separated lengths.
    #[arg(long)]
    pub lengths: Option<Grid>,
    /// Word length bound when lengths come from the model.
    #[arg(long, default_value_t = MIXING_WORDS)]
    pub n_max: usize,
    #[arg(long, default_value_t = MIXING_TOL)]
    pub lattice_tol: f64,
}

#[derive(Debug, Args)]
pub struct DiophantineArgs {
    /// Three lengths `l1,l2,l3`.
    #[arg(long, conflicts_with = "words", required_unless_present = "words")]
    pub lengths: Option<Grid>,
    /// Three periodic words `w1,w2,w3`, measured on the model.
    #[arg(long, value_delimiter = ',')]
    pub words: Option<Vec<String>>,
    #[arg(long, default_value_t = 64)]
    pub max_terms: usize,
    /// Partial quotients above this flag a Liouville-like ratio.
    #[arg(long, default_value_t = 1_000_000)]
    pub bound: u64,
}

#[derive(Debug, Args)]
pub struct RunAllArgs {
    #[arg(long, default_value_t = crate::suite::DEFAULT_T_MIN)]
    pub t_min: f64,
    #[arg(long, default_value_t = crate::suite::DEFAULT_T_MAX)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t_step: f64,
}

/// Outcome shown to the user after a successful run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

struct Ctx {
    out_dir: PathBuf,
    tol: Tolerances,
    shards: usize,
    outcome: Outcome,
}

impl Ctx {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let path = self.out_dir.join(name);
        write_csv(&path, header, rows)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn say(&mut self, line: impl Into<String>) {
        self.outcome.summary.push(line.into());
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// Runs one parsed command line.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    positive("--tol", cfg.tol)?;
    if cfg.shards == 0 {
        return Err(Error::InvalidArgument("--shards must be positive".into()));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let mut ctx = Ctx {
        out_dir: cfg.out_dir.clone(),
        tol: Tolerances::scaled(cfg.tol),
        shards: cfg.shards,
        outcome: Outcome::default(),
    };
    if let Command::RunAll(args) = &cfg.command {
        run_all_cmd(&mut ctx, args)?;
        return Ok(ctx.outcome);
    }
    let model = load_model(&cfg.model)?;
    match &cfg.command {
        Command::Validate => validate(&mut ctx, &model)?,
        Command::Enumerate(a) => enumerate(&mut ctx, &model, a)?,
        Command::Pressure(a) => pressure(&mut ctx, &model, a)?,
        Command::Pole(a) => pole(&mut ctx, &model, a)?,
        Command::LfuncCheck(a) => lfunc_check(&mut ctx, &model, a)?,
        Command::Strip(a) => strip(&mut ctx, &model, a)?,
        Command::Counts(a) => counts(&mut ctx, &model, a)?,
        Command::Clt(a) => clt(&mut ctx, &model, a)?,
        Command::CheckMixing(a) => check_mixing(&mut ctx, &model, a)?,
        Command::Diophantine(a) => diophantine(&mut ctx, &model, a)?,
        Command::RunAll(_) => unreachable!(),
    }
    Ok(ctx.outcome)
}

fn validate(ctx: &mut Ctx, model: &ShiftModel) -> Result<()> {
    let v = validate_model(model);
    let row = vec![
        model.name().to_string(),
        model.state_count().to_string(),
        model.edge_count().to_string(),
        v.primitive.to_string(),
        v.irreducible.to_string(),
        v.period.map_or("-".into(), |p| p.to_string()),
        fmt_f64(v.r_min),
        fmt_f64(model.r_max()),
        v.warnings.join("; "),
    ];
    ctx.csv(
        "validate.csv",
        &["model", "states", "edges", "primitive", "irreducible", "period", "r_min", "r_max", "warnings"],
        &[row],
    )?;
    ctx.say(format!("{}: {} states, {} edges, primitive", model.name(), model.state_count(), model.edge_count()));
    for w in &v.warnings {
        ctx.say(format!("warning: {w}"));
    }
    Ok(())
}

fn enumerate(ctx: &mut Ctx, model: &ShiftModel, a: &EnumerateArgs) -> Result<()> {
    if a.n_max == 0 {
        return Err(Error::InvalidArgument("--n-max must be positive".into()));
    }
    let mut cfg = EnumConfig::new(a.n_max);
    if let Some(x) = a.max_length {
        cfg = cfg.max_length(positive("--max-length", x)?);
    }
    let shards = shard_plan(model, ctx.shards)?;
    let (parts, summary) = enumerate_sharded(model, &cfg, &shards, Vec::new, |acc: &mut Vec<(Word, OrbitRecord)>, w, r| {
        acc.push((Word(w.to_vec()), *r))
    })?;
    let mut all: Vec<(Word, OrbitRecord)> = parts.into_iter().flatten().collect();
    all.sort_by(|x, y| (x.1.n, x.0.as_slice()).cmp(&(y.1.n, y.0.as_slice())));
    let path = ctx.out_dir.join("orbits.csv");
    write_orbit_cache(fs::File::create(&path)?, &all)?;
    ctx.outcome.files.push(path);

    let rows: Vec<Vec<String>> = prime_count_check(model, a.n_max)?
        .iter()
        .map(|r| vec![r.n.to_string(), r.primes.to_string(), r.trace.to_string(), r.ok.to_string()])
        .collect();
    let bad = rows.iter().filter(|r| r[3] != "true").count();
    ctx.csv("prime_counts.csv", &["n", "primes", "trace", "ok"], &rows)?;
    ctx.say(format!("{} prime orbits with n <= {}", summary.total, a.n_max));
    if bad > 0 {
        return Err(Error::InvalidModel(format!("prime count identity fails for {bad} word lengths")));
    }
    Ok(())
}

fn pressure(ctx: &mut Ctx, model: &ShiftModel, a: &PressureArgs) -> Result<()> {
    let rows = a
        .theta
        .0
        .iter()
        .map(|&th| Ok(vec![fmt_f64(th), fmt_f64(flow_pressure(model, th, &ctx.tol)?)]))
        .collect::<Result<Vec<_>>>()?;
    ctx.csv("pressure.csv", &["theta", "p"], &rows)?;
    let clt = clt_parameters(model, &ctx.tol)?;
    ctx.csv(
        "parameters.csv",
        &["h", "flow_mean", "sigma2"],
        &[vec![fmt_f64(clt.h), fmt_f64(clt.flow_mean), fmt_f64(clt.sigma2)]],
    )?;
    ctx.say(format!("h={},flow_mean={},sigma2={}", fmt_f64(clt.h), fmt_f64(clt.flow_mean), fmt_f64(clt.sigma2)));
    Ok(())
}

fn pole(ctx: &mut Ctx, model: &ShiftModel, a: &PoleArgs) -> Result<()> {
    let opts = PoleOptions::default();
    let rows = a
        .t
        .0
        .iter()
        .map(|&t| {
            let p = find_pole(model, t, &opts, &ctx.tol)?;
            Ok(vec![fmt_f64(t), fmt_f64(p.s.re), fmt_f64(p.s.im), fmt_f64(p.residual)])
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.csv("pole.csv", &["t", "re_s", "im_s", "residual"], &rows)
}

fn report_rows(rows: &[ReportRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| vec![r.check.clone(), fmt_f64(r.measured), r.threshold.clone(), r.status.label().into()])
        .collect()
}

fn summarize(ctx: &mut Ctx, rows: &[ReportRow]) {
    let failed: Vec<&ReportRow> = rows.iter().filter(|r| r.status == Status::Fail).collect();
    let gated = rows.iter().filter(|r| r.status != Status::Info).count();
    ctx.say(format!("{} of {} gated checks passed", gated - failed.len(), gated));
    for r in failed {
        ctx.say(format!("FAIL {} = {} (need {})", r.check, fmt_f64(r.measured), r.threshold));
    }
}

fn lfunc_check(ctx: &mut Ctx, model: &ShiftModel, a: &LfuncCheckArgs) -> Result<()> {
    let cfg = LfuncCheckConfig {
        euler_n_max: a.n_max,
        offset: positive("--offset", a.offset)?,
        t: a.t,
        ..LfuncCheckConfig::default()
    };
    let rows = lfunc_checks(model, &cfg, &ctx.tol)?;
    ctx.csv("lfunc_check.csv", &crate::suite::REPORT_HEADER, &report_rows(&rows))?;
    summarize(ctx, &rows);
    Ok(())
}

fn strip(ctx: &mut Ctx, model: &ShiftModel, a: &StripArgs) -> Result<()> {
    let sigmas = match &a.sigma {
        Some(g) => g.0.clone(),
        None => {
            let h = flow_pressure(model, 0.0, &ctx.tol)?;
            uniform_grid(h - 0.5, h, 0.1)
        }
    };
    let scan = strip_scan(model, a.t, &sigmas, positive("--tau-max", a.tau_max)?, a.tau_points)?;
    let grid: Vec<Vec<String>> = scan
        .grid
        .iter()
        .map(|&(x, y, d)| vec![fmt_f64(x), fmt_f64(y), fmt_f64(d)])
        .collect();
    ctx.csv("strip.csv", &["re_s", "im_s", "abs_det"], &grid)?;
    let cols: Vec<Vec<String>> = scan
        .columns
        .iter()
        .map(|c| vec![fmt_f64(c.re_s), fmt_f64(c.min_abs_det), fmt_f64(c.argmin_im)])
        .collect();
    ctx.csv("strip_columns.csv", &["re_s", "min_abs_det", "argmin_im"], &cols)?;
    ctx.say(format!("{} grid points with |det| < {:e}", scan.near_zeros.len(), crate::lfunc::NEAR_ZERO));
    Ok(())
}

fn cached(path: &Path, model: &ShiftModel) -> Result<CachedOrbits> {
    let text = fs::read_to_string(path)?;
    Ok(read_orbit_cache(&text, model, None)?.1)
}

fn collect(ctx: &Ctx, model: &ShiftModel, plan: StatsPlan, cache: Option<&Path>) -> Result<OrbitStatistics> {
    match cache {
        Some(p) => OrbitStatistics::run(plan, &cached(p, model)?),
        None => collect_sharded(model, &plan, ctx.shards),
    }
}

fn counts(ctx: &mut Ctx, model: &ShiftModel, a: &CountsArgs) -> Result<()> {
    let grid = a.t_grid.positive_increasing("--t-grid")?;
    let clt = clt_parameters(model, &ctx.tol)?;
    let mut plan = StatsPlan::new(clt.flow_mean, clt.sigma2.max(f64::MIN_POSITIVE));
    plan.ball_grid = grid.to_vec();
    let stats = collect(ctx, model, plan, a.cache.as_deref())?;
    let rows: Vec<Vec<String>> = stats
        .counting(clt.h)?
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.t),
                r.pi.to_string(),
                fmt_f64(r.sum_l),
                fmt_f64(r.ratio_pi),
                fmt_f64(r.ratio_sum),
            ]
        })
        .collect();
    ctx.csv("counts.csv", &["T", "pi", "sum_l", "ratio_pi", "ratio_sum"], &rows)
}

fn clt(ctx: &mut Ctx, model: &ShiftModel, a: &CltArgs) -> Result<()> {
    let grid = a.t_grid.positive_increasing("--t-grid")?;
    let freq = a.freq.increasing("--freq")?;
    let params: CltParameters = clt_parameters(model, &ctx.tol)?;
    require_clt_hypotheses(model, &params)?;
    let delta = match a.delta {
        Some(d) => positive("--delta", d)?,
        None => default_delta(params.h),
    };
    if a.sample_cap == 0 {
        return Err(Error::InvalidArgument("--sample-cap must be positive".into()));
    }
    let mut plan = StatsPlan::new(params.flow_mean, params.sigma2);
    plan.ks = KsOptions {
        cap: a.sample_cap,
        streaming_fallback: a.streaming_ks,
        ..KsOptions::default()
    };
    for &t in grid {
        for selection in [Selection::Ball { t }, Selection::Window { t, delta }] {
            for scaling in a.scaling.scalings() {
                plan.ranges.push(RangeSpec {
                    selection,
                    scaling,
                    ecf_grid: Some(freq.to_vec()),
                    ks: true,
                });
            }
        }
    }
    let n_ranges = plan.ranges.len();
    let stats = collect(ctx, model, plan, a.cache.as_deref())?;
    let (mut ecf_rows, mut ks_rows) = (Vec::new(), Vec::new());
    for i in 0..n_ranges {
        let e = stats.range_ecf(i)?;
        let (sel, sc) = (selection_name(&e.selection), e.scaling.name());
        let t_sel = fmt_f64(e.selection.time());
        for j in 0..e.t.len() {
            ecf_rows.push(vec![
                t_sel.clone(),
                fmt_f64(e.t[j]),
                fmt_f64(e.phi[j].re),
                fmt_f64(e.phi[j].im),
                fmt_f64(e.gauss[j]),
                fmt_f64(e.deviation[j]),
                sel.into(),
                sc.into(),
            ]);
        }
        let k = stats.range_ks(i)?;
        ks_rows.push(vec![
            t_sel,
            k.n.to_string(),
            fmt_f64(k.ks),
            sel.into(),
            sc.into(),
            fmt_f64(k.error_bound),
            k.binned.to_string(),
        ]);
        ctx.say(format!("{sel} {sc} T={}: n={} max|ecf-gauss|={:.4} ks={:.4}", e.selection.time(), k.n, e.max_deviation(), k.ks));
    }
    ctx.csv("ecf.csv", &["T", "t", "re", "im", "gauss", "abs_dev", "selection", "scaling"], &ecf_rows)?;
    ctx.csv("ks.csv", &["T", "n", "ks", "selection", "scaling", "error_bound", "binned"], &ks_rows)
}

fn selection_name(s: &Selection) -> &'static str {
    match s {
        Selection::Ball { .. } => "ball",
        Selection::Window { .. } => "window",
    }
}

fn verdict_row(source: &str, count: usize, v: &LatticeVerdict) -> Vec<String> {
    vec![
        source.to_string(),
        count.to_string(),
        v.generator.map_or("-".into(), fmt_f64),
        v.iterations.to_string(),
        fmt_f64(v.tolerance),
        v.is_lattice().to_string(),
    ]
}

fn check_mixing(ctx: &mut Ctx, model: &ShiftModel, a: &MixingArgs) -> Result<()> {
    let tol = positive("--lattice-tol", a.lattice_tol)?;
    let (source, count, verdict) = if let Some(path) = &a.cache {
        let orbits = cached(path, model)?;
        let mut lengths: Vec<f64> = orbits.records.iter().map(|r| r.l).collect();
        lengths.sort_by(f64::total_cmp);
        lengths.dedup();
        let v = lattice_test(&lengths, tol)?;
        ("cache", lengths.len(), v)
    } else if let Some(g) = &a.lengths {
        ("lengths", g.0.len(), lattice_test(&g.0, tol)?)
    } else {
        ("model", a.n_max, length_spectrum_lattice(model, a.n_max, tol)?)
    };
    ctx.csv(
        "mixing.csv",
        &["source", "count", "generator", "iterations", "tolerance", "lattice"],
        &[verdict_row(source, count, &verdict)],
    )?;
    ctx.say(match verdict.generator {
        Some(g) => format!("lengths lie on the lattice {}Z: weak mixing fails", fmt_f64(g)),
        None => "no lattice generator found".to_string(),
    });
    Ok(())
}

fn diophantine(ctx: &mut Ctx, model: &ShiftModel, a: &DiophantineArgs) -> Result<()> {
    let lengths: Vec<f64> = match (&a.lengths, &a.words) {
        (Some(g), _) => g.0.clone(),
        (None, Some(words)) => words
            .iter()
            .map(|w| {
                let w: Word = w.parse()?;
                w.check_cyclic(model)?;
                Ok(cyclic_birkhoff(model, &w)?.0)
            })
            .collect::<Result<_>>()?,
        (None, None) => return Err(Error::InvalidArgument("give --lengths or --words".into())),
    };
    let [l1, l2, l3] = lengths[..] else {
        return Err(Error::InvalidArgument(format!("need exactly three lengths, got {}", lengths.len())));
    };
    let cfg = DiophantineConfig {
        max_terms: a.max_terms,
        liouville_bound: a.bound,
        ..DiophantineConfig::default()
    };
    let r = diophantine_diagnostic(l1, l2, l3, cfg)?;
    let (p, q) = r.convergent();
    let quotients: Vec<String> = r.quotients.iter().map(|a| a.to_string()).collect();
    let row = vec![
        fmt_f64(l1),
        fmt_f64(l2),
        fmt_f64(l3),
        fmt_f64(r.beta),
        quotients.join(" "),
        r.max_quotient.to_string(),
        r.terminated.to_string(),
        r.precision_exhausted.to_string(),
        r.quotient_lower_bound.map_or("-".into(), |b| b.to_string()),
        format!("{p}/{q}"),
        fmt_f64(r.reconstruction_bound()),
        r.liouville_suspect.to_string(),
        r.arithmetic_like.to_string(),
    ];
    ctx.csv(
        "diophantine.csv",
        &[
            "l1",
            "l2",
            "l3",
            "beta",
            "quotients",
            "max_quotient",
            "terminated",
            "precision_exhausted",
            "quotient_lower_bound",
            "convergent",
            "reconstruction_bound",
            "liouville_suspect",
            "arithmetic_like",
        ],
        &[row],
    )?;
    ctx.say(format!("beta={} quotients=[{}]", fmt_f64(r.beta), quotients.join(", ")));
    Ok(())
}

fn run_all_cmd(ctx: &mut Ctx, a: &RunAllArgs) -> Result<()> {
    positive("--t-min", a.t_min)?;
    positive("--t-step", a.t_step)?;
    if a.t_max <= a.t_min {
        return Err(Error::InvalidArgument("--t-max must exceed --t-min".into()));
    }
    let cfg = SuiteConfig {
        shards: ctx.shards,
        t_grid: uniform_grid(a.t_min, a.t_max, a.t_step),
        tol: ctx.tol,
        ..SuiteConfig::default()
    };
    let rows = run_all(&cfg)?;
    let path = ctx.out_dir.join("report.csv");
    write_report(&path, &rows)?;
    ctx.outcome.files.push(path);
    summarize(ctx, &rows);
    Ok(())
}

/// Parses `args`, runs the command and prints the outcome; returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cfg) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
