//! Orbit counting, equidistribution, characteristic functions and KS
//! distance over streams of prime orbits.
//!
//! Everything is driven by [`OrbitStatistics`], a mergeable accumulator fed
//! one record at a time. The public operations build a small [`StatsPlan`],
//! run it over an [`OrbitSource`] and finalize; the acceptance suite builds
//! one large plan and runs it over shards.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::hash::BuildHasherDefault;

use num_complex::Complex64;

use crate::accum::{ExactComplexSum, ExactSum};
use crate::error::{Error, Result};
use crate::model::ShiftModel;
use crate::numbers::{lattice_test, LatticeVerdict};
use crate::orbits::{enumerate_prime_orbits, EnumConfig, OrbitRecord, OrbitSource};
use crate::thermo::CltParameters;

/// Centered weight `w - flow_mean * l`.
#[inline]
pub fn center(w: f64, l: f64, flow_mean: f64) -> f64 {
    w - flow_mean * l
}

/// Default window width: one unit of entropy-normalized time, `1 / h`.
pub fn default_delta(h: f64) -> f64 {
    1.0 / h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Orbits with `t < l <= t + delta`.
    Window { t: f64, delta: f64 },
    /// Orbits with `l <= t`.
    Ball { t: f64 },
}

impl Selection {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Selection::Window { t, delta } => (t, t + delta),
            Selection::Ball { t } => (f64::NEG_INFINITY, t),
        }
    }

    /// Time used by per-window scaling.
    pub fn time(&self) -> f64 {
        match *self {
            Selection::Window { t, .. } | Selection::Ball { t } => t,
        }
    }

    pub fn upper(&self) -> f64 {
        self.bounds().1
    }

    #[inline]
    fn contains(&self, l: f64) -> bool {
        let (lo, hi) = self.bounds();
        l > lo && l <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    /// `wbar / sqrt(T)`.
    PerWindow,
    /// `wbar / sqrt(l)`.
    PerOrbit,
}

impl Scaling {
    pub fn name(&self) -> &'static str {
        match self {
            Scaling::PerWindow => "window",
            Scaling::PerOrbit => "orbit",
        }
    }
}

// ---------------------------------------------------------------------------
// normal distribution

const ERF_SERIES_LIMIT: f64 = 3.0;

/// `erf(x)` for `|x| < 3` from `2x/sqrt(pi) e^{-x^2} sum (2x^2)^n / (2n+1)!!`.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    while term > 1e-17 * sum {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
    }
    2.0 * x / PI.sqrt() * (-x2).exp() * sum
}

/// `erfc(x)` for `x >= 3` from the continued fraction
/// `e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`, by Lentz.
fn erfc_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 / 2.0;
        d = x + a * d;
        d = if d == 0.0 { TINY } else { d };
        c = x + a / c;
        c = if c == 0.0 { TINY } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() < ERF_SERIES_LIMIT {
        1.0 - erf_series(x)
    } else if x > 0.0 {
        erfc_fraction(x)
    } else {
        2.0 - erfc_fraction(-x)
    }
}

pub fn erf(x: f64) -> f64 {
    if x.abs() < ERF_SERIES_LIMIT {
        erf_series(x)
    } else {
        1.0 - erfc(x)
    }
}

/// `P(N(0, sigma2) <= y)`.
pub fn normal_cdf(y: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("variance {sigma2} must be positive")));
    }
    Ok(0.5 * erfc(-y / sigma2.sqrt() * FRAC_1_SQRT_2))
}

// ---------------------------------------------------------------------------
// characteristic function sums

/// Nonnegative frequencies of a grid, stored once per `|t|`.
#[derive(Debug, Clone, PartialEq)]
struct Frequencies {
    positive: Vec<f64>,
    /// Common step when `positive[j] = (j + 1) * step` exactly.
    step: Option<f64>,
}

impl Frequencies {
    fn new(grid: &[f64]) -> Self {
        let mut positive: Vec<f64> = grid.iter().map(|t| t.abs()).filter(|&t| t > 0.0).collect();
        positive.sort_by(f64::total_cmp);
        positive.dedup();
        let step = positive.first().copied().filter(|&d| {
            positive
                .iter()
                .enumerate()
                .all(|(j, &t)| t == (j + 1) as f64 * d)
        });
        Self { positive, step }
    }
}

/// Running sums of `e^{i t z}` over the positive frequencies of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EcfSums {
    freqs: Frequencies,
    sums: Vec<ExactComplexSum>,
    count: u64,
}

impl EcfSums {
    pub fn new(grid: &[f64]) -> Self {
        let freqs = Frequencies::new(grid);
        let sums = vec![ExactComplexSum::default(); freqs.positive.len()];
        Self { freqs, sums, count: 0 }
    }

    #[inline]
    pub fn add(&mut self, z: f64, mult: u64) {
        self.count += mult;
        match self.freqs.step {
            Some(d) => {
                let (s, c) = (d * z).sin_cos();
                let base = Complex64::new(c, s);
                let mut e = base;
                for sum in &mut self.sums {
                    sum.add_times(e, mult);
                    e *= base;
                }
            }
            None => {
                for (sum, &t) in self.sums.iter_mut().zip(&self.freqs.positive) {
                    let (s, c) = (t * z).sin_cos();
                    sum.add_times(Complex64::new(c, s), mult);
                }
            }
        }
    }

    pub fn merge(&mut self, other: &EcfSums) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `Phi(t)` on `grid`; exact at `t = 0`, conjugate-symmetric, `|Phi| <= 1`.
    pub fn phi(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        if self.count == 0 {
            return Err(Error::EmptySelection("no orbits in the selection".into()));
        }
        if self.sums.iter().any(|s| s.overflowed()) {
            return Err(Error::Overflow("characteristic function sum".into()));
        }
        let n = self.count as f64;
        grid.iter()
            .map(|&t| {
                if t == 0.0 {
                    return Ok(Complex64::new(1.0, 0.0));
                }
                let j = self
                    .freqs
                    .positive
                    .binary_search_by(|p| p.total_cmp(&t.abs()))
                    .map_err(|_| Error::InvalidArgument(format!("t = {t} not on the accumulated grid")))?;
                let mut v = self.sums[j].value() / n;
                let norm = v.norm();
                if norm > 1.0 {
                    v /= norm;
                }
                Ok(if t < 0.0 { v.conj() } else { v })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcfReport {
    pub selection: Selection,
    pub scaling: Scaling,
    pub count: u64,
    pub t: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub gauss: Vec<f64>,
    pub deviation: Vec<f64>,
}

impl EcfReport {
    fn build(selection: Selection, scaling: Scaling, sums: &EcfSums, grid: &[f64], sigma2: f64) -> Result<Self> {
        let phi = sums.phi(grid)?;
        let gauss: Vec<f64> = grid.iter().map(|t| (-sigma2 * t * t / 2.0).exp()).collect();
        let deviation = phi.iter().zip(&gauss).map(|(p, g)| (p - g).norm()).collect();
        Ok(Self {
            selection,
            scaling,
            count: sums.count,
            t: grid.to_vec(),
            phi,
            gauss,
            deviation,
        })
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().copied().fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOptions {
    /// Largest number of distinct values kept in the exact sample.
    pub cap: usize,
    /// Switch to a fixed-bin histogram instead of failing beyond `cap`.
    pub streaming_fallback: bool,
    /// Histogram resolution for the fallback.
    pub bins: usize,
    /// Histogram half-width in standard deviations.
    pub half_width: f64,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self {
            cap: 10_000_000,
            streaming_fallback: false,
            bins: 1 << 20,
            half_width: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Histogram {
    lo: f64,
    width: f64,
    /// `[below, bins..., above]`.
    counts: Vec<u64>,
}

impl Histogram {
    fn new(opts: &KsOptions, sigma: f64) -> Self {
        let lo = -opts.half_width * sigma;
        Self {
            lo,
            width: 2.0 * opts.half_width * sigma / opts.bins as f64,
            counts: vec![0; opts.bins + 2],
        }
    }

    #[inline]
    fn add(&mut self, z: f64, mult: u64) {
        let bins = self.counts.len() - 2;
        let x = (z - self.lo) / self.width;
        let slot = if x < 0.0 {
            0
        } else if x >= bins as f64 {
            bins + 1
        } else {
            x as usize + 1
        };
        self.counts[slot] += mult;
    }

    /// Left edge of slot `i` (`-inf` for the underflow slot).
    fn edge(&self, i: usize) -> f64 {
        let bins = self.counts.len() - 2;
        match i {
            0 => f64::NEG_INFINITY,
            i if i > bins + 1 => f64::INFINITY,
            i => self.lo + (i - 1) as f64 * self.width,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum KsStore {
    Sample(Vec<(f64, u64)>),
    Binned(Histogram),
    /// Cap exceeded without the fallback; holds the entry count reached.
    Exceeded(usize),
}

/// Mergeable store of scaled centered weights for the KS statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct KsAccumulator {
    opts: KsOptions,
    sigma2: f64,
    total: u64,
    store: KsStore,
    /// Sample length that triggers the next compaction.
    compact_at: usize,
}

impl KsAccumulator {
    pub fn new(opts: KsOptions, sigma2: f64) -> Self {
        Self {
            opts,
            sigma2,
            total: 0,
            store: KsStore::Sample(Vec::new()),
            compact_at: opts.cap,
        }
    }

    /// Starts directly in histogram mode.
    pub fn binned(opts: KsOptions, sigma2: f64) -> Self {
        Self {
            store: KsStore::Binned(Histogram::new(&opts, sigma2.sqrt())),
            ..Self::new(opts, sigma2)
        }
    }

    fn switch_to_binned(&mut self) {
        if let KsStore::Sample(sample) = &self.store {
            let mut h = Histogram::new(&self.opts, self.sigma2.sqrt());
            for &(z, m) in sample {
                h.add(z, m);
            }
            self.store = KsStore::Binned(h);
        }
    }

    /// Merges equal values once the sample outgrows its compaction mark,
    /// and leaves sample mode only when the distinct values exceed the cap.
    /// The outcome therefore depends on the set of values, not on the order
    /// or grouping in which they arrived.
    fn enforce_cap(&mut self, force: bool) {
        let KsStore::Sample(sample) = &mut self.store else {
            return;
        };
        if !force && sample.len() <= self.compact_at {
            return;
        }
        sample.sort_by(|a, b| a.0.total_cmp(&b.0));
        sample.dedup_by(|next, kept| {
            let same = next.0.to_bits() == kept.0.to_bits();
            if same {
                kept.1 += next.1;
            }
            same
        });
        let len = sample.len();
        if len <= self.opts.cap {
            self.compact_at = self.opts.cap.max(2 * len);
        } else if self.opts.streaming_fallback {
            self.switch_to_binned();
        } else {
            self.store = KsStore::Exceeded(len);
        }
    }

    #[inline]
    pub fn add(&mut self, z: f64, mult: u64) {
        self.total += mult;
        match &mut self.store {
            KsStore::Sample(s) => {
                s.push((z, mult));
                if s.len() > self.compact_at {
                    self.enforce_cap(false);
                }
            }
            KsStore::Binned(h) => h.add(z, mult),
            KsStore::Exceeded(n) => *n += 1,
        }
    }

    pub fn merge(&mut self, other: &KsAccumulator) {
        self.total += other.total;
        if matches!(other.store, KsStore::Binned(_)) {
            self.switch_to_binned();
        }
        match (&mut self.store, &other.store) {
            (KsStore::Exceeded(n), KsStore::Sample(b)) => *n += b.len(),
            (KsStore::Exceeded(_), _) => {}
            (_, KsStore::Exceeded(m)) => self.store = KsStore::Exceeded(*m),
            (KsStore::Sample(a), KsStore::Sample(b)) => a.extend_from_slice(b),
            (KsStore::Binned(h), KsStore::Sample(b)) => {
                for &(z, m) in b {
                    h.add(z, m);
                }
            }
            (KsStore::Binned(h), KsStore::Binned(hb)) => {
                h.counts.iter_mut().zip(&hb.counts).for_each(|(a, b)| *a += b);
            }
            (KsStore::Sample(_), KsStore::Binned(_)) => unreachable!("converted above"),
        }
        self.enforce_cap(false);
    }

    pub fn finish(mut self, t: f64) -> Result<KsReport> {
        self.enforce_cap(true);
        if self.total == 0 {
            return Err(Error::EmptySelection(format!("no orbits for the KS sample at T = {t}")));
        }
        if let KsStore::Exceeded(len) = self.store {
            return Err(Error::InvalidArgument(format!(
                "KS sample of {len} entries exceeds the cap {}; enable the streaming fallback",
                self.opts.cap
            )));
        }
        let n = self.total as f64;
        let sigma2 = self.sigma2;
        match &mut self.store {
            KsStore::Sample(sample) => {
                sample.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut ks: f64 = 0.0;
                let mut cum = 0u64;
                let mut i = 0;
                while i < sample.len() {
                    let v = sample[i].0;
                    let before = cum as f64 / n;
                    while i < sample.len() && sample[i].0 == v {
                        cum += sample[i].1;
                        i += 1;
                    }
                    let after = cum as f64 / n;
                    let phi = normal_cdf(v, sigma2)?;
                    ks = ks.max(after - phi).max(phi - before);
                }
                Ok(KsReport {
                    t,
                    n: self.total,
                    ks: ks.clamp(0.0, 1.0),
                    error_bound: 0.0,
                    binned: false,
                })
            }
            KsStore::Exceeded(_) => unreachable!("handled above"),
            KsStore::Binned(h) => {
                // Inside a slot [a, b) the empirical CDF lies between F(a-) and
                // F(b-) and the normal CDF between Phi(a) and Phi(b); the bound
                // below exceeds the exact statistic by at most Phi(b) - Phi(a).
                let mut ks: f64 = 0.0;
                let mut slack: f64 = 0.0;
                let mut cum = 0u64;
                for (i, &c) in h.counts.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    let before = cum as f64 / n;
                    cum += c;
                    let after = cum as f64 / n;
                    let (a, b) = (h.edge(i), h.edge(i + 1));
                    let (pa, pb) = (normal_cdf(a, sigma2)?, normal_cdf(b, sigma2)?);
                    ks = ks.max(after - pa).max(pb - before);
                    slack = slack.max(pb - pa);
                }
                Ok(KsReport {
                    t,
                    n: self.total,
                    ks: ks.clamp(0.0, 1.0),
                    error_bound: slack,
                    binned: true,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsReport {
    pub t: f64,
    /// Sample size (orbits counted with multiplicity).
    pub n: u64,
    pub ks: f64,
    /// Zero for an exact sample; for the binned fallback `ks` is an upper
    /// bound exceeding the exact value by at most this much.
    pub error_bound: f64,
    pub binned: bool,
}

// ---------------------------------------------------------------------------
// selections

/// Statistics requested for one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeSpec {
    pub selection: Selection,
    pub scaling: Scaling,
    pub ecf_grid: Option<Vec<f64>>,
    pub ks: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct RangeAcc {
    spec: RangeSpec,
    scale: f64,
    count: u64,
    sum_l: ExactSum,
    sum_ratio: ExactSum,
    sum_z: ExactSum,
    sum_z2: ExactSum,
    ecf: Option<EcfSums>,
    ks: Option<KsAccumulator>,
}

/// Counts and moments of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub selection: Selection,
    pub scaling: Scaling,
    pub count: u64,
    pub sum_l: f64,
    /// Mean of `w / l` with uncentered weights.
    pub mean_weight_ratio: f64,
    /// Mean and variance of the scaled centered weights.
    pub mean: f64,
    pub variance: f64,
}

/// Per-T output of orbit counting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRow {
    pub t: f64,
    pub pi: u64,
    pub sum_l: f64,
    pub ratio_pi: f64,
    pub ratio_sum: f64,
    /// `sum_l / (T pi)`.
    pub mean_ratio: f64,
}

/// Smoothed orbit sum request; the main term is applied by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedSpec {
    pub x: f64,
    pub t: f64,
    pub k: u32,
}

/// Everything one pass over the orbits should accumulate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsPlan {
    pub flow_mean: f64,
    pub sigma2: f64,
    /// Ball radii for counting, increasing.
    pub ball_grid: Vec<f64>,
    /// Frequencies for per-orbit ball characteristic functions on `ball_grid`.
    pub ball_ecf: Option<Vec<f64>>,
    /// Ball radii for per-orbit KS statistics.
    pub ball_ks: Vec<f64>,
    pub ranges: Vec<RangeSpec>,
    pub smoothed: Vec<SmoothedSpec>,
    pub ks: KsOptions,
}

impl StatsPlan {
    pub fn new(flow_mean: f64, sigma2: f64) -> Self {
        Self {
            flow_mean,
            sigma2,
            ..Self::default()
        }
    }

    /// Longest orbit any part of the plan needs.
    pub fn max_length(&self) -> f64 {
        let balls = self.ball_grid.iter().chain(&self.ball_ks).copied();
        let ranges = self.ranges.iter().map(|r| r.selection.upper());
        let smoothed = self.smoothed.iter().map(|s| s.x.ln());
        balls.chain(ranges).chain(smoothed).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        if self.ball_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("T grid must be strictly increasing".into()));
        }
        if self.ball_grid.iter().chain(&self.ball_ks).any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidArgument("T values must be positive".into()));
        }
        for r in &self.ranges {
            if let Selection::Window { t, delta } = r.selection {
                if !(t > 0.0 && delta > 0.0) {
                    return Err(Error::InvalidArgument(format!("window ({t}, {delta}) must be positive")));
                }
            }
        }
        if let Some(s) = self.smoothed.iter().find(|s| !(s.x > 1.0)) {
            return Err(Error::InvalidArgument(format!("x = {} must exceed 1", s.x)));
        }
        Ok(())
    }
}

/// Mergeable single-pass accumulator for a [`StatsPlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitStatistics {
    plan: StatsPlan,
    counts: Vec<u64>,
    sum_l: Vec<ExactSum>,
    ball_ecf: Vec<EcfSums>,
    ball_ks: Vec<KsAccumulator>,
    ranges: Vec<RangeAcc>,
    smoothed: Vec<ExactComplexSum>,
    max_length: f64,
}

impl OrbitStatistics {
    pub fn new(plan: StatsPlan) -> Result<Self> {
        plan.validate()?;
        let bins = plan.ball_grid.len();
        let ball_ecf = match &plan.ball_ecf {
            Some(grid) => vec![EcfSums::new(grid); bins],
            None => Vec::new(),
        };
        let ball_ks = plan
            .ball_ks
            .iter()
            .map(|_| KsAccumulator::new(plan.ks, plan.sigma2))
            .collect();
        let ranges = plan
            .ranges
            .iter()
            .map(|spec| RangeAcc {
                scale: 1.0 / spec.selection.time().sqrt(),
                count: 0,
                sum_l: ExactSum::default(),
                sum_ratio: ExactSum::default(),
                sum_z: ExactSum::default(),
                sum_z2: ExactSum::default(),
                ecf: spec.ecf_grid.as_deref().map(EcfSums::new),
                ks: spec.ks.then(|| KsAccumulator::new(plan.ks, plan.sigma2)),
                spec: spec.clone(),
            })
            .collect();
        Ok(Self {
            counts: vec![0; bins],
            sum_l: vec![ExactSum::default(); bins],
            ball_ecf,
            ball_ks,
            ranges,
            smoothed: vec![ExactComplexSum::default(); plan.smoothed.len()],
            max_length: plan.max_length(),
            plan,
        })
    }

    pub fn plan(&self) -> &StatsPlan {
        &self.plan
    }

    #[inline]
    pub fn add(&mut self, r: &OrbitRecord, mult: u64) {
        let l = r.l;
        if l > self.max_length {
            return;
        }
        let wbar = center(r.w, l, self.plan.flow_mean);
        let per_orbit = wbar / l.sqrt();

        let bin = self.plan.ball_grid.partition_point(|&t| t < l);
        if bin < self.counts.len() {
            self.counts[bin] += mult;
            self.sum_l[bin].add_times(l, mult);
            if let Some(e) = self.ball_ecf.get_mut(bin) {
                e.add(per_orbit, mult);
            }
        }
        for (acc, &t) in self.ball_ks.iter_mut().zip(&self.plan.ball_ks) {
            if l <= t {
                acc.add(per_orbit, mult);
            }
        }
        for acc in &mut self.ranges {
            if !acc.spec.selection.contains(l) {
                continue;
            }
            let z = match acc.spec.scaling {
                Scaling::PerWindow => wbar * acc.scale,
                Scaling::PerOrbit => per_orbit,
            };
            acc.count += mult;
            acc.sum_l.add_times(l, mult);
            acc.sum_ratio.add_times(r.w / l, mult);
            acc.sum_z.add_times(z, mult);
            acc.sum_z2.add_times(z * z, mult);
            if let Some(e) = &mut acc.ecf {
                e.add(z, mult);
            }
            if let Some(k) = &mut acc.ks {
                k.add(z, mult);
            }
        }
        for (sum, spec) in self.smoothed.iter_mut().zip(&self.plan.smoothed) {
            if l <= spec.x.ln() {
                sum.add_times(crate::lfunc::smoothed_term(r, self.plan.flow_mean, spec.t, spec.k, spec.x), mult);
            }
        }
    }

    pub fn merge(&mut self, other: &OrbitStatistics) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.sum_l.iter_mut().zip(&other.sum_l) {
            a.merge(b);
        }
        for (a, b) in self.ball_ecf.iter_mut().zip(&other.ball_ecf) {
            a.merge(b);
        }
        for (a, b) in self.ball_ks.iter_mut().zip(&other.ball_ks) {
            a.merge(b);
        }
        for (a, b) in self.ranges.iter_mut().zip(&other.ranges) {
            a.count += b.count;
            a.sum_l.merge(&b.sum_l);
            a.sum_ratio.merge(&b.sum_ratio);
            a.sum_z.merge(&b.sum_z);
            a.sum_z2.merge(&b.sum_z2);
            if let (Some(x), Some(y)) = (&mut a.ecf, &b.ecf) {
                x.merge(y);
            }
            if let (Some(x), Some(y)) = (&mut a.ks, &b.ks) {
                x.merge(y);
            }
        }
        for (a, b) in self.smoothed.iter_mut().zip(&other.smoothed) {
            a.merge(b);
        }
    }

    /// Feeds every orbit the plan needs from `source`.
    pub fn run(plan: StatsPlan, source: &dyn OrbitSource) -> Result<Self> {
        let mut acc = Self::new(plan)?;
        let n_max = source.ensure_complete(acc.max_length)?;
        let cap = acc.max_length;
        source.visit(n_max, Some(cap), &mut |r, m| acc.add(r, m))?;
        Ok(acc)
    }

    pub fn counting(&self, h: f64) -> Result<Vec<CountRow>> {
        let mut pi = 0u64;
        let mut sum = ExactSum::default();
        let mut rows = Vec::with_capacity(self.counts.len());
        for (j, &t) in self.plan.ball_grid.iter().enumerate() {
            pi += self.counts[j];
            sum.merge(&self.sum_l[j]);
            if sum.overflowed() {
                return Err(Error::Overflow(format!("length sum at T = {t}")));
            }
            let sum_l = sum.value();
            let growth = (h * t).exp();
            rows.push(CountRow {
                t,
                pi,
                sum_l,
                ratio_pi: pi as f64 * h * t / growth,
                ratio_sum: h * sum_l / growth,
                mean_ratio: if pi == 0 { f64::NAN } else { sum_l / (t * pi as f64) },
            });
        }
        Ok(rows)
    }

    /// Per-orbit ball characteristic functions on every `ball_grid` point.
    pub fn ball_ecf(&self) -> Result<Vec<EcfReport>> {
        let Some(grid) = &self.plan.ball_ecf else {
            return Ok(Vec::new());
        };
        let mut running = EcfSums::new(grid);
        let mut out = Vec::with_capacity(self.ball_ecf.len());
        for (sums, &t) in self.ball_ecf.iter().zip(&self.plan.ball_grid) {
            running.merge(sums);
            out.push(EcfReport::build(Selection::Ball { t }, Scaling::PerOrbit, &running, grid, self.plan.sigma2)?);
        }
        Ok(out)
    }

    pub fn ball_ks(&self) -> Result<Vec<KsReport>> {
        self.ball_ks
            .iter()
            .zip(&self.plan.ball_ks)
            .map(|(acc, &t)| acc.clone().finish(t))
            .collect()
    }

    pub fn window_stats(&self) -> Vec<WindowStats> {
        self.ranges
            .iter()
            .map(|a| {
                let n = a.count as f64;
                let mean = a.sum_z.value() / n;
                WindowStats {
                    selection: a.spec.selection,
                    scaling: a.spec.scaling,
                    count: a.count,
                    sum_l: a.sum_l.value(),
                    mean_weight_ratio: a.sum_ratio.value() / n,
                    mean,
                    variance: a.sum_z2.value() / n - mean * mean,
                }
            })
            .collect()
    }

    pub fn range_ecf(&self, index: usize) -> Result<EcfReport> {
        let a = &self.ranges[index];
        let grid = a
            .spec
            .ecf_grid
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("no characteristic function requested".into()))?;
        let sums = a.ecf.as_ref().expect("grid implies sums");
        EcfReport::build(a.spec.selection, a.spec.scaling, sums, grid, self.plan.sigma2)
    }

    pub fn range_ks(&self, index: usize) -> Result<KsReport> {
        let a = &self.ranges[index];
        let acc = a
            .ks
            .clone()
            .ok_or_else(|| Error::InvalidArgument("no KS statistic requested".into()))?;
        acc.finish(a.spec.selection.time())
    }

    /// Raw smoothed sums in plan order.
    pub fn smoothed_sums(&self) -> Result<Vec<Complex64>> {
        self.smoothed
            .iter()
            .map(|s| {
                if s.overflowed() {
                    Err(Error::Overflow("smoothed orbit sum".into()))
                } else {
                    Ok(s.value())
                }
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// public operations

/// Groups records with identical `(n, l, w)` before they reach an
/// [`OrbitStatistics`]. Every reduction is exact in the multiplicity, so
/// the result equals feeding the records one by one.
#[derive(Debug, Clone)]
pub struct Coalescing {
    stats: OrbitStatistics,
    pending: HashMap<(usize, u64, u64), u64, BuildHasherDefault<DefaultHasher>>,
    limit: usize,
}

impl Coalescing {
    /// Pending groups held before a flush.
    pub const LIMIT: usize = 1 << 20;

    pub fn new(stats: OrbitStatistics) -> Self {
        Self {
            stats,
            pending: HashMap::default(),
            limit: Self::LIMIT,
        }
    }

    #[inline]
    pub fn add(&mut self, r: &OrbitRecord) {
        if r.l > self.stats.max_length {
            return;
        }
        *self.pending.entry((r.n, r.l.to_bits(), r.w.to_bits())).or_insert(0) += 1;
        if self.pending.len() >= self.limit {
            self.flush();
        }
    }

    fn flush(&mut self) {
        for ((n, l, w), mult) in self.pending.drain() {
            let r = OrbitRecord {
                n,
                l: f64::from_bits(l),
                w: f64::from_bits(w),
            };
            self.stats.add(&r, mult);
        }
    }

    pub fn finish(mut self) -> OrbitStatistics {
        self.flush();
        self.stats
    }
}

/// `pi(T)`, `sum_{l <= T} l` and their normalized ratios along `t_grid`.
pub fn orbit_counting(source: &dyn OrbitSource, clt: &CltParameters, t_grid: &[f64]) -> Result<Vec<CountRow>> {
    let mut plan = StatsPlan::new(clt.flow_mean, clt.sigma2);
    plan.ball_grid = t_grid.to_vec();
    OrbitStatistics::run(plan, source)?.counting(clt.h)
}

pub fn window_stats(source: &dyn OrbitSource, clt: &CltParameters, selection: Selection, scaling: Scaling) -> Result<WindowStats> {
    let mut plan = StatsPlan::new(clt.flow_mean, clt.sigma2);
    plan.ranges.push(RangeSpec {
        selection,
        scaling,
        ecf_grid: None,
        ks: false,
    });
    Ok(OrbitStatistics::run(plan, source)?.window_stats().remove(0))
}

/// Mean of `l_f / l` over the orbits of a window, uncentered.
pub fn equidistribution_average(source: &dyn OrbitSource, t: f64, delta: f64) -> Result<f64> {
    let mut plan = StatsPlan::new(0.0, 0.0);
    plan.ranges.push(RangeSpec {
        selection: Selection::Window { t, delta },
        scaling: Scaling::PerWindow,
        ecf_grid: None,
        ks: false,
    });
    let stats = OrbitStatistics::run(plan, source)?.window_stats().remove(0);
    if stats.count == 0 {
        return Err(Error::EmptySelection(format!("window ({t}, {}] contains no orbits", t + delta)));
    }
    Ok(stats.mean_weight_ratio)
}

pub fn empirical_cf(source: &dyn OrbitSource, clt: &CltParameters, selection: Selection, scaling: Scaling, t_grid: &[f64]) -> Result<EcfReport> {
    clt.require_nondegenerate()?;
    let mut plan = StatsPlan::new(clt.flow_mean, clt.sigma2);
    plan.ranges.push(RangeSpec {
        selection,
        scaling,
        ecf_grid: Some(t_grid.to_vec()),
        ks: false,
    });
    OrbitStatistics::run(plan, source)?.range_ecf(0)
}

pub fn empirical_cdf_ks(source: &dyn OrbitSource, clt: &CltParameters, selection: Selection, scaling: Scaling, opts: KsOptions) -> Result<KsReport> {
    clt.require_nondegenerate()?;
    let mut plan = StatsPlan::new(clt.flow_mean, clt.sigma2);
    plan.ks = opts;
    plan.ranges.push(RangeSpec {
        selection,
        scaling,
        ecf_grid: None,
        ks: true,
    });
    OrbitStatistics::run(plan, source)?.range_ks(0)
}

/// Lattice verdict on the lengths of all prime orbits of word length `<= n`.
pub fn length_spectrum_lattice(model: &ShiftModel, n: usize, tol: f64) -> Result<LatticeVerdict> {
    let mut lengths = Vec::new();
    enumerate_prime_orbits(model, &EnumConfig::new(n), |_, r| lengths.push(r.l))?;
    lengths.sort_by(f64::total_cmp);
    lengths.dedup();
    if lengths.len() < 2 {
        return Ok(LatticeVerdict {
            generator: lengths.first().copied(),
            iterations: 0,
            tolerance: tol,
        });
    }
    lattice_test(&lengths, tol)
}

/// Word length and tolerance of the weak-mixing screen.
pub const MIXING_WORDS: usize = 8;
pub const MIXING_TOL: f64 = 1e-9;

/// Refuses CLT runs when the variance vanishes or the orbit lengths lie in
/// a lattice (the flow is then not weakly mixing).
pub fn require_clt_hypotheses(model: &ShiftModel, clt: &CltParameters) -> Result<()> {
    clt.require_nondegenerate()?;
    let verdict = length_spectrum_lattice(model, MIXING_WORDS, MIXING_TOL)?;
    if let Some(g) = verdict.generator {
        return Err(Error::Hypothesis(format!(
            "orbit lengths lie in the lattice {g}Z: the flow is not weakly mixing, no CLT"
        )));
    }
    Ok(())
}
