//! Prime periodic orbits.
//!
//! Prime orbits of the suspension flow are admissible Lyndon words. They are
//! generated with the Fredricksen–Kessler–Maiorana recursion restricted to
//! admissible paths, one word length at a time, so records leave the
//! enumerator in nondecreasing word length and, within a length, in
//! lexicographic order of the canonical word. Nothing is stored besides the
//! current word and its prefix sums.

use std::collections::{BTreeMap, HashSet};
use std::thread;

use crate::error::{Error, Result};
use crate::model::{gcd, ShiftModel, Word};

/// One prime periodic orbit: word length, length and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitRecord {
    pub n: usize,
    pub l: f64,
    pub w: f64,
}

/// Per-length prime orbit counts of one enumeration (or a merge of several).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnumSummary {
    /// Index `n` holds the number of prime orbits of word length `n`.
    pub counts_per_n: Vec<u64>,
    pub total: u64,
    pub shard: Option<Shard>,
}

impl EnumSummary {
    fn record(&mut self, n: usize) {
        if self.counts_per_n.len() <= n {
            self.counts_per_n.resize(n + 1, 0);
        }
        self.counts_per_n[n] += 1;
        self.total += 1;
    }

    /// Componentwise addition; associative and commutative.
    pub fn merge(&mut self, other: &EnumSummary) {
        if self.counts_per_n.len() < other.counts_per_n.len() {
            self.counts_per_n.resize(other.counts_per_n.len(), 0);
        }
        for (a, b) in self.counts_per_n.iter_mut().zip(&other.counts_per_n) {
            *a += b;
        }
        self.total += other.total;
        self.shard = None;
    }
}

/// A static slice of the orbit set, keyed by the canonical word.
///
/// A word belongs to the shard when it starts with one of `prefixes` or is
/// equal to one of `exact`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Shard {
    pub prefixes: Vec<Word>,
    pub exact: Vec<Word>,
}

impl Shard {
    pub fn from_prefixes(prefixes: Vec<Word>) -> Self {
        Self {
            prefixes,
            exact: Vec::new(),
        }
    }

    pub fn contains(&self, word: &[usize]) -> bool {
        self.prefixes.iter().any(|p| word.starts_with(p.as_slice()))
            || self.exact.iter().any(|e| e.as_slice() == word)
    }
}

#[derive(Debug, Clone)]
pub struct EnumConfig {
    pub n_max: usize,
    /// Only orbits with `l <= max_length` are emitted; prefixes that cannot
    /// close below it are pruned.
    pub max_length: Option<f64>,
    pub shard: Option<Shard>,
}

impl EnumConfig {
    pub fn new(n_max: usize) -> Self {
        Self {
            n_max,
            max_length: None,
            shard: None,
        }
    }

    pub fn max_length(mut self, cap: f64) -> Self {
        self.max_length = Some(cap);
        self
    }

    pub fn shard(mut self, shard: Shard) -> Self {
        self.shard = Some(shard);
        self
    }
}

struct ShardFilter {
    partial: HashSet<Vec<usize>>,
    full: HashSet<Vec<usize>>,
    exact: HashSet<Vec<usize>>,
}

impl ShardFilter {
    fn new(shard: &Shard) -> Self {
        let mut partial = HashSet::new();
        for w in shard.prefixes.iter().chain(&shard.exact) {
            for t in 1..=w.len() {
                partial.insert(w.0[..t].to_vec());
            }
        }
        Self {
            partial,
            full: shard.prefixes.iter().map(|w| w.0.clone()).collect(),
            exact: shard.exact.iter().map(|w| w.0.clone()).collect(),
        }
    }
}

struct Search<'a, F> {
    k: usize,
    adj: &'a [bool],
    roof: &'a [f64],
    weight: &'a [f64],
    r_min: f64,
    cap: f64,
    n: usize,
    word: Vec<usize>,
    lsum: Vec<f64>,
    wsum: Vec<f64>,
    filter: Option<&'a ShardFilter>,
    summary: &'a mut EnumSummary,
    sink: F,
}

impl<F: FnMut(&[usize], &OrbitRecord)> Search<'_, F> {
    /// `word[..t]` is an admissible prenecklace with Lyndon period `p`.
    fn descend(&mut self, t: usize, p: usize, matched: bool) {
        let k = self.k;
        if t == self.n {
            if p != self.n {
                return;
            }
            let (last, first) = (self.word[t - 1], self.word[0]);
            let e = last * k + first;
            if !self.adj[e] {
                return;
            }
            let l = self.lsum[t] + self.roof[e];
            if l > self.cap {
                return;
            }
            if !matched {
                match self.filter {
                    Some(f) if f.exact.contains(&self.word[..t]) => {}
                    _ => return,
                }
            }
            let w = self.wsum[t] + self.weight[e];
            self.summary.record(t);
            (self.sink)(&self.word[..t], &OrbitRecord { n: t, l, w });
            return;
        }
        let base = self.word[t - p];
        let prev = self.word[t - 1];
        let slack = (self.n - t) as f64 * self.r_min;
        for j in base..k {
            let e = prev * k + j;
            if !self.adj[e] {
                continue;
            }
            let l = self.lsum[t] + self.roof[e];
            if l + slack > self.cap {
                continue;
            }
            self.word[t] = j;
            let mut now_matched = matched;
            if !matched {
                let f = self.filter.expect("unmatched search requires a shard filter");
                let prefix = &self.word[..=t];
                if !f.partial.contains(prefix) {
                    continue;
                }
                now_matched = f.full.contains(prefix);
            }
            self.lsum[t + 1] = l;
            self.wsum[t + 1] = self.wsum[t] + self.weight[e];
            self.descend(t + 1, if j == base { p } else { t + 1 }, now_matched);
        }
    }
}

/// Streams every admissible Lyndon word of length `<= n_max` to `sink`
/// exactly once, in nondecreasing length.
///
/// Length and weight are accumulated along the word from position 0 with
/// the wrap edge last, the same order as [`crate::model::cyclic_birkhoff`].
pub fn enumerate_prime_orbits<F>(model: &ShiftModel, config: &EnumConfig, sink: F) -> Result<EnumSummary>
where
    F: FnMut(&[usize], &OrbitRecord),
{
    if config.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    // Prime counts are bounded by tr(A^n); refuse before emitting anything
    // if those do not fit the counter width.
    trace_powers(model, config.n_max)?;
    let filter = match &config.shard {
        Some(shard) => {
            for p in shard.prefixes.iter().chain(&shard.exact) {
                if p.is_empty() || p.0.iter().any(|&s| s >= model.state_count()) {
                    return Err(Error::InvalidArgument(format!("bad shard word {p}")));
                }
                if let Some(m) = p.0.windows(2).find(|w| !model.allowed(w[0], w[1])) {
                    return Err(Error::ForbiddenEdge { from: m[0], to: m[1] });
                }
            }
            Some(ShardFilter::new(shard))
        }
        None => None,
    };
    let cap = config.max_length.unwrap_or(f64::INFINITY);
    let mut summary = EnumSummary {
        shard: config.shard.clone(),
        ..Default::default()
    };
    let mut search = Search {
        k: model.state_count(),
        adj: model.adjacency(),
        roof: model.roof_matrix(),
        weight: model.weight_matrix(),
        r_min: model.r_min(),
        cap,
        n: 0,
        word: vec![0; config.n_max],
        lsum: vec![0.0; config.n_max + 1],
        wsum: vec![0.0; config.n_max + 1],
        filter: filter.as_ref(),
        summary: &mut summary,
        sink,
    };
    for n in 1..=config.n_max {
        if n as f64 * search.r_min > cap {
            break;
        }
        search.n = n;
        for first in 0..search.k {
            let mut matched = search.filter.is_none();
            if let Some(f) = search.filter {
                let prefix = [first];
                if !f.partial.contains(&prefix[..]) {
                    continue;
                }
                matched = f.full.contains(&prefix[..]);
            }
            search.word[0] = first;
            search.descend(1, 1, matched);
        }
    }
    if summary.counts_per_n.len() <= config.n_max {
        summary.counts_per_n.resize(config.n_max + 1, 0);
    }
    Ok(summary)
}

/// Splits the orbit set into `count` disjoint shards covering everything.
///
/// Words at least `depth` long are assigned by their length-`depth` prefix;
/// shorter prime words are listed explicitly. Assignment is round-robin in
/// lexicographic order, so the plan depends only on the model and `count`.
pub fn shard_plan(model: &ShiftModel, count: usize) -> Result<Vec<Shard>> {
    if count == 0 {
        return Err(Error::InvalidArgument("shard count must be positive".into()));
    }
    let k = model.state_count();
    let mut paths: Vec<Vec<usize>> = (0..k).map(|s| vec![s]).collect();
    while paths.len() < count {
        paths = paths
            .iter()
            .flat_map(|p| {
                let last = *p.last().unwrap();
                (0..k).filter(move |&j| model.allowed(last, j)).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    let depth = paths[0].len();
    let mut shards = vec![Shard::default(); count];
    for (i, p) in paths.into_iter().enumerate() {
        shards[i % count].prefixes.push(Word(p));
    }
    if depth > 1 {
        let mut short = Vec::new();
        enumerate_prime_orbits(model, &EnumConfig::new(depth - 1), |w, _| short.push(Word(w.to_vec())))?;
        short.sort();
        for (i, w) in short.into_iter().enumerate() {
            shards[i % count].exact.push(w);
        }
    }
    Ok(shards)
}

/// Runs each shard on its own thread with a private accumulator.
///
/// Accumulators come back in shard order together with the merged summary.
pub fn enumerate_sharded<A, M, V>(
    model: &ShiftModel,
    config: &EnumConfig,
    shards: &[Shard],
    make: M,
    visit: V,
) -> Result<(Vec<A>, EnumSummary)>
where
    A: Send,
    M: Fn() -> A + Sync,
    V: Fn(&mut A, &[usize], &OrbitRecord) + Sync,
{
    let results: Vec<Result<(A, EnumSummary)>> = thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|shard| {
                let (make, visit) = (&make, &visit);
                let cfg = EnumConfig {
                    shard: Some(shard.clone()),
                    ..config.clone()
                };
                scope.spawn(move || {
                    let mut acc = make();
                    let summary = enumerate_prime_orbits(model, &cfg, |w, r| visit(&mut acc, w, r))?;
                    Ok((acc, summary))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("shard worker panicked"))
            .collect()
    });
    let mut accs = Vec::with_capacity(results.len());
    let mut summary = EnumSummary::default();
    for r in results {
        let (acc, s) = r?;
        summary.merge(&s);
        accs.push(acc);
    }
    Ok((accs, summary))
}

/// Exact traces `tr(A^n)` for `n = 1..=n_max` (index 0 unused).
pub fn trace_powers(model: &ShiftModel, n_max: usize) -> Result<Vec<u64>> {
    let k = model.state_count();
    let a: Vec<u64> = model.adjacency().iter().map(|&b| b as u64).collect();
    let mut power = a.clone();
    let mut traces = vec![0u64; n_max + 1];
    for n in 1..=n_max {
        if n > 1 {
            let mut next = vec![0u64; k * k];
            for i in 0..k {
                for l in 0..k {
                    let x = power[i * k + l];
                    if x == 0 {
                        continue;
                    }
                    for j in 0..k {
                        if a[l * k + j] == 1 {
                            next[i * k + j] = next[i * k + j]
                                .checked_add(x)
                                .ok_or_else(|| Error::Overflow(format!("A^{n} entries exceed u64")))?;
                        }
                    }
                }
            }
            power = next;
        }
        let mut tr = 0u64;
        for i in 0..k {
            tr = tr
                .checked_add(power[i * k + i])
                .ok_or_else(|| Error::Overflow(format!("tr(A^{n}) exceeds u64")))?;
        }
        traces[n] = tr;
    }
    Ok(traces)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeCountRow {
    pub n: usize,
    pub primes: u64,
    pub trace: u64,
    pub ok: bool,
}

/// Checks `sum_{d | n} d * P_d = tr(A^n)` in exact integers.
pub fn prime_count_check(model: &ShiftModel, n_max: usize) -> Result<Vec<PrimeCountRow>> {
    let traces = trace_powers(model, n_max)?;
    let summary = enumerate_prime_orbits(model, &EnumConfig::new(n_max), |_, _| {})?;
    let p = &summary.counts_per_n;
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut total = 0u64;
        for d in (1..=n).filter(|d| n % d == 0) {
            total = (d as u64)
                .checked_mul(p[d])
                .and_then(|x| total.checked_add(x))
                .ok_or_else(|| Error::Overflow(format!("necklace sum at n = {n}")))?;
        }
        rows.push(PrimeCountRow {
            n,
            primes: p[n],
            trace: traces[n],
            ok: total == traces[n],
        });
    }
    Ok(rows)
}

/// Anything that can stream prime orbits with multiplicities.
///
/// A record with multiplicity `m` stands for `m` distinct prime orbits
/// sharing the same `(n, l, w)`.
pub trait OrbitSource {
    fn model(&self) -> &ShiftModel;

    /// Largest word length this source can provide; `None` if unbounded.
    fn coverage(&self) -> Option<usize>;

    fn visit(&self, n_max: usize, max_length: Option<f64>, sink: &mut dyn FnMut(&OrbitRecord, u64)) -> Result<()>;

    /// Fails with the required `n_max` when the source cannot supply every
    /// orbit of length `<= length`.
    fn ensure_complete(&self, length: f64) -> Result<usize> {
        let required = (length / self.model().r_min()).floor() as usize;
        let required = required.max(1);
        match self.coverage() {
            Some(have) if have < required => Err(Error::IncompleteSource {
                required_n_max: required,
                available: have,
            }),
            _ => Ok(required),
        }
    }
}

/// Live Lyndon enumeration.
#[derive(Debug, Clone, Copy)]
pub struct LyndonSource<'a> {
    pub model: &'a ShiftModel,
}

impl OrbitSource for LyndonSource<'_> {
    fn model(&self) -> &ShiftModel {
        self.model
    }

    fn coverage(&self) -> Option<usize> {
        None
    }

    fn visit(&self, n_max: usize, max_length: Option<f64>, sink: &mut dyn FnMut(&OrbitRecord, u64)) -> Result<()> {
        let cfg = EnumConfig {
            n_max,
            max_length,
            shard: None,
        };
        enumerate_prime_orbits(self.model, &cfg, |_, r| sink(r, 1))?;
        Ok(())
    }
}

/// A fixed list of records (e.g. read back from an orbit cache).
#[derive(Debug, Clone)]
pub struct CachedOrbits {
    pub model: ShiftModel,
    pub records: Vec<OrbitRecord>,
    /// Word length up to which `records` is complete.
    pub n_max: usize,
}

impl OrbitSource for CachedOrbits {
    fn model(&self) -> &ShiftModel {
        &self.model
    }

    fn coverage(&self) -> Option<usize> {
        Some(self.n_max)
    }

    fn visit(&self, n_max: usize, max_length: Option<f64>, sink: &mut dyn FnMut(&OrbitRecord, u64)) -> Result<()> {
        if n_max > self.n_max {
            return Err(Error::IncompleteSource {
                required_n_max: n_max,
                available: self.n_max,
            });
        }
        let cap = max_length.unwrap_or(f64::INFINITY);
        for r in self.records.iter().filter(|r| r.n <= n_max && r.l <= cap) {
            sink(r, 1);
        }
        Ok(())
    }
}

/// Orbits grouped by edge-class content.
///
/// Edges with identical `(r, F)` form a class; two orbits traversing each
/// class equally often have the same length and weight. Closed-walk counts
/// per content vector come from a transfer recursion and prime counts from
/// Möbius inversion over the content gcd, so the cost is polynomial in the
/// word length instead of exponential. Practical only when the number of
/// distinct classes is small.
#[derive(Debug, Clone, Copy)]
pub struct ContentClassSource<'a> {
    pub model: &'a ShiftModel,
}

impl ContentClassSource<'_> {
    pub const MAX_CLASSES: usize = 8;

    fn classes(&self) -> (Vec<usize>, Vec<(f64, f64)>) {
        let m = self.model;
        let k = m.state_count();
        let mut values: Vec<(f64, f64)> = Vec::new();
        let mut class_of = vec![usize::MAX; k * k];
        for (i, j) in m.edges() {
            let v = (m.roof(i, j), m.weight(i, j));
            let g = match values
                .iter()
                .position(|u| u.0.to_bits() == v.0.to_bits() && u.1.to_bits() == v.1.to_bits())
            {
                Some(g) => g,
                None => {
                    values.push(v);
                    values.len() - 1
                }
            };
            class_of[i * k + j] = g;
        }
        (class_of, values)
    }
}

impl OrbitSource for ContentClassSource<'_> {
    fn model(&self) -> &ShiftModel {
        self.model
    }

    fn coverage(&self) -> Option<usize> {
        None
    }

    fn visit(&self, n_max: usize, max_length: Option<f64>, sink: &mut dyn FnMut(&OrbitRecord, u64)) -> Result<()> {
        let k = self.model.state_count();
        let (class_of, values) = self.classes();
        let g_count = values.len();
        if g_count > Self::MAX_CLASSES {
            return Err(Error::InvalidArgument(format!(
                "{g_count} edge classes; content grouping supports at most {}",
                Self::MAX_CLASSES
            )));
        }
        let cap = max_length.unwrap_or(f64::INFINITY);
        let length_of = |c: &[u32]| -> f64 {
            c.iter().zip(&values).map(|(&n, v)| n as f64 * v.0).sum()
        };
        let weight_of = |c: &[u32]| -> f64 {
            c.iter().zip(&values).map(|(&n, v)| n as f64 * v.1).sum()
        };
        let overflow = || Error::Overflow("closed-walk count exceeds u128".into());

        // walks[c][i*k + v]: walks from i to v with class content c.
        let mut layer: BTreeMap<Vec<u32>, Vec<u128>> = BTreeMap::new();
        let mut identity = vec![0u128; k * k];
        for i in 0..k {
            identity[i * k + i] = 1;
        }
        layer.insert(vec![0; g_count], identity);
        let mut closed: BTreeMap<Vec<u32>, u128> = BTreeMap::new();
        for _ in 1..=n_max {
            let mut next: BTreeMap<Vec<u32>, Vec<u128>> = BTreeMap::new();
            for (c, walks) in &layer {
                for v in 0..k {
                    for u in 0..k {
                        let g = class_of[v * k + u];
                        if g == usize::MAX {
                            continue;
                        }
                        let mut c2 = c.clone();
                        c2[g] += 1;
                        if length_of(&c2) > cap {
                            continue;
                        }
                        let slot = next.entry(c2).or_insert_with(|| vec![0; k * k]);
                        for i in 0..k {
                            let x = walks[i * k + v];
                            if x != 0 {
                                slot[i * k + u] = slot[i * k + u].checked_add(x).ok_or_else(overflow)?;
                            }
                        }
                    }
                }
            }
            for (c, walks) in &next {
                let mut tr = 0u128;
                for i in 0..k {
                    tr = tr.checked_add(walks[i * k + i]).ok_or_else(overflow)?;
                }
                if tr > 0 {
                    closed.insert(c.clone(), tr);
                }
            }
            layer = next;
            if layer.is_empty() {
                break;
            }
        }

        let mut by_length: Vec<Vec<(&Vec<u32>, u128)>> = vec![Vec::new(); n_max + 1];
        for (c, &w) in &closed {
            let n: u32 = c.iter().sum();
            by_length[n as usize].push((c, w));
        }
        for (n, group) in by_length.iter().enumerate().skip(1) {
            for &(c, _) in group {
                let g = c.iter().fold(0usize, |a, &x| gcd(a, x as usize));
                let mut primitive: i128 = 0;
                let as_signed = |w: u128| i128::try_from(w).map_err(|_| overflow());
                for d in (1..=g).filter(|d| g % d == 0) {
                    let mu = mobius(d);
                    if mu == 0 {
                        continue;
                    }
                    let reduced: Vec<u32> = c.iter().map(|&x| x / d as u32).collect();
                    let w = as_signed(closed.get(&reduced).copied().unwrap_or(0))?;
                    primitive = primitive.checked_add(mu as i128 * w).ok_or_else(overflow)?;
                }
                if primitive % n as i128 != 0 || primitive < 0 {
                    return Err(Error::Overflow(format!(
                        "inconsistent primitive count {primitive} for content {c:?}"
                    )));
                }
                let mut orbits = (primitive / n as i128) as u128;
                let l = length_of(c);
                if orbits == 0 || l > cap {
                    continue;
                }
                let record = OrbitRecord { n, l, w: weight_of(c) };
                // multiplicities beyond u64 are split over several records
                while orbits > 0 {
                    let part = orbits.min(u64::MAX as u128);
                    sink(&record, part as u64);
                    orbits -= part;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn mobius(mut n: usize) -> i32 {
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonical_form, cyclic_birkhoff, is_lyndon};

    fn full2() -> ShiftModel {
        ShiftModel::source_symbol("full2", &[1.0, 1.0], &[0.0, 0.0]).unwrap()
    }

    fn golden_mean() -> ShiftModel {
        let adj = vec![vec![1, 1], vec![1, 0]];
        let e = [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)];
        ShiftModel::new("gm", &adj, &e, &e).unwrap()
    }

    fn m_gold() -> ShiftModel {
        ShiftModel::source_symbol("m-gold", &[1.0, std::f64::consts::SQRT_2], &[1.0, -1.0]).unwrap()
    }

    /// Brute force: every admissible cyclic word, deduplicated by canonical
    /// representative, keeping only primitive ones.
    fn brute_force(model: &ShiftModel, n_max: usize) -> Vec<Vec<usize>> {
        let k = model.state_count();
        let mut out = std::collections::BTreeSet::new();
        for n in 1..=n_max {
            let total = k.pow(n as u32);
            for code in 0..total {
                let mut x = code;
                let word: Vec<usize> = (0..n)
                    .map(|_| {
                        let d = x % k;
                        x /= k;
                        d
                    })
                    .collect();
                let w = Word(word);
                if w.check_cyclic(model).is_err() {
                    continue;
                }
                let (rep, _, mult) = canonical_form(&w);
                if mult == 1 {
                    out.insert((n, rep.0));
                }
            }
        }
        out.into_iter().map(|(_, w)| w).collect()
    }

    fn collect(model: &ShiftModel, cfg: &EnumConfig) -> Vec<(Vec<usize>, OrbitRecord)> {
        let mut v = Vec::new();
        enumerate_prime_orbits(model, cfg, |w, r| v.push((w.to_vec(), *r))).unwrap();
        v
    }

    #[test]
    fn full_shift_counts() {
        let s = enumerate_prime_orbits(&full2(), &EnumConfig::new(6), |_, _| {}).unwrap();
        assert_eq!(&s.counts_per_n[1..], &[2, 1, 2, 3, 6, 9]);
        assert_eq!(s.total, 23);
        let brute = brute_force(&full2(), 6);
        assert_eq!(brute.len(), 23);
    }

    #[test]
    fn golden_mean_orbits() {
        let got: Vec<Vec<usize>> = collect(&golden_mean(), &EnumConfig::new(3))
            .into_iter()
            .map(|(w, _)| w)
            .collect();
        assert_eq!(got, vec![vec![0], vec![0, 1], vec![0, 0, 1]]);
    }

    #[test]
    fn matches_brute_force_and_birkhoff() {
        let adj = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        let r = [(0, 0, 1.0), (0, 1, 1.3), (1, 1, 0.7), (1, 2, 2.0), (2, 0, 1.1), (2, 2, 0.9)];
        let w = [(0, 0, 0.5), (0, 1, -1.0), (1, 1, 2.0), (1, 2, 0.0), (2, 0, -0.25), (2, 2, 1.0)];
        let m = ShiftModel::new("tri", &adj, &r, &w).unwrap();
        for model in [full2(), golden_mean(), m_gold(), m] {
            let got = collect(&model, &EnumConfig::new(8));
            let mut words: Vec<Vec<usize>> = got.iter().map(|(w, _)| w.clone()).collect();
            // nondecreasing n, then lexicographic
            for pair in got.windows(2) {
                assert!(pair[0].1.n < pair[1].1.n || (pair[0].1.n == pair[1].1.n && pair[0].0 < pair[1].0));
            }
            for (word, rec) in &got {
                assert!(is_lyndon(word));
                let (l, w) = cyclic_birkhoff(&model, &Word(word.clone())).unwrap();
                assert_eq!((l, w), (rec.l, rec.w), "bitwise Birkhoff agreement");
                assert!(rec.l >= rec.n as f64 * model.r_min());
            }
            words.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
            assert_eq!(words, brute_force(&model, 8));
        }
    }

    #[test]
    fn length_cap_filters_exactly() {
        let m = m_gold();
        let all = collect(&m, &EnumConfig::new(12));
        let capped = collect(&m, &EnumConfig::new(12).max_length(9.5));
        let expect: Vec<_> = all.into_iter().filter(|(_, r)| r.l <= 9.5).collect();
        assert_eq!(capped, expect);
    }

    #[test]
    fn two_prefix_shards_partition() {
        let m = m_gold();
        let all = collect(&m, &EnumConfig::new(10));
        let mut union = Vec::new();
        for p in ["0", "1"] {
            let shard = Shard::from_prefixes(vec![p.parse().unwrap()]);
            let part = collect(&m, &EnumConfig::new(10).shard(shard));
            assert!(part.iter().all(|(w, _)| w[0].to_string() == p));
            union.extend(part);
        }
        union.sort_by(|a, b| (a.1.n, &a.0).cmp(&(b.1.n, &b.0)));
        assert_eq!(union, all);
    }

    #[test]
    fn shard_plan_partitions() {
        for model in [m_gold(), golden_mean()] {
            let all = collect(&model, &EnumConfig::new(11));
            for count in [1, 3, 8] {
                let plan = shard_plan(&model, count).unwrap();
                assert_eq!(plan.len(), count);
                let mut union = Vec::new();
                for shard in plan {
                    union.extend(collect(&model, &EnumConfig::new(11).shard(shard)));
                }
                union.sort_by(|a, b| (a.1.n, &a.0).cmp(&(b.1.n, &b.0)));
                assert_eq!(union, all, "count {count}");
            }
        }
    }

    #[test]
    fn sharded_driver_merges() {
        let m = m_gold();
        let plan = shard_plan(&m, 4).unwrap();
        let (accs, summary) =
            enumerate_sharded(&m, &EnumConfig::new(10), &plan, || 0u64, |acc, _, _| *acc += 1).unwrap();
        let single = enumerate_prime_orbits(&m, &EnumConfig::new(10), |_, _| {}).unwrap();
        assert_eq!(accs.iter().sum::<u64>(), single.total);
        assert_eq!(summary.counts_per_n, single.counts_per_n);
    }

    #[test]
    fn bad_shard_prefix_rejected() {
        let shard = Shard::from_prefixes(vec!["11".parse().unwrap()]);
        assert!(enumerate_prime_orbits(&golden_mean(), &EnumConfig::new(4).shard(shard), |_, _| {}).is_err());
    }

    #[test]
    fn overflow_detected_before_emission() {
        let mut emitted = 0;
        let r = enumerate_prime_orbits(&full2(), &EnumConfig::new(70), |_, _| emitted += 1);
        assert!(matches!(r, Err(Error::Overflow(_))));
        assert_eq!(emitted, 0);
    }

    #[test]
    fn necklace_identity_examples() {
        let rows = prime_count_check(&full2(), 4).unwrap();
        assert_eq!(rows[3], PrimeCountRow { n: 4, primes: 3, trace: 16, ok: true });
        let gm = prime_count_check(&golden_mean(), 3).unwrap();
        assert_eq!(gm[2], PrimeCountRow { n: 3, primes: 1, trace: 4, ok: true });
        assert_eq!(gm[0].primes, gm[0].trace);
        assert!(prime_count_check(&m_gold(), 12).unwrap().iter().all(|r| r.ok));
    }

    #[test]
    fn content_classes_agree_with_lyndon() {
        let adj = vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]];
        let r = [(0, 0, 1.0), (0, 1, 1.5), (1, 1, 1.0), (1, 2, 2.0), (2, 0, 1.5), (2, 2, 1.0)];
        let w = [(0, 0, 1.0), (0, 1, -1.0), (1, 1, 1.0), (1, 2, 0.0), (2, 0, -1.0), (2, 2, 1.0)];
        let tri = ShiftModel::new("tri", &adj, &r, &w).unwrap();
        for model in [m_gold(), golden_mean(), tri] {
            let mut lyndon: BTreeMap<usize, (u64, f64, f64)> = BTreeMap::new();
            LyndonSource { model: &model }
                .visit(12, Some(11.0), &mut |rec, m| {
                    let e = lyndon.entry(rec.n).or_default();
                    e.0 += m;
                    e.1 += rec.l * m as f64;
                    e.2 += rec.w * m as f64;
                })
                .unwrap();
            let mut classes: BTreeMap<usize, (u64, f64, f64)> = BTreeMap::new();
            ContentClassSource { model: &model }
                .visit(12, Some(11.0), &mut |rec, m| {
                    let e = classes.entry(rec.n).or_default();
                    e.0 += m;
                    e.1 += rec.l * m as f64;
                    e.2 += rec.w * m as f64;
                })
                .unwrap();
            assert_eq!(lyndon.keys().collect::<Vec<_>>(), classes.keys().collect::<Vec<_>>());
            for (n, a) in &lyndon {
                let b = classes[n];
                assert_eq!(a.0, b.0, "n = {n}");
                assert!((a.1 - b.1).abs() < 1e-9 * a.1.abs().max(1.0));
                assert!((a.2 - b.2).abs() < 1e-9 * a.1.abs().max(1.0));
            }
        }
    }

    #[test]
    fn mobius_values() {
        let mu: Vec<i32> = (1..=12).map(mobius).collect();
        assert_eq!(mu, vec![1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0]);
    }

    #[test]
    fn cached_source_reports_incomplete() {
        let m = m_gold();
        let cache = CachedOrbits { model: m.clone(), records: Vec::new(), n_max: 5 };
        assert!(matches!(
            cache.ensure_complete(10.0),
            Err(Error::IncompleteSource { required_n_max: 10, available: 5 })
        ));
        assert!(cache.ensure_complete(5.0).is_ok());
    }
}
