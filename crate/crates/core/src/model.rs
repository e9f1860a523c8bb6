//! Suspension flows over subshifts of finite type.
//!
//! A [`ShiftModel`] is a primitive 0/1 transition matrix together with a
//! positive roof function `r` and a real observable `F`, both constant on
//! edges. A periodic orbit of the suspension flow is a cyclically admissible
//! word; its length and weight are cyclic Birkhoff sums of `r` and `F`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numbers;

/// Suspension data over a subshift of finite type. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftModel {
    name: String,
    k: usize,
    adjacency: Vec<bool>,
    roof: Vec<f64>,
    weight: Vec<f64>,
    r_min: f64,
}

impl ShiftModel {
    /// Builds a model from a 0/1 matrix and edge-indexed roof/weight entries.
    ///
    /// Every allowed edge must carry exactly one roof and one weight value,
    /// and no forbidden edge may carry either.
    pub fn new(
        name: impl Into<String>,
        adjacency: &[Vec<u8>],
        roof: &[(usize, usize, f64)],
        weight: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let k = adjacency.len();
        if k < 2 {
            return Err(Error::InvalidModel(format!("need at least 2 states, got {k}")));
        }
        let mut adj = vec![false; k * k];
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidModel(format!(
                    "adjacency row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for (j, &a) in row.iter().enumerate() {
                adj[i * k + j] = match a {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(Error::InvalidModel(format!(
                            "adjacency entry ({i},{j}) = {other} is not 0 or 1"
                        )))
                    }
                };
            }
        }
        if !adj.iter().any(|&a| a) {
            return Err(Error::InvalidModel("empty edge set".into()));
        }
        let roof = fill_edges("roof", k, &adj, roof)?;
        let weight = fill_edges("weight", k, &adj, weight)?;
        let mut r_min = f64::INFINITY;
        for (idx, &r) in roof.iter().enumerate() {
            if !adj[idx] {
                continue;
            }
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "roof must be positive: r({},{}) = {r}",
                    idx / k,
                    idx % k
                )));
            }
            r_min = r_min.min(r);
        }
        if let Some(idx) = (0..k * k).find(|&i| adj[i] && !weight[i].is_finite()) {
            return Err(Error::InvalidModel(format!(
                "weight ({},{}) is not finite",
                idx / k,
                idx % k
            )));
        }
        Ok(Self {
            name: name.into(),
            k,
            adjacency: adj,
            roof,
            weight,
            r_min,
        })
    }

    /// Full `k`-shift whose roof and weight depend only on the source symbol.
    pub fn source_symbol(name: impl Into<String>, roof: &[f64], weight: &[f64]) -> Result<Self> {
        let k = roof.len();
        if weight.len() != k {
            return Err(Error::InvalidModel("roof and weight length differ".into()));
        }
        let adjacency = vec![vec![1u8; k]; k];
        let mut r = Vec::with_capacity(k * k);
        let mut w = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                r.push((i, j, roof[i]));
                w.push((i, j, weight[i]));
            }
        }
        Self::new(name, &adjacency, &r, &w)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_count(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.k + j]
    }

    #[inline]
    pub fn roof(&self, i: usize, j: usize) -> f64 {
        self.roof[i * self.k + j]
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weight[i * self.k + j]
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.edges().map(|(i, j)| self.roof(i, j)).fold(0.0, f64::max)
    }

    /// Row-major roof values, zero on forbidden edges.
    pub fn roof_matrix(&self) -> &[f64] {
        &self.roof
    }

    /// Row-major weight values, zero on forbidden edges.
    pub fn weight_matrix(&self) -> &[f64] {
        &self.weight
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    /// Allowed edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.k * self.k)
            .filter(|&idx| self.adjacency[idx])
            .map(|idx| (idx / self.k, idx % self.k))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count()
    }

    /// Same shift and roof with a different observable (row-major, `k*k`).
    /// Entries on forbidden edges are zeroed.
    pub fn with_weight(&self, name: impl Into<String>, weight: &[f64]) -> Result<Self> {
        if weight.len() != self.k * self.k {
            return Err(Error::InvalidModel("weight matrix has wrong size".into()));
        }
        let weight = weight
            .iter()
            .zip(&self.adjacency)
            .map(|(&w, &a)| if a { w } else { 0.0 })
            .collect::<Vec<_>>();
        if weight.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel("weight is not finite".into()));
        }
        Ok(Self {
            name: name.into(),
            weight,
            ..self.clone()
        })
    }

    /// Observable replaced by `F - c*r`.
    pub fn shifted_weight(&self, c: f64) -> Self {
        let weight = self
            .weight
            .iter()
            .zip(&self.roof)
            .zip(&self.adjacency)
            .map(|((&w, &r), &a)| if a { w - c * r } else { 0.0 })
            .collect();
        Self {
            name: format!("{}-shifted", self.name),
            weight,
            ..self.clone()
        }
    }

    /// Relabels states by `perm` (new index of old state `i` is `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k;
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let mut out = self.clone();
        for i in 0..k {
            for j in 0..k {
                let (a, b) = (perm[i] * k + perm[j], i * k + j);
                out.adjacency[a] = self.adjacency[b];
                out.roof[a] = self.roof[b];
                out.weight[a] = self.weight[b];
            }
        }
        Ok(out)
    }

    /// Errors unless the model passes [`validate_model`] as primitive.
    pub fn require_primitive(&self) -> Result<()> {
        let report = validate_model(self);
        if report.primitive {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!(
                "{}: adjacency is not primitive (period {:?})",
                self.name, report.period
            )))
        }
    }
}

fn fill_edges(
    what: &str,
    k: usize,
    adj: &[bool],
    entries: &[(usize, usize, f64)],
) -> Result<Vec<f64>> {
    let mut seen = BTreeMap::new();
    for &(i, j, v) in entries {
        if i >= k || j >= k {
            return Err(Error::InvalidModel(format!("{what} entry ({i},{j}) out of range")));
        }
        if !adj[i * k + j] {
            return Err(Error::InvalidModel(format!(
                "{what} defined on forbidden edge ({i},{j})"
            )));
        }
        if seen.insert((i, j), v).is_some() {
            return Err(Error::InvalidModel(format!("duplicate {what} entry ({i},{j})")));
        }
    }
    let mut out = vec![0.0; k * k];
    for idx in 0..k * k {
        if adj[idx] {
            let (i, j) = (idx / k, idx % k);
            out[idx] = *seen
                .get(&(i, j))
                .ok_or_else(|| Error::InvalidModel(format!("missing {what} for edge ({i},{j})")))?;
        }
    }
    Ok(out)
}

/// A finite sequence of states.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Checks every consecutive pair including the wrap edge.
    pub fn check_cyclic(&self, model: &ShiftModel) -> Result<()> {
        let n = self.0.len();
        for m in 0..n {
            let (a, b) = (self.0[m], self.0[(m + 1) % n]);
            if a >= model.k || b >= model.k || !model.allowed(a, b) {
                return Err(Error::ForbiddenEdge { from: a, to: b });
            }
        }
        Ok(())
    }
}

impl From<&[usize]> for Word {
    fn from(s: &[usize]) -> Self {
        Word(s.to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&s| s < 10) {
            for s in &self.0 {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
            f.write_str(&parts.join("."))
        }
    }
}

impl FromStr for Word {
    type Err = Error;

    /// Digits (`"0110"`) or dot-separated symbols (`"0.12.3"`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("cannot parse word {s:?}"));
        if s.contains('.') {
            s.split('.')
                .map(|p| p.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(Word)
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect::<Result<Vec<_>>>()
                .map(Word)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub primitive: bool,
    pub irreducible: bool,
    /// Gcd of cycle lengths; `None` when the graph is not strongly connected.
    pub period: Option<usize>,
    pub r_min: f64,
    pub warnings: Vec<String>,
}

/// Primitivity, period and length-spectrum diagnostics.
pub fn validate_model(model: &ShiftModel) -> ValidationReport {
    let k = model.k;
    let mut warnings = Vec::new();

    // Wielandt: a primitive k x k matrix has A^m > 0 for m = (k-1)^2 + 1.
    let limit = (k - 1) * (k - 1) + 1;
    let mut power = model.adjacency.clone();
    let mut primitive = power.iter().all(|&a| a);
    for _ in 1..limit {
        if primitive {
            break;
        }
        power = bool_product(&power, &model.adjacency, k);
        primitive = power.iter().all(|&a| a);
    }

    let period = cycle_period(model);
    let irreducible = period.is_some();
    if !irreducible {
        warnings.push("adjacency is not irreducible".to_string());
    } else if let Some(p) = period.filter(|&p| p > 1) {
        warnings.push(format!("adjacency has period {p}; rejected for CLT runs"));
    }

    let mut roofs: Vec<f64> = model.edges().map(|(i, j)| model.roof(i, j)).collect();
    roofs.sort_by(f64::total_cmp);
    roofs.dedup();
    let lattice = if roofs.len() == 1 {
        true
    } else {
        let tol = 1e-9 * roofs[roofs.len() - 1];
        numbers::lattice_test(&roofs, tol)
            .map(|v| v.generator.is_some())
            .unwrap_or(false)
    };
    if lattice {
        warnings.push("arithmetic length spectrum suspected".to_string());
    }

    ValidationReport {
        primitive,
        irreducible,
        period,
        r_min: model.r_min,
        warnings,
    }
}

fn bool_product(a: &[bool], b: &[bool], k: usize) -> Vec<bool> {
    let mut out = vec![false; k * k];
    for i in 0..k {
        for l in 0..k {
            if a[i * k + l] {
                for j in 0..k {
                    out[i * k + j] |= b[l * k + j];
                }
            }
        }
    }
    out
}

/// Period of an irreducible graph via BFS levels from state 0.
fn cycle_period(model: &ShiftModel) -> Option<usize> {
    let k = model.k;
    let reach = |forward: bool| {
        let mut level = vec![usize::MAX; k];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for v in 0..k {
                let edge = if forward { model.allowed(u, v) } else { model.allowed(v, u) };
                if edge && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    };
    let level = reach(true);
    if level.contains(&usize::MAX) || reach(false).contains(&usize::MAX) {
        return None;
    }
    let mut g = 0usize;
    for (u, v) in model.edges() {
        let d = (level[u] + 1).abs_diff(level[v]);
        g = gcd(g, d);
    }
    Some(g)
}

pub(crate) fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Cyclic Birkhoff sums `(l, w)` of roof and weight along a periodic word.
///
/// Summation runs from position 0 in word order, wrap edge last; the
/// enumerator accumulates in the same order, so values agree bitwise.
pub fn cyclic_birkhoff(model: &ShiftModel, word: &Word) -> Result<(f64, f64)> {
    if word.is_empty() {
        return Err(Error::InvalidArgument("empty word".into()));
    }
    word.check_cyclic(model)?;
    let n = word.len();
    let (mut l, mut w) = (0.0, 0.0);
    for m in 0..n {
        let (a, b) = (word.0[m], word.0[(m + 1) % n]);
        l += model.roof(a, b);
        w += model.weight(a, b);
    }
    Ok((l, w))
}

/// Lyndon representative of the primitive root, root length and multiplicity.
pub fn canonical_form(word: &Word) -> (Word, usize, usize) {
    let s = word.as_slice();
    let n = s.len();
    if n == 0 {
        return (Word::default(), 0, 0);
    }
    let p = (1..=n)
        .find(|&p| n.is_multiple_of(p) && (p..n).all(|i| s[i] == s[i - p]))
        .unwrap_or(n);
    let root = &s[..p];
    let best = (0..p)
        .min_by(|&a, &b| {
            let ra = root[a..].iter().chain(&root[..a]);
            let rb = root[b..].iter().chain(&root[..b]);
            ra.cmp(rb)
        })
        .unwrap_or(0);
    let rep: Vec<usize> = root[best..].iter().chain(&root[..best]).copied().collect();
    (Word(rep), p, n / p)
}

/// True when `s` is strictly smaller than each of its nontrivial rotations.
pub fn is_lyndon(s: &[usize]) -> bool {
    let n = s.len();
    n > 0
        && (1..n).all(|r| {
            let rot = s[r..].iter().chain(&s[..r]);
            s.iter().cmp(rot) == std::cmp::Ordering::Less
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn m_gold() -> ShiftModel {
        ShiftModel::source_symbol("m-gold", &[1.0, SQRT2], &[1.0, -1.0]).unwrap()
    }

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn full_shift_is_primitive() {
        let m = ShiftModel::source_symbol("full2", &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let r = validate_model(&m);
        assert!(r.primitive);
        assert_eq!(r.period, Some(1));
    }

    #[test]
    fn flip_is_periodic_not_primitive() {
        let adj = vec![vec![0, 1], vec![1, 0]];
        let e = [(0, 1, 1.0), (1, 0, 1.0)];
        let m = ShiftModel::new("flip", &adj, &e, &e).unwrap();
        let r = validate_model(&m);
        assert!(!r.primitive);
        assert_eq!(r.period, Some(2));
        assert!(m.require_primitive().is_err());
    }

    #[test]
    fn golden_mean_primitive_matches_powers() {
        let adj = vec![vec![1, 1], vec![1, 0]];
        let e = [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)];
        let m = ShiftModel::new("gm", &adj, &e, &e).unwrap();
        // A^2 = [[2,1],[1,1]] > 0, A^3 = [[3,2],[2,1]] > 0
        let a = [[1u32, 1], [1, 0]];
        let mul = |x: [[u32; 2]; 2], y: [[u32; 2]; 2]| {
            let mut o = [[0u32; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    o[i][j] = (0..2).map(|l| x[i][l] * y[l][j]).sum();
                }
            }
            o
        };
        let a2 = mul(a, a);
        let a3 = mul(a2, a);
        assert_eq!(a2, [[2, 1], [1, 1]]);
        assert_eq!(a3, [[3, 2], [2, 1]]);
        assert!(validate_model(&m).primitive);
    }

    #[test]
    fn construction_errors() {
        let adj = vec![vec![1, 1], vec![1, 0]];
        let ok = [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)];
        let forbidden = [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        assert!(ShiftModel::new("x", &adj, &forbidden, &ok).is_err());
        assert!(ShiftModel::new("x", &adj, &ok, &forbidden).is_err());
        let neg = [(0, 0, 1.0), (0, 1, -1.0), (1, 0, 1.0)];
        let err = ShiftModel::new("x", &adj, &neg, &ok).unwrap_err().to_string();
        assert!(err.contains("roof must be positive"), "{err}");
        let empty = vec![vec![0, 0], vec![0, 0]];
        assert!(ShiftModel::new("x", &empty, &[], &[]).is_err());
    }

    #[test]
    fn arithmetic_warning() {
        let m = ShiftModel::source_symbol("m-arith", &[1.0, 2.0], &[1.0, -1.0]).unwrap();
        assert!(validate_model(&m)
            .warnings
            .iter()
            .any(|w| w.contains("arithmetic length spectrum")));
        assert!(validate_model(&m_gold()).warnings.is_empty());
    }

    #[test]
    fn birkhoff_examples() {
        let m = m_gold();
        assert_eq!(cyclic_birkhoff(&m, &w("0")).unwrap(), (1.0, 1.0));
        let (l, wt) = cyclic_birkhoff(&m, &w("01")).unwrap();
        assert!((l - (1.0 + SQRT2)).abs() < 1e-15 && wt == 0.0);
        let (l, wt) = cyclic_birkhoff(&m, &w("0011")).unwrap();
        assert!((l - (2.0 + 2.0 * SQRT2)).abs() < 1e-15 && wt == 0.0);
    }

    #[test]
    fn birkhoff_names_forbidden_edge() {
        let adj = vec![vec![1, 1], vec![1, 0]];
        let e = [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)];
        let m = ShiftModel::new("gm", &adj, &e, &e).unwrap();
        match cyclic_birkhoff(&m, &w("011")) {
            Err(Error::ForbiddenEdge { from: 1, to: 1 }) => {}
            other => panic!("{other:?}"),
        }
        // wrap edge 1 -> 1
        assert!(matches!(
            cyclic_birkhoff(&m, &w("1")),
            Err(Error::ForbiddenEdge { from: 1, to: 1 })
        ));
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonical_form(&w("0101")), (w("01"), 2, 2));
        assert_eq!(canonical_form(&w("011")), (w("011"), 3, 1));
        assert_eq!(canonical_form(&w("110")), (w("011"), 3, 1));
        assert!(is_lyndon(&[0, 1, 1]));
        assert!(!is_lyndon(&[0, 1, 0, 1]));
        assert!(!is_lyndon(&[1, 0]));
    }

    #[test]
    fn permutation_preserves_primitivity() {
        let adj = vec![vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0]];
        let e = [(0, 1, 1.0), (1, 2, 1.5), (2, 0, 1.0), (2, 1, 2.0)];
        let m = ShiftModel::new("x", &adj, &e, &e).unwrap();
        let base = validate_model(&m);
        for perm in [[1, 2, 0], [2, 0, 1], [0, 2, 1]] {
            let p = validate_model(&m.permuted(&perm).unwrap());
            assert_eq!(p.primitive, base.primitive);
            assert_eq!(p.period, base.period);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn birkhoff_rotation_and_power(bits in proptest::collection::vec(0usize..2, 1..16), rot in 0usize..16, reps in 1usize..4) {
                let m = m_gold();
                let word = Word(bits.clone());
                let r = rot % bits.len();
                let rotated = Word(bits[r..].iter().chain(&bits[..r]).copied().collect());
                let (l, wt) = cyclic_birkhoff(&m, &word).unwrap();
                let (l2, w2) = cyclic_birkhoff(&m, &rotated).unwrap();
                prop_assert!((l - l2).abs() < 1e-12 && (wt - w2).abs() < 1e-12);

                let repeated = Word(bits.iter().copied().cycle().take(bits.len() * reps).collect());
                let (lr, wr) = cyclic_birkhoff(&m, &repeated).unwrap();
                prop_assert!((lr - reps as f64 * l).abs() < 1e-10);
                prop_assert!((wr - reps as f64 * wt).abs() < 1e-10);

                let (rep, root, mult) = canonical_form(&repeated);
                prop_assert_eq!(root * mult, repeated.len());
                prop_assert!(is_lyndon(rep.as_slice()));
            }
        }
    }
}
