//! Structural support regions and validity windows for truncated distributions.
//!
//! A distribution in `r` two-sector variables has `2r` scalar exponent axes.
//! Its *support region* is a conjunction of per-axis constraints (allowed
//! cosets mod Z, optional lower/upper bounds) and sum constraints over axis
//! subsets.  The sum constraints are essential: the expansion of
//! `(z - w)^h` is supported on the antidiagonal `e_z + e_w = h`, and weight
//! grading bounds the total exponent sum of a field product from below.
//! Without them, products of truncated series would look like infinite sums.
//!
//! The region is an overapproximation of the true support: a key outside the
//! region is known to carry coefficient zero; a key inside may or may not.

use crate::scalar::Rat;
use std::collections::BTreeSet;
use std::fmt;

/// Exponent tuple addressing one coefficient; length is `2 * vars`.
pub type Key = Vec<Rat>;

/// Allowed cosets mod Z for one axis.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CosetSet {
    /// No coset information (the axis cannot be enumerated).
    Any,
    /// Values must be congruent to one of these representatives in `[0, 1)`.
    These(BTreeSet<Rat>),
}

impl CosetSet {
    pub fn single(c: Rat) -> Self {
        CosetSet::These(BTreeSet::from([c.frac()]))
    }

    pub fn integer() -> Self {
        CosetSet::single(Rat::ZERO)
    }

    pub fn contains(&self, v: Rat) -> bool {
        match self {
            CosetSet::Any => true,
            CosetSet::These(set) => set.contains(&v.frac()),
        }
    }

    fn sumset(&self, other: &CosetSet) -> CosetSet {
        match (self, other) {
            (CosetSet::These(a), CosetSet::These(b)) => {
                let mut out = BTreeSet::new();
                for x in a {
                    for y in b {
                        out.insert((*x + *y).frac());
                    }
                }
                CosetSet::These(out)
            }
            _ => CosetSet::Any,
        }
    }

    fn union(&self, other: &CosetSet) -> CosetSet {
        match (self, other) {
            (CosetSet::These(a), CosetSet::These(b)) => {
                CosetSet::These(a.union(b).copied().collect())
            }
            _ => CosetSet::Any,
        }
    }

    /// Cosets `{k - c mod 1}` for `c` in this set.
    fn reflect(&self, k: Rat) -> CosetSet {
        match self {
            CosetSet::Any => CosetSet::Any,
            CosetSet::These(set) => {
                CosetSet::These(set.iter().map(|c| (k - *c).frac()).collect())
            }
        }
    }
}

/// Per-axis structural support: allowed cosets and optional bounds.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AxisSupport {
    pub cosets: CosetSet,
    pub lo: Option<Rat>,
    pub hi: Option<Rat>,
}

impl AxisSupport {
    pub fn free() -> Self {
        AxisSupport {
            cosets: CosetSet::Any,
            lo: None,
            hi: None,
        }
    }

    /// An axis pinned to the single value `v` (e.g. the trivial sector of a
    /// chiral field).
    pub fn pinned(v: Rat) -> Self {
        AxisSupport {
            cosets: CosetSet::single(v),
            lo: Some(v),
            hi: Some(v),
        }
    }

    pub fn with_cosets(cosets: CosetSet) -> Self {
        AxisSupport {
            cosets,
            lo: None,
            hi: None,
        }
    }

    pub fn contains(&self, v: Rat) -> bool {
        self.cosets.contains(v)
            && self.lo.map_or(true, |lo| v >= lo)
            && self.hi.map_or(true, |hi| v <= hi)
    }

    fn sumset(&self, other: &AxisSupport) -> AxisSupport {
        AxisSupport {
            cosets: self.cosets.sumset(&other.cosets),
            lo: opt_add(self.lo, other.lo),
            hi: opt_add(self.hi, other.hi),
        }
    }

    fn union(&self, other: &AxisSupport) -> AxisSupport {
        AxisSupport {
            cosets: self.cosets.union(&other.cosets),
            lo: opt_min_absorb(self.lo, other.lo),
            hi: opt_max_absorb(self.hi, other.hi),
        }
    }

    pub fn union_with(&self, other: &AxisSupport) -> AxisSupport {
        self.union(other)
    }

    fn intersect(&self, other: &AxisSupport) -> AxisSupport {
        let cosets = match (&self.cosets, &other.cosets) {
            (CosetSet::Any, c) | (c, CosetSet::Any) => c.clone(),
            (CosetSet::These(a), CosetSet::These(b)) => {
                CosetSet::These(a.intersection(b).copied().collect())
            }
        };
        AxisSupport {
            cosets,
            lo: opt_max_keep(self.lo, other.lo),
            hi: opt_min_keep(self.hi, other.hi),
        }
    }

    /// Support of `k - x` for `x` in this axis.
    fn reflect(&self, k: Rat) -> AxisSupport {
        AxisSupport {
            cosets: self.cosets.reflect(k),
            lo: self.hi.map(|hi| k - hi),
            hi: self.lo.map(|lo| k - lo),
        }
    }

    pub fn render(&self) -> String {
        let cosets = match &self.cosets {
            CosetSet::Any => "*".to_string(),
            CosetSet::These(set) => {
                let reps: Vec<String> = set.iter().map(Rat::render).collect();
                format!("{{{}}}", reps.join(","))
            }
        };
        format!(
            "[{},{}]%{}",
            self.lo.map_or("-inf".into(), |r| r.render()),
            self.hi.map_or("+inf".into(), |r| r.render()),
            cosets
        )
    }
}

/// `lo <= sum of the listed axes <= hi`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SumConstraint {
    pub axes: Vec<usize>, // sorted, distinct
    pub lo: Option<Rat>,
    pub hi: Option<Rat>,
}

impl SumConstraint {
    pub fn new(mut axes: Vec<usize>, lo: Option<Rat>, hi: Option<Rat>) -> Self {
        axes.sort_unstable();
        axes.dedup();
        SumConstraint { axes, lo, hi }
    }

    fn holds(&self, key: &[Rat]) -> bool {
        let sum = self
            .axes
            .iter()
            .fold(Rat::ZERO, |acc, &i| acc + key[i]);
        self.lo.map_or(true, |lo| sum >= lo) && self.hi.map_or(true, |hi| sum <= hi)
    }

    pub fn render(&self) -> String {
        let axes: Vec<String> = self.axes.iter().map(|i| format!("e{i}")).collect();
        format!(
            "{}in[{},{}]",
            axes.join("+"),
            self.lo.map_or("-inf".into(), |r| r.render()),
            self.hi.map_or("+inf".into(), |r| r.render()),
        )
    }
}

fn opt_add(a: Option<Rat>, b: Option<Rat>) -> Option<Rat> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        _ => None,
    }
}

fn opt_min_absorb(a: Option<Rat>, b: Option<Rat>) -> Option<Rat> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        _ => None,
    }
}

fn opt_max_absorb(a: Option<Rat>, b: Option<Rat>) -> Option<Rat> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        _ => None,
    }
}

fn opt_max_keep(a: Option<Rat>, b: Option<Rat>) -> Option<Rat> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

fn opt_min_keep(a: Option<Rat>, b: Option<Rat>) -> Option<Rat> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

/// Structural support region of a distribution.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Support {
    pub axes: Vec<AxisSupport>,
    pub sums: Vec<SumConstraint>,
}

impl Support {
    pub fn free(num_axes: usize) -> Self {
        Support {
            axes: vec![AxisSupport::free(); num_axes],
            sums: Vec::new(),
        }
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn contains(&self, key: &[Rat]) -> bool {
        debug_assert_eq!(key.len(), self.axes.len());
        self.axes.iter().zip(key).all(|(a, &v)| a.contains(v))
            && self.sums.iter().all(|s| s.holds(key))
    }

    /// Best known `[lo, hi]` for the sum over `axes` (box-implied, tightened
    /// by matching explicit constraints).
    pub fn sum_range(&self, axes: &[usize]) -> (Option<Rat>, Option<Rat>) {
        let mut lo = Some(Rat::ZERO);
        let mut hi = Some(Rat::ZERO);
        for &i in axes {
            lo = opt_add(lo, self.axes[i].lo);
            hi = opt_add(hi, self.axes[i].hi);
        }
        for s in &self.sums {
            if s.axes == axes {
                lo = opt_max_keep(lo, s.lo);
                hi = opt_min_keep(hi, s.hi);
            }
        }
        (lo, hi)
    }

    /// Support of a product over identical axes (exponents add).
    pub fn sumset(&self, other: &Support) -> Support {
        assert_eq!(self.num_axes(), other.num_axes());
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.sumset(b))
            .collect();
        let mut sets: Vec<Vec<usize>> = Vec::new();
        for s in self.sums.iter().chain(&other.sums) {
            if !sets.contains(&s.axes) {
                sets.push(s.axes.clone());
            }
        }
        let sums = sets
            .into_iter()
            .map(|axes| {
                let (alo, ahi) = self.sum_range(&axes);
                let (blo, bhi) = other.sum_range(&axes);
                SumConstraint::new(axes, opt_add(alo, blo), opt_add(ahi, bhi))
            })
            .collect();
        Support { axes, sums }
    }

    /// Overapproximation of the support of a sum of two distributions.
    pub fn union(&self, other: &Support) -> Support {
        assert_eq!(self.num_axes(), other.num_axes());
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.union(b))
            .collect();
        let mut sets: Vec<Vec<usize>> = Vec::new();
        for s in self.sums.iter().chain(&other.sums) {
            if !sets.contains(&s.axes) {
                sets.push(s.axes.clone());
            }
        }
        let sums = sets
            .into_iter()
            .map(|axes| {
                let (alo, ahi) = self.sum_range(&axes);
                let (blo, bhi) = other.sum_range(&axes);
                SumConstraint::new(axes, opt_min_absorb(alo, blo), opt_max_absorb(ahi, bhi))
            })
            .collect();
        Support { axes, sums }
    }

    pub fn intersect(&self, other: &Support) -> Support {
        assert_eq!(self.num_axes(), other.num_axes());
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.intersect(b))
            .collect();
        let mut sums = self.sums.clone();
        sums.extend(other.sums.iter().cloned());
        Support { axes, sums }
    }

    /// Shifts axis `i` by `delta` (exponent translation).
    pub fn shift_axis(&mut self, i: usize, delta: Rat) {
        let ax = &mut self.axes[i];
        ax.lo = ax.lo.map(|v| v + delta);
        ax.hi = ax.hi.map(|v| v + delta);
        ax.cosets = match &ax.cosets {
            CosetSet::Any => CosetSet::Any,
            CosetSet::These(set) => {
                CosetSet::These(set.iter().map(|c| (*c + delta).frac()).collect())
            }
        };
        for s in &mut self.sums {
            if s.axes.contains(&i) {
                s.lo = s.lo.map(|v| v + delta);
                s.hi = s.hi.map(|v| v + delta);
            }
        }
    }

    /// Removes axis `i`, treating its value as fixed at `value`.
    pub fn project_axis(&mut self, i: usize, value: Rat) {
        self.axes.remove(i);
        self.sums.retain_mut(|s| {
            if let Some(pos) = s.axes.iter().position(|&a| a == i) {
                s.axes.remove(pos);
                s.lo = s.lo.map(|v| v - value);
                s.hi = s.hi.map(|v| v - value);
                if s.axes.is_empty() {
                    return false;
                }
            }
            for a in &mut s.axes {
                if *a > i {
                    *a -= 1;
                }
            }
            true
        });
    }

    /// Merges axis `src` into axis `dst` (exponents add), removing `src`.
    pub fn merge_axis(&mut self, dst: usize, src: usize) {
        assert_ne!(dst, src);
        let merged = self.axes[dst].sumset(&self.axes[src]);
        self.axes[dst] = merged;
        self.axes.remove(src);
        self.sums.retain_mut(|s| {
            let has_src = s.axes.contains(&src);
            let has_dst = s.axes.contains(&dst);
            if has_src != has_dst {
                // A constraint covering only one of the merged axes cannot be
                // expressed after merging; widen by dropping it.
                return false;
            }
            if has_src {
                s.axes.retain(|&a| a != src);
            }
            for a in &mut s.axes {
                if *a > src {
                    *a -= 1;
                }
            }
            s.axes.sort_unstable();
            s.axes.dedup();
            !s.axes.is_empty()
        });
    }

    /// Prepends `fresh` new axes (indices shift up by `fresh.len()`).
    pub fn prepend_axes(&mut self, fresh: Vec<AxisSupport>) {
        let k = fresh.len();
        for s in &mut self.sums {
            for a in &mut s.axes {
                *a += k;
            }
        }
        let mut axes = fresh;
        axes.append(&mut self.axes);
        self.axes = axes;
    }

    /// Reorders axes so that new axis `i` is old axis `perm[i]`.
    pub fn permute_axes(&mut self, perm: &[usize]) {
        assert_eq!(perm.len(), self.axes.len());
        self.axes = perm.iter().map(|&p| self.axes[p].clone()).collect();
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        for s in &mut self.sums {
            for a in &mut s.axes {
                *a = inv[*a];
            }
            s.axes.sort_unstable();
        }
    }

    pub fn push_sum(&mut self, c: SumConstraint) {
        self.sums.push(c);
    }

    pub fn render(&self) -> String {
        let axes: Vec<String> = self.axes.iter().map(AxisSupport::render).collect();
        let mut out = axes.join(" ");
        if !self.sums.is_empty() {
            let sums: Vec<String> = self.sums.iter().map(SumConstraint::render).collect();
            out.push_str("; ");
            out.push_str(&sums.join(" "));
        }
        out
    }

    /// Region of factor-A keys `x` such that `x` is in `self` and `k - x` is
    /// in `other` — the structurally possible decompositions of `k`.
    pub fn decompositions(&self, other: &Support, key: &[Rat]) -> Support {
        assert_eq!(self.num_axes(), other.num_axes());
        assert_eq!(key.len(), self.num_axes());
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .zip(key)
            .map(|((a, b), &k)| a.intersect(&b.reflect(k)))
            .collect();
        let mut sums = self.sums.clone();
        for s in &other.sums {
            let total = s.axes.iter().fold(Rat::ZERO, |acc, &i| acc + key[i]);
            sums.push(SumConstraint::new(
                s.axes.clone(),
                s.hi.map(|hi| total - hi),
                s.lo.map(|lo| total - lo),
            ));
        }
        Support { axes, sums }
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Outcome of trying to enumerate a region.
#[derive(Debug)]
pub enum EnumOutcome {
    /// All lattice points of the region, in lexicographic order.
    Finite(Vec<Key>),
    /// Some axis stayed unbounded after constraint propagation.
    Unbounded { axis: usize },
}

/// Enumerates all lattice points of a support region.
///
/// Bounds are tightened by propagating sum constraints through axis intervals
/// before a depth-first sweep.  Regions with a `CosetSet::Any` axis or an
/// axis that stays unbounded are reported as `Unbounded`.
pub fn enumerate_region(sup: &Support) -> EnumOutcome {
    let n = sup.num_axes();
    let mut lo: Vec<Option<Rat>> = sup.axes.iter().map(|a| a.lo).collect();
    let mut hi: Vec<Option<Rat>> = sup.axes.iter().map(|a| a.hi).collect();

    // Propagate sum constraints into axis bounds (a few fixpoint passes).
    for _ in 0..8 {
        let mut changed = false;
        for s in &sup.sums {
            if let Some(slo) = s.lo {
                for &i in &s.axes {
                    let rest: Option<Rat> = s
                        .axes
                        .iter()
                        .filter(|&&j| j != i)
                        .try_fold(Rat::ZERO, |acc, &j| hi[j].map(|h| acc + h));
                    if let Some(rest) = rest {
                        let cand = slo - rest;
                        if lo[i].map_or(true, |cur| cand > cur) {
                            lo[i] = Some(cand);
                            changed = true;
                        }
                    }
                }
            }
            if let Some(shi) = s.hi {
                for &i in &s.axes {
                    let rest: Option<Rat> = s
                        .axes
                        .iter()
                        .filter(|&&j| j != i)
                        .try_fold(Rat::ZERO, |acc, &j| lo[j].map(|l| acc + l));
                    if let Some(rest) = rest {
                        let cand = shi - rest;
                        if hi[i].map_or(true, |cur| cand < cur) {
                            hi[i] = Some(cand);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    for i in 0..n {
        if lo[i].is_none() || hi[i].is_none() {
            return EnumOutcome::Unbounded { axis: i };
        }
        if matches!(sup.axes[i].cosets, CosetSet::Any) && lo[i] != hi[i] {
            return EnumOutcome::Unbounded { axis: i };
        }
    }

    // Candidate values per axis, ascending.
    let mut per_axis: Vec<Vec<Rat>> = Vec::with_capacity(n);
    for i in 0..n {
        let (l, h) = (lo[i].unwrap(), hi[i].unwrap());
        let mut vals = Vec::new();
        match &sup.axes[i].cosets {
            CosetSet::Any => {
                if l == h {
                    vals.push(l);
                }
            }
            CosetSet::These(cosets) => {
                for &c in cosets {
                    // Smallest value >= l congruent to c mod 1.
                    let d = l - c;
                    let offset = if d.frac().is_zero() { d.floor() } else { d.floor() + 1 };
                    let mut v = c + Rat::int(offset);
                    while v <= h {
                        vals.push(v);
                        v = v + Rat::ONE;
                    }
                }
            }
        }
        vals.sort();
        vals.dedup();
        if vals.is_empty() {
            return EnumOutcome::Finite(Vec::new());
        }
        per_axis.push(vals);
    }

    // DFS with partial-sum pruning.
    let mut out = Vec::new();
    let mut key: Key = Vec::with_capacity(n);
    dfs(sup, &per_axis, &lo, &hi, &mut key, &mut out);
    EnumOutcome::Finite(out)
}

fn dfs(
    sup: &Support,
    per_axis: &[Vec<Rat>],
    lo: &[Option<Rat>],
    hi: &[Option<Rat>],
    key: &mut Key,
    out: &mut Vec<Key>,
) {
    let depth = key.len();
    if depth == per_axis.len() {
        if sup.sums.iter().all(|s| s.holds(key)) {
            out.push(key.clone());
        }
        return;
    }
    'next: for &v in &per_axis[depth] {
        key.push(v);
        // Prune with sum constraints over assigned + future bounds.
        for s in &sup.sums {
            let mut assigned = Rat::ZERO;
            let mut fut_lo = Rat::ZERO;
            let mut fut_hi = Rat::ZERO;
            let mut all_assigned = true;
            for &i in &s.axes {
                if i < key.len() {
                    assigned = assigned + key[i];
                } else {
                    all_assigned = false;
                    fut_lo = fut_lo + lo[i].unwrap();
                    fut_hi = fut_hi + hi[i].unwrap();
                }
            }
            let _ = all_assigned;
            if s.lo.map_or(false, |slo| assigned + fut_hi < slo)
                || s.hi.map_or(false, |shi| assigned + fut_lo > shi)
            {
                key.pop();
                continue 'next;
            }
        }
        dfs(sup, per_axis, lo, hi, key, out);
        key.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int_axis(lo: i64, hi: i64) -> AxisSupport {
        AxisSupport {
            cosets: CosetSet::integer(),
            lo: Some(Rat::int(lo)),
            hi: Some(Rat::int(hi)),
        }
    }

    #[test]
    fn enumerate_box() {
        let sup = Support {
            axes: vec![int_axis(0, 2), int_axis(-1, 0)],
            sums: vec![],
        };
        match enumerate_region(&sup) {
            EnumOutcome::Finite(keys) => assert_eq!(keys.len(), 6),
            _ => panic!("expected finite"),
        }
    }

    #[test]
    fn enumerate_antidiagonal() {
        // z unbounded below, w >= 0, z + w == 3: propagation must bound both.
        let sup = Support {
            axes: vec![
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: None,
                    hi: Some(Rat::int(3)),
                },
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::ZERO),
                    hi: Some(Rat::int(5)),
                },
            ],
            sums: vec![SumConstraint::new(
                vec![0, 1],
                Some(Rat::int(3)),
                Some(Rat::int(3)),
            )],
        };
        match enumerate_region(&sup) {
            EnumOutcome::Finite(keys) => {
                assert_eq!(keys.len(), 6); // (3,0), (2,1), ..., (-2,5)
                for k in &keys {
                    assert_eq!(k[0] + k[1], Rat::int(3));
                }
            }
            _ => panic!("expected finite"),
        }
    }

    #[test]
    fn enumerate_unbounded() {
        let sup = Support {
            axes: vec![AxisSupport {
                cosets: CosetSet::integer(),
                lo: Some(Rat::ZERO),
                hi: None,
            }],
            sums: vec![],
        };
        assert!(matches!(
            enumerate_region(&sup),
            EnumOutcome::Unbounded { axis: 0 }
        ));
    }

    #[test]
    fn enumerate_half_integer_cosets() {
        let sup = Support {
            axes: vec![AxisSupport {
                cosets: CosetSet::single(Rat::new(1, 2)),
                lo: Some(Rat::new(-3, 2)),
                hi: Some(Rat::new(3, 2)),
            }],
            sums: vec![],
        };
        match enumerate_region(&sup) {
            EnumOutcome::Finite(keys) => {
                let vals: Vec<Rat> = keys.into_iter().map(|k| k[0]).collect();
                assert_eq!(
                    vals,
                    vec![Rat::new(-3, 2), Rat::new(-1, 2), Rat::new(1, 2), Rat::new(3, 2)]
                );
            }
            _ => panic!("expected finite"),
        }
    }

    #[test]
    fn decomposition_region_is_finite_on_antidiagonal() {
        // Expansion-like factor: z <= 0 unbounded below, w >= 0 unbounded
        // above, z + w == -2.  Other factor: both axes >= -1 (field-like),
        // unbounded above.  Decompositions of any key must come out finite.
        let expansion = Support {
            axes: vec![
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: None,
                    hi: Some(Rat::int(-2)),
                },
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::ZERO),
                    hi: None,
                },
            ],
            sums: vec![SumConstraint::new(
                vec![0, 1],
                Some(Rat::int(-2)),
                Some(Rat::int(-2)),
            )],
        };
        let series = Support {
            axes: vec![
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::int(-1)),
                    hi: None,
                },
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::int(-1)),
                    hi: None,
                },
            ],
            sums: vec![],
        };
        let key = vec![Rat::int(-3), Rat::int(1)];
        let region = expansion.decompositions(&series, &key);
        match enumerate_region(&region) {
            EnumOutcome::Finite(keys) => {
                assert!(!keys.is_empty());
                for x in &keys {
                    assert!(expansion.contains(x));
                    let rest: Vec<Rat> = key.iter().zip(x).map(|(&k, &v)| k - v).collect();
                    assert!(series.contains(&rest));
                }
            }
            _ => panic!("expected finite decompositions"),
        }
    }

    #[test]
    fn project_and_merge() {
        let mut sup = Support {
            axes: vec![int_axis(0, 3), int_axis(0, 3), int_axis(-1, 1)],
            sums: vec![SumConstraint::new(
                vec![0, 1, 2],
                Some(Rat::int(0)),
                Some(Rat::int(5)),
            )],
        };
        sup.project_axis(2, Rat::int(1));
        assert_eq!(sup.num_axes(), 2);
        assert_eq!(sup.sums[0].axes, vec![0, 1]);
        assert_eq!(sup.sums[0].hi, Some(Rat::int(4)));

        let mut m = Support {
            axes: vec![int_axis(0, 2), int_axis(1, 3)],
            sums: vec![SumConstraint::new(
                vec![0, 1],
                Some(Rat::int(1)),
                Some(Rat::int(5)),
            )],
        };
        m.merge_axis(0, 1);
        assert_eq!(m.num_axes(), 1);
        assert_eq!(m.axes[0].lo, Some(Rat::int(1)));
        assert_eq!(m.axes[0].hi, Some(Rat::int(5)));
        // The all-axes constraint collapses onto the merged axis.
        assert_eq!(m.sums.len(), 1);
        assert_eq!(m.sums[0].axes, vec![0]);
    }
}
