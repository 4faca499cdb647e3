//! Truncated formal distributions in up to three two-sector variables.
//!
//! A [`Dist`] stores finitely many exactly-known coefficients together with
//! the window on which they are known.  Three layers of information coexist:
//!
//! - `coeffs`: nonzero coefficients, keyed by exponent tuples;
//! - `valid`: the finite set of keys whose coefficients are exactly known
//!   (absent key in `valid` means exactly zero);
//! - `support`: a structural overapproximation of the *true* (untruncated)
//!   support; keys outside it are exactly zero even when not in `valid`.
//!
//! Every operation computes the validity of each output key from the
//! structurally possible decompositions, so a key is only ever reported as
//! checked when its value is beyond doubt.

use crate::error::{CalcError, Result};
use crate::exponent::ExpPair;
use crate::scalar::{gen_binom, Rat, Scalar};
use crate::window::{enumerate_region, AxisSupport, CosetSet, EnumOutcome, Key, Support, SumConstraint};
use std::collections::{BTreeMap, BTreeSet};

/// Coefficient spaces for distributions: exact scalars or state vectors.
pub trait Coeff: Clone + PartialEq {
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn scale(&self, s: &Scalar) -> Self;
    fn neg(&self) -> Self;
    fn render(&self) -> String;
}

impl Coeff for Scalar {
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn scale(&self, s: &Scalar) -> Self {
        self * s
    }
    fn neg(&self) -> Self {
        -self
    }
    fn render(&self) -> String {
        Scalar::render(self)
    }
}

/// Expansion-region tag: the list of orderings `(dominant, subordinate)`
/// under which this distribution is a valid expansion.  Multiplying
/// distributions carrying opposite orderings of the same variable pair is an
/// error.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct SectorTag(pub Vec<(usize, usize)>);

impl SectorTag {
    pub fn none() -> Self {
        SectorTag(Vec::new())
    }

    pub fn single(dominant: usize, subordinate: usize) -> Self {
        SectorTag(vec![(dominant, subordinate)])
    }

    pub fn merge(&self, other: &SectorTag) -> Result<SectorTag> {
        let mut out = self.0.clone();
        for &(d, s) in &other.0 {
            if out.contains(&(s, d)) {
                return Err(CalcError::ConflictingSectors(
                    format!("z{d}>z{s}"),
                    format!("z{s}>z{d}"),
                ));
            }
            if !out.contains(&(d, s)) {
                out.push((d, s));
            }
        }
        out.sort_unstable();
        Ok(SectorTag(out))
    }

    /// Dropping all claims; used when adding across sectors.
    pub fn combine_add(&self, other: &SectorTag) -> SectorTag {
        if self == other {
            self.clone()
        } else {
            SectorTag::none()
        }
    }

    pub fn render(&self) -> String {
        if self.0.is_empty() {
            "none".into()
        } else {
            self.0
                .iter()
                .map(|(d, s)| format!("z{d}>z{s}"))
                .collect::<Vec<_>>()
                .join(",")
        }
    }
}

/// A finite union of per-axis coset/interval constraints (a decidable
/// support predicate used by `restrict`).
#[derive(Clone, Debug, Default)]
pub struct SupportSet {
    /// Union of clauses; a key is in the set if some clause accepts it.
    pub clauses: Vec<SupportClause>,
}

/// Conjunction of axis conditions; an empty clause accepts everything.
#[derive(Clone, Debug, Default)]
pub struct SupportClause {
    pub conds: Vec<AxisCond>,
}

#[derive(Clone, Debug)]
pub struct AxisCond {
    pub axis: usize,
    pub coset: Option<Rat>,
    pub lo: Option<Rat>,
    pub hi: Option<Rat>,
}

impl SupportSet {
    pub fn all() -> Self {
        SupportSet {
            clauses: vec![SupportClause::default()],
        }
    }

    pub fn none() -> Self {
        SupportSet::default()
    }

    pub fn contains(&self, key: &[Rat]) -> bool {
        self.clauses.iter().any(|c| {
            c.conds.iter().all(|cond| {
                let v = key[cond.axis];
                cond.coset.map_or(true, |c| v.frac() == c.frac())
                    && cond.lo.map_or(true, |lo| v >= lo)
                    && cond.hi.map_or(true, |hi| v <= hi)
            })
        })
    }
}

/// Which side a two-variable expansion treats as dominant.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Dominant {
    First,
    Second,
}

/// Difference `(z - w)^h` or sum `(x + w)^h` expansion.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExpansionKind {
    Difference,
    Sum,
}

/// Truncated formal distribution with coefficients in `C`.
#[derive(Clone, Debug)]
pub struct Dist<C> {
    pub vars: usize,
    pub coeffs: BTreeMap<Key, C>,
    pub valid: BTreeSet<Key>,
    pub support: Support,
    pub sector: SectorTag,
}

pub fn render_key(key: &[Rat]) -> String {
    let parts: Vec<String> = key.iter().map(Rat::render).collect();
    format!("({})", parts.join(", "))
}

/// Result of comparing two distributions on their common window.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub checked: usize,
    pub mismatch: Option<(Key, String, String)>,
}

impl Comparison {
    pub fn agrees(&self) -> bool {
        self.mismatch.is_none()
    }
}

impl<C: Coeff> Dist<C> {
    pub fn zero(vars: usize, support: Support) -> Self {
        assert!(vars <= 3, "at most 3 simultaneous variables are supported");
        assert_eq!(support.num_axes(), 2 * vars);
        Dist {
            vars,
            coeffs: BTreeMap::new(),
            valid: BTreeSet::new(),
            support,
            sector: SectorTag::none(),
        }
    }

    pub fn num_axes(&self) -> usize {
        2 * self.vars
    }

    /// Inserts an exactly-known coefficient (zero values mark validity only).
    pub fn insert(&mut self, key: Key, value: C) {
        debug_assert_eq!(key.len(), self.num_axes());
        if !value.is_zero() {
            self.coeffs.insert(key.clone(), value);
        }
        self.valid.insert(key);
    }

    pub fn coeff(&self, key: &Key) -> Option<&C> {
        self.coeffs.get(key)
    }

    pub fn is_identically_zero_on_window(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let mut out = self.clone();
        if s.is_zero() {
            out.coeffs.clear();
        } else {
            for v in out.coeffs.values_mut() {
                *v = v.scale(s);
            }
        }
        out
    }

    pub fn negate(&self) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v = v.neg();
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.vars, other.vars);
        let support = self.support.union(&other.support);
        let mut valid = BTreeSet::new();
        for k in &self.valid {
            if other.valid.contains(k) || !other.support.contains(k) {
                valid.insert(k.clone());
            }
        }
        for k in &other.valid {
            if self.valid.contains(k) || !self.support.contains(k) {
                valid.insert(k.clone());
            }
        }
        let mut coeffs: BTreeMap<Key, C> = BTreeMap::new();
        for (k, v) in self.coeffs.iter().chain(other.coeffs.iter()) {
            if !valid.contains(k) {
                continue;
            }
            match coeffs.get_mut(k) {
                Some(acc) => *acc = acc.add(v),
                None => {
                    coeffs.insert(k.clone(), v.clone());
                }
            }
        }
        coeffs.retain(|_, v| !v.is_zero());
        Dist {
            vars: self.vars,
            coeffs,
            valid,
            support,
            sector: self.sector.combine_add(&other.sector),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.negate())
    }

    /// Compares coefficients wherever both sides are exactly known (a key
    /// known on one side and structurally zero on the other also counts).
    pub fn compare(&self, other: &Self) -> Comparison {
        assert_eq!(self.vars, other.vars);
        let mut checked = 0usize;
        let mut mismatch = None;
        let mut check = |key: &Key, lhs: Option<&C>, rhs: Option<&C>| {
            checked += 1;
            if mismatch.is_some() {
                return;
            }
            let equal = match (lhs, rhs) {
                (Some(a), Some(b)) => a == b,
                (Some(a), None) => a.is_zero(),
                (None, Some(b)) => b.is_zero(),
                (None, None) => true,
            };
            if !equal {
                mismatch = Some((
                    key.clone(),
                    lhs.map_or("0".into(), |c| c.render()),
                    rhs.map_or("0".into(), |c| c.render()),
                ));
            }
        };
        for k in &self.valid {
            if other.valid.contains(k) {
                check(k, self.coeffs.get(k), other.coeffs.get(k));
            } else if !other.support.contains(k) {
                check(k, self.coeffs.get(k), None);
            }
        }
        for k in &other.valid {
            if !self.valid.contains(k) && !self.support.contains(k) {
                check(k, None, other.coeffs.get(k));
            }
        }
        Comparison { checked, mismatch }
    }

    /// Derivative in one scalar axis.  With `divided` the result is
    /// `(1/order!) d^order`; divided powers of fractional or negative order do
    /// not arise here (callers guard with the `a^(n) = 0` convention).
    pub fn derive(&self, axis: usize, order: u32, divided: bool) -> Self {
        if order == 0 {
            return self.clone();
        }
        let shift = Rat::int(i64::from(order));
        let extra = if divided {
            Scalar::one()
        } else {
            // order! to undo the divided normalization of gen_binom
            let mut f = Scalar::one();
            for k in 1..=i64::from(order) {
                f = f * Scalar::from_int(k);
            }
            f
        };
        let mut support = self.support.clone();
        support.shift_axis(axis, -shift);
        let mut out = Dist {
            vars: self.vars,
            coeffs: BTreeMap::new(),
            valid: BTreeSet::new(),
            support,
            sector: self.sector.clone(),
        };
        for src in &self.valid {
            let mut dst = src.clone();
            dst[axis] = dst[axis] - shift;
            let factor = gen_binom(src[axis], order) * &extra;
            if let Some(c) = self.coeffs.get(src) {
                if !factor.is_zero() {
                    out.insert(dst, c.scale(&factor));
                    continue;
                }
            }
            out.valid.insert(dst);
        }
        out
    }

    /// Extracts the slice at `key[axis] == value`, dropping the axis.
    ///
    /// Callers always project both axes of a variable before treating the
    /// result as having fewer variables; `vars` is left to `project_var`.
    pub fn project(&self, axis: usize, value: Rat) -> Self {
        let mut support = self.support.clone();
        support.project_axis(axis, value);
        let mut out = Dist {
            vars: self.vars,
            coeffs: BTreeMap::new(),
            valid: BTreeSet::new(),
            support,
            sector: self.sector.clone(),
        };
        for k in &self.valid {
            if k[axis] != value {
                continue;
            }
            let mut dst = k.clone();
            dst.remove(axis);
            if let Some(c) = self.coeffs.get(k) {
                out.coeffs.insert(dst.clone(), c.clone());
            }
            out.valid.insert(dst);
        }
        out
    }

    /// Projects both axes of variable `var` at the given exponent pair and
    /// removes the variable (e.g. the residue `res_z =` coefficient of
    /// `z^{-1} zbar^0` for a holomorphic factor).
    pub fn project_var(&self, var: usize, at: ExpPair) -> Self {
        let mut out = self.project(2 * var, at.n);
        out = out.project(2 * var, at.nbar); // axis 2*var is now the bar axis
        out.vars = self.vars - 1;
        out
    }

    /// Drops coefficients outside the given support set (they become exact
    /// zeros of the restricted distribution).
    pub fn restrict(&self, set: &SupportSet) -> Self {
        let mut out = self.clone();
        out.coeffs.retain(|k, _| set.contains(k));
        out
    }

    /// Multiplies every coefficient's key by a fixed translation (monomial
    /// multiplication `vz^delta`).
    pub fn translate_keys(&self, delta: &[Rat]) -> Self {
        assert_eq!(delta.len(), self.num_axes());
        let mut support = self.support.clone();
        for (i, &d) in delta.iter().enumerate() {
            if !d.is_zero() {
                support.shift_axis(i, d);
            }
        }
        let shift = |k: &Key| -> Key { k.iter().zip(delta).map(|(&a, &b)| a + b).collect() };
        Dist {
            vars: self.vars,
            coeffs: self.coeffs.iter().map(|(k, v)| (shift(k), v.clone())).collect(),
            valid: self.valid.iter().map(|k| shift(k)).collect(),
            support,
            sector: self.sector.clone(),
        }
    }

    /// Reorders variables: new variable `i` is old variable `perm[i]`.
    pub fn reorder_vars(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.vars);
        let axis_perm: Vec<usize> = perm
            .iter()
            .flat_map(|&v| [2 * v, 2 * v + 1])
            .collect();
        let remap = |k: &Key| -> Key { axis_perm.iter().map(|&a| k[a]).collect() };
        let mut support = self.support.clone();
        support.permute_axes(&axis_perm);
        let mut inv = vec![0usize; self.vars];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let sector = SectorTag(
            self.sector
                .0
                .iter()
                .map(|&(d, s)| (inv[d], inv[s]))
                .collect(),
        );
        Dist {
            vars: self.vars,
            coeffs: self.coeffs.iter().map(|(k, v)| (remap(k), v.clone())).collect(),
            valid: self.valid.iter().map(|k| remap(k)).collect(),
            support,
            sector,
        }
    }

    /// Sign flip of `c(vz) -> c(-vz)` in variable `var`: the coefficient of
    /// mode `vn` picks up `(-1)^(n - nbar)`.  Requires every populated key of
    /// the variable to have integral difference.
    pub fn negate_var(&self, var: usize) -> Result<Self> {
        let (az, abar) = (2 * var, 2 * var + 1);
        let mut out = self.clone();
        let mut coeffs = BTreeMap::new();
        for (k, v) in &out.coeffs {
            let diff = k[abar] - k[az];
            let d = diff
                .as_integer()
                .ok_or(CalcError::NonIntegralDifference {
                    pair: ExpPair::new(k[az], k[abar]).to_mode(),
                })?;
            let c = if d.rem_euclid(2) == 0 { v.clone() } else { v.neg() };
            coeffs.insert(k.clone(), c);
        }
        out.coeffs = coeffs;
        Ok(out)
    }

    /// Canonical textual form: sorted `(exponent tuple) -> coefficient`
    /// lines, preceded by the window descriptor.
    pub fn render_canonical(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "window: {} | sector: {} | checked keys: {}\n",
            self.support.render(),
            self.sector.render(),
            self.valid.len()
        ));
        for (k, v) in &self.coeffs {
            out.push_str(&format!("{} -> {}\n", render_key(k), v.render()));
        }
        out
    }
}

/// Multiplies a scalar-coefficient distribution into a `C`-coefficient one
/// over the same variables.  Coefficients are materialized on the `target`
/// region; each output key is marked valid only when every structurally
/// possible decomposition draws on exactly-known inputs.
///
/// With `strict`, a key whose coefficient would need infinitely many terms
/// raises [`CalcError::InfiniteCoefficientSum`]; otherwise such keys are
/// left unknown.
pub fn mul_scalar_left<C: Coeff>(
    a: &Dist<Scalar>,
    b: &Dist<C>,
    target: &Support,
    strict: bool,
) -> Result<Dist<C>> {
    assert_eq!(a.vars, b.vars);
    assert_eq!(target.num_axes(), a.num_axes());
    let sector = a.sector.merge(&b.sector)?;
    let support = a.support.sumset(&b.support);
    let mut out = Dist {
        vars: a.vars,
        coeffs: BTreeMap::new(),
        valid: BTreeSet::new(),
        support,
        sector,
    };
    let keys = match enumerate_region(target) {
        EnumOutcome::Finite(keys) => keys,
        EnumOutcome::Unbounded { axis } => {
            return Err(CalcError::WindowTooSmall(format!(
                "product target region is unbounded along axis {axis}"
            )))
        }
    };
    'keys: for key in keys {
        if !out.support.contains(&key) {
            out.valid.insert(key);
            continue;
        }
        let region = a.support.decompositions(&b.support, &key);
        let decomps = match enumerate_region(&region) {
            EnumOutcome::Finite(d) => d,
            EnumOutcome::Unbounded { .. } => {
                if strict {
                    return Err(CalcError::InfiniteCoefficientSum {
                        key: render_key(&key),
                    });
                }
                continue 'keys;
            }
        };
        let mut acc: Option<C> = None;
        for x in &decomps {
            if !a.valid.contains(x) {
                continue 'keys;
            }
            let rest: Key = key.iter().zip(x).map(|(&k, &v)| k - v).collect();
            if !b.valid.contains(&rest) {
                continue 'keys;
            }
            if let (Some(ca), Some(cb)) = (a.coeffs.get(x), b.coeffs.get(&rest)) {
                let term = cb.scale(ca);
                acc = Some(match acc {
                    Some(cur) => cur.add(&term),
                    None => term,
                });
            }
        }
        if let Some(c) = acc {
            out.insert(key, c);
        } else {
            out.valid.insert(key);
        }
    }
    Ok(out)
}

/// Bounding box of the valid keys, usable as a default product target.
pub fn valid_box<C>(d: &Dist<C>) -> Option<Support> {
    if d.valid.is_empty() {
        return None;
    }
    let n = 2 * d.vars;
    let first = d.valid.iter().next().unwrap().clone();
    let mut lo = first.clone();
    let mut hi = first;
    for k in &d.valid {
        for i in 0..n {
            lo[i] = lo[i].min(k[i]);
            hi[i] = hi[i].max(k[i]);
        }
    }
    let axes = (0..n)
        .map(|i| AxisSupport {
            cosets: d.support.axes[i].cosets.clone(),
            lo: Some(lo[i]),
            hi: Some(hi[i]),
        })
        .collect();
    Some(Support {
        axes,
        sums: d.support.sums.clone(),
    })
}

/// Convenience product with an automatic target: the sum of the factors'
/// valid bounding boxes.
pub fn mul_auto<C: Coeff>(a: &Dist<Scalar>, b: &Dist<C>, strict: bool) -> Result<Dist<C>> {
    let (ba, bb) = match (valid_box(a), valid_box(b)) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            let support = a.support.sumset(&b.support);
            let sector = a.sector.merge(&b.sector)?;
            let mut out = Dist::zero(a.vars, support);
            out.sector = sector;
            return Ok(out);
        }
    };
    let target = ba.sumset(&bb);
    mul_scalar_left(a, b, &target, strict)
}

/// Truncated expansion of `(z_i - z_j)^vh` (difference) or `(z_i + z_j)^vh`
/// (sum) in the region where the chosen side dominates.
///
/// `depth` bounds the expansion index per sector component.  The dominant
/// side carries exponents `vh - vi`, the subordinate side `vi`, for
/// `vi` in `N^2`.
pub fn expand_pow_in(
    vars: usize,
    var_i: usize,
    var_j: usize,
    vh: ExpPair,
    kind: ExpansionKind,
    dominant: Dominant,
    depth: u32,
) -> Result<Dist<Scalar>> {
    assert!(var_i != var_j && var_i < vars && var_j < vars);
    // Sign conventions:
    //  (z-w)^vh            = sum (-1)^vi binom(vh,vi) z^{vh-vi} w^{vi}
    //  (z-w)^vh_{w>z}      = (-1)^vh (w-z)^vh      [needs integral difference]
    //  (x+w)^vh            = sum binom(vh,vi) x^{vh-vi} w^{vi}
    //  (w+x)^vh            = sum binom(vh,vi) w^{vh-vi} x^{vi}
    let (dom_var, sub_var) = match dominant {
        Dominant::First => (var_i, var_j),
        Dominant::Second => (var_j, var_i),
    };
    let mut global_sign = Scalar::one();
    let mut alternating = false;
    match kind {
        ExpansionKind::Difference => {
            alternating = true;
            if dominant == Dominant::Second {
                let s = crate::exponent::int_sign(vh)?;
                if s < 0 {
                    global_sign = -global_sign;
                }
                // (w-z)^vh: roles swap and the alternating sign applies to
                // the z (var_i) side, i.e. still to the subordinate side.
            }
        }
        ExpansionKind::Sum => {}
    }

    let num_axes = 2 * vars;
    let mut axes = vec![AxisSupport::pinned(Rat::ZERO); num_axes];
    let comp = |h: Rat| -> (AxisSupport, AxisSupport, Option<i64>) {
        // Returns (dominant axis, subordinate axis, terminating index).
        let terminates = h.is_natural().then(|| h.as_integer().unwrap());
        let dom = AxisSupport {
            cosets: CosetSet::single(h.frac()),
            lo: terminates.map(|_| Rat::ZERO),
            hi: Some(h),
        };
        let sub = AxisSupport {
            cosets: CosetSet::integer(),
            lo: Some(Rat::ZERO),
            hi: terminates.map(|t| Rat::int(t)),
        };
        (dom, sub, terminates)
    };
    let (dom_z, sub_z, term_z) = comp(vh.n);
    let (dom_zb, sub_zb, term_zb) = comp(vh.nbar);
    axes[2 * dom_var] = dom_z;
    axes[2 * dom_var + 1] = dom_zb;
    axes[2 * sub_var] = sub_z;
    axes[2 * sub_var + 1] = sub_zb;
    let mut support = Support {
        axes,
        sums: Vec::new(),
    };
    support.push_sum(SumConstraint::new(
        vec![2 * var_i, 2 * var_j],
        Some(vh.n),
        Some(vh.n),
    ));
    support.push_sum(SumConstraint::new(
        vec![2 * var_i + 1, 2 * var_j + 1],
        Some(vh.nbar),
        Some(vh.nbar),
    ));

    let mut out: Dist<Scalar> = Dist::zero(vars, support);
    out.sector = SectorTag::single(dom_var, sub_var);

    let max_z = term_z.map_or(i64::from(depth), |t| t.min(i64::from(depth)));
    let max_zb = term_zb.map_or(i64::from(depth), |t| t.min(i64::from(depth)));
    for a in 0..=max_z {
        let bz = gen_binom(vh.n, a as u32);
        for ab in 0..=max_zb {
            let bzb = gen_binom(vh.nbar, ab as u32);
            let mut c = &bz * &bzb * &global_sign;
            if alternating && (a + ab).rem_euclid(2) == 1 {
                c = -c;
            }
            let mut key = vec![Rat::ZERO; num_axes];
            key[2 * dom_var] = vh.n - Rat::int(a);
            key[2 * dom_var + 1] = vh.nbar - Rat::int(ab);
            key[2 * sub_var] = Rat::int(a);
            key[2 * sub_var + 1] = Rat::int(ab);
            out.insert(key, c);
        }
    }
    Ok(out)
}

/// Two-variable expansion with variables `0` (z) and `1` (w).
pub fn expand_pow(vh: ExpPair, dominant: Dominant, depth: u32) -> Result<Dist<Scalar>> {
    expand_pow_in(2, 0, 1, vh, ExpansionKind::Difference, dominant, depth)
}

/// `a(z) -> a(z + w)`: appends a fresh subordinate variable `w` and expands
/// with `w`-powers up to `budget`.
pub fn shift_new_var<C: Coeff>(a: &Dist<C>, budget: u32) -> Dist<C> {
    assert_eq!(a.vars, 1, "shift introduces the second variable");
    let mut support = a.support.clone();
    // New support: z exponents unbounded below (each source key sheds k),
    // w in N^2, with the per-component sums pinned to the source support.
    let (src_z, src_zb) = (support.axes[0].clone(), support.axes[1].clone());
    support.axes[0] = AxisSupport {
        cosets: src_z.cosets.clone(),
        lo: None,
        hi: src_z.hi,
    };
    support.axes[1] = AxisSupport {
        cosets: src_zb.cosets.clone(),
        lo: None,
        hi: src_zb.hi,
    };
    support.axes.push(AxisSupport {
        cosets: CosetSet::integer(),
        lo: Some(Rat::ZERO),
        hi: None,
    });
    support.axes.push(AxisSupport {
        cosets: CosetSet::integer(),
        lo: Some(Rat::ZERO),
        hi: None,
    });
    support.sums = vec![
        SumConstraint::new(vec![0, 2], src_z.lo, src_z.hi),
        SumConstraint::new(vec![1, 3], src_zb.lo, src_zb.hi),
    ];
    for s in &a.support.sums {
        if s.axes == vec![0, 1] {
            support.sums.push(SumConstraint::new(vec![0, 1, 2, 3], s.lo, s.hi));
        }
    }
    let mut out = Dist {
        vars: 2,
        coeffs: BTreeMap::new(),
        valid: BTreeSet::new(),
        support,
        sector: SectorTag::single(0, 1),
    };
    let b = i64::from(budget);
    for src in &a.valid {
        let c = a.coeffs.get(src);
        for k in 0..=b {
            let bz = gen_binom(src[0], k as u32); // binom(e'+k, k) with e'+k = src
            for kb in 0..=(b - k) {
                let bzb = gen_binom(src[1], kb as u32);
                let key = vec![
                    src[0] - Rat::int(k),
                    src[1] - Rat::int(kb),
                    Rat::int(k),
                    Rat::int(kb),
                ];
                match c {
                    Some(c) => {
                        let f = &bz * &bzb;
                        if f.is_zero() {
                            out.valid.insert(key);
                        } else {
                            out.insert(key, c.scale(&f));
                        }
                    }
                    None => {
                        out.valid.insert(key);
                    }
                }
            }
        }
    }
    out
}

/// Directions of a one-parameter family of source keys used by the
/// substitution and diagonal kernels: `source(t) = base + t * dir` per
/// sector component.
struct LineFamily {
    base: Key,
    dir_z: Vec<i8>,
    dir_zb: Vec<i8>,
}

/// Enumerates the parameter region `(t, tbar)` for which `source(t)` stays
/// inside `sup`, starting from the given initial parameter axes (naturals
/// for binomial substitution, free for diagonal splits).  `None` means the
/// region is unbounded (infinitely many candidate terms).
fn family_region(
    sup: &Support,
    fam: &LineFamily,
    t_init: AxisSupport,
    tb_init: AxisSupport,
) -> Option<Vec<(Rat, Rat)>> {
    let mut t_axis = t_init;
    let mut tb_axis = tb_init;
    let mut sums: Vec<SumConstraint> = Vec::new();
    // Per-axis constraints translate to bounds and cosets on t or tbar.
    for (i, ax) in sup.axes.iter().enumerate() {
        for (dir, axis_ref) in [(fam.dir_z[i], &mut t_axis), (fam.dir_zb[i], &mut tb_axis)] {
            if dir == 0 {
                continue;
            }
            // source_i = base_i + dir * t must lie within [lo, hi].
            let (lo, hi) = (ax.lo, ax.hi);
            let (tlo, thi) = if dir > 0 {
                (lo.map(|l| l - fam.base[i]), hi.map(|h| h - fam.base[i]))
            } else {
                (hi.map(|h| fam.base[i] - h), lo.map(|l| fam.base[i] - l))
            };
            if let Some(tlo) = tlo {
                axis_ref.lo = Some(axis_ref.lo.map_or(tlo, |cur| cur.max(tlo)));
            }
            if let Some(thi) = thi {
                axis_ref.hi = Some(axis_ref.hi.map_or(thi, |cur| cur.min(thi)));
            }
            if let CosetSet::These(set) = &ax.cosets {
                // t must be congruent to dir * (c - base_i) for some coset c.
                let shifted: std::collections::BTreeSet<Rat> = set
                    .iter()
                    .map(|&c| {
                        if dir > 0 {
                            (c - fam.base[i]).frac()
                        } else {
                            (fam.base[i] - c).frac()
                        }
                    })
                    .collect();
                axis_ref.cosets = match &axis_ref.cosets {
                    CosetSet::Any => CosetSet::These(shifted),
                    CosetSet::These(cur) => {
                        CosetSet::These(cur.intersection(&shifted).copied().collect())
                    }
                };
            }
        }
    }
    // Sum constraints with uniform step coefficients become constraints on
    // t, tbar, or t + tbar; mixed-sign ones are dropped (overapproximation),
    // and constant ones must hold outright.
    for s in &sup.sums {
        let cz: i64 = s.axes.iter().map(|&i| i64::from(fam.dir_z[i])).sum();
        let czb: i64 = s.axes.iter().map(|&i| i64::from(fam.dir_zb[i])).sum();
        let base_sum = s.axes.iter().fold(Rat::ZERO, |acc, &i| acc + fam.base[i]);
        match (cz, czb) {
            (0, 0) => {
                if s.lo.map_or(false, |lo| base_sum < lo)
                    || s.hi.map_or(false, |hi| base_sum > hi)
                {
                    return Some(Vec::new());
                }
            }
            _ => {
                // sum = base_sum + cz * t + czb * tbar within [lo, hi]
                if cz >= 0 && czb >= 0 {
                    sums.push(SumConstraint::new(
                        match (cz, czb) {
                            (0, _) => vec![1],
                            (_, 0) => vec![0],
                            _ => vec![0, 1],
                        },
                        s.lo.map(|lo| lo - base_sum),
                        s.hi.map(|hi| hi - base_sum),
                    ));
                } else if cz <= 0 && czb <= 0 {
                    sums.push(SumConstraint::new(
                        match (cz, czb) {
                            (0, _) => vec![1],
                            (_, 0) => vec![0],
                            _ => vec![0, 1],
                        },
                        s.hi.map(|hi| base_sum - hi),
                        s.lo.map(|lo| base_sum - lo),
                    ));
                }
                // Mixed signs: dropped.
            }
        }
    }
    let region = Support {
        axes: vec![t_axis, tb_axis],
        sums,
    };
    match enumerate_region(&region) {
        EnumOutcome::Finite(keys) => Some(keys.into_iter().map(|k| (k[0], k[1])).collect()),
        EnumOutcome::Unbounded { .. } => None,
    }
}

fn natural_axis() -> AxisSupport {
    AxisSupport {
        cosets: CosetSet::integer(),
        lo: Some(Rat::ZERO),
        hi: None,
    }
}

impl<C: Coeff> Dist<C> {
    /// Diagonal evaluation: substitutes variable `src := ` variable `dst`
    /// (both sector components), summing coefficients onto the merged keys.
    ///
    /// Requires a finite witness per key: the structural support must bound
    /// the number of contributing terms, which is exactly the "monomial
    /// times power series" presentation.  Fails with `NotInBracketSpace`
    /// otherwise (when `strict`).
    pub fn diagonal(&self, dst: usize, src: usize, target: &Support, strict: bool) -> Result<Self> {
        self.diagonal_derived(dst, src, (0, 0), target, strict)
    }

    /// Fused `d^{(orders)}_{src} self |_{src = dst}`: the divided derivative
    /// in variable `src` followed by the diagonal merging `src` into `dst`.
    ///
    /// The fusion matters for validity: a contribution whose binomial factor
    /// vanishes is exactly zero even when the underlying coefficient is
    /// unverified.
    pub fn diagonal_derived(
        &self,
        dst: usize,
        src: usize,
        orders: (u32, u32),
        target: &Support,
        strict: bool,
    ) -> Result<Self> {
        assert_ne!(dst, src);
        let korders = ExpPair::int(i64::from(orders.0), i64::from(orders.1));
        let mut support = self.support.clone();
        // Merge the z axes, then the bar axes.  merge_axis removes the
        // source axis, so later indices account for earlier removals.
        support.merge_axis(2 * dst, 2 * src);
        let (dstb, srcb) = {
            let fix = |a: usize| if a > 2 * src { a - 1 } else { a };
            (fix(2 * dst + 1), fix(2 * src + 1))
        };
        support.merge_axis(dstb, srcb);
        // Index of the merged variable's axes in the result layout.
        let merged_var = if dst > src { dst - 1 } else { dst };
        support.shift_axis(2 * merged_var, -korders.n);
        support.shift_axis(2 * merged_var + 1, -korders.nbar);
        assert_eq!(target.num_axes(), support.num_axes());

        let mut out = Dist {
            vars: self.vars - 1,
            coeffs: BTreeMap::new(),
            valid: BTreeSet::new(),
            support,
            sector: SectorTag::none(),
        };
        let keys = match enumerate_region(target) {
            EnumOutcome::Finite(k) => k,
            EnumOutcome::Unbounded { axis } => {
                return Err(CalcError::WindowTooSmall(format!(
                    "diagonal target region unbounded along axis {axis}"
                )))
            }
        };
        // Map a merged key back to a source template: the merged exponent is
        // placed wholly on `dst`, with (t, tbar) moved over to `src`.
        let n_src_axes = self.num_axes();
        let kept: Vec<usize> = (0..n_src_axes)
            .filter(|&a| a != 2 * src && a != 2 * src + 1)
            .collect();
        'keys: for key in keys {
            if !out.support.contains(&key) {
                out.valid.insert(key);
                continue;
            }
            let mut base = vec![Rat::ZERO; n_src_axes];
            for (pos, &a) in kept.iter().enumerate() {
                base[a] = key[pos];
            }
            // The split total carries the derivative orders.
            base[2 * dst] = base[2 * dst] + korders.n;
            base[2 * dst + 1] = base[2 * dst + 1] + korders.nbar;
            let mut dir_z = vec![0i8; n_src_axes];
            let mut dir_zb = vec![0i8; n_src_axes];
            dir_z[2 * dst] = -1;
            dir_z[2 * src] = 1;
            dir_zb[2 * dst + 1] = -1;
            dir_zb[2 * src + 1] = 1;
            let fam = LineFamily { base, dir_z, dir_zb };
            let terms =
                match family_region(&self.support, &fam, AxisSupport::free(), AxisSupport::free()) {
                    Some(t) => t,
                    None => {
                        if strict {
                            return Err(CalcError::NotInBracketSpace {
                                key: render_key(&key),
                            });
                        }
                        continue 'keys;
                    }
                };
            let mut acc: Option<C> = None;
            for (t, tb) in terms {
                let mut srckey = fam.base.clone();
                srckey[2 * dst] = srckey[2 * dst] - t;
                srckey[2 * src] = srckey[2 * src] + t;
                srckey[2 * dst + 1] = srckey[2 * dst + 1] - tb;
                srckey[2 * src + 1] = srckey[2 * src + 1] + tb;
                let factor = if orders == (0, 0) {
                    Scalar::one()
                } else {
                    gen_binom(srckey[2 * src], orders.0) * gen_binom(srckey[2 * src + 1], orders.1)
                };
                if factor.is_zero() {
                    // Exactly zero contribution regardless of validity.
                    continue;
                }
                if !self.valid.contains(&srckey) {
                    continue 'keys;
                }
                if let Some(c) = self.coeffs.get(&srckey) {
                    let term = c.scale(&factor);
                    acc = Some(match acc {
                        Some(cur) => cur.add(&term),
                        None => term,
                    });
                }
            }
            if let Some(c) = acc {
                out.insert(key, c);
            } else {
                out.valid.insert(key);
            }
        }
        Ok(out)
    }

    /// Substitution `z_i -> z_i + z_j` in the `z_i`-dominant region: the
    /// result coefficient at `e` is
    /// `sum_k binom(e_i + k, k) a(.., e_i + k, .., e_j - k, ..)`.
    pub fn subst_sum(&self, var_i: usize, var_j: usize, target: &Support) -> Result<Self> {
        assert_ne!(var_i, var_j);
        let (iz, izb, jz, jzb) = (2 * var_i, 2 * var_i + 1, 2 * var_j, 2 * var_j + 1);
        let mut support = self.support.clone();
        // z_i sheds arbitrary nonnegative amounts to z_j.
        // Integer steps leave cosets unchanged; only the bounds open up.
        let old_i = (support.axes[iz].clone(), support.axes[izb].clone());
        let old_j = (support.axes[jz].clone(), support.axes[jzb].clone());
        support.axes[iz] = AxisSupport {
            cosets: old_i.0.cosets.clone(),
            lo: None,
            hi: old_i.0.hi,
        };
        support.axes[izb] = AxisSupport {
            cosets: old_i.1.cosets.clone(),
            lo: None,
            hi: old_i.1.hi,
        };
        support.axes[jz] = AxisSupport {
            cosets: old_j.0.cosets.clone(),
            lo: old_j.0.lo,
            hi: None,
        };
        support.axes[jzb] = AxisSupport {
            cosets: old_j.1.cosets.clone(),
            lo: old_j.1.lo,
            hi: None,
        };
        // Sums containing both moved axes (per component) survive; others
        // involving a moved axis are dropped.
        support.sums.retain(|s| {
            let touch_z = s.axes.contains(&iz) || s.axes.contains(&jz);
            let touch_zb = s.axes.contains(&izb) || s.axes.contains(&jzb);
            let both_z = s.axes.contains(&iz) && s.axes.contains(&jz);
            let both_zb = s.axes.contains(&izb) && s.axes.contains(&jzb);
            (!touch_z || both_z) && (!touch_zb || both_zb)
        });
        support.push_sum(SumConstraint::new(vec![iz, jz], {
            let (lo, _) = self.support.sum_range(&[iz, jz]);
            lo
        }, {
            let (_, hi) = self.support.sum_range(&[iz, jz]);
            hi
        }));
        support.push_sum(SumConstraint::new(vec![izb, jzb], {
            let (lo, _) = self.support.sum_range(&[izb, jzb]);
            lo
        }, {
            let (_, hi) = self.support.sum_range(&[izb, jzb]);
            hi
        }));

        let mut out = Dist {
            vars: self.vars,
            coeffs: BTreeMap::new(),
            valid: BTreeSet::new(),
            support,
            sector: SectorTag::single(var_i, var_j).merge(&self.sector).unwrap_or_else(|_| SectorTag::none()),
        };
        let keys = match enumerate_region(target) {
            EnumOutcome::Finite(k) => k,
            EnumOutcome::Unbounded { axis } => {
                return Err(CalcError::WindowTooSmall(format!(
                    "substitution target region unbounded along axis {axis}"
                )))
            }
        };
        'keys: for key in keys {
            if !out.support.contains(&key) {
                out.valid.insert(key);
                continue;
            }
            let mut dir_z = vec![0i8; self.num_axes()];
            let mut dir_zb = vec![0i8; self.num_axes()];
            dir_z[iz] = 1;
            dir_z[jz] = -1;
            dir_zb[izb] = 1;
            dir_zb[jzb] = -1;
            let fam = LineFamily {
                base: key.clone(),
                dir_z,
                dir_zb,
            };
            let terms = match family_region(&self.support, &fam, natural_axis(), natural_axis()) {
                Some(t) => t,
                None => continue 'keys,
            };
            let mut acc: Option<C> = None;
            for (t, tb) in terms {
                let (t, tb) = (t.as_integer().unwrap(), tb.as_integer().unwrap());
                let mut srckey = key.clone();
                srckey[iz] = srckey[iz] + Rat::int(t);
                srckey[jz] = srckey[jz] - Rat::int(t);
                srckey[izb] = srckey[izb] + Rat::int(tb);
                srckey[jzb] = srckey[jzb] - Rat::int(tb);
                if !self.valid.contains(&srckey) {
                    continue 'keys;
                }
                if let Some(c) = self.coeffs.get(&srckey) {
                    let f = gen_binom(srckey[iz], t as u32) * gen_binom(srckey[izb], tb as u32);
                    if !f.is_zero() {
                        let term = c.scale(&f);
                        acc = Some(match acc {
                            Some(cur) => cur.add(&term),
                            None => term,
                        });
                    }
                }
            }
            if let Some(c) = acc {
                out.insert(key, c);
            } else {
                out.valid.insert(key);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::SumConstraint;

    fn sc(n: i64) -> Scalar {
        Scalar::from_int(n)
    }

    fn key2(a: i64, b: i64) -> Key {
        vec![Rat::int(a), Rat::ZERO, Rat::int(b), Rat::ZERO]
    }

    #[test]
    fn expand_pow_inverse_power() {
        // (z-w)^{-1} in z>w: sum_i z^{-1-i} w^i, all coefficients 1.
        let d = expand_pow(ExpPair::int(-1, 0), Dominant::First, 3).unwrap();
        for i in 0..=3 {
            assert_eq!(d.coeff(&key2(-1 - i, i)), Some(&sc(1)));
        }
        assert_eq!(d.coeffs.len(), 4);
    }

    #[test]
    fn expand_pow_constant() {
        let d = expand_pow(ExpPair::int(0, 0), Dominant::First, 3).unwrap();
        assert_eq!(d.coeffs.len(), 1);
        assert_eq!(d.coeff(&key2(0, 0)), Some(&sc(1)));
        let e = expand_pow(ExpPair::int(0, 0), Dominant::Second, 3).unwrap();
        assert_eq!(e.coeff(&key2(0, 0)), Some(&sc(1)));
    }

    #[test]
    fn expand_pow_polynomial_case_sectors_agree() {
        for n in 0..4 {
            let a = expand_pow(ExpPair::int(n, 0), Dominant::First, 8).unwrap();
            let b = expand_pow(ExpPair::int(n, 0), Dominant::Second, 8).unwrap();
            let cmp = a.compare(&b);
            assert!(cmp.agrees(), "sector mismatch for n={n}: {:?}", cmp.mismatch);
            assert!(cmp.checked > 0);
        }
    }

    #[test]
    fn delta_distribution_from_sector_difference() {
        // (z-w)^{-1}_{z>w} - (z-w)^{-1}_{w>z} = sum_{i in Z} z^{-1-i} w^i.
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 4).unwrap();
        let b = expand_pow(ExpPair::int(-1, 0), Dominant::Second, 4).unwrap();
        let delta = a.sub(&b);
        // z>w side carries z^{-1-i} w^i for i >= 0; w>z side carries
        // -(-1)^{-1}(w-z)^{-1} = +sum w^{-1-i} z^i, i.e. keys (i, -1-i).
        for i in 0..=4 {
            assert_eq!(delta.coeff(&key2(-1 - i, i)), Some(&sc(1)));
            assert_eq!(delta.coeff(&key2(i, -1 - i)), Some(&sc(1)));
        }
    }

    #[test]
    fn product_of_inverse_and_direct_power_is_one() {
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 6).unwrap();
        let b = expand_pow(ExpPair::int(1, 0), Dominant::First, 6).unwrap();
        let prod = mul_auto(&a, &b, false).unwrap();
        assert_eq!(prod.coeff(&key2(0, 0)), Some(&sc(1)));
        for (k, _) in &prod.coeffs {
            assert_eq!(k, &key2(0, 0), "unexpected key {:?}", k);
        }
        assert!(prod.valid.len() > 1);
    }

    #[test]
    fn product_of_half_powers() {
        // (z-w)^{-1/2,-1/2} * (z-w)^{-1/2,1/2} = (z-w)^{-1,0} on the window.
        let h1 = ExpPair::new(Rat::new(-1, 2), Rat::new(-1, 2));
        let h2 = ExpPair::new(Rat::new(-1, 2), Rat::new(1, 2));
        let a = expand_pow(h1, Dominant::First, 6).unwrap();
        let b = expand_pow(h2, Dominant::First, 6).unwrap();
        let prod = mul_auto(&a, &b, false).unwrap();
        let expect = expand_pow(ExpPair::int(-1, 0), Dominant::First, 6).unwrap();
        let cmp = prod.compare(&expect);
        assert!(cmp.agrees(), "mismatch: {:?}", cmp.mismatch);
        assert!(cmp.checked >= 7);
    }

    #[test]
    fn conflicting_sectors_error() {
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 3).unwrap();
        let b = expand_pow(ExpPair::int(-1, 0), Dominant::Second, 3).unwrap();
        assert!(matches!(
            mul_auto(&a, &b, true),
            Err(CalcError::ConflictingSectors(_, _))
        ));
    }

    #[test]
    fn derive_monomial() {
        // d_z z^{-1} = -z^{-2}
        let mut d: Dist<Scalar> = Dist::zero(1, Support::free(2));
        d.insert(vec![Rat::int(-1), Rat::ZERO], sc(1));
        let dd = d.derive(0, 1, false);
        assert_eq!(dd.coeff(&vec![Rat::int(-2), Rat::ZERO]), Some(&sc(-1)));
    }

    #[test]
    fn derive_divided() {
        // (1/2!) d_z^2 z^3 = 3 z
        let mut d: Dist<Scalar> = Dist::zero(1, Support::free(2));
        d.insert(vec![Rat::int(3), Rat::ZERO], sc(1));
        let dd = d.derive(0, 2, true);
        assert_eq!(dd.coeff(&vec![Rat::int(1), Rat::ZERO]), Some(&sc(3)));
    }

    #[test]
    fn derive_expansion_matches_shifted_expansion() {
        // d_z (z-w)^{-1} = -(z-w)^{-2} coefficientwise on the window.
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 6).unwrap();
        let da = a.derive(0, 1, false);
        let b = expand_pow(ExpPair::int(-2, 0), Dominant::First, 6).unwrap();
        let target = b.negate();
        let cmp = da.compare(&target);
        assert!(cmp.agrees(), "mismatch: {:?}", cmp.mismatch);
        assert!(cmp.checked >= 6);
    }

    #[test]
    fn residue_examples() {
        // res_z z^{-1} = 1; res_z z^{-1/2} = 0.
        let mut d: Dist<Scalar> = Dist::zero(1, Support::free(2));
        d.insert(vec![Rat::int(-1), Rat::ZERO], sc(1));
        d.insert(vec![Rat::new(-1, 2), Rat::ZERO], sc(5));
        let r = d.project_var(0, ExpPair::int(-1, 0));
        assert_eq!(r.vars, 0);
        assert_eq!(r.coeff(&vec![]), Some(&sc(1)));
    }

    #[test]
    fn residue_of_expansion() {
        // res_z of (z-w)^{-1}_{z>w} = 1 (the w-constant term).
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 5).unwrap();
        let r = a.project(0, Rat::int(-1)).project(0, Rat::ZERO);
        // Remaining axes are (w, wbar); coefficient at w^0 is 1.
        assert_eq!(r.coeffs.get(&vec![Rat::ZERO, Rat::ZERO]), Some(&sc(1)));
        assert_eq!(r.coeffs.len(), 1);
    }

    #[test]
    fn residue_after_derivative_vanishes() {
        // A Laurent window straddling the residue exponent: the derivative's
        // z^{-1} coefficient must be an exactly-known zero.
        let mut d: Dist<Scalar> = Dist::zero(1, Support::free(2));
        for e in -3..=3 {
            d.insert(vec![Rat::int(e), Rat::ZERO], sc(e + 10));
        }
        let dd = d.derive(0, 1, false);
        let r = dd.project(0, Rat::int(-1)).project(0, Rat::ZERO);
        assert!(r.coeffs.is_empty(), "residue of a derivative must vanish");
        assert!(!r.valid.is_empty());
    }

    #[test]
    fn shift_polynomial() {
        // z^2 -> z^2 + 2 z w + w^2.
        let mut d: Dist<Scalar> = Dist::zero(1, Support {
            axes: vec![
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::ZERO),
                    hi: Some(Rat::int(2)),
                },
                AxisSupport::pinned(Rat::ZERO),
            ],
            sums: vec![],
        });
        d.insert(vec![Rat::int(2), Rat::ZERO], sc(1));
        let s = shift_new_var(&d, 4);
        assert_eq!(s.coeff(&key2(2, 0)), Some(&sc(1)));
        assert_eq!(s.coeff(&key2(1, 1)), Some(&sc(2)));
        assert_eq!(s.coeff(&key2(0, 2)), Some(&sc(1)));
        assert_eq!(s.coeffs.len(), 3);
    }

    #[test]
    fn shift_inverse_power() {
        // z^{-1} -> z^{-1} - w z^{-2} + w^2 z^{-3} - w^3 z^{-4}.
        let mut sup = Support::free(2);
        sup.axes[0] = AxisSupport {
            cosets: CosetSet::integer(),
            lo: Some(Rat::int(-1)),
            hi: Some(Rat::int(-1)),
        };
        sup.axes[1] = AxisSupport::pinned(Rat::ZERO);
        let mut d: Dist<Scalar> = Dist::zero(1, sup);
        d.insert(vec![Rat::int(-1), Rat::ZERO], sc(1));
        let s = shift_new_var(&d, 3);
        assert_eq!(s.coeff(&key2(-1, 0)), Some(&sc(1)));
        assert_eq!(s.coeff(&key2(-2, 1)), Some(&sc(-1)));
        assert_eq!(s.coeff(&key2(-3, 2)), Some(&sc(1)));
        assert_eq!(s.coeff(&key2(-4, 3)), Some(&sc(-1)));
    }

    #[test]
    fn diagonal_monomial_times_polynomial() {
        // z^{-1/2} w^{-1/2} (1 + z w) -> z^{-1} (1 + z^2).
        let mut sup = Support::free(4);
        for ax in [0, 2] {
            sup.axes[ax] = AxisSupport {
                cosets: CosetSet::single(Rat::new(1, 2)),
                lo: Some(Rat::new(-1, 2)),
                hi: Some(Rat::new(1, 2)),
            };
        }
        sup.axes[1] = AxisSupport::pinned(Rat::ZERO);
        sup.axes[3] = AxisSupport::pinned(Rat::ZERO);
        let mut d: Dist<Scalar> = Dist::zero(2, sup);
        d.insert(
            vec![Rat::new(-1, 2), Rat::ZERO, Rat::new(-1, 2), Rat::ZERO],
            sc(1),
        );
        d.insert(
            vec![Rat::new(1, 2), Rat::ZERO, Rat::new(1, 2), Rat::ZERO],
            sc(1),
        );
        let target = Support {
            axes: vec![
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::int(-2)),
                    hi: Some(Rat::int(2)),
                },
                AxisSupport::pinned(Rat::ZERO),
            ],
            sums: vec![],
        };
        let diag = d.diagonal(0, 1, &target, true).unwrap();
        assert_eq!(diag.coeff(&vec![Rat::int(-1), Rat::ZERO]), Some(&sc(1)));
        assert_eq!(diag.coeff(&vec![Rat::int(1), Rat::ZERO]), Some(&sc(1)));
        assert_eq!(diag.coeffs.len(), 2);
    }

    #[test]
    fn diagonal_of_expansion_fails() {
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 5).unwrap();
        let target = Support {
            axes: vec![
                AxisSupport {
                    cosets: CosetSet::integer(),
                    lo: Some(Rat::int(-3)),
                    hi: Some(Rat::int(3)),
                },
                AxisSupport::pinned(Rat::ZERO),
            ],
            sums: vec![],
        };
        assert!(matches!(
            a.diagonal(0, 1, &target, true),
            Err(CalcError::NotInBracketSpace { .. })
        ));
    }

    #[test]
    fn restrict_examples() {
        let a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 4).unwrap();
        let full = a.restrict(&SupportSet::all());
        assert_eq!(full.coeffs.len(), a.coeffs.len());
        let none = a.restrict(&SupportSet::none());
        assert!(none.coeffs.is_empty());
        assert_eq!(none.valid.len(), a.valid.len());
        // Integer-coset-only restriction keeps an already integral support.
        let integral = SupportSet {
            clauses: vec![SupportClause {
                conds: (0..4)
                    .map(|axis| AxisCond {
                        axis,
                        coset: Some(Rat::ZERO),
                        lo: None,
                        hi: None,
                    })
                    .collect(),
            }],
        };
        let r = a.restrict(&integral);
        assert_eq!(r.coeffs.len(), a.coeffs.len());
    }

    #[test]
    fn expansion_multiplicativity_random_halves() {
        let pairs = [
            (ExpPair::new(Rat::new(1, 2), Rat::ZERO), ExpPair::new(Rat::new(-3, 2), Rat::ZERO)),
            (ExpPair::int(-2, 1), ExpPair::int(1, -1)),
            (
                ExpPair::new(Rat::new(-1, 3), Rat::new(2, 3)),
                ExpPair::new(Rat::new(1, 3), Rat::new(-2, 3)),
            ),
        ];
        for (h1, h2) in pairs {
            let a = expand_pow(h1, Dominant::First, 5).unwrap();
            let b = expand_pow(h2, Dominant::First, 5).unwrap();
            let prod = mul_auto(&a, &b, false).unwrap();
            let expect = expand_pow(h1 + h2, Dominant::First, 5).unwrap();
            let cmp = prod.compare(&expect);
            assert!(cmp.agrees(), "mismatch for {h1},{h2}: {:?}", cmp.mismatch);
            assert!(cmp.checked > 3);
        }
    }

    #[test]
    fn sector_sign_law() {
        // (z-w)^vh_{w>z} = int_sign(vh) * expansion of (w-z)^vh in its own
        // power-series region, coefficientwise.
        let vh = ExpPair::new(Rat::new(1, 2), Rat::new(-1, 2));
        let lhs = expand_pow(vh, Dominant::Second, 5).unwrap();
        // (w-z)^vh with w dominant == swap roles in the z>w code path.
        let swapped = expand_pow_in(2, 1, 0, vh, ExpansionKind::Difference, Dominant::First, 5)
            .unwrap();
        let sign = crate::exponent::int_sign(vh).unwrap();
        let rhs = if sign < 0 { swapped.negate() } else { swapped };
        let cmp = lhs.compare(&rhs);
        assert!(cmp.agrees(), "mismatch: {:?}", cmp.mismatch);
    }

    #[test]
    fn negate_var_sign() {
        // c(z) = z^{-2}: mode vn = 1, (-1)^{n - nbar} with nbar = -1 gives
        // (-1)^2 = +1 at key (-2, 0); at key (-1, 0) mode 0 gives (-1)^1.
        let mut d: Dist<Scalar> = Dist::zero(1, Support::free(2));
        d.insert(vec![Rat::int(-2), Rat::ZERO], sc(1));
        d.insert(vec![Rat::int(-1), Rat::ZERO], sc(1));
        let n = d.negate_var(0).unwrap();
        assert_eq!(n.coeff(&vec![Rat::int(-2), Rat::ZERO]), Some(&sc(1)));
        assert_eq!(n.coeff(&vec![Rat::int(-1), Rat::ZERO]), Some(&sc(-1)));
    }

    #[test]
    fn mul_respects_strictness_on_infinite_sums() {
        // Multiplying opposite-sector expansions coefficientwise needs
        // infinitely many terms; with sectors erased this must surface as an
        // infinite-sum error in strict mode.
        let mut a = expand_pow(ExpPair::int(-1, 0), Dominant::First, 4).unwrap();
        let mut b = expand_pow(ExpPair::int(-1, 0), Dominant::Second, 4).unwrap();
        a.sector = SectorTag::none();
        b.sector = SectorTag::none();
        // Remove the terminating bounds so the supports genuinely overlap.
        let err = mul_auto(&a, &b, true);
        assert!(matches!(err, Err(CalcError::InfiniteCoefficientSum { .. })));
    }

    #[test]
    fn sum_constraint_carried_through_products() {
        let a = expand_pow(ExpPair::int(-2, 0), Dominant::First, 4).unwrap();
        let b = expand_pow(ExpPair::int(3, 0), Dominant::First, 4).unwrap();
        let prod = mul_auto(&a, &b, false).unwrap();
        let sums: Vec<&SumConstraint> = prod
            .support
            .sums
            .iter()
            .filter(|s| s.axes == vec![0, 2])
            .collect();
        assert!(!sums.is_empty());
        assert_eq!(sums[0].lo, Some(Rat::int(1)));
        assert_eq!(sums[0].hi, Some(Rat::int(1)));
    }
}
