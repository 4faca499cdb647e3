//! The OPE engine: field application chains, locality detection, reduced
//! OPE extraction, generalized n-th products, closure under products, and
//! multiple locality.
//!
//! Extraction works per basis vector and certifies every claim within an
//! explicit window: the coefficient field recovered from the `z > w`
//! ordering must agree with the one recovered from the `w > z` ordering,
//! which is exactly locality on the checked window.

use crate::dist::{mul_auto, render_key, Coeff, Dist, ExpansionKind, Dominant};
use crate::dist::expand_pow_in;
use crate::error::{CalcError, Result};
use crate::exponent::{exchange_sign, ExpPair};
use crate::scalar::{Rat, Scalar};
use crate::space::{FieldRealization, GradedSpace, SpanOutcome, SpanSolver, StateVec};
use crate::window::{enumerate_region, AxisSupport, CosetSet, EnumOutcome, Key, Support, SumConstraint};
use std::collections::{BTreeMap, BTreeSet};

/// Tunables for extraction and window sizes.
#[derive(Clone, Debug)]
pub struct EngineOpts {
    /// Expansion materialization depth per sector component.
    pub depth: u32,
    /// Attempts when searching for the minimal pole order.
    pub max_pole_bump: u32,
}

impl Default for EngineOpts {
    fn default() -> Self {
        EngineOpts {
            depth: 8,
            max_pole_bump: 6,
        }
    }
}

// ---------------------------------------------------------------------------
// Field application
// ---------------------------------------------------------------------------

/// Per-component exponent lattice of a field's modes.
fn mode_axes(f: &FieldRealization) -> (AxisSupport, AxisSupport) {
    if let Some((z, zb)) = &f.exponent_support {
        return (z.clone(), zb.clone());
    }
    if f.modes.is_empty() {
        return (AxisSupport::pinned(Rat::ZERO), AxisSupport::pinned(Rat::ZERO));
    }
    let mut zc = BTreeSet::new();
    let mut zbc = BTreeSet::new();
    for vn in f.modes.keys() {
        let e = vn.to_exponent();
        zc.insert(e.n.frac());
        zbc.insert(e.nbar.frac());
    }
    let z = if f.is_antiholomorphic() {
        AxisSupport::pinned(Rat::ZERO)
    } else {
        AxisSupport::with_cosets(CosetSet::These(zc))
    };
    let zb = if f.is_holomorphic() {
        AxisSupport::pinned(Rat::ZERO)
    } else {
        AxisSupport::with_cosets(CosetSet::These(zbc))
    };
    (z, zb)
}

/// All lattice exponents the field can populate on the truncation, i.e.
/// with per-component weight bookkeeping inside the space.
fn exponent_grid(space: &GradedSpace, f: &FieldRealization) -> Vec<ExpPair> {
    let mut wn = Rat::ZERO;
    let mut wnb = Rat::ZERO;
    for b in &space.basis {
        wn = wn.max(b.weight.n);
        wnb = wnb.max(b.weight.nbar);
    }
    let (mut az, mut azb) = mode_axes(f);
    let lo_n = -wn - f.weight.n;
    let lo_nb = -wnb - f.weight.nbar;
    az.lo = Some(az.lo.map_or(lo_n, |v| v.max(lo_n)));
    azb.lo = Some(azb.lo.map_or(lo_nb, |v| v.max(lo_nb)));
    let total_hi = space.max_weight - f.weight.total();
    let region = Support {
        axes: vec![az, azb],
        sums: vec![SumConstraint::new(vec![0, 1], None, Some(total_hi))],
    };
    match enumerate_region(&region) {
        EnumOutcome::Finite(keys) => keys
            .into_iter()
            .map(|k| ExpPair::new(k[0], k[1]))
            .collect(),
        EnumOutcome::Unbounded { .. } => Vec::new(),
    }
}

/// Applies a field in a fresh variable prepended as variable 0.
///
/// `sum_lo` is the exact per-component lower bound for the exponent sums of
/// the resulting chain (grading: intermediate weights are nonnegative).
fn apply_field(
    space: &GradedSpace,
    f: &FieldRealization,
    d: &Dist<StateVec>,
    sum_lo: (Rat, Rat),
) -> Dist<StateVec> {
    let grid = exponent_grid(space, f);
    let (az, azb) = mode_axes(f);
    let mut support = d.support.clone();
    support.prepend_axes(vec![az, azb]);
    let axes_n: Vec<usize> = (0..support.num_axes()).step_by(2).collect();
    let axes_nb: Vec<usize> = (0..support.num_axes()).skip(1).step_by(2).collect();
    support.push_sum(SumConstraint::new(axes_n, Some(sum_lo.0), None));
    support.push_sum(SumConstraint::new(axes_nb, Some(sum_lo.1), None));

    let mut out: Dist<StateVec> = Dist {
        vars: d.vars + 1,
        coeffs: BTreeMap::new(),
        valid: BTreeSet::new(),
        support,
        sector: d.sector.clone(),
    };
    let zero = StateVec::zeros(space.dim());
    for k in &d.valid {
        let u = d.coeffs.get(k).unwrap_or(&zero);
        for e in &grid {
            match f.apply_mode(space, e.to_mode(), u) {
                Some(img) => {
                    let mut key = Vec::with_capacity(k.len() + 2);
                    key.push(e.n);
                    key.push(e.nbar);
                    key.extend_from_slice(k);
                    out.insert(key, img);
                }
                None => {}
            }
        }
    }
    out
}

/// `fields[0](z_0) fields[1](z_1) ... v`, applied right to left.  Axes come
/// out in the order `z_0, zbar_0, z_1, zbar_1, ...`.
pub fn apply_chain(
    space: &GradedSpace,
    fields: &[&FieldRealization],
    v: &StateVec,
) -> Dist<StateVec> {
    let mut d: Dist<StateVec> = Dist::zero(0, Support::free(0));
    d.insert(Vec::new(), v.clone());
    let base = space.weight_of(v).unwrap_or(ExpPair::ZERO);
    let mut wn = -base.n;
    let mut wnb = -base.nbar;
    for f in fields.iter().rev() {
        wn = wn - f.weight.n;
        wnb = wnb - f.weight.nbar;
        d = apply_field(space, f, &d, (wn, wnb));
    }
    d
}

// ---------------------------------------------------------------------------
// Locality and extraction
// ---------------------------------------------------------------------------

/// Windowed result of a reduced-OPE extraction.
#[derive(Clone, Debug)]
pub struct OpeTerm {
    /// Pole exponent pair of the term `c / (vz - vw)^vh`.
    pub vh: ExpPair,
    /// Coefficient field data per quantified state, aligned with `states`.
    pub parts: Vec<Dist<StateVec>>,
}

#[derive(Clone, Debug)]
pub struct ReducedOpe {
    pub terms: Vec<OpeTerm>,
    /// Basis indices the extraction quantified over.
    pub states: Vec<usize>,
    /// Field metadata of the pair (weights, parities).
    pub a_weight: ExpPair,
    pub b_weight: ExpPair,
    pub a_parity: crate::exponent::Parity,
    pub b_parity: crate::exponent::Parity,
    /// Total coefficient keys certified during extraction.
    pub checked_keys: usize,
}

impl ReducedOpe {
    /// Terms sorted by coset key for stable presentation.
    pub fn sorted_vh(&self) -> Vec<ExpPair> {
        let mut v: Vec<ExpPair> = self.terms.iter().map(|t| t.vh).collect();
        v.sort();
        v
    }
}

fn coset_signature(key: &[Rat]) -> Vec<Rat> {
    key.iter().map(|r| r.frac()).collect()
}

/// Groups the nonzero coefficients of a distribution by coset signature.
fn group_by_coset<C: Coeff>(d: &Dist<C>) -> BTreeMap<Vec<Rat>, Dist<C>> {
    let mut out: BTreeMap<Vec<Rat>, Dist<C>> = BTreeMap::new();
    for (k, c) in &d.coeffs {
        let sig = coset_signature(k);
        let entry = out.entry(sig).or_insert_with(|| Dist {
            vars: d.vars,
            coeffs: BTreeMap::new(),
            valid: d.valid.clone(),
            support: d.support.clone(),
            sector: d.sector.clone(),
        });
        entry.coeffs.insert(k.clone(), c.clone());
    }
    out
}

struct GroupStats {
    m_z: Rat,
    m_zb: Rat,
    m_w: Rat,
    m_wb: Rat,
    s: Rat,
    sb: Rat,
    populated: bool,
}

fn group_stats<C: Coeff>(p: &Dist<C>, q: &Dist<C>) -> GroupStats {
    let mut st = GroupStats {
        m_z: Rat::ZERO,
        m_zb: Rat::ZERO,
        m_w: Rat::ZERO,
        m_wb: Rat::ZERO,
        s: Rat::ZERO,
        sb: Rat::ZERO,
        populated: false,
    };
    let mut first_p = true;
    for k in p.coeffs.keys() {
        let (s, sb) = (k[0] + k[2], k[1] + k[3]);
        if first_p {
            st.m_w = k[2];
            st.m_wb = k[3];
            st.s = s;
            st.sb = sb;
            first_p = false;
        } else {
            st.m_w = st.m_w.min(k[2]);
            st.m_wb = st.m_wb.min(k[3]);
            st.s = st.s.min(s);
            st.sb = st.sb.min(sb);
        }
    }
    let mut first_q = true;
    for k in q.coeffs.keys() {
        if first_q {
            st.m_z = k[0];
            st.m_zb = k[1];
            first_q = false;
        } else {
            st.m_z = st.m_z.min(k[0]);
            st.m_zb = st.m_zb.min(k[1]);
        }
    }
    st.populated = !first_p && !first_q;
    st
}

/// Extraction core shared by the OPE (difference) and duality (sum)
/// channels.
///
/// `p` holds the first-ordering data per instance, `q` the second-ordering
/// data.  For the difference channel these are `a(z)b(w)v` and
/// `zeta^{ab} b(w)a(z)v`; for the sum channel the `x`-dominant and
/// `w`-dominant sides.  Returns the terms `(vh, parts)` such that within the
/// window `p = sum_i parts_i * expansion(-vh_i)` in the first region and
/// likewise for `q` in the second region, with identical parts — which is
/// the locality (resp. duality) certificate.
pub fn extract_terms<C: Coeff>(
    p: &[Dist<C>],
    q: &[Dist<C>],
    kind: ExpansionKind,
    hints: &[ExpPair],
    opts: &EngineOpts,
    label: (&str, &str),
) -> Result<(Vec<(ExpPair, Vec<Dist<C>>)>, usize)> {
    assert_eq!(p.len(), q.len());
    let n = p.len();
    if n == 0 {
        return Ok((Vec::new(), 0));
    }
    let not_local = |detail: String| CalcError::NotLocal {
        a: label.0.into(),
        b: label.1.into(),
        detail,
    };
    // Group signatures over all instances.
    let mut p_groups: Vec<BTreeMap<Vec<Rat>, Dist<C>>> = Vec::with_capacity(n);
    let mut q_groups: Vec<BTreeMap<Vec<Rat>, Dist<C>>> = Vec::with_capacity(n);
    for (pv, qv) in p.iter().zip(q) {
        p_groups.push(group_by_coset(pv));
        q_groups.push(group_by_coset(qv));
    }
    let mut sigs: BTreeSet<Vec<Rat>> = BTreeSet::new();
    for g in &p_groups {
        sigs.extend(g.keys().cloned());
    }

    // Pole coset per signature: integral by default; a hint matches when its
    // fractional fingerprint (z in -h + Z, w integral for the coefficient
    // lattice) reproduces the signature.
    let hint_for_sig = |sig: &[Rat]| -> ExpPair {
        for h in hints {
            let expect = vec![(-h.n).frac(), (-h.nbar).frac(), Rat::ZERO, Rat::ZERO];
            if sig == expect.as_slice() {
                return *h;
            }
        }
        ExpPair::ZERO
    };
    // The restriction of an instance to a coset group it does not meet:
    // zero at every exactly-known key, support inherited (unknown keys stay
    // unknown).
    let zero_dist = |template: &Dist<C>| -> Dist<C> {
        Dist {
            vars: template.vars,
            coeffs: BTreeMap::new(),
            valid: template.valid.clone(),
            support: template.support.clone(),
            sector: template.sector.clone(),
        }
    };

    let mut terms: Vec<(ExpPair, Vec<Dist<C>>)> = Vec::new();
    let mut explained_q_sigs: BTreeSet<Vec<Rat>> = BTreeSet::new();
    let mut checked = 0usize;

    for sig in &sigs {
        let hint = hint_for_sig(sig);
        let q_sig = |h: ExpPair| -> Vec<Rat> {
            vec![
                (sig[0] + h.n).frac(),
                (sig[1] + h.nbar).frac(),
                (sig[2] - h.n).frac(),
                (sig[3] - h.nbar).frac(),
            ]
        };
        // Statistics across instances.
        let mut stats: Vec<GroupStats> = Vec::new();
        let mut h_est: Option<ExpPair> = None;
        for i in 0..n {
            let pv = p_groups[i].get(sig).cloned().unwrap_or_else(|| zero_dist(&p[i]));
            let qv = q_groups[i]
                .get(&q_sig(hint))
                .cloned()
                .unwrap_or_else(|| zero_dist(&q[i]));
            let st = group_stats(&pv, &qv);
            if st.populated {
                let cand = ExpPair::new(st.m_z + st.m_w - st.s, st.m_zb + st.m_wb - st.sb);
                h_est = Some(match h_est {
                    None => cand,
                    Some(cur) => ExpPair::new(cur.n.max(cand.n), cur.nbar.max(cand.nbar)),
                });
            }
            stats.push(st);
        }
        let Some(mut vh) = h_est else {
            // No instance populates both orderings: the window cannot pin a
            // pole order, let alone certify agreement.
            return Err(CalcError::WindowTooSmall(format!(
                "first ordering populates coset signature {sig:?} but the second \
                 ordering has no certified coefficients there"
            )));
        };
        // Snap the fractional part onto the pole coset.
        vh = ExpPair::new(
            hint.n + Rat::int((vh.n - hint.n).floor()),
            hint.nbar + Rat::int((vh.nbar - hint.nbar).floor()),
        );
        let mut success: Option<Vec<Dist<C>>> = None;
        let mut last_err: Option<CalcError> = None;
        'bump: for _ in 0..=opts.max_pole_bump {
            let mut parts: Vec<Dist<C>> = Vec::with_capacity(n);
            let mut group_checked = 0usize;
            let e1 = expand_pow_in(2, 0, 1, vh, kind, Dominant::First, opts.depth)?;
            let e2 = expand_pow_in(2, 0, 1, vh, kind, Dominant::Second, opts.depth)?;
            for i in 0..n {
                let pv = p_groups[i]
                    .get(sig)
                    .cloned()
                    .unwrap_or_else(|| zero_dist(&p[i]));
                let qv = q_groups[i]
                    .get(&q_sig(vh))
                    .cloned()
                    .unwrap_or_else(|| zero_dist(&q[i]));
                let mut c1 = mul_auto(&e1, &pv, false)?;
                let c2 = mul_auto(&e2, &qv, false)?;
                // Certification (i): the coefficient field stays above the
                // per-instance witness bounds (its monomial-times-power-series
                // presentation).
                let st = &stats[i];
                if st.populated {
                    let wit = (st.m_z, st.m_zb, st.m_w, st.m_wb);
                    let mut bump = ExpPair::ZERO;
                    for k in c1.coeffs.keys() {
                        if k[0] < wit.0 || k[2] < wit.2 {
                            bump = ExpPair::new(Rat::ONE, bump.nbar);
                        }
                        if k[1] < wit.1 || k[3] < wit.3 {
                            bump = ExpPair::new(bump.n, Rat::ONE);
                        }
                    }
                    if bump != ExpPair::ZERO {
                        vh = vh + bump;
                        last_err = Some(CalcError::WindowTooSmall(format!(
                            "coefficient field for {sig:?} escapes below its witness bound"
                        )));
                        continue 'bump;
                    }
                }
                // Certification (ii): both orderings yield the same field.
                let cmp = c1.compare(&c2);
                if let Some((key, lhs, rhs)) = cmp.mismatch {
                    return Err(not_local(format!(
                        "orderings disagree at {}: {} vs {}",
                        render_key(&key),
                        lhs,
                        rhs
                    )));
                }
                group_checked += cmp.checked;
                // Declare the certified witness bounds structurally.
                if st.populated {
                    for (axis, lo) in [(0, st.m_z), (1, st.m_zb), (2, st.m_w), (3, st.m_wb)] {
                        let cur = &mut c1.support.axes[axis];
                        cur.lo = Some(cur.lo.map_or(lo, |v| v.max(lo)));
                    }
                }
                // The agreement of both orderings certifies a sector-free
                // presentation.
                c1.sector = crate::dist::SectorTag::none();
                parts.push(c1);
            }
            checked += group_checked;
            success = Some(parts);
            break;
        }
        match success {
            Some(parts) => {
                explained_q_sigs.insert(q_sig(vh));
                terms.push((vh, parts));
            }
            None => {
                return Err(last_err.unwrap_or_else(|| {
                    CalcError::WindowTooSmall("pole order search exhausted".into())
                }))
            }
        }
    }

    // Unmatched second-ordering groups falsify the shared-coefficient
    // presentation.
    for qg in &q_groups {
        for qs in qg.keys() {
            if !explained_q_sigs.contains(qs) {
                return Err(not_local(format!(
                    "second ordering populates coset signature {qs:?} with no matching term"
                )));
            }
        }
    }
    Ok((terms, checked))
}

/// Extracts the reduced OPE of two field realizations over the given basis
/// states.
pub fn extract_reduced_ope(
    space: &GradedSpace,
    a: &FieldRealization,
    b: &FieldRealization,
    states: &[usize],
    hints: &[ExpPair],
    opts: &EngineOpts,
) -> Result<ReducedOpe> {
    let zeta = exchange_sign(a.parity, b.parity);
    let mut p = Vec::with_capacity(states.len());
    let mut q = Vec::with_capacity(states.len());
    for &i in states {
        let v = space.unit(i);
        p.push(apply_chain(space, &[a, b], &v));
        let qv = apply_chain(space, &[b, a], &v).reorder_vars(&[1, 0]);
        q.push(if zeta < 0 { qv.negate() } else { qv });
    }
    let (terms, checked) = extract_terms(
        &p,
        &q,
        ExpansionKind::Difference,
        hints,
        opts,
        (&a.name, &b.name),
    )?;
    Ok(ReducedOpe {
        terms: terms
            .into_iter()
            .map(|(vh, parts)| OpeTerm { vh, parts })
            .collect(),
        states: states.to_vec(),
        a_weight: a.weight,
        b_weight: b.weight,
        a_parity: a.parity,
        b_parity: b.parity,
        checked_keys: checked,
    })
}

/// Least `N >= 0` such that `(z-w)^N [a(z), b(vw)] = 0` on the window.
///
/// `a` must be holomorphic.  The commutator of a local pair is supported on
/// finitely many antidiagonals `e_z + e_w = -1 - k`; `N` is one past the
/// deepest populated one.
pub fn locality_order(
    space: &GradedSpace,
    a: &FieldRealization,
    b: &FieldRealization,
    states: &[usize],
    opts: &EngineOpts,
) -> Result<i64> {
    if !a.is_holomorphic() {
        return Err(CalcError::InvalidSpec(format!(
            "locality order requires a holomorphic first field, got {}",
            a.name
        )));
    }
    let zeta = exchange_sign(a.parity, b.parity);
    let mut order = 0i64;
    for &i in states {
        let v = space.unit(i);
        let p = apply_chain(space, &[a, b], &v);
        let qv = apply_chain(space, &[b, a], &v).reorder_vars(&[1, 0]);
        let q = if zeta < 0 { qv.negate() } else { qv };
        let comm = p.sub(&q);
        for k in comm.coeffs.keys() {
            let anti = -(k[0] + k[2]) - Rat::ONE;
            let Some(kk) = anti.as_integer() else {
                return Err(CalcError::NotLocal {
                    a: a.name.clone(),
                    b: b.name.clone(),
                    detail: format!("commutator key off the integer antidiagonal: {}", render_key(k)),
                });
            };
            if kk < 0 {
                return Err(CalcError::NotLocal {
                    a: a.name.clone(),
                    b: b.name.clone(),
                    detail: format!("commutator populated at regular key {}", render_key(k)),
                });
            }
            order = order.max(kk + 1);
        }
    }
    // Certify: (z-w)^order kills the commutator on the window.
    let poly = expand_pow_in(
        2,
        0,
        1,
        ExpPair::int(order, 0),
        ExpansionKind::Difference,
        Dominant::First,
        opts.depth.max(order as u32 + 1),
    )?;
    for &i in states {
        let v = space.unit(i);
        let p = apply_chain(space, &[a, b], &v);
        let qv = apply_chain(space, &[b, a], &v).reorder_vars(&[1, 0]);
        let q = if zeta < 0 { qv.negate() } else { qv };
        let comm = p.sub(&q);
        let killed = mul_auto(&poly, &comm, false)?;
        if let Some((k, c)) = killed.coeffs.iter().next() {
            return Err(CalcError::Inconsistent(format!(
                "(z-w)^{order} [{}, {}] != 0 at {}: {}",
                a.name,
                b.name,
                render_key(k),
                c.render()
            )));
        }
    }
    Ok(order)
}

/// Target grid for a one-variable field datum on the truncation:
/// per-component weight floors, total-weight ceiling, cosets from `merged`.
fn one_var_grid(space: &GradedSpace, weight: ExpPair, merged: &Support) -> Support {
    let mut wn = Rat::ZERO;
    let mut wnb = Rat::ZERO;
    for b in &space.basis {
        wn = wn.max(b.weight.n);
        wnb = wnb.max(b.weight.nbar);
    }
    let lo_n = -wn - weight.n;
    let lo_nb = -wnb - weight.nbar;
    let hi_total = space.max_weight - weight.total();
    let clamp = |ax: &AxisSupport, lo: Rat, other_lo: Rat| -> AxisSupport {
        let lo = ax.lo.map_or(lo, |v| v.max(lo));
        let hi_cap = hi_total - other_lo;
        AxisSupport {
            cosets: ax.cosets.clone(),
            lo: Some(lo),
            hi: Some(ax.hi.map_or(hi_cap, |v| v.min(hi_cap))),
        }
    };
    let axes = vec![
        clamp(&merged.axes[0], lo_n, lo_nb),
        clamp(&merged.axes[1], lo_nb, lo_n),
    ];
    Support {
        axes,
        sums: vec![SumConstraint::new(vec![0, 1], None, Some(hi_total))],
    }
}

/// Assembles per-state one-variable data into a field realization.
///
/// `states` lists the basis indices with data; all other columns are
/// unverified.
pub fn assemble_field(
    space: &GradedSpace,
    name: String,
    weight: ExpPair,
    parity: crate::exponent::Parity,
    states: &[usize],
    parts: &[Dist<StateVec>],
) -> FieldRealization {
    let dim = space.dim();
    let mut mode_keys: BTreeSet<Key> = BTreeSet::new();
    for d in parts {
        mode_keys.extend(d.valid.iter().cloned());
        for k in d.coeffs.keys() {
            mode_keys.insert(k.clone());
        }
    }
    let mut modes = BTreeMap::new();
    for key in mode_keys {
        let e = ExpPair::new(key[0], key[1]);
        let vn = e.to_mode();
        let shift = ExpPair::new(e.n + weight.n, e.nbar + weight.nbar);
        let mut mat = crate::space::OperatorMatrix::unknown(dim, shift, parity);
        for (pos, &j) in states.iter().enumerate() {
            let d = &parts[pos];
            if d.valid.contains(&key) {
                match d.coeffs.get(&key) {
                    Some(c) => {
                        let col: Vec<(usize, Scalar)> =
                            c.support().map(|(r, v)| (r, v.clone())).collect();
                        mat.set_col(j, col);
                    }
                    None => mat.set_col(j, Vec::new()),
                }
            }
        }
        modes.insert(vn, mat);
    }
    FieldRealization {
        name,
        weight,
        parity,
        modes,
        exponent_support: None,
        complete: false,
    }
}

/// The generalized product `a(vw)_(vn) b(vw)` assembled from a reduced OPE.
///
/// Divided derivatives of fractional or negative order vanish, so a term
/// contributes only when `vh - 1 - vn` is a pair of naturals.
pub fn general_product(
    space: &GradedSpace,
    ope: &ReducedOpe,
    vn: ExpPair,
    name: String,
) -> FieldRealization {
    let weight = ExpPair::new(
        ope.a_weight.n + ope.b_weight.n - vn.n - Rat::ONE,
        ope.a_weight.nbar + ope.b_weight.nbar - vn.nbar - Rat::ONE,
    );
    let parity = ope.a_parity * ope.b_parity;
    // One common grid per term across all states, so the assembled mode
    // matrices get uniform column coverage.
    let mut targets: Vec<Option<(u32, u32, Support)>> = Vec::new();
    for term in &ope.terms {
        let k = term.vh - ExpPair::new(Rat::ONE, Rat::ONE) - vn;
        if !k.is_natural() {
            targets.push(None);
            continue;
        }
        let (kn, knb) = (k.n.as_integer().unwrap() as u32, k.nbar.as_integer().unwrap() as u32);
        let mut merged: Option<Support> = None;
        for part in &term.parts {
            let mut m = part.support.clone();
            m.merge_axis(2, 0);
            m.merge_axis(2, 0);
            m.shift_axis(0, -Rat::int(i64::from(kn)));
            m.shift_axis(1, -Rat::int(i64::from(knb)));
            merged = Some(match merged {
                None => m,
                Some(cur) => cur.union(&m),
            });
        }
        let merged = merged.expect("term has at least one state");
        targets.push(Some((kn, knb, one_var_grid(space, weight, &merged))));
    }
    let mut per_state: Vec<Dist<StateVec>> = Vec::new();
    for pos in 0..ope.states.len() {
        let mut acc: Option<Dist<StateVec>> = None;
        for (term, target) in ope.terms.iter().zip(&targets) {
            let Some((kn, knb, target)) = target else { continue };
            let part = &term.parts[pos];
            let diag = match part.diagonal_derived(1, 0, (*kn, *knb), target, false) {
                Ok(g) => g,
                Err(_) => continue,
            };
            acc = Some(match acc {
                Some(cur) => cur.add(&diag),
                None => diag,
            });
        }
        let acc = acc.unwrap_or_else(|| {
            // No contributing term: the product is exactly zero on the grid.
            let sup = Support {
                axes: vec![AxisSupport::pinned(Rat::ZERO), AxisSupport::pinned(Rat::ZERO)],
                sums: vec![],
            };
            let mut z: Dist<StateVec> = Dist::zero(1, sup);
            z.insert(vec![Rat::ZERO, Rat::ZERO], StateVec::zeros(space.dim()));
            z
        });
        per_state.push(acc);
    }
    assemble_field(space, name, weight, parity, &ope.states, &per_state)
}

// ---------------------------------------------------------------------------
// Closure under products
// ---------------------------------------------------------------------------

/// A set of fields closed under the generalized products within a weight
/// budget, with the span bookkeeping of its `s_1` images.
pub struct Closure {
    pub fields: Vec<FieldRealization>,
    pub s1_states: Vec<StateVec>,
    pub span: SpanSolver,
    /// Ordered pairs whose locality was certified during exploration.
    pub pairs_certified: usize,
}

fn field_matches_combo(
    space: &GradedSpace,
    f: &FieldRealization,
    coeffs: &[Scalar],
    fields: &[FieldRealization],
) -> bool {
    let dim = space.dim();
    let mut keys: BTreeSet<ExpPair> = f.modes.keys().copied().collect();
    for (c, g) in coeffs.iter().zip(fields) {
        if c.is_zero() {
            continue;
        }
        keys.extend(g.modes.keys().copied());
    }
    for vn in keys {
        let shift = f.mode_shift(vn);
        let mut expect = crate::space::OperatorMatrix::zero(dim, shift, f.parity);
        let mut any = false;
        for (c, g) in coeffs.iter().zip(fields) {
            if c.is_zero() {
                continue;
            }
            if let Some(m) = g.modes.get(&vn) {
                if g.mode_shift(vn) != shift {
                    return false;
                }
                expect = expect.add(&m.scale(c));
                any = true;
            }
        }
        let got = f.modes.get(&vn);
        match (got, any) {
            (Some(m), _) => {
                if m.agree_on_known(&expect).is_err() {
                    return false;
                }
            }
            (None, true) => {
                // A complete field's absent mode claims exact zero inside
                // the truncation; an assembled field's claims nothing.
                if f.complete {
                    for (j, col) in expect.cols.iter().enumerate() {
                        if let Some(col) = col {
                            if !col.is_empty()
                                && space.total_weight(j) + shift.total() <= space.max_weight
                            {
                                return false;
                            }
                        }
                    }
                }
            }
            (None, false) => {}
        }
    }
    true
}

/// Closure of a generating field set under the products `a(vz)_(vn) b(vz)`
/// with product weights inside the budget.
///
/// With `generators_only`, only products with a generator on the left are
/// explored (enough to span; used by the existence construction).  The full
/// pairwise exploration re-verifies locality for every generated pair.
pub fn dong_closure(
    space: &GradedSpace,
    generators: &[FieldRealization],
    budget: Rat,
    generators_only: bool,
    opts: &EngineOpts,
) -> Result<Closure> {
    let states: Vec<usize> = (0..space.dim()).collect();
    let mut fields: Vec<FieldRealization> = Vec::new();
    let mut s1s: Vec<StateVec> = Vec::new();
    let mut span = SpanSolver::new(space.dim());
    let mut pairs_certified = 0usize;

    let push_field = |f: FieldRealization,
                          fields: &mut Vec<FieldRealization>,
                          s1s: &mut Vec<StateVec>,
                          span: &mut SpanSolver|
     -> Result<bool> {
        let Some(s1) = f.s1(space) else {
            return Ok(false);
        };
        if s1.is_zero() {
            // A creative field with vanishing state must vanish: any
            // known-nonzero column falsifies injectivity of s_1.
            for m in f.modes.values() {
                for col in m.cols.iter().flatten() {
                    if !col.is_empty() {
                        return Err(CalcError::Inconsistent(format!(
                            "field {} has zero state but a nonzero known column",
                            f.name
                        )));
                    }
                }
            }
            return Ok(false);
        }
        match span.insert(&s1) {
            SpanOutcome::Independent(_) => {
                fields.push(f);
                s1s.push(s1);
                Ok(true)
            }
            SpanOutcome::Dependent(coeffs) => {
                if !field_matches_combo(space, &f, &coeffs, fields) {
                    return Err(CalcError::Inconsistent(format!(
                        "state-field correspondence is not injective: {} disagrees \
                         with the span of earlier fields",
                        f.name
                    )));
                }
                Ok(false)
            }
        }
    };

    push_field(
        FieldRealization::identity(space.dim()),
        &mut fields,
        &mut s1s,
        &mut span,
    )?;
    let mut gen_count = 1usize;
    for g in generators {
        if push_field(g.clone(), &mut fields, &mut s1s, &mut span)? {
            gen_count += 1;
        }
    }

    // Work queue of ordered pairs.  A left identity only reproduces the
    // right factor, so those pairs are skipped; right identities are kept
    // (they generate the translates `a_(-2,-1) 1`).
    let mut next_pair = (1usize, 0usize);
    loop {
        let (i, j) = next_pair;
        if i >= fields.len() {
            break;
        }
        if generators_only && i >= gen_count {
            break;
        }
        if j >= fields.len() {
            next_pair = (i + 1, 0);
            continue;
        }
        next_pair = (i, j + 1);

        let (a, b) = (fields[i].clone(), fields[j].clone());
        let ope = match extract_reduced_ope(space, &a, &b, &states, &[], opts) {
            Ok(o) => o,
            // Window limitations on a pair end its exploration without
            // falsifying anything; genuine locality failures propagate.
            Err(CalcError::WindowTooSmall(_)) => continue,
            Err(e) => return Err(e),
        };
        pairs_certified += 1;
        // Candidate products: vn = vh - 1 - k with k natural and product
        // weight inside [0, budget].
        let mut vns: BTreeSet<ExpPair> = BTreeSet::new();
        for term in &ope.terms {
            let base_w = ExpPair::new(
                a.weight.n + b.weight.n - term.vh.n,
                a.weight.nbar + b.weight.nbar - term.vh.nbar,
            );
            // weight(k) = base_w + k
            let mut kn = Rat::ZERO;
            while (base_w.n + kn).min(base_w.n) <= budget {
                let mut knb = Rat::ZERO;
                while base_w.total() + kn + knb <= budget {
                    let w = ExpPair::new(base_w.n + kn, base_w.nbar + knb);
                    if w.n >= Rat::ZERO && w.nbar >= Rat::ZERO && w.total() <= budget {
                        vns.insert(
                            term.vh - ExpPair::new(Rat::ONE, Rat::ONE)
                                - ExpPair::new(kn, knb),
                        );
                    }
                    knb = knb + Rat::ONE;
                }
                kn = kn + Rat::ONE;
                if base_w.n + kn > budget {
                    break;
                }
            }
        }
        for vn in vns {
            let name = format!("({})_({},{})({})", a.name, vn.n, vn.nbar, b.name);
            let prod = general_product(space, &ope, vn, name);
            push_field(prod, &mut fields, &mut s1s, &mut span)?;
        }
    }

    Ok(Closure {
        fields,
        s1_states: s1s,
        span,
        pairs_certified,
    })
}

// ---------------------------------------------------------------------------
// Existence construction (state-field correspondence)
// ---------------------------------------------------------------------------

/// The constructed algebra structure: `Y` on every spanned basis state.
pub struct Construction {
    pub closure: Closure,
    /// `Y(u_i)` per basis index; `None` when outside the spanned window.
    pub y: Vec<Option<FieldRealization>>,
    pub spanning: bool,
    /// Derived translation pair `T_1 a = a_(-2,-1) 1`, `T_1bar a = a_(-1,-2) 1`.
    pub t1: crate::space::OperatorMatrix,
    pub t1bar: crate::space::OperatorMatrix,
}

/// Builds the state-field correspondence on states of weight at most
/// `to_weight` by closing under products and inverting `s_1` weight by
/// weight.
///
/// The space should be truncated with headroom above `to_weight`: resolving
/// a product field on a state consumes window both above (intermediate
/// states) and below (pole depth).
pub fn construct_by_existence(
    space: &GradedSpace,
    generators: &[FieldRealization],
    to_weight: Rat,
    opts: &EngineOpts,
) -> Result<Construction> {
    let budget = to_weight.min(space.max_weight);
    let closure = dong_closure(space, generators, budget, true, opts)?;
    // Per-weight-pair solvers keep the Y combinations homogeneous.
    let mut by_weight: BTreeMap<ExpPair, (Vec<usize>, SpanSolver)> = BTreeMap::new();
    for (idx, s1) in closure.s1_states.iter().enumerate() {
        let Some(w) = space.weight_of(s1) else { continue };
        let entry = by_weight
            .entry(w)
            .or_insert_with(|| (Vec::new(), SpanSolver::new(space.dim())));
        if let SpanOutcome::Independent(_) = entry.1.insert(s1) {
            entry.0.push(idx);
        }
    }
    let mut y: Vec<Option<FieldRealization>> = Vec::new();
    let mut spanning = true;
    for i in 0..space.dim() {
        let w = space.basis[i].weight;
        if w.total() > budget {
            y.push(None);
            continue;
        }
        let unit = space.unit(i);
        let field = by_weight.get(&w).and_then(|(idxs, solver)| {
            let combo = solver.express(&unit)?;
            let mut acc: Option<FieldRealization> = None;
            for (c, &fi) in combo.iter().zip(idxs) {
                if c.is_zero() {
                    continue;
                }
                let term = closure.fields[fi].scale(c);
                acc = Some(match acc {
                    Some(cur) => cur.add(&term),
                    None => term,
                });
            }
            let mut f = acc.unwrap_or_else(|| {
                // only the zero state has an empty combination
                FieldRealization {
                    name: "0".into(),
                    weight: w,
                    parity: space.basis[i].parity,
                    modes: BTreeMap::new(),
                    exponent_support: None,
                    complete: true,
                }
            });
            f.name = format!("Y({})", space.basis[i].label);
            Some(f)
        });
        if field.is_none() {
            spanning = false;
        }
        y.push(field);
    }
    // Derived translation pair.
    let dim = space.dim();
    let mut t1 = crate::space::OperatorMatrix::unknown(dim, ExpPair::int(1, 0), crate::exponent::Parity::Even);
    let mut t1bar =
        crate::space::OperatorMatrix::unknown(dim, ExpPair::int(0, 1), crate::exponent::Parity::Even);
    for i in 0..dim {
        if let Some(f) = &y[i] {
            if let Some(img) = f.apply_mode(space, ExpPair::int(-2, -1), &space.vacuum()) {
                t1.set_col(i, img.support().map(|(r, c)| (r, c.clone())).collect());
            }
            if let Some(img) = f.apply_mode(space, ExpPair::int(-1, -2), &space.vacuum()) {
                t1bar.set_col(i, img.support().map(|(r, c)| (r, c.clone())).collect());
            }
        }
    }
    Ok(Construction {
        closure,
        y,
        spanning,
        t1,
        t1bar,
    })
}

// ---------------------------------------------------------------------------
// Multiple locality (r = 3)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MultiLocalityOutcome {
    pub ok: bool,
    pub orderings_checked: usize,
    pub coefficient_keys_checked: usize,
    pub counterexample: Option<String>,
}

fn permutations3() -> Vec<Vec<usize>> {
    vec![
        vec![0, 1, 2],
        vec![0, 2, 1],
        vec![1, 0, 2],
        vec![1, 2, 0],
        vec![2, 0, 1],
        vec![2, 1, 0],
    ]
}

/// Verifies the simultaneous OPE presentation of a triple of fields: the
/// coefficient fields extracted from the identity ordering must reproduce
/// all six orderings with the sector-dependent expansions and supersigns.
///
/// Pairwise reduced OPEs must have a single term per pair (the general
/// multi-selector case is out of reach of coset grouping on the integral
/// lattice).
pub fn verify_multiple_locality(
    space: &GradedSpace,
    fields: [&FieldRealization; 3],
    states: &[usize],
    opts: &EngineOpts,
) -> Result<MultiLocalityOutcome> {
    // Pairwise pole exponents.
    let mut vh = BTreeMap::new();
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let ope = extract_reduced_ope(space, fields[i], fields[j], states, &[], opts)?;
        if ope.terms.len() > 1 {
            return Err(CalcError::WindowTooSmall(format!(
                "pair ({}, {}) has a multi-term reduced OPE; the three-fold \
                 check handles a single pole coset per pair",
                fields[i].name, fields[j].name
            )));
        }
        let pole = ope.terms.first().map_or(ExpPair::ZERO, |t| t.vh);
        vh.insert((i, j), pole);
    }
    let parities = [fields[0].parity, fields[1].parity, fields[2].parity];
    let mut orderings_checked = 0usize;
    let mut keys_checked = 0usize;

    for &s in states {
        let v = space.unit(s);
        // Per ordering: strip every pole with the sector-appropriate
        // expansion and compare the recovered coefficient field against the
        // identity ordering's.  Agreement of all six recoveries is the
        // simultaneous-OPE certificate.
        let mut c_id: Option<Dist<StateVec>> = None;
        for perm in permutations3() {
            let chain: Vec<&FieldRealization> = perm.iter().map(|&p| fields[p]).collect();
            let raw = apply_chain(space, &chain, &v);
            let mut inv = vec![0usize; 3];
            for (pos, &p) in perm.iter().enumerate() {
                inv[p] = pos;
            }
            let lhs = raw.reorder_vars(&inv);
            let zeta = crate::exponent::koszul_sign(&perm, &parities);
            let lhs = if zeta < 0 { lhs.negate() } else { lhs };
            let mut c = lhs;
            for (&(i, j), &h) in &vh {
                let dominant = if inv[i] < inv[j] {
                    Dominant::First
                } else {
                    Dominant::Second
                };
                let e = expand_pow_in(3, i, j, h, ExpansionKind::Difference, dominant, opts.depth)?;
                c = mul_auto(&e, &c, false)?;
            }
            c.sector = crate::dist::SectorTag::none();
            match &c_id {
                None => c_id = Some(c),
                Some(reference) => {
                    let cmp = reference.compare(&c);
                    if let Some((key, l, r)) = cmp.mismatch {
                        return Ok(MultiLocalityOutcome {
                            ok: false,
                            orderings_checked,
                            coefficient_keys_checked: keys_checked,
                            counterexample: Some(format!(
                                "ordering {:?} state {} disagrees at {}: {} vs {}",
                                perm,
                                space.basis[s].label,
                                render_key(&key),
                                l,
                                r
                            )),
                        });
                    }
                    keys_checked += cmp.checked;
                }
            }
            orderings_checked += 1;
        }
    }
    Ok(MultiLocalityOutcome {
        ok: true,
        orderings_checked,
        coefficient_keys_checked: keys_checked,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::build_heisenberg;

    fn boson(l: i64) -> crate::backends::Backend {
        build_heisenberg(&Scalar::one(), Rat::int(l)).unwrap()
    }

    #[test]
    fn locality_order_of_boson_generator() {
        let b = boson(4);
        let alpha = b.field("alpha").unwrap();
        let states: Vec<usize> = b.space.indices_up_to(Rat::int(2));
        let n = locality_order(&b.space, &alpha, &alpha, &states, &EngineOpts::default()).unwrap();
        assert_eq!(n, 2);
        // Identity field is local of order 0 to anything.
        let one = b.field("one").unwrap();
        let n = locality_order(&b.space, &one, &alpha, &states, &EngineOpts::default()).unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn fermion_locality_order_is_one() {
        let b = crate::backends::build_fermion(Rat::new(7, 2)).unwrap();
        let psi = b.field("psi").unwrap();
        let states: Vec<usize> = b.space.indices_up_to(Rat::new(3, 2));
        let n = locality_order(&b.space, &psi, &psi, &states, &EngineOpts::default()).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn boson_ope_extraction_single_term() {
        let b = boson(4);
        let alpha = b.field("alpha").unwrap();
        let states: Vec<usize> = (0..b.space.dim()).collect();
        let ope = extract_reduced_ope(
            &b.space,
            &alpha,
            &alpha,
            &states,
            &[],
            &EngineOpts::default(),
        )
        .unwrap();
        assert_eq!(ope.terms.len(), 1);
        assert_eq!(ope.terms[0].vh, ExpPair::int(2, 0));
        assert!(ope.checked_keys > 50);
    }

    #[test]
    fn boson_products_match_mode_algebra() {
        let b = boson(5);
        let alpha = b.field("alpha").unwrap();
        let states: Vec<usize> = (0..b.space.dim()).collect();
        let ope = extract_reduced_ope(&b.space, &alpha, &alpha, &states, &[], &EngineOpts::default())
            .unwrap();
        // alpha_(1,-1) alpha = level * vacuum
        let p1 = general_product(&b.space, &ope, ExpPair::int(1, -1), "a1a".into());
        let s = p1.s1(&b.space).unwrap();
        assert_eq!(b.space.render_state(&s), "1");
        // alpha_(n,-1) alpha = 0 for n = 0 and n in 2..4
        for n in [0i64, 2, 3, 4] {
            let p = general_product(&b.space, &ope, ExpPair::int(n, -1), format!("a{n}a"));
            let s = p.s1(&b.space).unwrap();
            assert!(
                crate::dist::Coeff::is_zero(&s),
                "alpha_({n})alpha should vanish, got {}",
                b.space.render_state(&s)
            );
        }
        // alpha_(-1,-1) alpha = a[-1]^2 vacuum
        let pm1 = general_product(&b.space, &ope, ExpPair::int(-1, -1), "aa".into());
        let s = pm1.s1(&b.space).unwrap();
        assert_eq!(b.space.render_state(&s), "a[-1]^2");
        // off-lattice product vanishes: vn = (0, 0)
        let off = general_product(&b.space, &ope, ExpPair::int(0, 0), "off".into());
        let s = off.s1(&b.space).unwrap();
        assert!(crate::dist::Coeff::is_zero(&s));
    }

    #[test]
    fn identity_ope_is_regular() {
        let b = boson(3);
        let alpha = b.field("alpha").unwrap();
        let one = b.field("one").unwrap();
        let states: Vec<usize> = (0..b.space.dim()).collect();
        let ope =
            extract_reduced_ope(&b.space, &one, &alpha, &states, &[], &EngineOpts::default())
                .unwrap();
        assert_eq!(ope.terms.len(), 1);
        assert_eq!(ope.terms[0].vh, ExpPair::int(0, 0));
        // 1(z)_(vn) c = delta_{vn,-1} c: product at (-1,-1) reproduces alpha.
        let p = general_product(&b.space, &ope, ExpPair::int(-1, -1), "ia".into());
        let s = p.s1(&b.space).unwrap();
        assert_eq!(b.space.render_state(&s), "a[-1]");
        for n in [0i64, 1, 2] {
            let p = general_product(&b.space, &ope, ExpPair::int(n, -1), "i".into());
            assert!(crate::dist::Coeff::is_zero(&p.s1(&b.space).unwrap()));
        }
    }

    #[test]
    fn fermion_zeroth_product_is_vacuum() {
        let b = crate::backends::build_fermion(Rat::new(7, 2)).unwrap();
        let psi = b.field("psi").unwrap();
        let states: Vec<usize> = (0..b.space.dim()).collect();
        let ope =
            extract_reduced_ope(&b.space, &psi, &psi, &states, &[], &EngineOpts::default()).unwrap();
        assert_eq!(ope.terms.len(), 1);
        assert_eq!(ope.terms[0].vh, ExpPair::int(1, 0));
        let p = general_product(&b.space, &ope, ExpPair::int(0, -1), "pp".into());
        let s = p.s1(&b.space).unwrap();
        assert_eq!(b.space.render_state(&s), "1");
    }

    #[test]
    fn closure_of_boson_generator() {
        let b = boson(2);
        let alpha = b.field("alpha").unwrap();
        let cl = dong_closure(&b.space, &[alpha], Rat::int(2), false, &EngineOpts::default())
            .unwrap();
        // Contains 1(z), alpha(z), and the normal-ordered square: spans the
        // whole truncation (dim 4), so 4 fields.
        assert_eq!(cl.span.rank(), b.space.dim());
        assert!(cl.pairs_certified >= 1);
    }

    #[test]
    fn closure_of_identity_is_trivial()  {
        let b = boson(2);
        let one = b.field("one").unwrap();
        let cl = dong_closure(&b.space, &[one], Rat::int(2), false, &EngineOpts::default())
            .unwrap();
        assert_eq!(cl.fields.len(), 1);
    }

    #[test]
    fn existence_construction_boson() {
        let b = boson(5);
        let alpha = b.field("alpha").unwrap();
        let cons =
            construct_by_existence(&b.space, &[alpha.clone()], Rat::int(3), &EngineOpts::default())
                .unwrap();
        assert!(cons.spanning);
        // Y(1) = 1(z)
        let y0 = cons.y[0].as_ref().unwrap();
        let s = y0.s1(&b.space).unwrap();
        assert_eq!(b.space.render_state(&s), "1");
        // Y(s1 alpha) = alpha: the generator is reproduced on known columns.
        let s1a = alpha.s1(&b.space).unwrap();
        let idx = s1a.support().next().unwrap().0;
        let ya = cons.y[idx].as_ref().unwrap();
        for (vn, m) in &alpha.modes {
            if let Some(got) = ya.modes.get(vn) {
                assert!(m.agree_on_known(got).is_ok(), "mode {vn} differs");
            }
        }
        // Derived translation agrees with the backend T where known.
        assert!(cons.t1.agree_on_known(&b.t).is_ok());
    }

    #[test]
    fn multiple_locality_boson_triple() {
        let b = boson(4);
        let alpha = b.field("alpha").unwrap();
        let states: Vec<usize> = b.space.indices_up_to(Rat::int(1));
        let out = verify_multiple_locality(
            &b.space,
            [&alpha, &alpha, &alpha],
            &states,
            &EngineOpts::default(),
        )
        .unwrap();
        assert!(out.ok, "counterexample: {:?}", out.counterexample);
        assert_eq!(out.orderings_checked, 6 * states.len());
        assert!(out.coefficient_keys_checked > 0);
    }
}
