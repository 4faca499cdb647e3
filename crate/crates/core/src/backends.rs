//! Concrete graded backends: Heisenberg free boson, free fermion, and graded
//! tensor products (including chiral x anti-chiral).
//!
//! Mode indices follow the `K^2`-fold convention `a(vz) = sum a_vn vz^{-vn-1}`,
//! so every built-in field has integer mode lattice `Z x {-1}` (or
//! `{-1} x Z` for anti-chiral factors).  The half-integer labels in fermion
//! basis vectors are the conventional weight-shift labels `p[-r]` with
//! `r = m + 1/2`.

use crate::dist::{Coeff, Dist};
use crate::error::{CalcError, Result};
use crate::exponent::{ExpPair, Parity};
use crate::scalar::{Rat, Scalar};
use crate::space::{BasisVector, FieldRealization, GradedSpace, OperatorMatrix, StateVec, Weight};
use crate::window::{AxisSupport, CosetSet, Support};
use std::collections::BTreeMap;

/// Built backend: the truncated space, its generator fields, and the
/// translation pair.
#[derive(Clone, Debug)]
pub struct Backend {
    pub space: GradedSpace,
    pub generators: Vec<FieldRealization>,
    pub t: OperatorMatrix,
    pub tbar: OperatorMatrix,
    pub kind: String,
}

impl Backend {
    /// Resolves a field name: `one` is the identity field, other names are
    /// generators.
    pub fn field(&self, name: &str) -> Result<FieldRealization> {
        if name == "one" {
            return Ok(FieldRealization::identity(self.space.dim()));
        }
        self.generators
            .iter()
            .find(|f| f.name == name)
            .cloned()
            .ok_or_else(|| CalcError::UnknownField(name.to_string()))
    }

    pub fn field_names(&self) -> Vec<String> {
        let mut names = vec!["one".to_string()];
        names.extend(self.generators.iter().map(|f| f.name.clone()));
        names
    }
}

/// Backend selection and parameters, as read from a spec file.
#[derive(Clone, Debug, PartialEq)]
pub enum AlgebraSpec {
    Heisenberg { level: Scalar, truncation: Rat },
    Fermion { truncation: Rat },
    Tensor {
        left: Box<AlgebraSpec>,
        right: Box<AlgebraSpec>,
        bar_swap: bool,
    },
}

impl AlgebraSpec {
    pub fn build(&self) -> Result<Backend> {
        match self {
            AlgebraSpec::Heisenberg { level, truncation } => build_heisenberg(level, *truncation),
            AlgebraSpec::Fermion { truncation } => build_fermion(*truncation),
            AlgebraSpec::Tensor { left, right, bar_swap } => {
                let l = left.build()?;
                let r = right.build()?;
                tensor(&l, &r, *bar_swap)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AlgebraSpec::Heisenberg { level, truncation } => {
                format!("heisenberg(level={}, L={})", level.render(), truncation.render())
            }
            AlgebraSpec::Fermion { truncation } => format!("fermion(L={})", truncation.render()),
            AlgebraSpec::Tensor { left, right, bar_swap } => format!(
                "tensor({}, {}, bar_swap={})",
                left.describe(),
                right.describe(),
                bar_swap
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Free boson
// ---------------------------------------------------------------------------

type Partition = Vec<(i64, u32)>; // (part, multiplicity), parts ascending

fn partition_label(p: &Partition) -> String {
    if p.is_empty() {
        return "1".into();
    }
    p.iter()
        .rev()
        .map(|(part, mult)| {
            if *mult == 1 {
                format!("a[-{part}]")
            } else {
                format!("a[-{part}]^{mult}")
            }
        })
        .collect::<Vec<_>>()
        .join("")
}

fn enumerate_partitions(max_total: i64) -> Vec<Partition> {
    // All multisets of positive integers with sum <= max_total.
    let mut out: Vec<Partition> = vec![Vec::new()];
    fn recurse(out: &mut Vec<Partition>, cur: &mut Partition, min_part: i64, rest: i64) {
        for part in min_part..=rest {
            for mult in 1..=(rest / part) as u32 {
                cur.push((part, mult));
                out.push(cur.clone());
                recurse(out, cur, part + 1, rest - part * i64::from(mult));
                cur.pop();
            }
        }
    }
    let mut cur = Vec::new();
    recurse(&mut out, &mut cur, 1, max_total);
    out
}

/// Truncated Heisenberg Fock space with its generator field.
///
/// Modes obey `[a_m, a_n] = level * m * delta_{m+n,0}`; the generator has
/// weight `(1, 0)` and even parity.
pub fn build_heisenberg(level: &Scalar, truncation: Rat) -> Result<Backend> {
    if level.is_zero() {
        return Err(CalcError::InvalidSpec("heisenberg level must be nonzero".into()));
    }
    let l_int = truncation
        .as_integer()
        .filter(|&l| l >= 1)
        .ok_or_else(|| CalcError::InvalidSpec("heisenberg truncation must be an integer >= 1".into()))?;

    let mut parts = enumerate_partitions(l_int);
    parts.sort_by_key(|p| (p.iter().map(|(a, m)| a * i64::from(*m)).sum::<i64>(), p.clone()));
    let index: BTreeMap<Partition, usize> =
        parts.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let basis: Vec<BasisVector> = parts
        .iter()
        .map(|p| BasisVector {
            label: partition_label(p),
            weight: ExpPair::new(
                Rat::int(p.iter().map(|(a, m)| a * i64::from(*m)).sum()),
                Rat::ZERO,
            ),
            parity: Parity::Even,
        })
        .collect();
    let space = GradedSpace {
        basis,
        max_weight: truncation,
    };
    let dim = space.dim();
    let weight_of = |p: &Partition| -> i64 { p.iter().map(|(a, m)| a * i64::from(*m)).sum() };

    let mut modes: BTreeMap<ExpPair, OperatorMatrix> = BTreeMap::new();
    for n in -l_int..=l_int {
        if n == 0 {
            continue; // a_0 acts as zero on the uncharged Fock space
        }
        let shift = Weight::new(Rat::int(-n), Rat::ZERO);
        let mut mat = OperatorMatrix::zero(dim, shift, Parity::Even);
        for (j, p) in parts.iter().enumerate() {
            if n > 0 {
                // Lowering: level * n * mult, removing one part n.
                match p.iter().position(|&(part, _)| part == n) {
                    Some(pos) => {
                        let mult = p[pos].1;
                        let mut q = p.clone();
                        if mult == 1 {
                            q.remove(pos);
                        } else {
                            q[pos].1 -= 1;
                        }
                        let coeff = level * &Scalar::from_int(n * i64::from(mult));
                        mat.set_col(j, vec![(index[&q], coeff)]);
                    }
                    None => mat.set_col(j, Vec::new()),
                }
            } else {
                // Raising by k = -n.
                let k = -n;
                if weight_of(p) + k > l_int {
                    mat.cols[j] = None;
                    continue;
                }
                let mut q = p.clone();
                match q.iter().position(|&(part, _)| part >= k) {
                    Some(pos) if q[pos].0 == k => q[pos].1 += 1,
                    Some(pos) => q.insert(pos, (k, 1)),
                    None => q.push((k, 1)),
                }
                mat.set_col(j, vec![(index[&q], Scalar::one())]);
            }
        }
        modes.insert(ExpPair::int(n, -1), mat);
    }
    let alpha = FieldRealization {
        name: "alpha".into(),
        weight: ExpPair::int(1, 0),
        parity: Parity::Even,
        modes,
        exponent_support: None,
        complete: true,
    };

    // Translation: T(a_{-i1}...a_{-ik} vac) = sum_j i_j * (replace i_j by i_j + 1).
    let mut t = OperatorMatrix::zero(dim, ExpPair::int(1, 0), Parity::Even);
    for (j, p) in parts.iter().enumerate() {
        if weight_of(p) + 1 > l_int && !p.is_empty() {
            t.cols[j] = None;
            continue;
        }
        let mut col: BTreeMap<usize, Scalar> = BTreeMap::new();
        for (pos, &(part, mult)) in p.iter().enumerate() {
            let mut q = p.clone();
            if mult == 1 {
                q.remove(pos);
            } else {
                q[pos].1 -= 1;
            }
            // insert part+1
            match q.iter().position(|&(a, _)| a >= part + 1) {
                Some(i) if q[i].0 == part + 1 => q[i].1 += 1,
                Some(i) => q.insert(i, (part + 1, 1)),
                None => q.push((part + 1, 1)),
            }
            let e = col.entry(index[&q]).or_insert_with(Scalar::zero);
            *e += &Scalar::from_int(part * i64::from(mult));
        }
        t.set_col(j, col.into_iter().collect());
    }
    let tbar = OperatorMatrix::zero(dim, ExpPair::int(0, 1), Parity::Even);

    Ok(Backend {
        space,
        generators: vec![alpha],
        t,
        tbar,
        kind: format!("heisenberg(level={})", level.render()),
    })
}

// ---------------------------------------------------------------------------
// Free fermion
// ---------------------------------------------------------------------------

type FermionWord = Vec<Rat>; // physical labels r in Z+1/2, strictly descending

fn fermion_label(w: &FermionWord) -> String {
    if w.is_empty() {
        return "1".into();
    }
    w.iter()
        .map(|r| format!("p[-{}]", r.render()))
        .collect::<Vec<_>>()
        .join("")
}

fn enumerate_fermion_words(max_total: Rat) -> Vec<FermionWord> {
    let mut out: Vec<FermionWord> = vec![Vec::new()];
    // Parts are distinct half-integers 1/2, 3/2, ...; enumerate descending.
    fn recurse(out: &mut Vec<FermionWord>, cur: &mut FermionWord, next: Rat, rest: Rat) {
        let mut part = next;
        while part <= rest {
            cur.push(part);
            // store descending: we build ascending then reverse at the end
            out.push(cur.clone());
            recurse(out, cur, part + Rat::ONE, rest - part);
            cur.pop();
            part = part + Rat::ONE;
        }
    }
    let mut cur = Vec::new();
    recurse(&mut out, &mut cur, Rat::new(1, 2), max_total);
    for w in &mut out {
        w.sort_by(|a, b| b.cmp(a));
    }
    out
}

/// Truncated free-fermion Fock space with its generator field.
///
/// Physical modes obey `{p_r, p_s} = delta_{r+s,0}` with `r, s` in
/// `Z + 1/2`; the field mode at `(m, -1)` is the physical operator
/// `p_{m+1/2}`, the generator has weight `(1/2, 0)` and odd parity.
pub fn build_fermion(truncation: Rat) -> Result<Backend> {
    if truncation < Rat::new(1, 2) {
        return Err(CalcError::InvalidSpec("fermion truncation must be >= 1/2".into()));
    }
    let mut words = enumerate_fermion_words(truncation);
    words.sort_by_key(|w| {
        (
            w.iter().fold(Rat::ZERO, |acc, &r| acc + r),
            w.clone(),
        )
    });
    let index: BTreeMap<FermionWord, usize> =
        words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let basis: Vec<BasisVector> = words
        .iter()
        .map(|w| BasisVector {
            label: fermion_label(w),
            weight: ExpPair::new(w.iter().fold(Rat::ZERO, |acc, &r| acc + r), Rat::ZERO),
            parity: if w.len() % 2 == 0 { Parity::Even } else { Parity::Odd },
        })
        .collect();
    let space = GradedSpace {
        basis,
        max_weight: truncation,
    };
    let dim = space.dim();
    let total = |w: &FermionWord| w.iter().fold(Rat::ZERO, |acc, &r| acc + r);

    let mut modes: BTreeMap<ExpPair, OperatorMatrix> = BTreeMap::new();
    let mut r = Rat::new(1, 2);
    let mut phys: Vec<Rat> = Vec::new();
    while r <= truncation + Rat::new(1, 2) {
        phys.push(r);
        phys.push(-r);
        r = r + Rat::ONE;
    }
    for &r in &phys {
        let m = r - Rat::new(1, 2); // field mode index
        let shift = Weight::new(-r, Rat::ZERO);
        let mut mat = OperatorMatrix::zero(dim, shift, Parity::Odd);
        for (j, w) in words.iter().enumerate() {
            if r > Rat::ZERO {
                // Annihilate label r.
                match w.iter().position(|&k| k == r) {
                    Some(pos) => {
                        let mut q = w.clone();
                        q.remove(pos);
                        let sign = if pos % 2 == 0 { Scalar::one() } else { -Scalar::one() };
                        mat.set_col(j, vec![(index[&q], sign)]);
                    }
                    None => mat.set_col(j, Vec::new()),
                }
            } else {
                // Create label k = -r.
                let k = -r;
                if w.contains(&k) {
                    mat.set_col(j, Vec::new());
                    continue;
                }
                if total(w) + k > truncation {
                    mat.cols[j] = None;
                    continue;
                }
                let pos = w.iter().filter(|&&p| p > k).count();
                let mut q = w.clone();
                q.insert(pos, k);
                let sign = if pos % 2 == 0 { Scalar::one() } else { -Scalar::one() };
                mat.set_col(j, vec![(index[&q], sign)]);
            }
        }
        modes.insert(ExpPair::new(m, Rat::int(-1)), mat);
    }
    let psi = FieldRealization {
        name: "psi".into(),
        weight: ExpPair::new(Rat::new(1, 2), Rat::ZERO),
        parity: Parity::Odd,
        modes,
        exponent_support: None,
        complete: true,
    };

    // T(p[-r1]...1) = sum_j (r_j + 1/2) * (replace r_j by r_j + 1), zero on
    // collisions.
    let mut t = OperatorMatrix::zero(dim, ExpPair::int(1, 0), Parity::Even);
    for (j, w) in words.iter().enumerate() {
        if total(w) + Rat::ONE > truncation && !w.is_empty() {
            t.cols[j] = None;
            continue;
        }
        let mut col: BTreeMap<usize, Scalar> = BTreeMap::new();
        for (pos, &rj) in w.iter().enumerate() {
            let bumped = rj + Rat::ONE;
            if w.contains(&bumped) {
                continue;
            }
            let mut q = w.clone();
            q[pos] = bumped;
            // parts stay descending: bumped < w[pos-1] or pos == 0
            if pos > 0 && q[pos - 1] <= q[pos] {
                continue;
            }
            let e = col.entry(index[&q]).or_insert_with(Scalar::zero);
            *e += &(rj + Rat::new(1, 2)).to_scalar();
        }
        t.set_col(j, col.into_iter().collect());
    }
    let tbar = OperatorMatrix::zero(dim, ExpPair::int(0, 1), Parity::Even);

    Ok(Backend {
        space,
        generators: vec![psi],
        t,
        tbar,
        kind: "fermion".into(),
    })
}

// ---------------------------------------------------------------------------
// Tensor products
// ---------------------------------------------------------------------------

/// Graded tensor product with Koszul signs.  With `bar_swap`, the right
/// factor's fields are realized in the `zbar` variable and its weights land
/// in the bar component.
///
/// Both factors must be chiral (weights concentrated in the first
/// component), which holds for all built-in backends.
pub fn tensor(left: &Backend, right: &Backend, bar_swap: bool) -> Result<Backend> {
    for b in [left, right] {
        if b.space.basis.iter().any(|v| !v.weight.nbar.is_zero()) {
            return Err(CalcError::InvalidSpec(
                "tensor factors must be chiral backends".into(),
            ));
        }
    }
    let l = left.space.max_weight.min(right.space.max_weight);
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..left.space.dim() {
        for j in 0..right.space.dim() {
            if left.space.total_weight(i) + right.space.total_weight(j) <= l {
                pairs.push((i, j));
            }
        }
    }
    let weight_of_pair = |&(i, j): &(usize, usize)| -> Weight {
        let wl = left.space.basis[i].weight;
        let wr = right.space.basis[j].weight;
        if bar_swap {
            ExpPair::new(wl.n, wr.n)
        } else {
            ExpPair::new(wl.n + wr.n, Rat::ZERO)
        }
    };
    pairs.sort_by_key(|p| {
        let w = weight_of_pair(p);
        (w.total(), *p)
    });
    let index: BTreeMap<(usize, usize), usize> =
        pairs.iter().cloned().enumerate().map(|(k, p)| (p, k)).collect();
    let basis: Vec<BasisVector> = pairs
        .iter()
        .map(|&(i, j)| {
            let ll = &left.space.basis[i].label;
            let rl = &right.space.basis[j].label;
            BasisVector {
                label: if rl == "1" && ll != "1" {
                    ll.clone()
                } else if ll == "1" && rl != "1" {
                    format!("~{rl}")
                } else if ll == "1" && rl == "1" {
                    "1".into()
                } else {
                    format!("{ll}~{rl}")
                },
                weight: weight_of_pair(&(i, j)),
                parity: left.space.basis[i].parity * right.space.basis[j].parity,
            }
        })
        .collect();
    let space = GradedSpace {
        basis,
        max_weight: l,
    };
    let dim = space.dim();

    // Embeds a left-factor operator as op (x) id.
    let embed_left = |m: &OperatorMatrix, shift: Weight| -> OperatorMatrix {
        let mut out = OperatorMatrix::zero(dim, shift, m.parity);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let src_w = space.total_weight(k);
            if src_w + shift.total() > l {
                out.cols[k] = None;
                continue;
            }
            match &m.cols[i] {
                None => out.cols[k] = None,
                Some(col) => {
                    let entries: Vec<(usize, Scalar)> = col
                        .iter()
                        .map(|(r, c)| (index[&(*r, j)], c.clone()))
                        .collect();
                    out.set_col(k, entries);
                }
            }
        }
        out
    };
    // Embeds a right-factor operator as id (x) op with the Koszul sign
    // (-1)^{op_parity * left_parity}.
    let embed_right = |m: &OperatorMatrix, shift: Weight| -> OperatorMatrix {
        let mut out = OperatorMatrix::zero(dim, shift, m.parity);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let src_w = space.total_weight(k);
            if src_w + shift.total() > l {
                out.cols[k] = None;
                continue;
            }
            match &m.cols[j] {
                None => out.cols[k] = None,
                Some(col) => {
                    let sign = if m.parity.is_odd() && left.space.basis[i].parity.is_odd() {
                        -Scalar::one()
                    } else {
                        Scalar::one()
                    };
                    let entries: Vec<(usize, Scalar)> = col
                        .iter()
                        .map(|(r, c)| (index[&(i, *r)], c * &sign))
                        .collect();
                    out.set_col(k, entries);
                }
            }
        }
        out
    };

    let mut generators = Vec::new();
    for f in &left.generators {
        let mut modes = BTreeMap::new();
        for (vn, m) in &f.modes {
            modes.insert(*vn, embed_left(m, m.shift));
        }
        generators.push(FieldRealization {
            name: f.name.clone(),
            weight: f.weight,
            parity: f.parity,
            modes,
            exponent_support: f.exponent_support.clone(),
            complete: f.complete,
        });
    }
    for f in &right.generators {
        let mut modes = BTreeMap::new();
        for (vn, m) in &f.modes {
            if bar_swap {
                // Mode (m, -1) of the chiral factor becomes (-1, m).
                let swapped = ExpPair::new(Rat::int(-1), vn.n);
                let shift = ExpPair::new(Rat::ZERO, m.shift.n);
                modes.insert(swapped, embed_right(m, shift));
            } else {
                modes.insert(*vn, embed_right(m, m.shift));
            }
        }
        let (name, weight) = if bar_swap {
            (format!("{}_bar", f.name), ExpPair::new(Rat::ZERO, f.weight.n))
        } else {
            (format!("{}_r", f.name), f.weight)
        };
        generators.push(FieldRealization {
            name,
            weight,
            parity: f.parity,
            modes,
            exponent_support: if bar_swap {
                f.exponent_support.clone().map(|(z, zb)| (zb, z))
            } else {
                f.exponent_support.clone()
            },
            complete: f.complete,
        });
    }

    let t = if bar_swap {
        embed_left(&left.t, ExpPair::int(1, 0))
    } else {
        embed_left(&left.t, ExpPair::int(1, 0)).add(&embed_right(&right.t, ExpPair::int(1, 0)))
    };
    let tbar = if bar_swap {
        embed_right(&right.t, ExpPair::int(0, 1))
    } else {
        OperatorMatrix::zero(dim, ExpPair::int(0, 1), Parity::Even)
    };

    Ok(Backend {
        space,
        generators,
        t,
        tbar,
        kind: format!("tensor({}, {}, bar_swap={bar_swap})", left.kind, right.kind),
    })
}

// ---------------------------------------------------------------------------
// Translation exponential
// ---------------------------------------------------------------------------

/// `e^{vz vT} v` as a one-variable vector-valued power series, truncated at
/// the given `vz`-power budget.
pub fn exp_translation(
    space: &GradedSpace,
    t: &OperatorMatrix,
    tbar: &OperatorMatrix,
    v: &StateVec,
    budget: u32,
) -> Dist<StateVec> {
    let mut support = Support {
        axes: vec![
            AxisSupport {
                cosets: CosetSet::integer(),
                lo: Some(Rat::ZERO),
                hi: None,
            },
            AxisSupport {
                cosets: CosetSet::integer(),
                lo: Some(Rat::ZERO),
                hi: None,
            },
        ],
        sums: Vec::new(),
    };
    support.push_sum(crate::window::SumConstraint::new(
        vec![0, 1],
        Some(Rat::ZERO),
        None,
    ));
    let mut out: Dist<StateVec> = Dist::zero(1, support);
    // Divided powers of T along rows, then Tbar along columns.
    let mut t_pows: Vec<Option<StateVec>> = vec![Some(v.clone())];
    for i in 1..=budget {
        let prev = t_pows.last().unwrap().clone();
        let next = prev.and_then(|p| t.apply(&p)).map(|p| {
            // divided power: divide by i
            p.scale(&Scalar::from_int(i64::from(i)).recip())
        });
        t_pows.push(next);
    }
    for (i, tp) in t_pows.iter().enumerate() {
        let Some(tp) = tp else { continue };
        let mut cur: Option<StateVec> = Some(tp.clone());
        for ib in 0..=(budget as usize - i) {
            let Some(c) = cur.clone() else { break };
            out.insert(vec![Rat::int(i as i64), Rat::int(ib as i64)], c.clone());
            cur = tbar
                .apply(&c)
                .map(|p| p.scale(&Scalar::from_int(ib as i64 + 1).recip()));
        }
    }
    let _ = space;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::SpanSolver;

    fn boson(l: i64) -> Backend {
        build_heisenberg(&Scalar::one(), Rat::int(l)).unwrap()
    }

    #[test]
    fn boson_dimensions_match_partition_counts() {
        // dim = p(0) + p(1) + ... + p(L)
        let expected = [1, 2, 4, 7, 12, 19, 30];
        for (l, want) in expected.iter().enumerate().skip(1) {
            let b = boson(l as i64);
            assert_eq!(b.space.dim(), *want, "L={l}");
        }
        let b = boson(2);
        let labels: Vec<&str> = b.space.basis.iter().map(|v| v.label.as_str()).collect();
        assert_eq!(labels, vec!["1", "a[-1]", "a[-1]^2", "a[-2]"]);
    }

    #[test]
    fn boson_commutator_and_vacuum() {
        let b = boson(4);
        let alpha = &b.generators[0];
        let vac = b.space.vacuum();
        // a_1 a_{-1} vac = level * vac
        let raised = alpha
            .apply_mode(&b.space, ExpPair::int(-1, -1), &vac)
            .unwrap();
        let back = alpha.apply_mode(&b.space, ExpPair::int(1, -1), &raised).unwrap();
        assert_eq!(back, vac);
        // a_0 kills everything
        for j in 0..b.space.dim() {
            let v = b.space.unit(j);
            let img = alpha.apply_mode(&b.space, ExpPair::int(0, -1), &v).unwrap();
            assert!(crate::dist::Coeff::is_zero(&img));
        }
        // [a_m, a_n] = m delta on a few pairs
        for m in 1..=3i64 {
            let am = &alpha.modes[&ExpPair::int(m, -1)];
            let amm = &alpha.modes[&ExpPair::int(-m, -1)];
            let c = am.commutator(amm);
            for j in 0..b.space.dim() {
                if let Some(col) = c.col(j) {
                    assert_eq!(col.len(), 1);
                    assert_eq!(col[0], (j, Scalar::from_int(m)));
                }
            }
        }
    }

    #[test]
    fn boson_translation_covariance() {
        // [T, a_vn] = (d alpha)_vn as matrices wherever known.
        let b = boson(4);
        let alpha = &b.generators[0];
        let da = alpha.derive(false);
        for (vn, m) in &alpha.modes {
            let lhs = b.t.compose(m).add(&m.compose(&b.t).scale(&-Scalar::one()));
            if let Some(rhs) = da.modes.get(vn) {
                if let Err(col) = lhs.agree_on_known(rhs) {
                    panic!("covariance failed at mode {vn} column {col}");
                }
            } else {
                // derivative mode vanished: lhs must be zero where known
                for col in lhs.cols.iter().flatten() {
                    assert!(col.is_empty(), "nonzero commutator at dropped mode {vn}");
                }
            }
        }
        // T vac = 0
        assert!(crate::dist::Coeff::is_zero(
            &b.t.apply(&b.space.vacuum()).unwrap()
        ));
    }

    #[test]
    fn fermion_dimensions_and_anticommutator() {
        let b = build_fermion(Rat::new(3, 2)).unwrap();
        assert_eq!(b.space.dim(), 3);
        let labels: Vec<&str> = b.space.basis.iter().map(|v| v.label.as_str()).collect();
        assert_eq!(labels, vec!["1", "p[-1/2]", "p[-3/2]"]);

        let b = build_fermion(Rat::new(7, 2)).unwrap();
        let psi = &b.generators[0];
        let vac = b.space.vacuum();
        // p_{1/2} p_{-1/2} vac = vac  (modes (0,-1) and (-1,-1))
        let r = psi.apply_mode(&b.space, ExpPair::int(-1, -1), &vac).unwrap();
        let rr = psi.apply_mode(&b.space, ExpPair::int(0, -1), &r).unwrap();
        assert_eq!(rr, vac);
        // p[-1/2]^2 = 0
        let again = psi.apply_mode(&b.space, ExpPair::int(-1, -1), &r).unwrap();
        assert!(crate::dist::Coeff::is_zero(&again));
        // {p_r, p_s} = delta_{r+s,0}: check a few physical pairs
        for (m1, m2, expect) in [(0i64, -1i64, 1i64), (1, -2, 1), (0, -2, 0), (1, -1, 0)] {
            let a = &psi.modes[&ExpPair::int(m1, -1)];
            let bm = &psi.modes[&ExpPair::int(m2, -1)];
            let c = a.commutator(bm); // both odd: anticommutator
            for j in 0..b.space.dim() {
                if let Some(col) = c.col(j) {
                    if expect == 0 {
                        assert!(col.is_empty());
                    } else {
                        assert_eq!(col, &vec![(j, Scalar::from_int(expect))]);
                    }
                }
            }
        }
    }

    #[test]
    fn fermion_translation_covariance() {
        let b = build_fermion(Rat::new(7, 2)).unwrap();
        let psi = &b.generators[0];
        let dpsi = psi.derive(false);
        for (vn, m) in &psi.modes {
            let lhs = b.t.compose(m).add(&m.compose(&b.t).scale(&-Scalar::one()));
            if let Some(rhs) = dpsi.modes.get(vn) {
                assert!(lhs.agree_on_known(rhs).is_ok(), "mode {vn}");
            }
        }
        // T p[-1/2] = p[-3/2] with coefficient 1
        let v = b.space.unit(1);
        let tv = b.t.apply(&v).unwrap();
        assert_eq!(b.space.render_state(&tv), "p[-3/2]");
    }

    #[test]
    fn tensor_boson_antiboson() {
        let l = boson(2);
        let r = boson(2);
        let t = tensor(&l, &r, true).unwrap();
        // Vacuum weight (0,0); at L=1 total dim would be 3.
        assert_eq!(t.space.basis[0].weight, ExpPair::ZERO);
        let count_le1 = t
            .space
            .basis
            .iter()
            .filter(|v| v.weight.total() <= Rat::ONE)
            .count();
        assert_eq!(count_le1, 3);
        // Chiral and anti-chiral generators commute as matrices.
        let a = t.field("alpha").unwrap();
        let ab = t.field("alpha_bar").unwrap();
        assert!(a.is_holomorphic());
        assert!(ab.is_antiholomorphic());
        for m1 in a.modes.values() {
            for m2 in ab.modes.values() {
                let c = m1.commutator(m2);
                for col in c.cols.iter().flatten() {
                    assert!(col.is_empty(), "chiral/anti-chiral modes must commute");
                }
            }
        }
        // [T, Tbar] = 0 where known.
        let c = t.t.commutator(&t.tbar);
        for col in c.cols.iter().flatten() {
            assert!(col.is_empty());
        }
    }

    #[test]
    fn exp_translation_examples() {
        let b = boson(4);
        // e^{vz vT} vac = vac (invariant vacuum).
        let d = exp_translation(&b.space, &b.t, &b.tbar, &b.space.vacuum(), 3);
        assert_eq!(d.coeffs.len(), 1);
        assert_eq!(
            d.coeff(&vec![Rat::ZERO, Rat::ZERO]),
            Some(&b.space.vacuum())
        );
        // Budget 0 keeps only the state itself.
        let v = b.space.unit(1); // a[-1]
        let d0 = exp_translation(&b.space, &b.t, &b.tbar, &v, 0);
        assert_eq!(d0.coeffs.len(), 1);
        // e^{zT} a[-1]: coefficients a[-1], a[-2], a[-3], ... (T a[-n] = n a[-n-1],
        // divided powers give coefficient 1 each).
        let d = exp_translation(&b.space, &b.t, &b.tbar, &v, 3);
        for i in 0..=2i64 {
            let c = d.coeff(&vec![Rat::int(i), Rat::ZERO]).unwrap();
            let label = format!("a[-{}]", i + 1);
            assert_eq!(b.space.render_state(c), label);
        }
    }

    #[test]
    fn boson_completeness_via_modes() {
        // The modes of alpha applied to the vacuum span the truncation.
        let b = boson(3);
        let alpha = &b.generators[0];
        let mut solver = SpanSolver::new(b.space.dim());
        let mut frontier = vec![b.space.vacuum()];
        solver.insert(&b.space.vacuum());
        while let Some(v) = frontier.pop() {
            for k in 1..=3i64 {
                if let Some(img) = alpha.apply_mode(&b.space, ExpPair::int(-k, -1), &v) {
                    if !crate::dist::Coeff::is_zero(&img) {
                        if let crate::space::SpanOutcome::Independent(_) = solver.insert(&img) {
                            frontier.push(img);
                        }
                    }
                }
            }
        }
        assert_eq!(solver.rank(), b.space.dim());
    }
}
