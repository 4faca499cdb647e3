//! Finite truncations of graded state spaces, weight-homogeneous operator
//! matrices, and field realizations.
//!
//! Everything is graded by a weight pair `(wt, wtbar)`; truncation keeps the
//! basis vectors of total weight at most `L`.  An operator column whose
//! target weight exceeds the truncation is flagged unverified rather than
//! silently zeroed, and that flag propagates through every computation.

use crate::dist::Coeff;
use crate::exponent::{ExpPair, Parity};
use crate::scalar::{Rat, Scalar};
use std::collections::BTreeMap;
use std::fmt;

/// Weight pair `(wt, wtbar)`.
pub type Weight = ExpPair;

#[derive(Clone, Debug)]
pub struct BasisVector {
    pub label: String,
    pub weight: Weight,
    pub parity: Parity,
}

/// Ordered basis of a truncated graded space; the vacuum is index 0.
#[derive(Clone, Debug)]
pub struct GradedSpace {
    pub basis: Vec<BasisVector>,
    /// Maximum total weight kept by the truncation.
    pub max_weight: Rat,
}

impl GradedSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn vacuum(&self) -> StateVec {
        self.unit(0)
    }

    pub fn unit(&self, i: usize) -> StateVec {
        let mut v = vec![Scalar::zero(); self.dim()];
        v[i] = Scalar::one();
        StateVec(v)
    }

    pub fn total_weight(&self, i: usize) -> Rat {
        self.basis[i].weight.total()
    }

    pub fn parity_of(&self, v: &StateVec) -> Option<Parity> {
        let mut p = None;
        for (i, c) in v.0.iter().enumerate() {
            if !c.is_zero() {
                match p {
                    None => p = Some(self.basis[i].parity),
                    Some(q) if q == self.basis[i].parity => {}
                    _ => return None,
                }
            }
        }
        Some(p.unwrap_or(Parity::Even))
    }

    /// Weight pair of a homogeneous state; `None` for mixed or zero states.
    pub fn weight_of(&self, v: &StateVec) -> Option<Weight> {
        let mut w = None;
        for (i, c) in v.0.iter().enumerate() {
            if !c.is_zero() {
                match w {
                    None => w = Some(self.basis[i].weight),
                    Some(q) if q == self.basis[i].weight => {}
                    _ => return None,
                }
            }
        }
        w
    }

    /// Largest total weight appearing in the state (zero state: 0).
    pub fn max_total_weight(&self, v: &StateVec) -> Rat {
        let mut m = Rat::ZERO;
        for (i, c) in v.0.iter().enumerate() {
            if !c.is_zero() {
                m = m.max(self.total_weight(i));
            }
        }
        m
    }

    /// Indices of basis vectors with total weight at most `bound`.
    pub fn indices_up_to(&self, bound: Rat) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.total_weight(i) <= bound)
            .collect()
    }

    pub fn render_state(&self, v: &StateVec) -> String {
        let mut parts = Vec::new();
        for (i, c) in v.0.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let label = &self.basis[i].label;
            if c.is_one() {
                parts.push(label.clone());
            } else {
                parts.push(format!("{}*{}", c.render(), label));
            }
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ")
        }
    }
}

/// Dense exact-rational state vector over a space's basis.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StateVec(pub Vec<Scalar>);

impl StateVec {
    pub fn zeros(dim: usize) -> Self {
        StateVec(vec![Scalar::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> &Scalar {
        &self.0[i]
    }

    pub fn add_scaled(&mut self, other: &StateVec, s: &Scalar) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += &(b * s);
        }
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, &Scalar)> {
        self.0.iter().enumerate().filter(|(_, c)| !c.is_zero())
    }
}

impl Coeff for StateVec {
    fn is_zero(&self) -> bool {
        self.0.iter().all(Scalar::is_zero)
    }
    fn add(&self, other: &Self) -> Self {
        StateVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
    fn scale(&self, s: &Scalar) -> Self {
        StateVec(self.0.iter().map(|a| a * s).collect())
    }
    fn neg(&self) -> Self {
        StateVec(self.0.iter().map(|a| -a).collect())
    }
    fn render(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(Scalar::render).collect();
        format!("[{}]", parts.join(", "))
    }
}

/// Sparse column: sorted `(row, coefficient)` pairs.
pub type SparseCol = Vec<(usize, Scalar)>;

/// Weight-homogeneous operator on the truncated basis.
///
/// `cols[j] == None` flags a source vector whose image leaves the truncation
/// (unverified); `Some(col)` is the exact image, possibly zero.
#[derive(Clone, PartialEq, Debug)]
pub struct OperatorMatrix {
    pub shift: Weight,
    pub parity: Parity,
    pub cols: Vec<Option<SparseCol>>,
}

impl OperatorMatrix {
    pub fn zero(dim: usize, shift: Weight, parity: Parity) -> Self {
        OperatorMatrix {
            shift,
            parity,
            cols: vec![Some(Vec::new()); dim],
        }
    }

    pub fn unknown(dim: usize, shift: Weight, parity: Parity) -> Self {
        OperatorMatrix {
            shift,
            parity,
            cols: vec![None; dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = OperatorMatrix::zero(dim, ExpPair::ZERO, Parity::Even);
        for (j, col) in m.cols.iter_mut().enumerate() {
            *col = Some(vec![(j, Scalar::one())]);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> Option<&SparseCol> {
        self.cols[j].as_ref()
    }

    pub fn set_col(&mut self, j: usize, col: SparseCol) {
        self.cols[j] = Some(col.into_iter().filter(|(_, c)| !c.is_zero()).collect());
    }

    pub fn is_zero(&self) -> bool {
        self.cols
            .iter()
            .all(|c| c.as_ref().is_some_and(|col| col.is_empty()))
    }

    /// Exact image of a state, or `None` if any contributing column is
    /// unverified.
    pub fn apply(&self, v: &StateVec) -> Option<StateVec> {
        let mut out = StateVec::zeros(self.dim());
        for (j, c) in v.support() {
            let col = self.cols[j].as_ref()?;
            for (row, entry) in col {
                out.0[*row] += &(entry * c);
            }
        }
        Some(out)
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let cols = self
            .cols
            .iter()
            .map(|c| {
                c.as_ref().map(|col| {
                    col.iter()
                        .map(|(r, v)| (*r, v * s))
                        .filter(|(_, v)| !v.is_zero())
                        .collect()
                })
            })
            .collect();
        OperatorMatrix {
            shift: self.shift,
            parity: self.parity,
            cols,
        }
    }

    /// Entrywise sum; requires equal shifts.  Columns unknown on either side
    /// stay unknown.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shift, other.shift, "adding operators of different weight shift");
        let cols = self
            .cols
            .iter()
            .zip(&other.cols)
            .map(|(a, b)| match (a, b) {
                (Some(x), Some(y)) => {
                    let mut acc: BTreeMap<usize, Scalar> = BTreeMap::new();
                    for (r, v) in x.iter().chain(y.iter()) {
                        let e = acc.entry(*r).or_insert_with(Scalar::zero);
                        *e += v;
                    }
                    Some(
                        acc.into_iter()
                            .filter(|(_, v)| !v.is_zero())
                            .collect::<SparseCol>(),
                    )
                }
                _ => None,
            })
            .collect();
        OperatorMatrix {
            shift: self.shift,
            parity: self.parity,
            cols,
        }
    }

    /// Composition `self . other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        let dim = self.dim();
        let mut out = OperatorMatrix {
            shift: self.shift + other.shift,
            parity: self.parity * other.parity,
            cols: vec![None; dim],
        };
        for j in 0..dim {
            let Some(mid) = &other.cols[j] else { continue };
            let mut acc: BTreeMap<usize, Scalar> = BTreeMap::new();
            let mut ok = true;
            for (m, c) in mid {
                match &self.cols[*m] {
                    Some(col) => {
                        for (r, v) in col {
                            let e = acc.entry(*r).or_insert_with(Scalar::zero);
                            *e += &(v * c);
                        }
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                out.cols[j] = Some(acc.into_iter().filter(|(_, v)| !v.is_zero()).collect());
            }
        }
        out
    }

    /// Supercommutator `[self, other] = self.other -+ other.self`, with the
    /// sign `-1` exactly when both operators are odd.
    pub fn commutator(&self, other: &Self) -> Self {
        let sign = crate::exponent::exchange_sign(self.parity, other.parity);
        let ab = self.compose(other);
        let ba = other.compose(self);
        let ba_signed = ba.scale(&Scalar::from_int(-i64::from(sign)));
        ab.add(&ba_signed)
    }

    /// Compares two operators on columns known to both, returning the number
    /// checked or the first differing column.
    pub fn agree_on_known(&self, other: &Self) -> Result<usize, usize> {
        let mut checked = 0;
        for j in 0..self.dim() {
            if let (Some(a), Some(b)) = (&self.cols[j], &other.cols[j]) {
                checked += 1;
                if a != b {
                    return Err(j);
                }
            }
        }
        Ok(checked)
    }
}

/// A field on a truncated graded space: finitely many stored modes.
///
/// The builder contract: every mode with a nonzero, representable action on
/// the truncation is stored; a missing mode acts as zero wherever the weight
/// bookkeeping keeps the image inside the truncation and is unverified
/// beyond it.
#[derive(Clone, Debug)]
pub struct FieldRealization {
    pub name: String,
    pub weight: Weight,
    pub parity: Parity,
    pub modes: BTreeMap<ExpPair, OperatorMatrix>,
    /// Exact exponent support per sector component when the builder knows
    /// it (e.g. the identity field is the single monomial `vz^0`); `None`
    /// derives cosets from the stored modes with unbounded ranges.
    pub exponent_support: Option<(crate::window::AxisSupport, crate::window::AxisSupport)>,
    /// Whether the stored modes are complete on the truncation: for a
    /// complete field an absent mode acts as exact zero wherever the weight
    /// bookkeeping keeps the image representable.  Assembled fields are
    /// incomplete: their absent modes are unverified.
    pub complete: bool,
}

impl FieldRealization {
    pub fn identity(dim: usize) -> Self {
        let mut modes = BTreeMap::new();
        modes.insert(ExpPair::minus_one(), OperatorMatrix::identity(dim));
        FieldRealization {
            name: "one".into(),
            weight: ExpPair::ZERO,
            parity: Parity::Even,
            modes,
            exponent_support: Some((
                crate::window::AxisSupport::pinned(crate::scalar::Rat::ZERO),
                crate::window::AxisSupport::pinned(crate::scalar::Rat::ZERO),
            )),
            complete: true,
        }
    }

    /// Weight shift of mode `vn`: `(-n-1+w, -nbar-1+wbar)`.
    pub fn mode_shift(&self, vn: ExpPair) -> Weight {
        ExpPair::new(
            -(vn.n) - Rat::ONE + self.weight.n,
            -(vn.nbar) - Rat::ONE + self.weight.nbar,
        )
    }

    /// True when no stored mode moves the `zbar` sector.
    pub fn is_holomorphic(&self) -> bool {
        self.weight.nbar.is_zero() && self.modes.keys().all(|vn| vn.nbar == Rat::int(-1))
    }

    /// The anti-chiral mirror condition.
    pub fn is_antiholomorphic(&self) -> bool {
        self.weight.n.is_zero() && self.modes.keys().all(|vn| vn.n == Rat::int(-1))
    }

    /// Exact action of mode `vn` on `v`, `None` when unverified.
    ///
    /// `space` supplies the weight bookkeeping for absent modes.
    pub fn apply_mode(&self, space: &GradedSpace, vn: ExpPair, v: &StateVec) -> Option<StateVec> {
        if let Some(m) = self.modes.get(&vn) {
            return m.apply(v);
        }
        // Absent mode: below the grading everything vanishes; within the
        // truncation a complete field's absent mode is exact zero, an
        // assembled field's is unverified.
        let shift = self.mode_shift(vn).total();
        let max_src = space.max_total_weight(v);
        if max_src + shift < crate::scalar::Rat::ZERO {
            Some(StateVec::zeros(space.dim()))
        } else if self.complete && max_src + shift <= space.max_weight {
            Some(StateVec::zeros(space.dim()))
        } else {
            None
        }
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        let modes = self.modes.iter().map(|(vn, m)| (*vn, m.scale(s))).collect();
        FieldRealization {
            name: format!("{}*({})", s.render(), self.name),
            weight: self.weight,
            parity: self.parity,
            modes,
            exponent_support: self.exponent_support.clone(),
            complete: self.complete,
        }
    }

    /// Linear combination of equal-weight fields.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.weight, other.weight, "adding fields of different weight");
        let mut modes = self.modes.clone();
        for (vn, m) in &other.modes {
            match modes.get_mut(vn) {
                Some(cur) => *cur = cur.add(m),
                None => {
                    modes.insert(*vn, m.clone());
                }
            }
        }
        FieldRealization {
            name: format!("({}+{})", self.name, other.name),
            weight: self.weight,
            parity: self.parity,
            modes,
            exponent_support: match (&self.exponent_support, &other.exponent_support) {
                (Some((az, azb)), Some((bz, bzb))) => {
                    Some((az.union_with(bz), azb.union_with(bzb)))
                }
                _ => None,
            },
            complete: self.complete && other.complete,
        }
    }

    /// The state `s_1(a) = a_{(-1,-1)} vacuum`.
    pub fn s1(&self, space: &GradedSpace) -> Option<StateVec> {
        self.apply_mode(space, ExpPair::minus_one(), &space.vacuum())
    }

    /// `d_z` or `d_zbar` of the field: the mode of the derivative at
    /// `(n, nbar)` is `-n a_{(n-1,nbar)}` (resp. barred).
    pub fn derive(&self, bar: bool) -> FieldRealization {
        let mut modes: BTreeMap<ExpPair, OperatorMatrix> = BTreeMap::new();
        for (vn, m) in &self.modes {
            let (dst, factor) = if bar {
                (
                    ExpPair::new(vn.n, vn.nbar + Rat::ONE),
                    -(vn.nbar + Rat::ONE).to_scalar(),
                )
            } else {
                (
                    ExpPair::new(vn.n + Rat::ONE, vn.nbar),
                    -(vn.n + Rat::ONE).to_scalar(),
                )
            };
            if factor.is_zero() {
                continue;
            }
            modes.insert(dst, m.scale(&factor));
        }
        FieldRealization {
            name: format!("d{}({})", if bar { "bar" } else { "" }, self.name),
            weight: ExpPair::new(
                self.weight.n + if bar { Rat::ZERO } else { Rat::ONE },
                self.weight.nbar + if bar { Rat::ONE } else { Rat::ZERO },
            ),
            parity: self.parity,
            modes,
            exponent_support: None,
            complete: self.complete,
        }
    }
}

impl fmt::Display for FieldRealization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// Incremental exact linear span with coordinate tracking.
///
/// Inserted vectors either join the generating list (independent) or come
/// back expressed as a rational combination of the *independent* vectors
/// inserted so far; dependent insertions never enter the index.
pub struct SpanSolver {
    dim: usize,
    /// Echelon rows: (reduced vector, combination over the generators at the
    /// time of creation — a prefix of the current generator list).
    rows: Vec<(Vec<Scalar>, Vec<Scalar>)>,
    pivots: Vec<usize>,
}

pub enum SpanOutcome {
    /// Vector is independent; it became generator with this index.
    Independent(usize),
    /// Coefficients over the previously inserted independent vectors.
    Dependent(Vec<Scalar>),
}

impl SpanSolver {
    pub fn new(dim: usize) -> Self {
        SpanSolver {
            dim,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    // Maintains the invariant `vec = v + combo . generators`.
    fn reduce(&self, v: &StateVec) -> (Vec<Scalar>, Vec<Scalar>) {
        let mut vec = v.0.clone();
        let mut combo = vec![Scalar::zero(); self.rows.len()];
        for ((row, rcombo), &p) in self.rows.iter().zip(&self.pivots) {
            if vec[p].is_zero() {
                continue;
            }
            let f = vec[p].clone();
            for i in 0..self.dim {
                let d = &row[i] * &f;
                vec[i] -= &d;
            }
            for (c, rc) in combo.iter_mut().zip(rcombo) {
                let d = rc * &f;
                *c -= &d;
            }
        }
        (vec, combo)
    }

    /// Inserts a vector, returning its expression when dependent.
    pub fn insert(&mut self, v: &StateVec) -> SpanOutcome {
        assert_eq!(v.dim(), self.dim);
        let (mut vec, mut combo) = self.reduce(v);
        let pivot = vec.iter().position(|c| !c.is_zero());
        match pivot {
            None => {
                // v + combo . gens = 0  =>  v = -combo . gens
                SpanOutcome::Dependent(combo.into_iter().map(|c| -c).collect())
            }
            Some(p) => {
                let inv = vec[p].recip();
                for c in vec.iter_mut() {
                    *c = &*c * &inv;
                }
                combo.push(Scalar::one());
                for c in combo.iter_mut() {
                    *c = &*c * &inv;
                }
                self.rows.push((vec, combo));
                self.pivots.push(p);
                SpanOutcome::Independent(self.rows.len() - 1)
            }
        }
    }

    /// Expresses `v` over the independent generators without inserting it.
    pub fn express(&self, v: &StateVec) -> Option<Vec<Scalar>> {
        let (vec, combo) = self.reduce(v);
        if vec.iter().all(Scalar::is_zero) {
            Some(combo.into_iter().map(|c| -c).collect())
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(n: i64) -> Scalar {
        Scalar::from_int(n)
    }

    #[test]
    fn span_solver_expresses_combinations() {
        let mut s = SpanSolver::new(3);
        let a = StateVec(vec![sc(1), sc(0), sc(2)]);
        let b = StateVec(vec![sc(0), sc(3), sc(1)]);
        assert!(matches!(s.insert(&a), SpanOutcome::Independent(0)));
        assert!(matches!(s.insert(&b), SpanOutcome::Independent(1)));
        let c = StateVec(vec![sc(2), sc(3), sc(5)]); // 2a + b
        match s.insert(&c) {
            SpanOutcome::Dependent(coeffs) => {
                assert_eq!(coeffs[0], sc(2));
                assert_eq!(coeffs[1], sc(1));
            }
            _ => panic!("expected dependence"),
        }
        assert_eq!(s.rank(), 2);
        let d = StateVec(vec![sc(1), sc(6), sc(4)]); // a + 2b
        let coeffs = s.express(&d).unwrap();
        assert_eq!(coeffs[0], sc(1));
        assert_eq!(coeffs[1], sc(2));
    }

    #[test]
    fn operator_apply_respects_unknown_columns() {
        let mut m = OperatorMatrix::unknown(2, ExpPair::ZERO, Parity::Even);
        m.set_col(0, vec![(1, sc(4))]);
        let e0 = StateVec(vec![sc(1), sc(0)]);
        let e1 = StateVec(vec![sc(0), sc(1)]);
        assert_eq!(m.apply(&e0).unwrap().0[1], sc(4));
        assert!(m.apply(&e1).is_none());
        // Zero coefficient on the unknown column is fine.
        let mixed = StateVec(vec![sc(2), sc(0)]);
        assert!(m.apply(&mixed).is_some());
    }

    #[test]
    fn compose_and_commutator() {
        // On a 2-dim space: raising E and lowering F with [E, F] diagonal.
        let mut e = OperatorMatrix::zero(2, ExpPair::int(1, 0), Parity::Even);
        e.set_col(0, vec![(1, sc(1))]);
        let mut f = OperatorMatrix::zero(2, ExpPair::int(-1, 0), Parity::Even);
        f.set_col(1, vec![(0, sc(1))]);
        let c = e.commutator(&f);
        let v0 = StateVec(vec![sc(1), sc(0)]);
        let v1 = StateVec(vec![sc(0), sc(1)]);
        assert_eq!(c.apply(&v0).unwrap().0[0], sc(-1));
        assert_eq!(c.apply(&v1).unwrap().0[1], sc(1));
    }

    #[test]
    fn anticommutator_of_odd_operators() {
        // Two odd operators: the supercommutator is the anticommutator.
        let mut a = OperatorMatrix::zero(2, ExpPair::int(1, 0), Parity::Odd);
        a.set_col(0, vec![(1, sc(1))]);
        let mut b = OperatorMatrix::zero(2, ExpPair::int(-1, 0), Parity::Odd);
        b.set_col(1, vec![(0, sc(1))]);
        let c = a.commutator(&b);
        // {a, b} e0 = ab e0 + ba e0 = b(a e0) = e0 (a e0 = e1, b e1 = e0).
        let v0 = StateVec(vec![sc(1), sc(0)]);
        assert_eq!(c.apply(&v0).unwrap().0[0], sc(1));
    }
}
