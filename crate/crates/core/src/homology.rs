//! Relative cocycles, Betti numbers, the `V_γ` event and minimal areas.
//!
//! For a percolation pair `(P2, P1)` of dimensions `(i+1, i)` the relative
//! cochain group in degree `i-1` vanishes, so `H^i(P2, P1)` is just the
//! space of i-cochains `f` with `f(ε) = 0` for `ε ∈ P1` and `δf(σ) = 0` for
//! `σ ∈ P2`. That space is the annihilator of the *constraint row space*
//! spanned by the unit vectors of open `P1` cells and the boundaries of open
//! `P2` cells. The same row space decides `V_γ`: `γ` is homologous to a chain
//! on `P1` through `P2` exactly when `γ` lies in it.

use itertools::Itertools;

use crate::complex::{Chain, Cochain, Complex, PercSubcomplex, Subcomplex};
use crate::error::{Error, Result};
use crate::gfq::{GfMatrix, Prime, RowEchelon};

/// A percolation pair: `P2` of dimension `i+1`, `P1` of dimension `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelPair {
    i: usize,
    p2: PercSubcomplex,
    p1: PercSubcomplex,
}

impl RelPair {
    pub fn new(x: &Complex, i: usize, p2: PercSubcomplex, p1: PercSubcomplex) -> Result<Self> {
        if i + 1 > x.dim() {
            return Err(Error::InvalidDimension(format!(
                "i = {i} needs a complex of dimension at least {}",
                i + 1
            )));
        }
        if p2.dim() != i + 1 || p1.dim() != i {
            return Err(Error::InvalidDimension(format!(
                "pair dimensions ({}, {}) do not match i = {i}",
                p2.dim(),
                p1.dim()
            )));
        }
        if p2.capacity() != x.count(i + 1) || p1.capacity() != x.count(i) {
            return Err(Error::DimensionMismatch {
                expected: x.count(i + 1),
                got: p2.capacity(),
            });
        }
        Ok(RelPair { i, p2, p1 })
    }

    pub fn empty(x: &Complex, i: usize) -> Result<Self> {
        Self::new(
            x,
            i,
            PercSubcomplex::empty(x, i + 1),
            PercSubcomplex::empty(x, i),
        )
    }

    pub fn full(x: &Complex, i: usize) -> Result<Self> {
        Self::new(
            x,
            i,
            PercSubcomplex::full(x, i + 1),
            PercSubcomplex::full(x, i),
        )
    }

    /// Pair from bit masks (bit k opens cell k).
    pub fn from_masks(x: &Complex, i: usize, p2: u64, p1: u64) -> Result<Self> {
        Self::new(
            x,
            i,
            PercSubcomplex::from_mask(x, i + 1, p2),
            PercSubcomplex::from_mask(x, i, p1),
        )
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn p2(&self) -> &PercSubcomplex {
        &self.p2
    }

    pub fn p1(&self) -> &PercSubcomplex {
        &self.p1
    }

    pub fn p2_mut(&mut self) -> &mut PercSubcomplex {
        &mut self.p2
    }

    pub fn p1_mut(&mut self) -> &mut PercSubcomplex {
        &mut self.p1
    }

    pub fn union(&self, other: &Self) -> Self {
        RelPair {
            i: self.i,
            p2: self.p2.union(&other.p2),
            p1: self.p1.union(&other.p1),
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        RelPair {
            i: self.i,
            p2: self.p2.intersection(&other.p2),
            p1: self.p1.intersection(&other.p1),
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.p2.is_subset(&other.p2) && self.p1.is_subset(&other.p1)
    }
}

/// A basis of `Z^i(P2, P1) = H^i(P2, P1)`.
#[derive(Clone, Debug)]
pub struct CocycleSpace {
    pub basis: Vec<Cochain>,
    pub dim: usize,
}

/// Constraint matrix: one unit row per open `P1` cell, one `δ` row per open
/// `P2` cell. Columns are i-cells.
pub fn constraint_matrix(x: &Complex, pair: &RelPair, q: Prime) -> GfMatrix {
    let i = pair.i;
    let rows = pair.p1.open_count() + pair.p2.open_count();
    let mut m = GfMatrix::zeros(rows, x.count(i), q);
    let mut r = 0;
    for e in pair.p1.ids() {
        m.set(r, e, 1);
        r += 1;
    }
    for s in pair.p2.ids() {
        for &(e, sign) in x.boundary(i + 1, s) {
            m.add_to(r, e, sign);
        }
        r += 1;
    }
    m
}

/// Echelon basis of the constraint row space.
pub fn constraint_echelon(x: &Complex, pair: &RelPair, q: Prime) -> RowEchelon {
    let i = pair.i;
    let mut e = RowEchelon::new(q, x.count(i));
    for c in pair.p1.ids() {
        e.insert_sparse(&[(c, 1)]);
    }
    let mut row = Vec::new();
    for s in pair.p2.ids() {
        row.clear();
        row.extend(
            x.boundary(i + 1, s)
                .iter()
                .map(|&(c, sign)| (c, q.reduce(sign))),
        );
        e.insert_sparse(&row);
    }
    e
}

/// `Z^i(P2, P1)` by a dense kernel computation.
pub fn relative_cocycle_space(x: &Complex, pair: &RelPair, q: Prime) -> CocycleSpace {
    let m = constraint_matrix(x, pair, q);
    let basis: Vec<Cochain> = if m.rows() == 0 {
        (0..x.count(pair.i))
            .map(|k| {
                let mut v = vec![0; x.count(pair.i)];
                v[k] = 1;
                Cochain::from_values(pair.i, q, v)
            })
            .collect()
    } else {
        m.kernel_basis()
            .into_iter()
            .map(|v| Cochain::from_values(pair.i, q, v))
            .collect()
    };
    CocycleSpace {
        dim: basis.len(),
        basis,
    }
}

/// `b_i(P2, P1) = dim Z^i(P2, P1)` via the incremental echelon.
pub fn cocycle_dim(x: &Complex, pair: &RelPair, q: Prime) -> usize {
    constraint_echelon(x, pair, q).kernel_dim()
}

/// Whether `f` is compatible with the pair.
pub fn is_compatible(x: &Complex, pair: &RelPair, f: &Cochain) -> bool {
    pair.p1.ids().all(|e| f.get(e) == 0) && pair.p2.ids().all(|s| f.coboundary_at(x, s) == 0)
}

/// Betti numbers `b_j(sub, rel)` for `j = 0..=dim`, with `rel ⊆ sub`
/// (pass an empty `rel` for absolute Betti numbers).
///
/// Uses `b_j = n_j - rank ∂_j - rank ∂_{j+1}` on the relative chain groups,
/// where `n_j` counts j-cells of `sub` not in `rel`.
pub fn betti_numbers(x: &Complex, sub: &Subcomplex, rel: &Subcomplex, q: Prime) -> Result<Vec<usize>> {
    if !rel.is_subset(sub) {
        return Err(Error::InvalidParameter(
            "relative subcomplex must be contained in the subcomplex".into(),
        ));
    }
    let top = x.dim();
    let cells: Vec<Vec<usize>> = (0..=top)
        .map(|j| {
            (0..x.count(j))
                .filter(|&c| sub.contains(j, c) && !rel.contains(j, c))
                .collect()
        })
        .collect();
    // ranks[j] = rank of relative ∂_j (rows (j-1)-cells, cols j-cells)
    let mut ranks = vec![0usize; top + 2];
    for j in 1..=top {
        let mut index = vec![usize::MAX; x.count(j - 1)];
        for (k, &c) in cells[j - 1].iter().enumerate() {
            index[c] = k;
        }
        let mut e = RowEchelon::new(q, cells[j - 1].len());
        let mut row = Vec::new();
        for &c in &cells[j] {
            row.clear();
            row.extend(
                x.boundary(j, c)
                    .iter()
                    .filter(|(f, _)| index[*f] != usize::MAX)
                    .map(|&(f, s)| (index[f], q.reduce(s))),
            );
            e.insert_sparse(&row);
        }
        ranks[j] = e.rank();
    }
    Ok((0..=top)
        .map(|j| cells[j].len() - ranks[j] - ranks[j + 1])
        .collect())
}

/// `b_j(P2, P1)` for a percolation pair, via relative boundary ranks.
pub fn rel_betti(x: &Complex, pair: &RelPair, j: usize, q: Prime) -> usize {
    let sub = pair.p2.to_subcomplex(x);
    let rel = pair.p1.to_subcomplex(x);
    betti_numbers(x, &sub, &rel, q)
        .expect("P1 lies inside P2")
        .get(j)
        .copied()
        .unwrap_or(0)
}

/// All relative Betti numbers of a percolation pair.
pub fn rel_betti_all(x: &Complex, pair: &RelPair, q: Prime) -> Vec<usize> {
    let sub = pair.p2.to_subcomplex(x);
    let rel = pair.p1.to_subcomplex(x);
    betti_numbers(x, &sub, &rel, q).expect("P1 lies inside P2")
}

fn check_gamma(x: &Complex, pair: &RelPair, gamma: &Chain) -> Result<()> {
    if gamma.dim() != pair.i {
        return Err(Error::DimensionMismatch {
            expected: pair.i,
            got: gamma.dim(),
        });
    }
    if let Some((bad, _)) = gamma.terms().find(|&(c, _)| c >= x.count(pair.i)) {
        return Err(Error::UnknownCell(format!("{}-cell id {bad}", pair.i)));
    }
    Ok(())
}

/// `V_γ`: some (i+1)-chain `τ` on `P2` makes `γ - ∂τ` supported on `P1`.
///
/// Decided by solving `[∂_{i+1}|P2 | I|P1] x = γ` densely.
pub fn v_gamma(x: &Complex, pair: &RelPair, gamma: &Chain, q: Prime) -> Result<bool> {
    check_gamma(x, pair, gamma)?;
    let i = pair.i;
    let n = x.count(i);
    let cols: Vec<usize> = pair.p2.ids().collect();
    let p1: Vec<usize> = pair.p1.ids().collect();
    let mut m = GfMatrix::zeros(n, cols.len() + p1.len(), q);
    for (k, &s) in cols.iter().enumerate() {
        for &(e, sign) in x.boundary(i + 1, s) {
            m.add_to(e, k, sign);
        }
    }
    for (k, &e) in p1.iter().enumerate() {
        m.set(e, cols.len() + k, 1);
    }
    Ok(m.solve(&gamma.to_dense(n))?.is_some())
}

/// `V_γ` by membership in an already built constraint echelon.
pub fn v_gamma_in(echelon: &RowEchelon, gamma: &Chain) -> bool {
    let terms: Vec<(usize, u32)> = gamma.terms().collect();
    echelon.contains_sparse(&terms)
}

/// `χ(sub) - χ(rel)`.
pub fn euler_characteristic(sub: &Subcomplex, rel: &Subcomplex) -> i64 {
    sub.euler_characteristic() - rel.euler_characteristic()
}

/// Smallest support of an (i+1)-chain `τ` with `∂τ = γ`.
///
/// Exhaustive search over subsets of (i+1)-cells in increasing size; the
/// search cost is exponential. `budget` caps the number of subsets examined.
/// Returns `Ok(None)` when `γ` bounds nothing in `x`.
pub fn min_area(x: &Complex, gamma: &Chain, q: Prime, budget: u64) -> Result<Option<usize>> {
    let i = gamma.dim();
    if i + 1 > x.dim() {
        return Err(Error::InvalidDimension(format!(
            "no {}-cells to bound a {i}-chain",
            i + 1
        )));
    }
    if gamma.is_zero() {
        return Ok(Some(0));
    }
    let n = x.count(i);
    let d = x.boundary_matrix(i + 1, q)?;
    if d.solve(&gamma.to_dense(n))?.is_none() {
        return Ok(None);
    }
    // Only cells whose boundary meets the support of γ can start a minimal
    // filling, but the filling itself may wander; search all cells.
    let cells: Vec<usize> = (0..x.count(i + 1)).collect();
    let target: Vec<(usize, u32)> = gamma.terms().collect();
    let mut examined: u64 = 0;
    for k in 1..=cells.len() {
        for subset in cells.iter().copied().combinations(k) {
            examined += 1;
            if examined > budget {
                return Err(Error::BudgetExceeded { budget });
            }
            let mut e = RowEchelon::new(q, n);
            for &s in &subset {
                let row: Vec<(usize, u32)> = x
                    .boundary(i + 1, s)
                    .iter()
                    .map(|&(c, sign)| (c, q.reduce(sign)))
                    .collect();
                e.insert_sparse(&row);
            }
            if e.contains_sparse(&target) {
                return Ok(Some(k));
            }
        }
    }
    unreachable!("γ is a boundary, so the full cell set spans it")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::Cell;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn q(p: u32) -> Prime {
        Prime::new(p).unwrap()
    }

    #[test]
    fn fixture_cohomology() {
        let x = Complex::filled_square_with_loop();
        for p in [2, 3, 5, 7] {
            let p2 = PercSubcomplex::full(&x, 2);
            let none = RelPair::new(&x, 1, p2.clone(), PercSubcomplex::empty(&x, 1)).unwrap();
            let z = relative_cocycle_space(&x, &none, q(p));
            assert_eq!(z.dim, 6);
            assert_eq!(cocycle_dim(&x, &none, q(p)), 6);
            for f in &z.basis {
                assert!(is_compatible(&x, &none, f));
            }
            let a = PercSubcomplex::from_ids(&x, 1, &[0, 1, 2, 3]).unwrap();
            let rel = RelPair::new(&x, 1, p2, a).unwrap();
            assert_eq!(relative_cocycle_space(&x, &rel, q(p)).dim, 3);

            let b = betti_numbers(&x, &Subcomplex::full(&x), &Subcomplex::empty(&x), q(p)).unwrap();
            assert_eq!(b, vec![1, 1, 0]);
        }
    }

    #[test]
    fn fully_open_pair_has_no_cocycles() {
        for x in [
            Complex::cubical_box(2, &[2, 2]).unwrap(),
            Complex::torus(2, 2).unwrap(),
            Complex::filled_square_with_loop(),
        ] {
            let pair = RelPair::full(&x, 1).unwrap();
            assert_eq!(relative_cocycle_space(&x, &pair, q(3)).dim, 0);
        }
    }

    #[test]
    fn torus_betti_numbers() {
        let t = Complex::torus(2, 2).unwrap();
        let abs = betti_numbers(&t, &Subcomplex::full(&t), &Subcomplex::empty(&t), q(2)).unwrap();
        assert_eq!(abs, vec![1, 2, 1]);
        // Relative to the vertex set the four vertices add three more 1-classes.
        let pair = RelPair::new(
            &t,
            1,
            PercSubcomplex::full(&t, 2),
            PercSubcomplex::empty(&t, 1),
        )
        .unwrap();
        assert_eq!(rel_betti(&t, &pair, 1, q(2)), 5);
        assert_eq!(rel_betti(&t, &pair, 0, q(2)), 0);
        let t3 = Complex::torus(3, 2).unwrap();
        let abs3 =
            betti_numbers(&t3, &Subcomplex::full(&t3), &Subcomplex::empty(&t3), q(3)).unwrap();
        assert_eq!(abs3, vec![1, 3, 3, 1]);
    }

    #[test]
    fn v_gamma_examples() {
        let x = Complex::cubical_box(2, &[2, 2]).unwrap();
        let p = q(3);
        let sq = x.cell_id(&Cell::new(vec![0, 0], vec![0, 1])).unwrap();
        let gamma = Chain::from_terms(2, p, &[(sq, 1)]).boundary(&x);
        let mut pair = RelPair::empty(&x, 1).unwrap();
        assert!(!v_gamma(&x, &pair, &gamma, p).unwrap());
        pair.p2_mut().set(sq, true);
        assert!(v_gamma(&x, &pair, &gamma, p).unwrap());
        let mut on_p1 = RelPair::empty(&x, 1).unwrap();
        for (e, _) in gamma.terms() {
            on_p1.p1_mut().set(e, true);
        }
        assert!(v_gamma(&x, &on_p1, &gamma, p).unwrap());

        let t = Complex::torus(2, 2).unwrap();
        let e0 = t.cell_id(&Cell::new(vec![0, 0], vec![0])).unwrap();
        let e1 = t.cell_id(&Cell::new(vec![1, 0], vec![0])).unwrap();
        let meridian = Chain::from_terms(1, p, &[(e0, 1), (e1, 1)]);
        assert!(meridian.boundary(&t).is_zero());
        let empty = RelPair::empty(&t, 1).unwrap();
        assert!(!v_gamma(&t, &empty, &meridian, p).unwrap());
        let full_p2 = RelPair::new(
            &t,
            1,
            PercSubcomplex::full(&t, 2),
            PercSubcomplex::empty(&t, 1),
        )
        .unwrap();
        assert!(!v_gamma(&t, &full_p2, &meridian, p).unwrap());
    }

    #[test]
    fn euler_examples() {
        let x = Complex::filled_square_with_loop();
        let full = Subcomplex::full(&x);
        let empty = Subcomplex::empty(&x);
        assert_eq!(euler_characteristic(&full, &empty), 0);
        let t = Complex::torus(2, 2).unwrap();
        assert_eq!(
            euler_characteristic(&Subcomplex::full(&t), &Subcomplex::empty(&t)),
            0
        );
        let pt = Complex::graph(1, &[]).unwrap();
        assert_eq!(
            euler_characteristic(&Subcomplex::full(&pt), &Subcomplex::empty(&pt)),
            1
        );
    }

    #[test]
    fn min_area_examples() {
        let x = Complex::cubical_box(2, &[3, 3]).unwrap();
        let p = q(2);
        for n in 1..=3usize {
            let mut tau = Chain::zero(2, p);
            for a in 0..n {
                for b in 0..n {
                    tau.add_term(x.cell_id(&Cell::new(vec![a, b], vec![0, 1])).unwrap(), 1);
                }
            }
            let gamma = tau.boundary(&x);
            assert_eq!(min_area(&x, &gamma, p, 1 << 20).unwrap(), Some(n * n));
        }
        let t = Complex::torus(2, 2).unwrap();
        let e0 = t.cell_id(&Cell::new(vec![0, 0], vec![0])).unwrap();
        let e1 = t.cell_id(&Cell::new(vec![1, 0], vec![0])).unwrap();
        let meridian = Chain::from_terms(1, p, &[(e0, 1), (e1, 1)]);
        assert_eq!(min_area(&t, &meridian, p, 1000).unwrap(), None);

        let mut tau = Chain::zero(2, p);
        for a in 0..3 {
            for b in 0..3 {
                tau.add_term(x.cell_id(&Cell::new(vec![a, b], vec![0, 1])).unwrap(), 1);
            }
        }
        assert_eq!(
            min_area(&x, &tau.boundary(&x), p, 10),
            Err(Error::BudgetExceeded { budget: 10 })
        );
    }

    fn random_pair(x: &Complex, i: usize, seed: u64) -> RelPair {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pair = RelPair::empty(x, i).unwrap();
        for s in 0..x.count(i + 1) {
            pair.p2_mut().set(s, rng.random_bool(0.5));
        }
        for e in 0..x.count(i) {
            pair.p1_mut().set(e, rng.random_bool(0.5));
        }
        pair
    }

    proptest! {
        #[test]
        fn cocycle_routes_agree(seed: u64, qi in 0usize..3, i in 0usize..2) {
            let p = q([2, 3, 5][qi]);
            let x = Complex::cubical_box(3, &[2, 1, 1]).unwrap();
            let pair = random_pair(&x, i, seed);
            let space = relative_cocycle_space(&x, &pair, p);
            prop_assert_eq!(space.dim, cocycle_dim(&x, &pair, p));
            prop_assert_eq!(space.dim, rel_betti(&x, &pair, i, p));
            for f in &space.basis {
                prop_assert!(is_compatible(&x, &pair, f));
            }
            for j in 0..i {
                prop_assert_eq!(rel_betti(&x, &pair, j, p), 0);
            }
        }

        #[test]
        fn single_cell_changes_betti_by_zero_or_one(seed: u64, cell in 0usize..64) {
            let p = q(3);
            let x = Complex::cubical_box(2, &[2, 2]).unwrap();
            let pair = random_pair(&x, 1, seed);
            let b = cocycle_dim(&x, &pair, p) as i64;
            let mut more = pair.clone();
            if cell % 2 == 0 {
                more.p1_mut().set(cell / 2 % 12, true);
            } else {
                more.p2_mut().set(cell / 2 % 4, true);
            }
            let db = cocycle_dim(&x, &more, p) as i64 - b;
            prop_assert!(db == 0 || db == -1);
        }

        #[test]
        fn v_gamma_routes_agree_and_are_monotone(seed: u64, terms in proptest::collection::vec((0usize..12, 0i64..3), 0..5)) {
            let p = q(3);
            let x = Complex::cubical_box(2, &[2, 2]).unwrap();
            let pair = random_pair(&x, 1, seed);
            let gamma = Chain::from_terms(1, p, &terms);
            let dense = v_gamma(&x, &pair, &gamma, p).unwrap();
            prop_assert_eq!(dense, v_gamma_in(&constraint_echelon(&x, &pair, p), &gamma));
            let bigger = pair.union(&random_pair(&x, 1, seed ^ 0xabc));
            if dense {
                prop_assert!(v_gamma(&x, &bigger, &gamma, p).unwrap());
            }
        }

        #[test]
        fn euler_poincare_random_subcomplexes(seed: u64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Complex::cubical_box(3, &[2, 1, 1]).unwrap();
            // random closed subcomplex: random top cells plus random lower cells, then close
            let mut sub = Subcomplex::empty(&x);
            for j in (0..=x.dim()).rev() {
                for c in 0..x.count(j) {
                    if rng.random_bool(0.3) {
                        sub.cells[j].insert(c);
                    }
                }
                if j > 0 {
                    let members: Vec<usize> = sub.cells[j].ones().collect();
                    for c in members {
                        for &(f, _) in x.boundary(j, c) {
                            sub.cells[j - 1].insert(f);
                        }
                    }
                }
            }
            prop_assert!(sub.is_closed(&x));
            let empty = Subcomplex::empty(&x);
            let b = betti_numbers(&x, &sub, &empty, q(2)).unwrap();
            let alt: i64 = b.iter().enumerate().map(|(j, &v)| if j % 2 == 0 { v as i64 } else { -(v as i64) }).sum();
            prop_assert_eq!(alt, euler_characteristic(&sub, &empty));
        }

        #[test]
        fn relative_euler_poincare(seed: u64, i in 0usize..2) {
            let x = Complex::torus(2, 2).unwrap();
            let pair = random_pair(&x, i, seed);
            let sub = pair.p2().to_subcomplex(&x);
            let rel = pair.p1().to_subcomplex(&x);
            let b = rel_betti_all(&x, &pair, q(5));
            let alt: i64 = b.iter().enumerate().map(|(j, &v)| if j % 2 == 0 { v as i64 } else { -(v as i64) }).sum();
            prop_assert_eq!(alt, euler_characteristic(&sub, &rel));
        }
    }
}
