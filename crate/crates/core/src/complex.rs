//! Cubical cell complexes, chains, cochains and percolation subcomplexes.
//!
//! A j-cell of a cubical complex is `base + [0,1]^dirs`, where `dirs` is a
//! strictly increasing list of `j` axis indices. Its boundary is
//!
//! ```text
//! ∂(base, dirs) = Σ_m (-1)^m [ (base + e_{u_m}, dirs \ u_m) - (base, dirs \ u_m) ]
//! ```
//!
//! with `u_0 < u_1 < ...` the entries of `dirs`. Cell ids are contiguous per
//! dimension and ordered lexicographically on `(dirs, base)`.
//!
//! On a torus of period `n` coordinates are taken mod `n`. For `n = 1` the
//! two faces in a direction coincide and their incidences cancel.

use std::collections::BTreeMap;
use std::fmt;

use fixedbitset::FixedBitSet;
use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gfq::{GfMatrix, Prime};

/// A cube `base + [0,1]^dirs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub base: Vec<usize>,
    pub dirs: Vec<usize>,
}

impl Cell {
    pub fn new(base: Vec<usize>, dirs: Vec<usize>) -> Self {
        Cell { base, dirs }
    }

    pub fn vertex(base: Vec<usize>) -> Self {
        Cell { base, dirs: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}+{:?}", self.base, self.dirs)
    }
}

/// Where a complex comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    /// `[0,w_1] × ... × [0,w_d]` with free boundary.
    Box { d: usize, extents: Vec<usize> },
    /// `(ℤ/nℤ)^d`.
    Torus { d: usize, n: usize },
    /// A hand-built complex given by incidence lists.
    Explicit { name: String },
}

/// Compressed incidence lists: `entries[offsets[k]..offsets[k+1]]` belong to cell `k`.
#[derive(Clone, Debug, Default)]
struct Incidence {
    offsets: Vec<usize>,
    entries: Vec<(usize, i64)>,
}

impl Incidence {
    fn from_lists(lists: Vec<Vec<(usize, i64)>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for l in lists {
            entries.extend(l);
            offsets.push(entries.len());
        }
        Incidence { offsets, entries }
    }

    fn get(&self, k: usize) -> &[(usize, i64)] {
        &self.entries[self.offsets[k]..self.offsets[k + 1]]
    }

    fn transpose(&self, n_targets: usize) -> Incidence {
        let mut lists = vec![Vec::new(); n_targets];
        for k in 0..self.offsets.len().saturating_sub(1) {
            for &(t, s) in self.get(k) {
                lists[t].push((k, s));
            }
        }
        Incidence::from_lists(lists)
    }
}

/// Block of cells sharing one direction set.
#[derive(Clone, Debug)]
struct Block {
    dirs: Vec<usize>,
    offset: usize,
    /// Number of admissible base values per axis.
    sizes: Vec<usize>,
}

/// A finite cell complex with oriented incidences.
#[derive(Clone, Debug)]
pub struct Complex {
    geometry: Geometry,
    counts: Vec<usize>,
    /// `boundary[j]` maps j-cells to (j-1)-cells; `boundary[0]` is empty.
    boundary: Vec<Incidence>,
    /// `coboundary[j]` maps j-cells to (j+1)-cells.
    coboundary: Vec<Incidence>,
    blocks: Vec<Vec<Block>>,
}

impl Complex {
    /// The box `[0,w_1] × ... × [0,w_d]` of unit cubes with free boundary.
    pub fn cubical_box(d: usize, widths: &[usize]) -> Result<Complex> {
        if d == 0 {
            return Err(Error::InvalidDimension("box dimension must be at least 1".into()));
        }
        if widths.len() != d {
            return Err(Error::InvalidDimension(format!(
                "expected {d} widths, got {}",
                widths.len()
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidDimension("box widths must be positive".into()));
        }
        Ok(Self::build_cubical(
            Geometry::Box {
                d,
                extents: widths.to_vec(),
            },
            d,
        ))
    }

    /// The discrete torus `(ℤ/nℤ)^d`.
    pub fn torus(d: usize, n: usize) -> Result<Complex> {
        if d == 0 {
            return Err(Error::InvalidDimension("torus dimension must be at least 1".into()));
        }
        if n == 0 {
            return Err(Error::InvalidDimension("torus period must be positive".into()));
        }
        Ok(Self::build_cubical(Geometry::Torus { d, n }, d))
    }

    fn build_cubical(geometry: Geometry, d: usize) -> Complex {
        let mut blocks = Vec::with_capacity(d + 1);
        let mut counts = Vec::with_capacity(d + 1);
        for j in 0..=d {
            let mut offset = 0;
            let mut bl = Vec::new();
            for dirs in (0..d).combinations(j) {
                let sizes: Vec<usize> = (0..d)
                    .map(|k| match &geometry {
                        Geometry::Box { extents, .. } => {
                            if dirs.contains(&k) {
                                extents[k]
                            } else {
                                extents[k] + 1
                            }
                        }
                        Geometry::Torus { n, .. } => *n,
                        Geometry::Explicit { .. } => unreachable!(),
                    })
                    .collect();
                let size: usize = sizes.iter().product();
                bl.push(Block {
                    dirs,
                    offset,
                    sizes,
                });
                offset += size;
            }
            counts.push(offset);
            blocks.push(bl);
        }
        let mut cx = Complex {
            geometry,
            counts,
            boundary: Vec::new(),
            coboundary: Vec::new(),
            blocks,
        };
        let mut boundary = vec![Incidence::from_lists(vec![Vec::new(); cx.counts[0]])];
        for j in 1..=d {
            let lists = (0..cx.counts[j])
                .map(|id| {
                    let cell = cx.cell(j, id).expect("id in range");
                    let faces = cx.faces_of(&cell);
                    merge_terms(
                        faces
                            .into_iter()
                            .map(|(c, s)| (cx.cell_id(&c).expect("face is present"), s)),
                    )
                })
                .collect();
            boundary.push(Incidence::from_lists(lists));
        }
        cx.boundary = boundary;
        cx.coboundary = cx.transpose_all();
        cx
    }

    /// A complex given by explicit incidence lists. `boundaries[j][k]` lists the
    /// signed (j-1)-faces of j-cell `k`; `boundaries[0]` must be empty lists.
    pub fn from_incidence(
        name: &str,
        counts: Vec<usize>,
        boundaries: Vec<Vec<Vec<(usize, i64)>>>,
    ) -> Result<Complex> {
        if counts.is_empty() || boundaries.len() != counts.len() {
            return Err(Error::InvalidDimension(
                "need one incidence table per dimension".into(),
            ));
        }
        let mut boundary = Vec::with_capacity(counts.len());
        for (j, lists) in boundaries.into_iter().enumerate() {
            if lists.len() != counts[j] {
                return Err(Error::DimensionMismatch {
                    expected: counts[j],
                    got: lists.len(),
                });
            }
            let mut merged = Vec::with_capacity(lists.len());
            for l in lists {
                if j == 0 && !l.is_empty() {
                    return Err(Error::InvalidDimension("vertices have no faces".into()));
                }
                if let Some(&(bad, _)) = l.iter().find(|(f, _)| j > 0 && *f >= counts[j - 1]) {
                    return Err(Error::UnknownCell(format!("{}-cell {bad}", j - 1)));
                }
                merged.push(merge_terms(l.into_iter()));
            }
            boundary.push(Incidence::from_lists(merged));
        }
        let mut cx = Complex {
            geometry: Geometry::Explicit { name: name.into() },
            counts,
            boundary,
            coboundary: Vec::new(),
            blocks: Vec::new(),
        };
        cx.coboundary = cx.transpose_all();
        Ok(cx)
    }

    /// A graph as a 1-dimensional complex; edge `(u, v)` has boundary `v - u`.
    pub fn graph(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Complex> {
        let lists = edges.iter().map(|&(u, v)| vec![(v, 1), (u, -1)]).collect();
        Self::from_incidence(
            "graph",
            vec![n_vertices, edges.len()],
            vec![vec![Vec::new(); n_vertices], lists],
        )
    }

    /// Six vertices, seven edges, one face: a filled square `e1..e4` sharing
    /// the edge `e3` with an unfilled square `e3, e5, e6, e7`.
    ///
    /// Ids are 0-based: `v1..v6` are 0..5, `e1..e7` are 0..6.
    pub fn filled_square_with_loop() -> Complex {
        // ∂e1 = v2 - v1, ∂e2 = v1 - v4, ∂e3 = v4 - v3, ∂e4 = v3 - v2,
        // ∂e5 = v4 - v5, ∂e6 = v5 - v6, ∂e7 = v6 - v3, ∂f1 = e1 + e2 + e3 + e4
        let edges = vec![
            vec![(1, 1), (0, -1)],
            vec![(0, 1), (3, -1)],
            vec![(3, 1), (2, -1)],
            vec![(2, 1), (1, -1)],
            vec![(3, 1), (4, -1)],
            vec![(4, 1), (5, -1)],
            vec![(5, 1), (2, -1)],
        ];
        let faces = vec![vec![(0, 1), (1, 1), (2, 1), (3, 1)]];
        Self::from_incidence(
            "filled-square-with-loop",
            vec![6, 7, 1],
            vec![vec![Vec::new(); 6], edges, faces],
        )
        .expect("fixture is well formed")
    }

    fn transpose_all(&self) -> Vec<Incidence> {
        let top = self.dim();
        (0..=top)
            .map(|j| {
                if j == top {
                    Incidence::from_lists(vec![Vec::new(); self.counts[j]])
                } else {
                    self.boundary[j + 1].transpose(self.counts[j])
                }
            })
            .collect()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Top cell dimension.
    pub fn dim(&self) -> usize {
        self.counts.len() - 1
    }

    /// Dimension of the ambient lattice (equals [`Complex::dim`] for cubical complexes).
    pub fn ambient_dim(&self) -> usize {
        match &self.geometry {
            Geometry::Box { d, .. } | Geometry::Torus { d, .. } => *d,
            Geometry::Explicit { .. } => self.dim(),
        }
    }

    /// Number of j-cells (0 beyond the top dimension).
    pub fn count(&self, j: usize) -> usize {
        self.counts.get(j).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total_cells(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.geometry, Geometry::Torus { .. })
    }

    /// Signed (j-1)-faces of j-cell `id`.
    pub fn boundary(&self, j: usize, id: usize) -> &[(usize, i64)] {
        self.boundary[j].get(id)
    }

    /// Signed (j+1)-cofaces of j-cell `id`.
    pub fn coboundary(&self, j: usize, id: usize) -> &[(usize, i64)] {
        self.coboundary[j].get(id)
    }

    /// Matrix of `∂_j`: rows are (j-1)-cells, columns are j-cells.
    pub fn boundary_matrix(&self, j: usize, q: Prime) -> Result<GfMatrix> {
        if j == 0 || j > self.dim() {
            return Err(Error::InvalidDimension(format!(
                "boundary matrix needs 1 <= j <= {}, got {j}",
                self.dim()
            )));
        }
        let mut m = GfMatrix::zeros(self.counts[j - 1], self.counts[j], q);
        for c in 0..self.counts[j] {
            for &(r, s) in self.boundary(j, c) {
                m.add_to(r, c, s);
            }
        }
        Ok(m)
    }

    /// Matrix of `δ_j = ∂_{j+1}^T`: rows are (j+1)-cells, columns are j-cells.
    pub fn coboundary_matrix(&self, j: usize, q: Prime) -> Result<GfMatrix> {
        Ok(self.boundary_matrix(j + 1, q)?.transpose())
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(j, &c)| if j % 2 == 0 { c as i64 } else { -(c as i64) })
            .sum()
    }

    fn blocks(&self) -> Result<&[Vec<Block>]> {
        if self.blocks.is_empty() {
            Err(Error::NotCubical)
        } else {
            Ok(&self.blocks)
        }
    }

    fn period(&self) -> Option<usize> {
        match self.geometry {
            Geometry::Torus { n, .. } => Some(n),
            _ => None,
        }
    }

    /// The cell with the given id.
    pub fn cell(&self, j: usize, id: usize) -> Result<Cell> {
        let blocks = self.blocks()?;
        let bl = blocks
            .get(j)
            .ok_or_else(|| Error::UnknownCell(format!("dimension {j}")))?;
        if id >= self.counts[j] {
            return Err(Error::UnknownCell(format!("{j}-cell id {id}")));
        }
        let k = bl.partition_point(|b| b.offset <= id) - 1;
        let b = &bl[k];
        let mut rem = id - b.offset;
        let mut base = vec![0; b.sizes.len()];
        for axis in (0..b.sizes.len()).rev() {
            base[axis] = rem % b.sizes[axis];
            rem /= b.sizes[axis];
        }
        Ok(Cell {
            base,
            dirs: b.dirs.clone(),
        })
    }

    /// Id of a cell; torus coordinates are reduced mod the period first.
    pub fn cell_id(&self, cell: &Cell) -> Result<usize> {
        let blocks = self.blocks()?;
        let d = self.ambient_dim();
        let unknown = || Error::UnknownCell(cell.to_string());
        if cell.base.len() != d || cell.dim() > d || !cell.dirs.windows(2).all(|w| w[0] < w[1])
        {
            return Err(unknown());
        }
        let bl = &blocks[cell.dim()];
        let b = bl.iter().find(|b| b.dirs == cell.dirs).ok_or_else(unknown)?;
        let mut idx = 0;
        for (axis, &x) in cell.base.iter().enumerate() {
            let x = match self.period() {
                Some(n) => x % n,
                None => x,
            };
            if x >= b.sizes[axis] {
                return Err(unknown());
            }
            idx = idx * b.sizes[axis] + x;
        }
        Ok(b.offset + idx)
    }

    /// Reduces torus coordinates mod the period.
    pub fn normalize(&self, cell: &Cell) -> Cell {
        match self.period() {
            Some(n) => Cell {
                base: cell.base.iter().map(|x| x % n).collect(),
                dirs: cell.dirs.clone(),
            },
            None => cell.clone(),
        }
    }

    fn faces_of(&self, cell: &Cell) -> Vec<(Cell, i64)> {
        let mut out = Vec::with_capacity(2 * cell.dim());
        for (m, &u) in cell.dirs.iter().enumerate() {
            let sign = if m % 2 == 0 { 1 } else { -1 };
            let mut dirs = cell.dirs.clone();
            dirs.remove(m);
            let mut top = cell.base.clone();
            top[u] += 1;
            out.push((self.normalize(&Cell::new(top, dirs.clone())), sign));
            out.push((Cell::new(cell.base.clone(), dirs), -sign));
        }
        out
    }

    /// Signed faces of a cell, with coincident faces merged.
    pub fn boundary_of(&self, cell: &Cell) -> Result<Vec<(Cell, i64)>> {
        let id = self.cell_id(cell)?;
        let j = cell.dim();
        if j == 0 {
            return Ok(Vec::new());
        }
        self.boundary(j, id)
            .iter()
            .map(|&(f, s)| Ok((self.cell(j - 1, f)?, s)))
            .collect()
    }

    fn torus_params(&self) -> Result<(usize, usize)> {
        match self.geometry {
            Geometry::Torus { d, n } => Ok((d, n)),
            _ => Err(Error::NotATorus),
        }
    }

    /// The dual (d-j)-cell of a torus j-cell.
    ///
    /// The dual lattice `(ℤ + 1/2)^d` is identified with the torus by the
    /// translation `+1/2`, so `(b, D) ↦ (b + e_D, D^c)`.
    pub fn bullet_dual(&self, cell: &Cell) -> Result<Cell> {
        let (d, n) = self.torus_params()?;
        let cell = self.normalize(cell);
        self.cell_id(&cell)?;
        let mut base = cell.base.clone();
        for &u in &cell.dirs {
            base[u] = (base[u] + 1) % n;
        }
        let dirs = (0..d).filter(|k| !cell.dirs.contains(k)).collect();
        Ok(Cell { base, dirs })
    }

    /// Inverse of [`Complex::bullet_dual`]: `(b', D') ↦ (b' - e_{D'^c}, D'^c)`.
    pub fn bullet_dual_back(&self, cell: &Cell) -> Result<Cell> {
        let (d, n) = self.torus_params()?;
        let cell = self.normalize(cell);
        self.cell_id(&cell)?;
        let dirs: Vec<usize> = (0..d).filter(|k| !cell.dirs.contains(k)).collect();
        let mut base = cell.base.clone();
        for &u in &dirs {
            base[u] = (base[u] + n - 1) % n;
        }
        Ok(Cell { base, dirs })
    }

    /// Id-level [`Complex::bullet_dual`]; the result is a (d-j)-cell id.
    pub fn dual_id(&self, j: usize, id: usize) -> Result<usize> {
        let c = self.cell(j, id)?;
        self.cell_id(&self.bullet_dual(&c)?)
    }

    /// Id-level [`Complex::bullet_dual_back`]; `id` is a j-cell of the dual.
    pub fn dual_back_id(&self, j: usize, id: usize) -> Result<usize> {
        let c = self.cell(j, id)?;
        self.cell_id(&self.bullet_dual_back(&c)?)
    }

    /// Serializable description (kind, d, extents/period). Explicit complexes
    /// only carry their name.
    pub fn spec(&self) -> ComplexSpec {
        match &self.geometry {
            Geometry::Box { d, extents } => ComplexSpec::Box {
                d: *d,
                extents: extents.clone(),
            },
            Geometry::Torus { d, n } => ComplexSpec::Torus { d: *d, n: *n },
            Geometry::Explicit { name } => ComplexSpec::Explicit { name: name.clone() },
        }
    }
}

/// JSON description of a complex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComplexSpec {
    Box { d: usize, extents: Vec<usize> },
    Torus { d: usize, n: usize },
    Explicit { name: String },
}

impl ComplexSpec {
    pub fn build(&self) -> Result<Complex> {
        match self {
            ComplexSpec::Box { d, extents } => Complex::cubical_box(*d, extents),
            ComplexSpec::Torus { d, n } => Complex::torus(*d, *n),
            ComplexSpec::Explicit { name } if name == "filled-square-with-loop" => {
                Ok(Complex::filled_square_with_loop())
            }
            ComplexSpec::Explicit { name } => Err(Error::InvalidParameter(format!(
                "unknown explicit complex {name:?}"
            ))),
        }
    }
}

fn merge_terms(terms: impl Iterator<Item = (usize, i64)>) -> Vec<(usize, i64)> {
    let mut acc: BTreeMap<usize, i64> = BTreeMap::new();
    for (k, s) in terms {
        *acc.entry(k).or_insert(0) += s;
    }
    acc.into_iter().filter(|&(_, s)| s != 0).collect()
}

/// A j-dimensional percolation subcomplex: the full (j-1)-skeleton plus the
/// open j-cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PercSubcomplex {
    dim: usize,
    open: FixedBitSet,
}

impl PercSubcomplex {
    pub fn empty(x: &Complex, dim: usize) -> Self {
        PercSubcomplex {
            dim,
            open: FixedBitSet::with_capacity(x.count(dim)),
        }
    }

    pub fn full(x: &Complex, dim: usize) -> Self {
        let mut open = FixedBitSet::with_capacity(x.count(dim));
        open.insert_range(..);
        PercSubcomplex { dim, open }
    }

    pub fn from_ids(x: &Complex, dim: usize, ids: &[usize]) -> Result<Self> {
        let mut p = Self::empty(x, dim);
        for &id in ids {
            if id >= x.count(dim) {
                return Err(Error::UnknownCell(format!("{dim}-cell id {id}")));
            }
            p.open.insert(id);
        }
        Ok(p)
    }

    /// Bit `k` of `mask` opens cell `k`. Requires at most 64 cells.
    pub fn from_mask(x: &Complex, dim: usize, mask: u64) -> Self {
        let n = x.count(dim);
        debug_assert!(n <= 64);
        let mut p = Self::empty(x, dim);
        for k in 0..n {
            if mask >> k & 1 == 1 {
                p.open.insert(k);
            }
        }
        p
    }

    pub fn from_bits(dim: usize, open: FixedBitSet) -> Self {
        PercSubcomplex { dim, open }
    }

    pub fn mask(&self) -> u64 {
        debug_assert!(self.open.len() <= 64);
        self.open.ones().fold(0, |m, k| m | 1 << k)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of j-cells in the ambient complex.
    pub fn capacity(&self) -> usize {
        self.open.len()
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.open
    }

    pub fn is_open(&self, id: usize) -> bool {
        self.open.contains(id)
    }

    pub fn set(&mut self, id: usize, open: bool) {
        self.open.set(id, open);
    }

    pub fn open_count(&self) -> usize {
        self.open.count_ones(..)
    }

    pub fn closed_count(&self) -> usize {
        self.capacity() - self.open_count()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.open.ones()
    }

    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut open = self.open.clone();
        open.union_with(&other.open);
        PercSubcomplex { dim: self.dim, open }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut open = self.open.clone();
        open.intersect_with(&other.open);
        PercSubcomplex { dim: self.dim, open }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.dim == other.dim && self.open.is_subset(&other.open)
    }

    /// All cells of this subcomplex, by dimension.
    pub fn to_subcomplex(&self, x: &Complex) -> Subcomplex {
        let mut cells: Vec<FixedBitSet> = (0..=x.dim())
            .map(|j| FixedBitSet::with_capacity(x.count(j)))
            .collect();
        for bits in cells.iter_mut().take(self.dim) {
            bits.insert_range(..);
        }
        if self.dim <= x.dim() {
            cells[self.dim] = self.open.clone();
        }
        Subcomplex { cells }
    }

    pub fn to_json(&self) -> PercSubcomplexJson {
        PercSubcomplexJson {
            dim: self.dim,
            open: self.ids().collect(),
        }
    }

    pub fn from_json(x: &Complex, json: &PercSubcomplexJson) -> Result<Self> {
        Self::from_ids(x, json.dim, &json.open)
    }
}

/// JSON form of a percolation subcomplex: dimension and open cell ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PercSubcomplexJson {
    pub dim: usize,
    pub open: Vec<usize>,
}

/// Dual of a torus percolation subcomplex: the (d-j)-dimensional subcomplex
/// whose open cells are the duals of the closed j-cells.
pub fn dual_subcomplex(x: &Complex, p: &PercSubcomplex) -> Result<PercSubcomplex> {
    let (d, _) = x.torus_params()?;
    if p.dim > d {
        return Err(Error::InvalidDimension(format!("{} > {d}", p.dim)));
    }
    let mut out = PercSubcomplex::empty(x, d - p.dim);
    for id in 0..x.count(p.dim) {
        if !p.is_open(id) {
            out.open.insert(x.dual_id(p.dim, id)?);
        }
    }
    Ok(out)
}

/// Inverse of [`dual_subcomplex`].
pub fn dual_subcomplex_back(x: &Complex, p: &PercSubcomplex) -> Result<PercSubcomplex> {
    let (d, _) = x.torus_params()?;
    if p.dim > d {
        return Err(Error::InvalidDimension(format!("{} > {d}", p.dim)));
    }
    let mut out = PercSubcomplex::full(x, d - p.dim);
    for id in p.ids() {
        out.open.set(x.dual_back_id(p.dim, id)?, false);
    }
    Ok(out)
}

/// An arbitrary set of cells, by dimension. Not checked for closure unless
/// [`Subcomplex::is_closed`] is called.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subcomplex {
    pub cells: Vec<FixedBitSet>,
}

impl Subcomplex {
    pub fn empty(x: &Complex) -> Self {
        Subcomplex {
            cells: (0..=x.dim())
                .map(|j| FixedBitSet::with_capacity(x.count(j)))
                .collect(),
        }
    }

    pub fn full(x: &Complex) -> Self {
        let mut s = Self::empty(x);
        for b in &mut s.cells {
            b.insert_range(..);
        }
        s
    }

    pub fn contains(&self, j: usize, id: usize) -> bool {
        self.cells.get(j).is_some_and(|b| b.contains(id))
    }

    pub fn count(&self, j: usize) -> usize {
        self.cells.get(j).map_or(0, |b| b.count_ones(..))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.cells
            .iter()
            .zip(&other.cells)
            .all(|(a, b)| a.is_subset(b))
    }

    /// Every face of every member is a member.
    pub fn is_closed(&self, x: &Complex) -> bool {
        (1..self.cells.len()).all(|j| {
            self.cells[j]
                .ones()
                .all(|id| x.boundary(j, id).iter().all(|&(f, _)| self.cells[j - 1].contains(f)))
        })
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..self.cells.len())
            .map(|j| {
                let c = self.count(j) as i64;
                if j % 2 == 0 {
                    c
                } else {
                    -c
                }
            })
            .sum()
    }
}

/// A sparse GF(q) chain of dimension `dim`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chain {
    dim: usize,
    q: Prime,
    coeffs: BTreeMap<usize, u32>,
}

impl Chain {
    pub fn zero(dim: usize, q: Prime) -> Self {
        Chain {
            dim,
            q,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn from_terms(dim: usize, q: Prime, terms: &[(usize, i64)]) -> Self {
        let mut c = Self::zero(dim, q);
        for &(id, v) in terms {
            c.add_term(id, v);
        }
        c
    }

    pub fn add_term(&mut self, id: usize, v: i64) {
        let cur = self.coeffs.get(&id).copied().unwrap_or(0);
        let new = self.q.add(cur, self.q.reduce(v));
        if new == 0 {
            self.coeffs.remove(&id);
        } else {
            self.coeffs.insert(id, new);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulus(&self) -> Prime {
        self.q
    }

    pub fn coeff(&self, id: usize) -> u32 {
        self.coeffs.get(&id).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.coeffs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Number of cells with a nonzero coefficient.
    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn add(&self, other: &Chain) -> Chain {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (k, v) in other.terms() {
            out.add_term(k, v as i64);
        }
        out
    }

    pub fn scale(&self, s: i64) -> Chain {
        let mut out = Chain::zero(self.dim, self.q);
        for (k, v) in self.terms() {
            out.add_term(k, v as i64 * s);
        }
        out
    }

    pub fn neg(&self) -> Chain {
        self.scale(-1)
    }

    pub fn boundary(&self, x: &Complex) -> Chain {
        let mut out = Chain::zero(self.dim.saturating_sub(1), self.q);
        if self.dim == 0 {
            return out;
        }
        for (k, v) in self.terms() {
            for &(f, s) in x.boundary(self.dim, k) {
                out.add_term(f, s * v as i64);
            }
        }
        out
    }

    /// Dense coefficient vector of length `len`.
    pub fn to_dense(&self, len: usize) -> Vec<u32> {
        let mut v = vec![0; len];
        for (k, c) in self.terms() {
            v[k] = c;
        }
        v
    }
}

/// A GF(q) cochain of dimension `dim`, stored densely.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cochain {
    dim: usize,
    q: Prime,
    values: Vec<u32>,
}

impl Cochain {
    pub fn zero(x: &Complex, dim: usize, q: Prime) -> Self {
        Cochain {
            dim,
            q,
            values: vec![0; x.count(dim)],
        }
    }

    pub fn from_values(dim: usize, q: Prime, values: Vec<u32>) -> Self {
        let values = values.into_iter().map(|v| v % q.get()).collect();
        Cochain { dim, q, values }
    }

    /// The cochain with digits of `code` in base q as its values.
    pub fn from_code(x: &Complex, dim: usize, q: Prime, mut code: u64) -> Self {
        let mut values = vec![0; x.count(dim)];
        for v in values.iter_mut() {
            *v = (code % q.get() as u64) as u32;
            code /= q.get() as u64;
        }
        Cochain { dim, q, values }
    }

    pub fn code(&self) -> u64 {
        self.values
            .iter()
            .rev()
            .fold(0u64, |acc, &v| acc * self.q.get() as u64 + v as u64)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modulus(&self) -> Prime {
        self.q
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, id: usize) -> u32 {
        self.values[id]
    }

    pub fn set(&mut self, id: usize, v: u32) {
        self.values[id] = v % self.q.get();
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn add(&self, other: &Cochain) -> Cochain {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| self.q.add(a, b))
            .collect();
        Cochain {
            dim: self.dim,
            q: self.q,
            values,
        }
    }

    pub fn sub(&self, other: &Cochain) -> Cochain {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| self.q.sub(a, b))
            .collect();
        Cochain {
            dim: self.dim,
            q: self.q,
            values,
        }
    }

    /// `f(γ) = Σ c_k f(x_k)` mod q.
    pub fn eval(&self, chain: &Chain) -> u32 {
        debug_assert_eq!(self.dim, chain.dim());
        chain.terms().fold(0, |acc, (k, c)| {
            self.q.add(acc, self.q.mul(c, self.values[k]))
        })
    }

    /// `δf` evaluated on a single (j+1)-cell.
    pub fn coboundary_at(&self, x: &Complex, sigma: usize) -> u32 {
        x.boundary(self.dim + 1, sigma)
            .iter()
            .fold(0, |acc, &(f, s)| {
                self.q
                    .add(acc, self.q.mul(self.q.reduce(s), self.values[f]))
            })
    }

    pub fn coboundary(&self, x: &Complex) -> Cochain {
        let values = (0..x.count(self.dim + 1))
            .map(|s| self.coboundary_at(x, s))
            .collect();
        Cochain {
            dim: self.dim + 1,
            q: self.q,
            values,
        }
    }
}
