//! Exact arithmetic over the prime field GF(q) and over the rationals.
//!
//! Two linear-algebra engines live here:
//!
//! - [`GfMatrix`]: a dense row-major matrix with Gauss–Jordan reduction,
//!   used for boundary maps, kernels and linear solves on small complexes.
//! - [`RowEchelon`]: an incrementally built echelon basis of a row space.
//!   Rows are inserted one at a time; it answers membership queries and
//!   samples uniformly from the common kernel of the inserted rows. For
//!   q = 2 rows are bit-packed.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact rational numbers backed by arbitrary-precision integers.
pub type Rational = num_rational::BigRational;

/// Largest modulus accepted; keeps every intermediate product inside `u64`.
pub const MAX_MODULUS: u32 = 1 << 31;

/// A validated prime modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Prime(u32);

impl Prime {
    pub fn new(q: u32) -> Result<Self> {
        if q < MAX_MODULUS && is_prime(q) {
            Ok(Prime(q))
        } else {
            Err(Error::NonPrimeModulus(q))
        }
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn reduce(self, x: i64) -> u32 {
        x.rem_euclid(self.0 as i64) as u32
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.0 as u64) as u32
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        ((a as u64 + self.0 as u64 - b as u64) % self.0 as u64) as u32
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.0 as u64) as u32
    }

    pub fn pow(self, mut base: u32, mut exp: u64) -> u32 {
        let mut acc = 1 % self.0;
        base %= self.0;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(self, a: u32) -> Result<u32> {
        if a % self.0 == 0 {
            return Err(Error::ZeroInverse);
        }
        Ok(self.pow(a, self.0 as u64 - 2))
    }

    pub fn element(self, value: i64) -> Fq {
        Fq {
            value: self.reduce(value),
            q: self,
        }
    }
}

impl TryFrom<u32> for Prime {
    type Error = Error;
    fn try_from(q: u32) -> Result<Self> {
        Prime::new(q)
    }
}

impl From<Prime> for u32 {
    fn from(p: Prime) -> u32 {
        p.0
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let n = n as u64;
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// An element of GF(q).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fq {
    value: u32,
    q: Prime,
}

impl Fq {
    pub fn new(value: i64, q: Prime) -> Self {
        q.element(value)
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn modulus(self) -> Prime {
        self.q
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }
}

impl fmt::Display for Fq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mod {}", self.value, self.q)
    }
}

impl Add for Fq {
    type Output = Fq;
    fn add(self, rhs: Fq) -> Fq {
        debug_assert_eq!(self.q, rhs.q);
        Fq {
            value: self.q.add(self.value, rhs.value),
            q: self.q,
        }
    }
}

impl Sub for Fq {
    type Output = Fq;
    fn sub(self, rhs: Fq) -> Fq {
        debug_assert_eq!(self.q, rhs.q);
        Fq {
            value: self.q.sub(self.value, rhs.value),
            q: self.q,
        }
    }
}

impl Mul for Fq {
    type Output = Fq;
    fn mul(self, rhs: Fq) -> Fq {
        debug_assert_eq!(self.q, rhs.q);
        Fq {
            value: self.q.mul(self.value, rhs.value),
            q: self.q,
        }
    }
}

impl Neg for Fq {
    type Output = Fq;
    fn neg(self) -> Fq {
        Fq {
            value: self.q.neg(self.value),
            q: self.q,
        }
    }
}

pub fn fq_inv(a: Fq) -> Result<Fq> {
    Ok(Fq {
        value: a.q.inv(a.value)?,
        q: a.q,
    })
}

/// Dense matrix over GF(q), row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GfMatrix {
    rows: usize,
    cols: usize,
    q: Prime,
    data: Vec<u32>,
}

/// Output of [`GfMatrix::rref`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rref {
    pub matrix: GfMatrix,
    pub rank: usize,
    pub pivot_cols: Vec<usize>,
}

impl GfMatrix {
    pub fn zeros(rows: usize, cols: usize, q: Prime) -> Self {
        GfMatrix {
            rows,
            cols,
            q,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize, q: Prime) -> Self {
        let mut m = Self::zeros(n, n, q);
        for k in 0..n {
            m.set(k, k, 1);
        }
        m
    }

    /// Builds a matrix from signed integer rows, reducing every entry mod q.
    pub fn from_rows(rows: &[Vec<i64>], q: Prime) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend(r.iter().map(|&x| q.reduce(x)));
        }
        Ok(GfMatrix {
            rows: rows.len(),
            cols,
            q,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> Prime {
        self.q
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v % self.q.get();
    }

    /// Adds `v` (taken mod q) to entry (r, c).
    pub fn add_to(&mut self, r: usize, c: usize, v: i64) {
        let cur = self.get(r, c);
        self.data[r * self.cols + c] = self.q.add(cur, self.q.reduce(v));
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn transpose(&self) -> GfMatrix {
        let mut t = GfMatrix::zeros(self.cols, self.rows, self.q);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[u32]) -> Result<Vec<u32>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        let q = self.q.get() as u64;
        Ok((0..self.rows)
            .map(|r| {
                let acc = self
                    .row(r)
                    .iter()
                    .zip(v)
                    .fold(0u64, |acc, (&a, &b)| (acc + a as u64 * b as u64) % q);
                acc as u32
            })
            .collect())
    }

    pub fn mul(&self, other: &GfMatrix) -> Result<GfMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = GfMatrix::zeros(self.rows, other.cols, self.q);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0 {
                    continue;
                }
                for c in 0..other.cols {
                    let b = other.get(k, c);
                    if b != 0 {
                        let idx = r * out.cols + c;
                        out.data[idx] = self.q.add(out.data[idx], self.q.mul(a, b));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &GfMatrix) -> Result<GfMatrix> {
        if self.cols != other.cols && self.rows > 0 && other.rows > 0 {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.cols,
            });
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(GfMatrix {
            rows: self.rows + other.rows,
            cols,
            q: self.q,
            data,
        })
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> GfMatrix {
        let mut out = GfMatrix::zeros(self.rows, cols.len(), self.q);
        for r in 0..self.rows {
            for (k, &c) in cols.iter().enumerate() {
                out.data[r * cols.len() + k] = self.get(r, c);
            }
        }
        out
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> GfMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        GfMatrix {
            rows: rows.len(),
            cols: self.cols,
            q: self.q,
            data,
        }
    }

    /// Reduced row echelon form by Gauss–Jordan elimination.
    pub fn rref(&self) -> Rref {
        let mut m = self.clone();
        let q = self.q;
        let mut pivot_cols = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&k| m.get(k, c) != 0) else {
                continue;
            };
            if p != r {
                for k in 0..m.cols {
                    m.data.swap(p * m.cols + k, r * m.cols + k);
                }
            }
            let inv = q.inv(m.get(r, c)).expect("pivot is nonzero");
            for k in c..m.cols {
                let idx = r * m.cols + k;
                m.data[idx] = q.mul(m.data[idx], inv);
            }
            for other in 0..m.rows {
                if other == r {
                    continue;
                }
                let factor = m.get(other, c);
                if factor == 0 {
                    continue;
                }
                for k in c..m.cols {
                    let sub = q.mul(factor, m.data[r * m.cols + k]);
                    let idx = other * m.cols + k;
                    m.data[idx] = q.sub(m.data[idx], sub);
                }
            }
            pivot_cols.push(c);
            r += 1;
        }
        Rref {
            rank: pivot_cols.len(),
            matrix: m,
            pivot_cols,
        }
    }

    pub fn rank(&self) -> usize {
        let mut e = RowEchelon::new(self.q, self.cols);
        for r in 0..self.rows {
            e.insert_dense(self.row(r));
        }
        e.rank()
    }

    /// A basis of the right kernel `{v : m·v = 0}`; one vector per free column.
    pub fn kernel_basis(&self) -> Vec<Vec<u32>> {
        let Rref {
            matrix, pivot_cols, ..
        } = self.rref();
        let mut is_pivot = vec![false; self.cols];
        for &c in &pivot_cols {
            is_pivot[c] = true;
        }
        (0..self.cols)
            .filter(|&c| !is_pivot[c])
            .map(|free| {
                let mut v = vec![0u32; self.cols];
                v[free] = 1;
                for (row, &p) in pivot_cols.iter().enumerate() {
                    v[p] = self.q.neg(matrix.get(row, free));
                }
                v
            })
            .collect()
    }

    /// Some `x` with `m·x = b` when `b` lies in the column space.
    pub fn solve(&self, b: &[u32]) -> Result<Option<Vec<u32>>> {
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: b.len(),
            });
        }
        let mut aug = GfMatrix::zeros(self.rows, self.cols + 1, self.q);
        for r in 0..self.rows {
            aug.data[r * (self.cols + 1)..r * (self.cols + 1) + self.cols]
                .copy_from_slice(self.row(r));
            aug.data[r * (self.cols + 1) + self.cols] = b[r] % self.q.get();
        }
        let Rref {
            matrix, pivot_cols, ..
        } = aug.rref();
        if pivot_cols.last() == Some(&self.cols) {
            return Ok(None);
        }
        let mut x = vec![0u32; self.cols];
        for (row, &p) in pivot_cols.iter().enumerate() {
            x[p] = matrix.get(row, self.cols);
        }
        Ok(Some(x))
    }
}

impl fmt::Debug for GfMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GfMatrix {}x{} over GF({})", self.rows, self.cols, self.q)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

enum Rows {
    /// q = 2; each row is `words` packed 64-bit words.
    Binary { words: usize, data: Vec<u64> },
    /// Any prime; each row is `ncols` entries with leading coefficient 1.
    General { data: Vec<u32> },
}

/// Echelon basis of a row space over GF(q), built one row at a time.
///
/// Every stored row has a distinct leading column (its pivot) and is zero
/// to the left of it. Rows are not back-reduced against later pivots.
pub struct RowEchelon {
    q: Prime,
    ncols: usize,
    rows: Rows,
    pivot_row: Vec<u32>,
    pivots: Vec<usize>,
}

const NO_PIVOT: u32 = u32::MAX;

impl RowEchelon {
    pub fn new(q: Prime, ncols: usize) -> Self {
        let rows = if q.get() == 2 {
            Rows::Binary {
                words: ncols.div_ceil(64),
                data: Vec::new(),
            }
        } else {
            Rows::General { data: Vec::new() }
        };
        RowEchelon {
            q,
            ncols,
            rows,
            pivot_row: vec![NO_PIVOT; ncols],
            pivots: Vec::new(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn kernel_dim(&self) -> usize {
        self.ncols - self.rank()
    }

    pub fn modulus(&self) -> Prime {
        self.q
    }

    /// Inserts a row given as `(column, coefficient)` pairs (duplicates are summed).
    /// Returns `true` when the rank grows.
    pub fn insert_sparse(&mut self, entries: &[(usize, u32)]) -> bool {
        let mut dense = self.scratch();
        self.fill(&mut dense, entries);
        self.insert_scratch(dense)
    }

    pub fn insert_dense(&mut self, row: &[u32]) -> bool {
        debug_assert_eq!(row.len(), self.ncols);
        let entries: Vec<(usize, u32)> = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v % self.q.get() != 0)
            .map(|(c, &v)| (c, v))
            .collect();
        self.insert_sparse(&entries)
    }

    /// Whether the row lies in the span of the inserted rows.
    pub fn contains_sparse(&self, entries: &[(usize, u32)]) -> bool {
        let mut dense = self.scratch();
        self.fill(&mut dense, entries);
        self.reduce(&mut dense).is_none()
    }

    pub fn contains_dense(&self, row: &[u32]) -> bool {
        let entries: Vec<(usize, u32)> = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v % self.q.get() != 0)
            .map(|(c, &v)| (c, v))
            .collect();
        self.contains_sparse(&entries)
    }

    /// Uniform sample from `{x : r·x = 0 for every inserted row r}`.
    ///
    /// Free columns are drawn independently and uniformly; pivot columns
    /// are then fixed by back-substitution in decreasing column order.
    pub fn sample_kernel<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        let q = self.q.get();
        let mut x = vec![0u32; self.ncols];
        for (c, xc) in x.iter_mut().enumerate() {
            if self.pivot_row[c] == NO_PIVOT {
                *xc = rng.random_range(0..q);
            }
        }
        self.back_substitute(&mut x);
        x
    }

    /// Kernel vector obtained by fixing the free columns to `free_values`
    /// (in increasing column order).
    pub fn kernel_vector(&self, free_values: &[u32]) -> Vec<u32> {
        let mut x = vec![0u32; self.ncols];
        let mut it = free_values.iter();
        for (c, xc) in x.iter_mut().enumerate() {
            if self.pivot_row[c] == NO_PIVOT {
                *xc = it.next().copied().unwrap_or(0) % self.q.get();
            }
        }
        self.back_substitute(&mut x);
        x
    }

    /// A basis of the kernel: one vector per free column.
    pub fn kernel_basis(&self) -> Vec<Vec<u32>> {
        let free: Vec<usize> = (0..self.ncols)
            .filter(|&c| self.pivot_row[c] == NO_PIVOT)
            .collect();
        (0..free.len())
            .map(|k| {
                let mut values = vec![0u32; free.len()];
                values[k] = 1;
                self.kernel_vector(&values)
            })
            .collect()
    }

    fn back_substitute(&self, x: &mut [u32]) {
        let mut order = self.pivots.clone();
        order.sort_unstable_by(|a, b| b.cmp(a));
        match &self.rows {
            Rows::Binary { words, data } => {
                let mut packed = vec![0u64; *words];
                for (c, &v) in x.iter().enumerate() {
                    if v & 1 == 1 {
                        packed[c / 64] |= 1 << (c % 64);
                    }
                }
                for p in order {
                    let r = self.pivot_row[p] as usize;
                    let row = &data[r * words..(r + 1) * words];
                    let parity = row
                        .iter()
                        .zip(&packed)
                        .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
                        & 1;
                    if parity == 1 {
                        packed[p / 64] |= 1 << (p % 64);
                        x[p] = 1;
                    }
                }
            }
            Rows::General { data } => {
                let n = self.ncols;
                for p in order {
                    let r = self.pivot_row[p] as usize;
                    let row = &data[r * n..(r + 1) * n];
                    let mut acc = 0u64;
                    for c in p + 1..n {
                        if row[c] != 0 && x[c] != 0 {
                            acc += row[c] as u64 * x[c] as u64;
                        }
                    }
                    x[p] = self.q.neg((acc % self.q.get() as u64) as u32);
                }
            }
        }
    }

    fn scratch(&self) -> Scratch {
        match &self.rows {
            Rows::Binary { words, .. } => Scratch::Binary(vec![0; *words]),
            Rows::General { .. } => Scratch::General(vec![0; self.ncols]),
        }
    }

    fn fill(&self, dense: &mut Scratch, entries: &[(usize, u32)]) {
        match dense {
            Scratch::Binary(w) => {
                for &(c, v) in entries {
                    if v & 1 == 1 {
                        w[c / 64] ^= 1 << (c % 64);
                    }
                }
            }
            Scratch::General(v) => {
                for &(c, x) in entries {
                    v[c] = self.q.add(v[c], x % self.q.get());
                }
            }
        }
    }

    /// Reduces in place; returns the leading column if the remainder is nonzero.
    fn reduce(&self, dense: &mut Scratch) -> Option<usize> {
        match (dense, &self.rows) {
            (Scratch::Binary(w), Rows::Binary { words, data }) => {
                let mut k = 0;
                while k < *words {
                    if w[k] == 0 {
                        k += 1;
                        continue;
                    }
                    let c = k * 64 + w[k].trailing_zeros() as usize;
                    let r = self.pivot_row[c];
                    if r == NO_PIVOT {
                        return Some(c);
                    }
                    let row = &data[r as usize * words..(r as usize + 1) * words];
                    for j in k..*words {
                        w[j] ^= row[j];
                    }
                }
                None
            }
            (Scratch::General(v), Rows::General { data }) => {
                let n = self.ncols;
                for c in 0..n {
                    if v[c] == 0 {
                        continue;
                    }
                    let r = self.pivot_row[c];
                    if r == NO_PIVOT {
                        return Some(c);
                    }
                    let factor = v[c];
                    let row = &data[r as usize * n..(r as usize + 1) * n];
                    for j in c..n {
                        if row[j] != 0 {
                            v[j] = self.q.sub(v[j], self.q.mul(factor, row[j]));
                        }
                    }
                }
                None
            }
            _ => unreachable!("scratch kind always matches storage"),
        }
    }

    fn insert_scratch(&mut self, mut dense: Scratch) -> bool {
        let Some(lead) = self.reduce(&mut dense) else {
            return false;
        };
        let index = self.pivots.len() as u32;
        match (dense, &mut self.rows) {
            (Scratch::Binary(w), Rows::Binary { data, .. }) => data.extend_from_slice(&w),
            (Scratch::General(mut v), Rows::General { data }) => {
                let inv = self.q.inv(v[lead]).expect("leading entry is nonzero");
                for x in v[lead..].iter_mut() {
                    *x = self.q.mul(*x, inv);
                }
                data.extend_from_slice(&v);
            }
            _ => unreachable!("scratch kind always matches storage"),
        }
        self.pivot_row[lead] = index;
        self.pivots.push(lead);
        true
    }
}

enum Scratch {
    Binary(Vec<u64>),
    General(Vec<u32>),
}
