//! Exact weights and enumeration oracles.
//!
//! Parameters are couplings `k = p/(1-p)`; `k = ∞` (`p = 1`) is a separate
//! variant. Every cell contributes a *closed* and an *open* activity:
//! `(1, k)` for finite `k` and `(0, 1)` for `k = ∞` (the finite weights divided
//! by `1 + k`, in the limit). With `(c, o)` the activities,
//!
//! ```text
//! κ(f, P2, P1) = Π_ε [c·[ε∉P1] + o·[ε∈P1]·[f(ε)=0]] · Π_σ [c·[σ∉P2] + o·[σ∈P2]·[δf(σ)=0]]
//! μ(f)         = Π_ε (c + o·[f(ε)=0]) · Π_σ (c + o·[δf(σ)=0])
//! ρ̂(P2, P1)    = o^|P2| c^(n2-|P2|) · o^|P1| c^(n1-|P1|) · r^b(P2,P1)
//! ```
//!
//! with `r = q` for ρ. Weights are unnormalized; [`Dist`] normalizes.
//!
//! Configuration ids: a spin assignment `f` has id `Σ_k f(k) q^k`; a pair has
//! id `mask(P2) · 2^n1 + mask(P1)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{Chain, Cochain, Complex, PercSubcomplex, Subcomplex};
use crate::error::{Error, Result};
use crate::gfq::{Prime, Rational};
use crate::homology::{betti_numbers, constraint_echelon, RelPair};

/// A coupling constant `k ∈ [0, ∞]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Coupling {
    Finite(Rational),
    Infinite,
}

impl Coupling {
    pub fn finite(k: Rational) -> Result<Self> {
        if k.is_negative() {
            return Err(Error::InvalidParameter(format!("coupling {k} is negative")));
        }
        Ok(Coupling::Finite(k))
    }

    pub fn from_int(k: i64) -> Result<Self> {
        Self::finite(Rational::from_integer(k.into()))
    }

    /// `k = p / (1 - p)`, with `p = 1` giving `k = ∞`.
    pub fn from_p(p: &Rational) -> Result<Self> {
        if p.is_negative() || *p > Rational::one() {
            return Err(Error::InvalidParameter(format!("probability {p} not in [0, 1]")));
        }
        if p.is_one() {
            return Ok(Coupling::Infinite);
        }
        Ok(Coupling::Finite(p / (Rational::one() - p)))
    }

    /// `p = k / (1 + k)`.
    pub fn p(&self) -> Rational {
        match self {
            Coupling::Finite(k) => k / (Rational::one() + k),
            Coupling::Infinite => Rational::one(),
        }
    }

    pub fn p_f64(&self) -> f64 {
        self.p().to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Coupling::Infinite)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coupling::Finite(k) if k.is_zero())
    }

    /// `(closed, open)` activities.
    pub fn activities(&self) -> (Rational, Rational) {
        match self {
            Coupling::Finite(k) => (Rational::one(), k.clone()),
            Coupling::Infinite => (Rational::zero(), Rational::one()),
        }
    }
}

impl std::fmt::Display for Coupling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coupling::Finite(k) => write!(f, "{k}"),
            Coupling::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Coupling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t, "inf" | "infinity" | "∞") {
            return Ok(Coupling::Infinite);
        }
        Coupling::finite(parse_rational(t)?)
    }
}

/// Parses `"3"`, `"-2/7"` or a decimal such as `"0.125"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let t = s.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse {s:?} as a rational"));
    if let Some((int, frac)) = t.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
        let num = BigInt::from_str(&digits).map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rational::new(num, den);
        return Ok(if neg { -r } else { r });
    }
    Rational::from_str(t).map_err(|_| bad())
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Model parameters for μ, ρ, κ and the auxiliary ρ̂ (`r`, defaulting to `q`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelParams {
    pub q: Prime,
    pub i: usize,
    pub k2: Coupling,
    pub k1: Coupling,
    pub r: Option<Rational>,
}

impl ModelParams {
    pub fn new(q: Prime, i: usize, k2: Coupling, k1: Coupling) -> Self {
        ModelParams {
            q,
            i,
            k2,
            k1,
            r: None,
        }
    }

    pub fn from_ints(q: u32, i: usize, k2: i64, k1: i64) -> Result<Self> {
        Ok(Self::new(
            Prime::new(q)?,
            i,
            Coupling::from_int(k2)?,
            Coupling::from_int(k1)?,
        ))
    }

    pub fn with_r(mut self, r: Rational) -> Result<Self> {
        if r.is_negative() {
            return Err(Error::InvalidParameter(format!("r = {r} is negative")));
        }
        self.r = Some(r);
        Ok(self)
    }

    /// The base of the cohomology factor: `r` if set, else `q`.
    pub fn r_or_q(&self) -> Rational {
        self.r
            .clone()
            .unwrap_or_else(|| Rational::from_integer(self.q.get().into()))
    }

    pub fn validate(&self, x: &Complex) -> Result<()> {
        if self.i + 1 > x.dim() {
            return Err(Error::InvalidDimension(format!(
                "i = {} needs a complex of dimension at least {}",
                self.i,
                self.i + 1
            )));
        }
        Ok(())
    }
}

fn rpow(base: &Rational, e: usize) -> Rational {
    num_traits::pow(base.clone(), e)
}

/// `o^a · c^(n-a)` for a coupling.
fn activity_weight(k: &Coupling, open: usize, n: usize) -> Rational {
    let (c, o) = k.activities();
    rpow(&o, open) * rpow(&c, n - open)
}

/// Table `t[a] = o^a c^(n-a)`.
fn activity_table(k: &Coupling, n: usize) -> Vec<Rational> {
    (0..=n).map(|a| activity_weight(k, a, n)).collect()
}

/// Table `t[s] = (c+o)^s c^(n-s)` of spin factors with `s` satisfied cells.
fn spin_table(k: &Coupling, n: usize) -> Vec<Rational> {
    let (c, o) = k.activities();
    let sat = &c + &o;
    (0..=n).map(|s| rpow(&sat, s) * rpow(&c, n - s)).collect()
}

/// Limits on exhaustive enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumGuard {
    /// Largest configuration space materialized as a [`Dist`].
    pub max_states: u128,
    /// Largest product space streamed by [`enumerate_kappa`].
    pub max_streamed: u128,
}

impl Default for EnumGuard {
    fn default() -> Self {
        EnumGuard {
            max_states: 1 << 26,
            max_streamed: 1 << 30,
        }
    }
}

impl EnumGuard {
    fn check(&self, states: u128) -> Result<()> {
        if states > self.max_states {
            Err(Error::TooLarge {
                states,
                limit: self.max_states,
            })
        } else {
            Ok(())
        }
    }
}

fn spin_states(x: &Complex, i: usize, q: Prime) -> u128 {
    (q.get() as u128).checked_pow(x.count(i) as u32).unwrap_or(u128::MAX)
}

fn pair_states(x: &Complex, i: usize) -> u128 {
    let bits = x.count(i) + x.count(i + 1);
    if bits >= 127 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// What the ids of a [`Dist`] enumerate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Space {
    /// i-cochains on `cells` cells with values in GF(q).
    Spins { cells: usize, q: u32 },
    /// Pairs `(P2, P1)` with `n2` and `n1` cells.
    Pairs { n2: usize, n1: usize },
    /// Single percolation subcomplexes on `cells` cells.
    Subsets { cells: usize },
    /// Triples `(f, P2, P1)`: id = spin id · 2^(n2+n1) + pair id.
    Triples { cells: usize, q: u32, n2: usize, n1: usize },
}

/// An exact finite distribution, stored as unnormalized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Dist {
    pub space: Space,
    weights: Vec<Rational>,
    total: Rational,
}

impl Dist {
    pub fn new(space: Space, weights: Vec<Rational>) -> Result<Self> {
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidParameter("negative weight".into()));
        }
        let total = weights.iter().fold(Rational::zero(), |acc, w| acc + w);
        if total.is_zero() {
            return Err(Error::DegenerateParameter("all weights vanish".into()));
        }
        Ok(Dist {
            space,
            weights,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, id: usize) -> &Rational {
        &self.weights[id]
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn total(&self) -> &Rational {
        &self.total
    }

    pub fn prob(&self, id: usize) -> Rational {
        &self.weights[id] / &self.total
    }

    pub fn probs(&self) -> Vec<Rational> {
        self.weights.iter().map(|w| w / &self.total).collect()
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.probs().iter().map(rational_to_f64).collect()
    }

    /// `max_id |P(id) - Q(id)|` after normalization.
    pub fn max_abs_diff(&self, other: &Dist) -> Result<Rational> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok((0..self.len())
            .map(|k| (self.prob(k) - other.prob(k)).abs())
            .fold(Rational::zero(), |a, b| if b > a { b } else { a }))
    }

    /// Push-forward along `key`, which must map into `0..n_keys`.
    pub fn marginal(&self, space: Space, n_keys: usize, key: impl Fn(usize) -> usize) -> Result<Dist> {
        let mut w = vec![Rational::zero(); n_keys];
        for (id, x) in self.weights.iter().enumerate() {
            if !x.is_zero() {
                w[key(id)] += x;
            }
        }
        Dist::new(space, w)
    }

    /// Marginal of `P2` for a pair distribution.
    pub fn p2_marginal(&self) -> Result<Dist> {
        let Space::Pairs { n2, n1 } = self.space else {
            return Err(Error::InvalidParameter("not a pair distribution".into()));
        };
        self.marginal(Space::Subsets { cells: n2 }, 1 << n2, |id| id >> n1)
    }

    /// Marginal of `P1` for a pair distribution.
    pub fn p1_marginal(&self) -> Result<Dist> {
        let Space::Pairs { n1, .. } = self.space else {
            return Err(Error::InvalidParameter("not a pair distribution".into()));
        };
        self.marginal(Space::Subsets { cells: n1 }, 1 << n1, |id| id & ((1 << n1) - 1))
    }

    /// Probability of a set of ids given by a predicate.
    pub fn prob_of(&self, pred: impl Fn(usize) -> bool) -> Rational {
        let s = self
            .weights
            .iter()
            .enumerate()
            .filter(|(id, _)| pred(*id))
            .fold(Rational::zero(), |acc, (_, w)| acc + w);
        s / &self.total
    }

    /// CSV with header `id,num,den`; one row per configuration with its
    /// normalized probability in lowest terms.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,num,den\n");
        for (id, p) in self.probs().iter().enumerate() {
            let _ = writeln!(out, "{id},{},{}", p.numer(), p.denom());
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let probs = self.probs();
        serde_json::json!({
            "space": self.space,
            "total": {"num": self.total.numer().to_string(), "den": self.total.denom().to_string()},
            "entries": probs.iter().enumerate().map(|(id, p)| serde_json::json!({
                "id": id,
                "num": p.numer().to_string(),
                "den": p.denom().to_string(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// μ weight of an i-cochain.
pub fn mu_weight(f: &Cochain, params: &ModelParams, x: &Complex) -> Rational {
    let i = params.i;
    let s1 = f.values().iter().filter(|&&v| v == 0).count();
    let s2 = (0..x.count(i + 1))
        .filter(|&s| f.coboundary_at(x, s) == 0)
        .count();
    spin_table(&params.k1, x.count(i))[s1].clone() * &spin_table(&params.k2, x.count(i + 1))[s2]
}

/// ρ̂ weight `o^|P2|c^.. · o^|P1|c^.. · r^b`, with `r = q` unless set.
pub fn cpp_weight(pair: &RelPair, params: &ModelParams, x: &Complex) -> Rational {
    let i = params.i;
    let b = constraint_echelon(x, pair, params.q).kernel_dim();
    activity_weight(&params.k2, pair.p2().open_count(), x.count(i + 1))
        * activity_weight(&params.k1, pair.p1().open_count(), x.count(i))
        * rpow(&params.r_or_q(), b)
}

/// κ weight by the product formula.
pub fn kappa_weight(f: &Cochain, pair: &RelPair, params: &ModelParams, x: &Complex) -> Rational {
    let i = params.i;
    let (c1, o1) = params.k1.activities();
    let (c2, o2) = params.k2.activities();
    let mut w = Rational::one();
    for e in 0..x.count(i) {
        let factor = if pair.p1().is_open(e) {
            if f.get(e) == 0 {
                &o1
            } else {
                return Rational::zero();
            }
        } else {
            &c1
        };
        w *= factor;
    }
    for s in 0..x.count(i + 1) {
        let factor = if pair.p2().is_open(s) {
            if f.coboundary_at(x, s) == 0 {
                &o2
            } else {
                return Rational::zero();
            }
        } else {
            &c2
        };
        w *= factor;
    }
    w
}

/// Base-q odometer over cochains, reporting satisfied-cell data.
struct SpinScan<'a> {
    x: &'a Complex,
    i: usize,
    q: Prime,
}

struct SpinInfo {
    /// bit e set when f(e) = 0
    sat1: u64,
    /// bit σ set when δf(σ) = 0
    sat2: u64,
    s1: usize,
    s2: usize,
}

impl SpinScan<'_> {
    fn info(&self, f: &[u32]) -> SpinInfo {
        let mut sat1 = 0u64;
        let mut s1 = 0;
        for (e, &v) in f.iter().enumerate() {
            if v == 0 {
                s1 += 1;
                if e < 64 {
                    sat1 |= 1 << e;
                }
            }
        }
        let mut sat2 = 0u64;
        let mut s2 = 0;
        for s in 0..self.x.count(self.i + 1) {
            let v = self.x.boundary(self.i + 1, s).iter().fold(0, |acc, &(e, sign)| {
                self.q.add(acc, self.q.mul(self.q.reduce(sign), f[e]))
            });
            if v == 0 {
                s2 += 1;
                if s < 64 {
                    sat2 |= 1 << s;
                }
            }
        }
        SpinInfo { sat1, sat2, s1, s2 }
    }

    fn decode(&self, mut code: u64, out: &mut [u32]) {
        for v in out.iter_mut() {
            *v = (code % self.q.get() as u64) as u32;
            code /= self.q.get() as u64;
        }
    }
}

/// Exact μ over all `q^{n_i}` cochains.
pub fn enumerate_mu(params: &ModelParams, x: &Complex, guard: &EnumGuard) -> Result<Dist> {
    params.validate(x)?;
    let i = params.i;
    let states = spin_states(x, i, params.q);
    guard.check(states)?;
    let n1 = x.count(i);
    let t1 = spin_table(&params.k1, n1);
    let t2 = spin_table(&params.k2, x.count(i + 1));
    let scan = SpinScan { x, i, q: params.q };
    let weights: Vec<Rational> = (0..states as u64)
        .into_par_iter()
        .map_init(
            || vec![0u32; n1],
            |f, code| {
                scan.decode(code, f);
                let info = scan.info(f);
                &t1[info.s1] * &t2[info.s2]
            },
        )
        .collect();
    Dist::new(
        Space::Spins {
            cells: n1,
            q: params.q.get(),
        },
        weights,
    )
}

/// Cohomology dimension of every pair, indexed by pair id.
fn pair_dims(x: &Complex, i: usize, q: Prime, states: u64) -> Vec<u32> {
    let n1 = x.count(i);
    (0..states)
        .into_par_iter()
        .map(|id| {
            let pair = RelPair::from_masks(x, i, id >> n1, id & ((1u64 << n1) - 1))
                .expect("dimensions checked");
            constraint_echelon(x, &pair, q).kernel_dim() as u32
        })
        .collect()
}

/// Exact ρ̂ (ρ when `r` is unset) over all `2^{n2+n1}` pairs.
pub fn enumerate_rho(params: &ModelParams, x: &Complex, guard: &EnumGuard) -> Result<Dist> {
    params.validate(x)?;
    let i = params.i;
    let states = pair_states(x, i);
    guard.check(states)?;
    let (n2, n1) = (x.count(i + 1), x.count(i));
    let t2 = activity_table(&params.k2, n2);
    let t1 = activity_table(&params.k1, n1);
    let r = params.r_or_q();
    let dims = pair_dims(x, i, params.q, states as u64);
    let max_b = dims.iter().copied().max().unwrap_or(0) as usize;
    let rp: Vec<Rational> = (0..=max_b).map(|b| rpow(&r, b)).collect();
    let weights = dims
        .par_iter()
        .enumerate()
        .map(|(id, &b)| {
            let a2 = (id >> n1).count_ones() as usize;
            let a1 = (id & ((1 << n1) - 1)).count_ones() as usize;
            &t2[a2] * &t1[a1] * &rp[b as usize]
        })
        .collect();
    Dist::new(Space::Pairs { n2, n1 }, weights)
}

/// Marginals of κ obtained by streaming the full product space.
#[derive(Clone, Debug)]
pub struct KappaMarginals {
    pub spins: Dist,
    pub pairs: Dist,
    /// Size of the product space `q^{n_i} · 2^{n2+n1}` covered by the stream.
    pub states_streamed: u128,
    /// Number of triples with nonzero weight.
    pub nonzero: u64,
}

/// Streams every `(f, P2, P1)` and accumulates both marginals of κ.
///
/// For a fixed `f` the nonzero triples are exactly those with
/// `P2 ⊆ {δf = 0}` and `P1 ⊆ {f = 0}`, and their weight depends only on
/// `(|P2|, |P1|)`. The stream therefore walks submasks of the satisfied sets
/// and keeps integer counts, converting to rationals once at the end.
pub fn enumerate_kappa(params: &ModelParams, x: &Complex, guard: &EnumGuard) -> Result<KappaMarginals> {
    params.validate(x)?;
    let i = params.i;
    let (n2, n1) = (x.count(i + 1), x.count(i));
    let spins = spin_states(x, i, params.q);
    let pairs = pair_states(x, i);
    guard.check(spins)?;
    guard.check(pairs)?;
    let streamed = spins.saturating_mul(pairs);
    if streamed > guard.max_streamed {
        return Err(Error::TooLarge {
            states: streamed,
            limit: guard.max_streamed,
        });
    }
    let scan = SpinScan { x, i, q: params.q };
    let hist_len = (n2 + 1) * (n1 + 1);

    // per-f histogram over (|P2|, |P1|) and per-pair compatible-f counts
    struct Acc {
        pair_counts: Vec<u64>,
        spin_hist: Vec<(u64, Vec<u64>)>,
        nonzero: u64,
    }
    let chunk = 256u64;
    let n_chunks = (spins as u64).div_ceil(chunk);
    let partials: Vec<Acc> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Acc {
                pair_counts: vec![0; pairs as usize],
                spin_hist: Vec::new(),
                nonzero: 0,
            };
            let mut f = vec![0u32; n1];
            for code in c * chunk..((c + 1) * chunk).min(spins as u64) {
                scan.decode(code, &mut f);
                let info = scan.info(&f);
                let mut hist = vec![0u64; hist_len];
                let mut m2 = info.sat2;
                loop {
                    let a2 = m2.count_ones() as usize;
                    let mut m1 = info.sat1;
                    loop {
                        let a1 = m1.count_ones() as usize;
                        hist[a2 * (n1 + 1) + a1] += 1;
                        acc.pair_counts[((m2 << n1) | m1) as usize] += 1;
                        acc.nonzero += 1;
                        if m1 == 0 {
                            break;
                        }
                        m1 = (m1 - 1) & info.sat1;
                    }
                    if m2 == 0 {
                        break;
                    }
                    m2 = (m2 - 1) & info.sat2;
                }
                acc.spin_hist.push((code, hist));
            }
            acc
        })
        .collect();

    let t2 = activity_table(&params.k2, n2);
    let t1 = activity_table(&params.k1, n1);
    let mut pair_counts = vec![0u64; pairs as usize];
    let mut spin_weights = Vec::with_capacity(spins as usize);
    let mut nonzero = 0;
    for acc in partials {
        for (k, v) in acc.pair_counts.into_iter().enumerate() {
            pair_counts[k] += v;
        }
        nonzero += acc.nonzero;
        for (_, hist) in acc.spin_hist {
            let mut w = Rational::zero();
            for (h, &cnt) in hist.iter().enumerate() {
                if cnt > 0 {
                    let (a2, a1) = (h / (n1 + 1), h % (n1 + 1));
                    w += &t2[a2] * &t1[a1] * Rational::from_integer(cnt.into());
                }
            }
            spin_weights.push(w);
        }
    }
    let pair_weights = pair_counts
        .par_iter()
        .enumerate()
        .map(|(id, &cnt)| {
            let a2 = (id >> n1).count_ones() as usize;
            let a1 = (id & ((1 << n1) - 1)).count_ones() as usize;
            &t2[a2] * &t1[a1] * Rational::from_integer(cnt.into())
        })
        .collect();
    Ok(KappaMarginals {
        spins: Dist::new(
            Space::Spins {
                cells: n1,
                q: params.q.get(),
            },
            spin_weights,
        )?,
        pairs: Dist::new(Space::Pairs { n2, n1 }, pair_weights)?,
        states_streamed: streamed,
        nonzero,
    })
}

/// The full joint κ as a [`Dist`] over triples (small instances only).
pub fn enumerate_kappa_joint(params: &ModelParams, x: &Complex, guard: &EnumGuard) -> Result<Dist> {
    params.validate(x)?;
    let i = params.i;
    let (n2, n1) = (x.count(i + 1), x.count(i));
    let states = spin_states(x, i, params.q).saturating_mul(pair_states(x, i));
    guard.check(states)?;
    let pairs = 1u64 << (n2 + n1);
    let q = params.q;
    let weights = (0..states as u64)
        .into_par_iter()
        .map(|id| {
            let f = Cochain::from_code(x, i, q, id / pairs);
            let pid = id % pairs;
            let pair = RelPair::from_masks(x, i, pid >> n1, pid & ((1 << n1) - 1))
                .expect("dimensions checked");
            kappa_weight(&f, &pair, params, x)
        })
        .collect();
    Dist::new(
        Space::Triples {
            cells: n1,
            q: q.get(),
            n2,
            n1,
        },
        weights,
    )
}

/// Both sides of `E_μ[W_γ] = ρ(V_γ)`.
#[derive(Clone, Debug)]
pub struct WilsonExact {
    /// `E_μ[W_γ]` in floating point.
    pub lhs: Complex64,
    /// `E_μ[W_γ]` exactly, available for q = 2.
    pub lhs_exact: Option<Rational>,
    /// `ρ(V_γ)` exactly.
    pub rhs: Rational,
}

/// Census of μ: number of cochains per (satisfied i-cells, satisfied
/// (i+1)-cells, values on a list of chains).
#[derive(Clone, Debug)]
pub struct MuCensus {
    pub q: Prime,
    pub n2: usize,
    pub n1: usize,
    pub classes: BTreeMap<(usize, usize, Vec<u32>), u64>,
}

impl MuCensus {
    pub fn build(x: &Complex, i: usize, q: Prime, gammas: &[Chain], guard: &EnumGuard) -> Result<Self> {
        if i + 1 > x.dim() {
            return Err(Error::InvalidDimension(format!("i = {i} too large")));
        }
        let states = spin_states(x, i, q);
        guard.check(states)?;
        for g in gammas {
            if g.dim() != i {
                return Err(Error::DimensionMismatch {
                    expected: i,
                    got: g.dim(),
                });
            }
        }
        let n1 = x.count(i);
        let scan = SpinScan { x, i, q };
        let terms: Vec<Vec<(usize, u32)>> = gammas.iter().map(|g| g.terms().collect()).collect();
        let chunk = 4096u64;
        let classes = (0..(states as u64).div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut local: BTreeMap<(usize, usize, Vec<u32>), u64> = BTreeMap::new();
                let mut f = vec![0u32; n1];
                for code in c * chunk..((c + 1) * chunk).min(states as u64) {
                    scan.decode(code, &mut f);
                    let info = scan.info(&f);
                    let vals = terms
                        .iter()
                        .map(|t| t.iter().fold(0, |acc, &(e, v)| q.add(acc, q.mul(v, f[e]))))
                        .collect();
                    *local.entry((info.s1, info.s2, vals)).or_insert(0) += 1;
                }
                local
            })
            .reduce(BTreeMap::new, merge_counts);
        Ok(MuCensus {
            q,
            n2: x.count(i + 1),
            n1,
            classes,
        })
    }

    fn class_probs(&self, k2: &Coupling, k1: &Coupling) -> Result<Vec<(Rational, &Vec<u32>)>> {
        let t1 = spin_table(k1, self.n1);
        let t2 = spin_table(k2, self.n2);
        let weighted: Vec<(Rational, &Vec<u32>)> = self
            .classes
            .iter()
            .map(|((s1, s2, vals), &cnt)| (&t1[*s1] * &t2[*s2] * Rational::from_integer(cnt.into()), vals))
            .collect();
        let z = weighted.iter().fold(Rational::zero(), |a, (w, _)| a + w);
        if z.is_zero() {
            return Err(Error::DegenerateParameter("μ has zero total weight".into()));
        }
        Ok(weighted.into_iter().map(|(w, v)| (w / &z, v)).collect())
    }

    /// `E_μ[W]` of the chain `Σ_k coeffs[k] γ_k`, in floating point, plus the
    /// exact value for q = 2.
    pub fn wilson(&self, k2: &Coupling, k1: &Coupling, coeffs: &[i64]) -> Result<(Complex64, Option<Rational>)> {
        let q = self.q;
        let probs = self.class_probs(k2, k1)?;
        let mut z = Complex64::new(0.0, 0.0);
        let mut exact = Rational::zero();
        for (p, vals) in probs {
            let phase = coeffs
                .iter()
                .zip(vals)
                .fold(0, |acc, (&c, &v)| q.add(acc, q.mul(q.reduce(c), v)));
            let pf = rational_to_f64(&p);
            let theta = 2.0 * std::f64::consts::PI * phase as f64 / q.get() as f64;
            z += Complex64::from_polar(pf, theta);
            if q.get() == 2 {
                if phase == 0 {
                    exact += p;
                } else {
                    exact -= p;
                }
            }
        }
        Ok((z, (q.get() == 2).then_some(exact)))
    }
}

/// Census of ρ̂: number of pairs per (|P2|, |P1|, b, V-mask), where bit k of
/// the V-mask records `V_{γ_k}`.
#[derive(Clone, Debug)]
pub struct RhoCensus {
    pub n2: usize,
    pub n1: usize,
    pub classes: BTreeMap<(usize, usize, usize, u64), u64>,
}

impl RhoCensus {
    pub fn build(x: &Complex, i: usize, q: Prime, gammas: &[Chain], guard: &EnumGuard) -> Result<Self> {
        if i + 1 > x.dim() {
            return Err(Error::InvalidDimension(format!("i = {i} too large")));
        }
        if gammas.len() > 64 {
            return Err(Error::InvalidParameter("at most 64 chains per census".into()));
        }
        let states = pair_states(x, i);
        guard.check(states)?;
        let (n2, n1) = (x.count(i + 1), x.count(i));
        let terms: Vec<Vec<(usize, u32)>> = gammas.iter().map(|g| g.terms().collect()).collect();
        let chunk = 1024u64;
        let classes = (0..(states as u64).div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut local = BTreeMap::new();
                for id in c * chunk..((c + 1) * chunk).min(states as u64) {
                    let (m2, m1) = (id >> n1, id & ((1u64 << n1) - 1));
                    let pair = RelPair::from_masks(x, i, m2, m1).expect("dimensions checked");
                    let e = constraint_echelon(x, &pair, q);
                    let vmask = terms
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| e.contains_sparse(t))
                        .fold(0u64, |m, (k, _)| m | 1 << k);
                    let key = (
                        m2.count_ones() as usize,
                        m1.count_ones() as usize,
                        e.kernel_dim(),
                        vmask,
                    );
                    *local.entry(key).or_insert(0) += 1;
                }
                local
            })
            .reduce(BTreeMap::new, merge_counts);
        Ok(RhoCensus { n2, n1, classes })
    }

    /// `ρ̂(all V_{γ_k} with bit k set in `required`)`.
    pub fn prob(&self, k2: &Coupling, k1: &Coupling, r: &Rational, required: u64) -> Result<Rational> {
        let t2 = activity_table(k2, self.n2);
        let t1 = activity_table(k1, self.n1);
        let mut z = Rational::zero();
        let mut hit = Rational::zero();
        for (&(a2, a1, b, vmask), &cnt) in &self.classes {
            let w = &t2[a2] * &t1[a1] * rpow(r, b) * Rational::from_integer(cnt.into());
            if vmask & required == required {
                hit += &w;
            }
            z += w;
        }
        if z.is_zero() {
            return Err(Error::DegenerateParameter("ρ has zero total weight".into()));
        }
        Ok(hit / z)
    }
}

fn merge_counts<K: Ord>(mut a: BTreeMap<K, u64>, b: BTreeMap<K, u64>) -> BTreeMap<K, u64> {
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

/// Both sides of `E_μ[W_γ] = ρ(V_γ)` by full enumeration.
pub fn exact_wilson(params: &ModelParams, x: &Complex, gamma: &Chain, guard: &EnumGuard) -> Result<WilsonExact> {
    params.validate(x)?;
    let gammas = std::slice::from_ref(gamma);
    let mu = MuCensus::build(x, params.i, params.q, gammas, guard)?;
    let rho = RhoCensus::build(x, params.i, params.q, gammas, guard)?;
    let (lhs, lhs_exact) = mu.wilson(&params.k2, &params.k1, &[1])?;
    let r = Rational::from_integer(params.q.get().into());
    let rhs = rho.prob(&params.k2, &params.k1, &r, 1)?;
    Ok(WilsonExact {
        lhs,
        lhs_exact,
        rhs,
    })
}

/// Which cell a one-point conditional refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairCell {
    /// An (i+1)-cell of `P2`.
    Upper(usize),
    /// An i-cell of `P1`.
    Lower(usize),
}

/// `ρ̂(cell open | all other cells)` from exact weights.
pub fn one_point_conditional(params: &ModelParams, x: &Complex, pair: &RelPair, cell: PairCell) -> Result<Rational> {
    let mut open = pair.clone();
    let mut closed = pair.clone();
    match cell {
        PairCell::Upper(s) => {
            open.p2_mut().set(s, true);
            closed.p2_mut().set(s, false);
        }
        PairCell::Lower(e) => {
            open.p1_mut().set(e, true);
            closed.p1_mut().set(e, false);
        }
    }
    let wo = cpp_weight(&open, params, x);
    let wc = cpp_weight(&closed, params, x);
    let z = &wo + wc;
    if z.is_zero() {
        return Err(Error::DegenerateParameter("conditioning event has zero weight".into()));
    }
    Ok(wo / z)
}

/// The two admissible one-point conditionals `p` and `p / (r(1-p) + p)`.
pub fn one_point_candidates(k: &Coupling, r: &Rational) -> (Rational, Rational) {
    let p = k.p();
    let other = if p.is_zero() {
        Rational::zero()
    } else {
        &p / (r * (Rational::one() - &p) + &p)
    };
    (p, other)
}

/// Absolute plaquette random-cluster weights on j-dimensional percolation
/// subcomplexes: `o^|P| c^(n-|P|) · q^{b_{j-1}(P)}`. With `q = None` this is
/// Bernoulli percolation.
pub fn prcm(k: &Coupling, q: Option<Prime>, j: usize, x: &Complex) -> Result<Dist> {
    let n = x.count(j);
    if n >= 40 {
        return Err(Error::TooLarge {
            states: 1u128 << n,
            limit: 1 << 40,
        });
    }
    let t = activity_table(k, n);
    let weights = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let a = mask.count_ones() as usize;
            let mut w = t[a].clone();
            if let (Some(q), true) = (q, j >= 1) {
                let p = PercSubcomplex::from_mask(x, j, mask);
                let b = betti_numbers(x, &p.to_subcomplex(x), &Subcomplex::empty(x), q)
                    .expect("empty relative part")[j - 1];
                w *= rpow(&Rational::from_integer(q.get().into()), b);
            }
            w
        })
        .collect();
    Dist::new(Space::Subsets { cells: n }, weights)
}

/// Verifies on every configuration that κ on `(G, i = 0)` equals the
/// random-cluster coupling κ' on `G` plus a ghost vertex, after normalization.
///
/// κ' is evaluated in the probability parametrization on the extended graph:
/// each edge contributes `(1-p)` when closed and `p·[δf'(e) = 0]` when open,
/// with `p = p2` on edges of `G` and `p = p1` on ghost edges, and `f'` the
/// extension of `f` by zero at the ghost vertex.
pub fn ghost_vertex_check(params: &ModelParams, g: &Complex, guard: &EnumGuard) -> Result<bool> {
    if params.i != 0 {
        return Err(Error::InvalidParameter("ghost vertex check needs i = 0".into()));
    }
    if g.dim() != 1 {
        return Err(Error::InvalidDimension("expected a graph".into()));
    }
    let (nv, ne) = (g.count(0), g.count(1));
    let ghost = nv;
    let mut edges: Vec<(usize, usize)> = (0..ne)
        .map(|e| {
            let b = g.boundary(1, e);
            let head = b.iter().find(|(_, s)| *s > 0).map(|&(v, _)| v);
            let tail = b.iter().find(|(_, s)| *s < 0).map(|&(v, _)| v);
            match (head, tail) {
                (Some(h), Some(t)) => Ok((t, h)),
                _ => Err(Error::InvalidParameter(format!("edge {e} is a loop"))),
            }
        })
        .collect::<Result<_>>()?;
    edges.extend((0..nv).map(|v| (v, ghost)));
    let gp = Complex::graph(nv + 1, &edges)?;

    let states = spin_states(g, 0, params.q).saturating_mul(1u128 << (ne + nv));
    guard.check(states)?;
    let q = params.q;
    let pairs = 1u64 << (ne + nv);
    let (p2, p1) = (params.k2.p(), params.k1.p());
    let one = Rational::one();
    let lhs: Vec<Rational> = (0..states as u64)
        .into_par_iter()
        .map(|id| {
            let f = Cochain::from_code(g, 0, q, id / pairs);
            let pid = id % pairs;
            let pair = RelPair::from_masks(g, 0, pid >> nv, pid & ((1 << nv) - 1))
                .expect("dimensions checked");
            kappa_weight(&f, &pair, params, g)
        })
        .collect();
    let rhs: Vec<Rational> = (0..states as u64)
        .into_par_iter()
        .map(|id| {
            let code = id / pairs;
            let pid = id % pairs;
            let f = Cochain::from_code(g, 0, q, code);
            let mut fp = f.values().to_vec();
            fp.push(0);
            let fp = Cochain::from_values(0, q, fp);
            // P on G': edges of G from the P2 mask, ghost edge of v from the P1 mask
            let (m2, m1) = (pid >> nv, pid & ((1 << nv) - 1));
            let mut w = Rational::one();
            for e in 0..gp.count(1) {
                let (open, p) = if e < ne {
                    (m2 >> e & 1 == 1, &p2)
                } else {
                    (m1 >> (e - ne) & 1 == 1, &p1)
                };
                if open {
                    if fp.coboundary_at(&gp, e) != 0 {
                        return Rational::zero();
                    }
                    w *= p;
                } else {
                    w *= &one - p;
                }
            }
            w
        })
        .collect();
    let space = Space::Triples {
        cells: nv,
        q: q.get(),
        n2: ne,
        n1: nv,
    };
    let a = Dist::new(space.clone(), lhs)?;
    let b = Dist::new(space, rhs)?;
    Ok(a.max_abs_diff(&b)?.is_zero())
}

/// `b_i(P2, P1)` for a pair given as masks.
pub fn pair_dim(x: &Complex, i: usize, q: Prime, m2: u64, m1: u64) -> Result<usize> {
    let pair = RelPair::from_masks(x, i, m2, m1)?;
    Ok(constraint_echelon(x, &pair, q).kernel_dim())
}
