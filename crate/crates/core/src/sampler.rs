//! Two-step conditional sampler for the coupling κ.
//!
//! One sweep draws `(P2, P1)` given `f` (independent percolation on the
//! satisfied cells) and then `f` given `(P2, P1)` (uniform on the relative
//! cocycles). Both are exact conditional draws, so the chain leaves κ
//! invariant; its `(P2, P1)` marginal is ρ and its `f` marginal is μ.
//!
//! Randomness comes from `ChaCha8Rng`. Chain `c` of a run with seed `s` uses
//! key `s` and stream `c`, so chains are independent and reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{Chain, Cochain, Complex, PercSubcomplex};
use crate::error::{Error, Result};
use crate::gfq::{Prime, RowEchelon};
use crate::homology::RelPair;
use crate::measures::{kappa_weight, ModelParams};
use crate::observables::Estimate;

/// Parameters for Monte Carlo, as probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub q: Prime,
    pub i: usize,
    pub p2: f64,
    pub p1: f64,
}

impl McParams {
    pub fn new(q: Prime, i: usize, p2: f64, p1: f64) -> Result<Self> {
        for (name, p) in [("p2", p2), ("p1", p1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} not in [0, 1]")));
            }
        }
        Ok(McParams { q, i, p2, p1 })
    }

    pub fn from_model(params: &ModelParams) -> Result<Self> {
        Self::new(params.q, params.i, params.k2.p_f64(), params.k1.p_f64())
    }
}

/// Run configuration. `n_samples` counts recorded samples per chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: McParams,
    pub burn_in: u64,
    pub n_samples: u64,
    pub thinning: u64,
    pub seed: u64,
    pub n_chains: usize,
    pub n_batches: usize,
    pub keep_series: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(params: McParams, n_samples: u64, seed: u64) -> Self {
        RunConfig {
            params,
            burn_in: 10_000,
            n_samples,
            thinning: 1,
            seed,
            n_chains: 1,
            n_batches: 20,
            keep_series: false,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        McParams::new(self.params.q, self.params.i, self.params.p2, self.params.p1)?;
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::InvalidParameter("n_chains must be at least 1".into()));
        }
        if self.n_batches == 0 {
            return Err(Error::InvalidParameter("n_batches must be at least 1".into()));
        }
        Ok(())
    }
}

/// Uniform sampler for `Z^i(P2, P1)`.
///
/// Cochains in the space vanish on `P1`, so only the remaining i-cells are
/// unknowns; each open `P2` cell contributes the row `∂σ` restricted to them.
pub struct CocycleSolver {
    n: usize,
    /// unknown index -> i-cell id
    cells: Vec<usize>,
    /// i-cell id -> unknown index (usize::MAX on P1)
    index: Vec<usize>,
    echelon: RowEchelon,
    q: Prime,
    dim: usize,
}

impl CocycleSolver {
    pub fn new(x: &Complex, pair: &RelPair, q: Prime) -> Self {
        let i = pair.i();
        let n = x.count(i);
        let mut index = vec![usize::MAX; n];
        let mut cells = Vec::with_capacity(n - pair.p1().open_count());
        for (e, slot) in index.iter_mut().enumerate() {
            if !pair.p1().is_open(e) {
                *slot = cells.len();
                cells.push(e);
            }
        }
        let mut echelon = RowEchelon::new(q, cells.len());
        let mut row = Vec::with_capacity(2 * (i + 1));
        for s in pair.p2().ids() {
            row.clear();
            row.extend(
                x.boundary(i + 1, s)
                    .iter()
                    .filter(|(e, _)| index[*e] != usize::MAX)
                    .map(|&(e, sign)| (index[e], q.reduce(sign))),
            );
            if !row.is_empty() {
                echelon.insert_sparse(&row);
            }
        }
        CocycleSolver {
            n,
            dim: echelon.kernel_dim(),
            cells,
            index,
            echelon,
            q,
        }
    }

    /// `b_i(P2, P1)`.
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Cochain {
        let x = self.echelon.sample_kernel(rng);
        let mut values = vec![0u32; self.n];
        for (k, &e) in self.cells.iter().enumerate() {
            values[e] = x[k];
        }
        Cochain::from_values(i, self.q, values)
    }

    /// `V_γ`: the part of `γ` off `P1` lies in the span of the restricted boundaries.
    pub fn v_event(&self, gamma: &Chain) -> bool {
        let terms: Vec<(usize, u32)> = gamma
            .terms()
            .filter(|(e, _)| self.index[*e] != usize::MAX)
            .map(|(e, c)| (self.index[e], c))
            .collect();
        terms.is_empty() || self.echelon.contains_sparse(&terms)
    }
}

/// Draws `(P2, P1)` given `f`: every satisfied cell opens independently.
pub fn resample_percolation<R: Rng + ?Sized>(
    x: &Complex,
    f: &Cochain,
    params: &McParams,
    rng: &mut R,
) -> RelPair {
    let i = params.i;
    let mut p2 = PercSubcomplex::empty(x, i + 1);
    for s in 0..x.count(i + 1) {
        if f.coboundary_at(x, s) == 0 && rng.random_bool(params.p2) {
            p2.set(s, true);
        }
    }
    let mut p1 = PercSubcomplex::empty(x, i);
    for e in 0..x.count(i) {
        if f.get(e) == 0 && rng.random_bool(params.p1) {
            p1.set(e, true);
        }
    }
    RelPair::new(x, i, p2, p1).expect("dimensions match by construction")
}

/// Draws `f` uniformly from `Z^i(P2, P1)`.
pub fn resample_spins<R: Rng + ?Sized>(x: &Complex, pair: &RelPair, q: Prime, rng: &mut R) -> Cochain {
    CocycleSolver::new(x, pair, q).sample(pair.i(), rng)
}

/// Draws `(f, g)` given `(P2, P1)` for the general-gauge coupling: `g` is
/// uniform on `C^{i-1}` and `f = h + δg` with `h` uniform on `Z^i(P2, P1)`.
/// For `i = 0` there is no gauge field and `g` is `None`.
pub fn sample_general_gauge<R: Rng + ?Sized>(
    x: &Complex,
    pair: &RelPair,
    q: Prime,
    rng: &mut R,
) -> (Cochain, Option<Cochain>) {
    let i = pair.i();
    if i == 0 {
        return (resample_spins(x, pair, q, rng), None);
    }
    let g_values = (0..x.count(i - 1)).map(|_| rng.random_range(0..q.get())).collect();
    let g = Cochain::from_values(i - 1, q, g_values);
    let h = resample_spins(x, pair, q, rng);
    let f = h.add(&g.coboundary(x));
    (f, Some(g))
}

/// Weight of `(f, g, P2, P1)` in the general-gauge coupling: κ evaluated at
/// the gauge-invariant combination `f - δg`.
pub fn kappa_hat_weight(
    f: &Cochain,
    g: Option<&Cochain>,
    pair: &RelPair,
    params: &ModelParams,
    x: &Complex,
) -> crate::gfq::Rational {
    match g {
        Some(g) => kappa_weight(&f.sub(&g.coboundary(x)), pair, params, x),
        None => kappa_weight(f, pair, params, x),
    }
}

/// State of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub f: Cochain,
    pub pair: RelPair,
    pub sweep: u64,
    rng: ChaCha8Rng,
}

impl ChainState {
    /// Starts at `f ≡ 0` with every cell closed.
    pub fn new(x: &Complex, params: &McParams, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(ChainState {
            f: Cochain::zero(x, params.i, params.q),
            pair: RelPair::empty(x, params.i)?,
            sweep: 0,
            rng,
        })
    }

    /// One percolation update followed by one spin update. Returns the
    /// solver used for the spin update, which also answers `V_γ` queries
    /// for the current pair.
    pub fn sweep(&mut self, x: &Complex, params: &McParams) -> CocycleSolver {
        self.pair = resample_percolation(x, &self.f, params, &mut self.rng);
        let solver = CocycleSolver::new(x, &self.pair, params.q);
        self.f = solver.sample(params.i, &mut self.rng);
        self.sweep += 1;
        solver
    }

    pub fn advance(&mut self, x: &Complex, params: &McParams, sweeps: u64) {
        for _ in 0..sweeps {
            self.sweep(x, params);
        }
    }
}

/// Quantities recorded after each kept sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// Indicator of `V_γ` for the current pair.
    VEvent(Chain),
    /// `Re W_γ(f)`.
    WilsonRe(Chain),
    /// `Im W_γ(f)`.
    WilsonIm(Chain),
    /// `|P2|`.
    OpenUpper,
    /// `|P1|`.
    OpenLower,
    /// Pair id `mask(P2) · 2^n1 + mask(P1)` (requires `n2 + n1 ≤ 52`).
    StateCode,
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Observable::VEvent(_) => "v_event",
            Observable::WilsonRe(_) => "wilson_re",
            Observable::WilsonIm(_) => "wilson_im",
            Observable::OpenUpper => "open_upper",
            Observable::OpenLower => "open_lower",
            Observable::StateCode => "state_code",
        }
    }

    fn eval(&self, x: &Complex, state: &ChainState, solver: &CocycleSolver) -> f64 {
        match self {
            Observable::VEvent(g) => solver.v_event(g) as u8 as f64,
            Observable::WilsonRe(g) => crate::observables::wilson_value(&state.f, g).re,
            Observable::WilsonIm(g) => crate::observables::wilson_value(&state.f, g).im,
            Observable::OpenUpper => state.pair.p2().open_count() as f64,
            Observable::OpenLower => state.pair.p1().open_count() as f64,
            Observable::StateCode => {
                let n1 = x.count(state.pair.i());
                let hi = state.pair.p2().ids().fold(0u64, |m, k| m | 1 << k);
                let lo = state.pair.p1().ids().fold(0u64, |m, k| m | 1 << k);
                ((hi << n1) | lo) as f64
            }
        }
    }
}

/// Output of [`run_chain`].
#[derive(Clone, Debug)]
pub struct RunResult {
    /// One estimate per observable, pooled over chains.
    pub estimates: Vec<Estimate>,
    /// `series[chain][observable][sample]` when requested.
    pub series: Option<Vec<Vec<Vec<f64>>>>,
    pub sweeps_per_chain: u64,
}

fn run_one(x: &Complex, cfg: &RunConfig, observables: &[Observable], chain: usize) -> Result<Vec<Vec<f64>>> {
    let params = &cfg.params;
    let mut state = ChainState::new(x, params, cfg.seed, chain as u64)?;
    state.advance(x, params, cfg.burn_in);
    let mut series = vec![Vec::with_capacity(cfg.n_samples as usize); observables.len()];
    for _ in 0..cfg.n_samples {
        for _ in 1..cfg.thinning {
            state.sweep(x, params);
        }
        let solver = state.sweep(x, params);
        for (k, o) in observables.iter().enumerate() {
            series[k].push(o.eval(x, &state, &solver));
        }
    }
    Ok(series)
}

/// Batch-means estimate pooled over chains.
pub fn batch_means(chains: &[&[f64]], n_batches: usize) -> Estimate {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mean = chains.iter().flat_map(|c| c.iter()).sum::<f64>() / total as f64;
    let mut batch_avgs = Vec::new();
    for c in chains {
        let nb = n_batches.min(c.len()).max(1);
        let size = c.len() / nb;
        for b in 0..nb {
            let chunk = &c[b * size..(b + 1) * size];
            batch_avgs.push(chunk.iter().sum::<f64>() / size as f64);
        }
    }
    let m = batch_avgs.len();
    let std_err = if m > 1 {
        let bm = batch_avgs.iter().sum::<f64>() / m as f64;
        let var = batch_avgs.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    Estimate {
        mean,
        std_err,
        n_samples: total as u64,
    }
}

/// Runs `cfg.n_chains` independent chains and pools the observables.
pub fn run_chain(cfg: &RunConfig, x: &Complex, observables: &[Observable]) -> Result<RunResult> {
    cfg.validate()?;
    let dummy = McParams::new(cfg.params.q, cfg.params.i, cfg.params.p2, cfg.params.p1)?;
    RelPair::empty(x, dummy.i)?;
    let work = || -> Result<Vec<Vec<Vec<f64>>>> {
        (0..cfg.n_chains)
            .into_par_iter()
            .map(|c| run_one(x, cfg, observables, c))
            .collect()
    };
    let per_chain = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let estimates = (0..observables.len())
        .map(|k| {
            let slices: Vec<&[f64]> = per_chain.iter().map(|c| c[k].as_slice()).collect();
            batch_means(&slices, cfg.n_batches)
        })
        .collect();
    Ok(RunResult {
        estimates,
        series: cfg.keep_series.then_some(per_chain),
        sweeps_per_chain: cfg.burn_in + cfg.n_samples * cfg.thinning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::{is_compatible, relative_cocycle_space};
    use std::collections::HashMap;

    fn q(p: u32) -> Prime {
        Prime::new(p).unwrap()
    }

    fn square() -> Complex {
        Complex::cubical_box(2, &[1, 1]).unwrap()
    }

    #[test]
    fn percolation_extremes() {
        let x = Complex::cubical_box(2, &[2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = Cochain::zero(&x, 1, q(3));
        let all = resample_percolation(&x, &zero, &McParams::new(q(3), 1, 1.0, 1.0).unwrap(), &mut rng);
        assert_eq!(all.p2().open_count(), 4);
        assert_eq!(all.p1().open_count(), 12);
        let mut f = zero.clone();
        f.set(5, 2);
        let none = resample_percolation(&x, &f, &McParams::new(q(3), 1, 0.0, 0.0).unwrap(), &mut rng);
        assert_eq!(none.p2().open_count() + none.p1().open_count(), 0);
        let some = resample_percolation(&x, &f, &McParams::new(q(3), 1, 1.0, 1.0).unwrap(), &mut rng);
        assert!(!some.p1().is_open(5));
        assert_eq!(some.p1().open_count(), 11);
    }

    #[test]
    fn spins_are_compatible_and_extremes_hold() {
        let x = Complex::cubical_box(2, &[2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let full = RelPair::full(&x, 1).unwrap();
        assert!(resample_spins(&x, &full, q(5), &mut rng).is_zero());
        for seed in 0..50 {
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let f = Cochain::from_values(1, q(3), (0..12).map(|_| r2.random_range(0..3)).collect());
            let pair = resample_percolation(&x, &f, &McParams::new(q(3), 1, 0.5, 0.5).unwrap(), &mut r2);
            let params = ModelParams::from_ints(3, 1, 1, 1).unwrap();
            assert!(kappa_weight(&f, &pair, &params, &x) > crate::gfq::Rational::from_integer(0.into()));
            let g = resample_spins(&x, &pair, q(3), &mut r2);
            assert!(is_compatible(&x, &pair, &g));
            let solver = CocycleSolver::new(&x, &pair, q(3));
            assert_eq!(solver.dimension(), relative_cocycle_space(&x, &pair, q(3)).dim);
        }
    }

    #[test]
    fn empty_pair_gives_uniform_cochains() {
        let x = square();
        let pair = RelPair::empty(&x, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts: HashMap<u64, u32> = HashMap::new();
        for _ in 0..16_000 {
            *counts.entry(resample_spins(&x, &pair, q(2), &mut rng).code()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 16);
        assert!(counts.values().all(|&c| (c as f64 - 1000.0).abs() < 150.0));
    }

    #[test]
    fn closed_face_gives_eight_cocycles() {
        let x = square();
        let pair = RelPair::from_masks(&x, 1, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts: HashMap<u64, u32> = HashMap::new();
        for _ in 0..8_000 {
            let f = resample_spins(&x, &pair, q(2), &mut rng);
            assert_eq!(f.coboundary_at(&x, 0), 0);
            *counts.entry(f.code()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 8);
        assert!(counts.values().all(|&c| (c as f64 - 1000.0).abs() < 150.0));
    }

    #[test]
    fn general_gauge_full_pair_is_pure_gauge() {
        let x = Complex::cubical_box(2, &[2, 2]).unwrap();
        let full = RelPair::full(&x, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (f, g) = sample_general_gauge(&x, &full, q(3), &mut rng);
        assert_eq!(f, g.unwrap().coboundary(&x));
        let empty0 = RelPair::empty(&x, 0).unwrap();
        let (_, g0) = sample_general_gauge(&x, &empty0, q(3), &mut rng);
        assert!(g0.is_none());
    }

    #[test]
    fn general_gauge_weight_is_gauge_invariant() {
        let x = Complex::cubical_box(2, &[2, 1]).unwrap();
        let params = ModelParams::from_ints(3, 1, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let pair = resample_percolation(
                &x,
                &Cochain::zero(&x, 1, q(3)),
                &McParams::new(q(3), 1, 0.5, 0.5).unwrap(),
                &mut rng,
            );
            let (f, g) = sample_general_gauge(&x, &pair, q(3), &mut rng);
            let g = g.unwrap();
            let shift = Cochain::from_values(0, q(3), (0..x.count(0)).map(|_| rng.random_range(0..3)).collect());
            let w = kappa_hat_weight(&f, Some(&g), &pair, &params, &x);
            let w2 = kappa_hat_weight(&f.add(&shift.coboundary(&x)), Some(&g.add(&shift)), &pair, &params, &x);
            assert_eq!(w, w2);
            assert!(w > crate::gfq::Rational::from_integer(0.into()));
        }
    }

    #[test]
    fn zero_sweeps_leave_initial_state() {
        let x = square();
        let params = McParams::new(q(2), 1, 0.5, 0.5).unwrap();
        let mut s = ChainState::new(&x, &params, 9, 0).unwrap();
        s.advance(&x, &params, 0);
        assert_eq!(s.sweep, 0);
        assert!(s.f.is_zero());
        assert_eq!(s.pair, RelPair::empty(&x, 1).unwrap());
    }

    #[test]
    fn runs_are_reproducible() {
        let x = Complex::cubical_box(2, &[2, 2]).unwrap();
        let params = McParams::new(q(3), 1, 0.4, 0.3).unwrap();
        let mut cfg = RunConfig::new(params, 200, 11);
        cfg.burn_in = 20;
        cfg.n_chains = 3;
        cfg.keep_series = true;
        let obs = [Observable::OpenUpper, Observable::StateCode];
        let a = run_chain(&cfg, &x, &obs).unwrap();
        let b = run_chain(&cfg, &x, &obs).unwrap();
        assert_eq!(a.series, b.series);
        cfg.threads = Some(2);
        let c = run_chain(&cfg, &x, &obs).unwrap();
        assert_eq!(a.series, c.series);
        let s = a.series.unwrap();
        assert_ne!(s[0], s[1]);
    }

    #[test]
    fn batch_means_of_constant_series() {
        let v = vec![2.0; 100];
        let e = batch_means(&[&v], 10);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_err, 0.0);
        assert_eq!(e.n_samples, 100);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(McParams::new(q(2), 1, 1.5, 0.0).is_err());
        let mut cfg = RunConfig::new(McParams::new(q(2), 1, 0.5, 0.5).unwrap(), 0, 1);
        assert!(cfg.validate().is_err());
        cfg.n_samples = 1;
        cfg.thinning = 0;
        assert!(cfg.validate().is_err());
    }
}
