//! Torus duality between the coupled percolation measures at `(i, k2, k1)`
//! and `(d - i - 1, q/k1, q/k2)`.
//!
//! A state `(P2, P1)` maps to `(P1•, P2•)`: the duals of the closed i-cells
//! form the new upper complex and the duals of the closed (i+1)-cells the
//! new lower one. The dual lattice is identified with the torus by the
//! translation used in [`Complex::bullet_dual`].

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::complex::{dual_subcomplex, dual_subcomplex_back, Complex};
use crate::error::{Error, Result};
use crate::gfq::{Prime, Rational};
use crate::homology::RelPair;
use crate::measures::{enumerate_rho, Coupling, EnumGuard, ModelParams};
use crate::observables::Estimate;
use crate::sampler::{run_chain, McParams, Observable, RunConfig};

/// Parameters of the dual model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualParams {
    pub q: Prime,
    pub i_dual: usize,
    pub k2: Coupling,
    pub k1: Coupling,
}

impl DualParams {
    pub fn p2_dual(&self) -> Rational {
        self.k2.p()
    }

    pub fn p1_dual(&self) -> Rational {
        self.k1.p()
    }

    pub fn to_model(&self) -> ModelParams {
        ModelParams::new(self.q, self.i_dual, self.k2.clone(), self.k1.clone())
    }
}

fn q_over(q: Prime, k: &Coupling, name: &str) -> Result<Coupling> {
    match k {
        Coupling::Infinite => Ok(Coupling::Finite(Rational::zero())),
        Coupling::Finite(v) if v.is_zero() => Err(Error::DegenerateParameter(format!(
            "{name} = 0 has no finite dual coupling"
        ))),
        Coupling::Finite(v) => Coupling::finite(Rational::from_integer(q.get().into()) / v),
    }
}

/// `k2' = q/k1`, `k1' = q/k2`, `i' = d - i - 1`.
pub fn dual_params(params: &ModelParams, d: usize) -> Result<DualParams> {
    if params.i + 1 > d {
        return Err(Error::InvalidDimension(format!(
            "duality needs i <= d - 1, got i = {} in dimension {d}",
            params.i
        )));
    }
    if params.r.is_some() {
        return Err(Error::InvalidParameter("duality is defined for r = q only".into()));
    }
    Ok(DualParams {
        q: params.q,
        i_dual: d - params.i - 1,
        k2: q_over(params.q, &params.k1, "k1")?,
        k1: q_over(params.q, &params.k2, "k2")?,
    })
}

/// `p• = q(1 - p) / (p + q(1 - p))`, the probability form of `q/k`.
pub fn dual_probability(p: &Rational, q: Prime) -> Result<Rational> {
    let one = Rational::from_integer(1.into());
    if p.is_negative() || p > &one {
        return Err(Error::InvalidParameter(format!("p = {p} not in [0, 1]")));
    }
    if p.is_zero() {
        return Err(Error::DegenerateParameter("p = 0 has no finite dual coupling".into()));
    }
    let qq = Rational::from_integer(q.get().into());
    let num = &qq * (&one - p);
    Ok(num.clone() / (p + num))
}

/// `(P2, P1) ↦ (P1•, P2•)` on a torus.
pub fn dual_state(x: &Complex, pair: &RelPair) -> Result<RelPair> {
    if !x.is_torus() {
        return Err(Error::NotATorus);
    }
    let d = x.ambient_dim();
    if pair.i() + 1 > d {
        return Err(Error::InvalidDimension(format!("i = {} has no dual in dimension {d}", pair.i())));
    }
    RelPair::new(x, d - pair.i() - 1, dual_subcomplex(x, pair.p1())?, dual_subcomplex(x, pair.p2())?)
}

/// Inverse of [`dual_state`].
pub fn dual_state_back(x: &Complex, pair: &RelPair) -> Result<RelPair> {
    if !x.is_torus() {
        return Err(Error::NotATorus);
    }
    let d = x.ambient_dim();
    if pair.i() + 1 > d {
        return Err(Error::InvalidDimension(format!("i = {} has no dual in dimension {d}", pair.i())));
    }
    RelPair::new(
        x,
        d - pair.i() - 1,
        dual_subcomplex_back(x, pair.p1())?,
        dual_subcomplex_back(x, pair.p2())?,
    )
}

/// Result of [`verify_duality_exact`].
#[derive(Clone, Debug, PartialEq)]
pub struct DualityReport {
    pub dual: DualParams,
    pub max_discrepancy: Rational,
    pub states_checked: u64,
}

/// Compares ρ(P2, P1) with ρ•(P1•, P2•) for every state.
pub fn verify_duality_exact(params: &ModelParams, x: &Complex, guard: &EnumGuard) -> Result<DualityReport> {
    if !x.is_torus() {
        return Err(Error::NotATorus);
    }
    let d = x.ambient_dim();
    let dual = dual_params(params, d)?;
    let rho = enumerate_rho(params, x, guard)?;
    let rho_dual = enumerate_rho(&dual.to_model(), x, guard)?;
    let i = params.i;
    let (n1, dn1) = (x.count(i), x.count(dual.i_dual));
    let mut max = Rational::zero();
    for id in 0..rho.len() {
        let m2 = (id >> n1) as u64;
        let m1 = (id & ((1 << n1) - 1)) as u64;
        let pair = RelPair::from_masks(x, i, m2, m1)?;
        let dp = dual_state(x, &pair)?;
        let did = ((dp.p2().mask() as usize) << dn1) | dp.p1().mask() as usize;
        let diff = (rho.prob(id) - rho_dual.prob(did)).abs();
        if diff > max {
            max = diff;
        }
    }
    Ok(DualityReport {
        dual,
        max_discrepancy: max,
        states_checked: rho.len() as u64,
    })
}

/// One observable compared across the duality by Monte Carlo.
#[derive(Clone, Debug, Serialize)]
pub struct DualComparison {
    pub name: String,
    pub direct: Estimate,
    /// The dual estimate mapped back to the original model.
    pub dual: Estimate,
    /// `|direct - dual| / sqrt(se_direct² + se_dual²)`.
    pub z: f64,
}

/// Monte Carlo check of the duality: the expected numbers of open cells of
/// each dimension must match `|T^(j)| -` the open count of the dual side.
pub fn verify_duality_mc(params: &ModelParams, x: &Complex, cfg: &RunConfig) -> Result<Vec<DualComparison>> {
    if !x.is_torus() {
        return Err(Error::NotATorus);
    }
    let d = x.ambient_dim();
    let dual = dual_params(params, d)?;
    let i = params.i;
    let obs = [Observable::OpenUpper, Observable::OpenLower];
    let mut direct_cfg = cfg.clone();
    direct_cfg.params = McParams::from_model(params)?;
    let mut dual_cfg = cfg.clone();
    dual_cfg.params = McParams::from_model(&dual.to_model())?;
    dual_cfg.seed = cfg.seed.wrapping_add(1);
    let a = run_chain(&direct_cfg, x, &obs)?;
    let b = run_chain(&dual_cfg, x, &obs)?;
    // P2 is dual to the lower dual complex, P1 to the upper one.
    let pairs = [
        ("open_upper", &a.estimates[0], &b.estimates[1], x.count(i + 1)),
        ("open_lower", &a.estimates[1], &b.estimates[0], x.count(i)),
    ];
    Ok(pairs
        .into_iter()
        .map(|(name, direct, other, total)| {
            let mapped = Estimate {
                mean: total as f64 - other.mean,
                std_err: other.std_err,
                n_samples: other.n_samples,
            };
            let se = (direct.std_err.powi(2) + mapped.std_err.powi(2)).sqrt();
            let z = if se > 0.0 {
                (direct.mean - mapped.mean).abs() / se
            } else if direct.mean == mapped.mean {
                0.0
            } else {
                f64::INFINITY
            };
            DualComparison {
                name: name.into(),
                direct: *direct,
                dual: mapped,
                z,
            }
        })
        .collect())
}
