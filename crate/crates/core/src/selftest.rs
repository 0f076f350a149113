//! A quick invariant suite, run by `cpp-lab selftest`.

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::{Chain, Complex};
use crate::duality::verify_duality_exact;
use crate::error::Result;
use crate::gfq::Prime;
use crate::homology::{cocycle_dim, min_area, rel_betti, RelPair};
use crate::measures::{
    enumerate_kappa, enumerate_mu, enumerate_rho, exact_wilson, one_point_candidates, one_point_conditional,
    EnumGuard, ModelParams, PairCell,
};
use crate::observables::rect_loop;
use crate::sampler::{run_chain, McParams, Observable, RunConfig};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_pair(x: &Complex, i: usize, rng: &mut ChaCha8Rng) -> RelPair {
    let mut pair = RelPair::empty(x, i).expect("valid dimension");
    for s in 0..x.count(i + 1) {
        pair.p2_mut().set(s, rng.random_bool(0.5));
    }
    for e in 0..x.count(i) {
        pair.p1_mut().set(e, rng.random_bool(0.5));
    }
    pair
}

/// Runs every check; takes a few seconds.
pub fn run_all() -> Vec<CheckResult> {
    let q2 = Prime::new(2).expect("prime");
    let q3 = Prime::new(3).expect("prime");
    let guard = EnumGuard::default();
    let mut out = Vec::new();

    out.push(check("worked_example_cohomology", || {
        let x = Complex::filled_square_with_loop();
        let a = RelPair::from_masks(&x, 1, 1, 0b000_1111)?;
        let z = cocycle_dim(&x, &RelPair::from_masks(&x, 1, 1, 0)?, q2);
        let h = rel_betti(&x, &a, 1, q2);
        Ok((z == 6 && h == 3, format!("dim Z^1 = {z}, b_1(X, A) = {h}")))
    }));

    out.push(check("coupling_marginals", || {
        let x = Complex::cubical_box(2, &[1, 1])?;
        let params = ModelParams::from_ints(3, 1, 1, 2)?;
        let k = enumerate_kappa(&params, &x, &guard)?;
        let dm = k.spins.max_abs_diff(&enumerate_mu(&params, &x, &guard)?)?;
        let dr = k.pairs.max_abs_diff(&enumerate_rho(&params, &x, &guard)?)?;
        Ok((dm.is_zero() && dr.is_zero(), format!("mu diff {dm}, rho diff {dr}")))
    }));

    out.push(check("wilson_equals_v_event", || {
        let x = Complex::cubical_box(2, &[2, 2])?;
        let params = ModelParams::from_ints(2, 1, 1, 1)?;
        let fam = rect_loop(2, 2, &x, q2)?;
        let w = exact_wilson(&params, &x, &fam.gamma, &guard)?;
        let ok = w.lhs_exact.as_ref() == Some(&w.rhs);
        Ok((ok, format!("E[W] = {:?}, rho(V) = {}", w.lhs_exact, w.rhs)))
    }));

    out.push(check("torus_duality", || {
        let t = Complex::torus(2, 2)?;
        let rep = verify_duality_exact(&ModelParams::from_ints(2, 0, 1, 2)?, &t, &guard)?;
        Ok((
            rep.max_discrepancy.is_zero(),
            format!("{} states, max discrepancy {}", rep.states_checked, rep.max_discrepancy),
        ))
    }));

    out.push(check("lattice_condition", || {
        let x = Complex::cubical_box(2, &[2, 2])?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bad = 0;
        for _ in 0..500 {
            let a = random_pair(&x, 1, &mut rng);
            let b = random_pair(&x, 1, &mut rng);
            let lhs = cocycle_dim(&x, &a.union(&b), q3) + cocycle_dim(&x, &a.intersection(&b), q3);
            let rhs = cocycle_dim(&x, &a, q3) + cocycle_dim(&x, &b, q3);
            bad += (lhs < rhs) as usize;
        }
        Ok((bad == 0, format!("{bad} violations in 500 pairs")))
    }));

    out.push(check("one_point_conditionals", || {
        let x = Complex::cubical_box(2, &[2, 1])?;
        let params = ModelParams::from_ints(2, 1, 1, 3)?;
        let r = params.r_or_q();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bad = 0;
        for _ in 0..200 {
            let pair = random_pair(&x, 1, &mut rng);
            let (cell, k) = if rng.random_bool(0.5) {
                (PairCell::Upper(rng.random_range(0..x.count(2))), &params.k2)
            } else {
                (PairCell::Lower(rng.random_range(0..x.count(1))), &params.k1)
            };
            let c = one_point_conditional(&params, &x, &pair, cell)?;
            let (a, b) = one_point_candidates(k, &r);
            bad += (c != a && c != b) as usize;
        }
        Ok((bad == 0, format!("{bad} of 200 off the two admissible values")))
    }));

    out.push(check("square_areas", || {
        let x = Complex::cubical_box(2, &[3, 3])?;
        let square = rect_loop(2, 2, &x, q2)?.gamma;
        let unit = Chain::from_terms(2, q2, &[(0, 1)]).boundary(&x);
        let areas = [min_area(&x, &square, q2, 1 << 20)?, min_area(&x, &unit, q2, 1 << 20)?];
        Ok((areas == [Some(4), Some(1)], format!("{areas:?}")))
    }));

    out.push(check("sampler_reproducible", || {
        let x = Complex::cubical_box(2, &[1, 1])?;
        let mut cfg = RunConfig::new(McParams::new(q2, 1, 0.5, 0.5)?, 500, 7);
        cfg.burn_in = 50;
        cfg.n_chains = 2;
        cfg.keep_series = true;
        let a = run_chain(&cfg, &x, &[Observable::StateCode])?;
        let b = run_chain(&cfg, &x, &[Observable::StateCode])?;
        Ok((a.series == b.series, "identical series for identical seeds".into()))
    }));

    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_passes() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
