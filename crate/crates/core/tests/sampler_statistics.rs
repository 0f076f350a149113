use std::collections::HashMap;

use cpp_core::complex::{Chain, Complex};
use cpp_core::gfq::Prime;
use cpp_core::homology::{v_gamma, RelPair};
use cpp_core::measures::{enumerate_rho, rational_to_f64, EnumGuard, ModelParams, RhoCensus};
use cpp_core::observables::rect_loop;
use cpp_core::sampler::{resample_spins, run_chain, sample_general_gauge, McParams, Observable, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn q(p: u32) -> Prime {
    Prime::new(p).unwrap()
}

fn plaquette_loop(x: &Complex, qq: Prime) -> Chain {
    Chain::from_terms(2, qq, &[(0, 1)]).boundary(x)
}

#[test]
fn v_event_estimate_matches_exact_probability() {
    let x = Complex::cubical_box(2, &[2, 1]).unwrap();
    for (qq, k2, k1) in [(2, 1, 1), (3, 2, 1)] {
        let params = ModelParams::from_ints(qq, 1, k2, k1).unwrap();
        let gamma = plaquette_loop(&x, q(qq));
        let census = RhoCensus::build(&x, 1, q(qq), std::slice::from_ref(&gamma), &EnumGuard::default()).unwrap();
        let exact = rational_to_f64(&census.prob(&params.k2, &params.k1, &params.r_or_q(), 1).unwrap());
        let mut cfg = RunConfig::new(McParams::from_model(&params).unwrap(), 20_000, 3);
        cfg.burn_in = 500;
        cfg.n_chains = 4;
        let obs = [Observable::VEvent(gamma.clone()), Observable::WilsonRe(gamma.clone())];
        let res = run_chain(&cfg, &x, &obs).unwrap();
        let (v, w) = (res.estimates[0], res.estimates[1]);
        assert!((v.mean - exact).abs() <= 4.0 * v.std_err, "q={qq}: {v:?} vs {exact}");
        let se = v.std_err.hypot(w.std_err);
        assert!((v.mean - w.mean).abs() <= 4.0 * se, "q={qq}: W {w:?} vs V {v:?}");
    }
}

#[test]
fn open_counts_lie_between_bernoulli_bounds() {
    let x = Complex::cubical_box(3, &[2, 2, 2]).unwrap();
    let (p2, p1) = (0.6, 0.4);
    for qq in [2u32, 3] {
        let mut cfg = RunConfig::new(McParams::new(q(qq), 1, p2, p1).unwrap(), 5_000, 8);
        cfg.burn_in = 500;
        cfg.n_chains = 4;
        let res = run_chain(&cfg, &x, &[Observable::OpenUpper, Observable::OpenLower]).unwrap();
        let qf = qq as f64;
        for (est, p, n) in [(res.estimates[0], p2, x.count(2)), (res.estimates[1], p1, x.count(1))] {
            let low = p / (qf * (1.0 - p) + p) * n as f64;
            let high = p * n as f64;
            assert!(est.mean >= low - 4.0 * est.std_err, "q={qq}: {} < {low}", est.mean);
            assert!(est.mean <= high + 4.0 * est.std_err, "q={qq}: {} > {high}", est.mean);
        }
    }
}

#[test]
fn general_gauge_residual_matches_spin_resample() {
    // f - δg must be distributed as a plain spin resample.
    let x = Complex::cubical_box(2, &[1, 1]).unwrap();
    let pair = RelPair::from_masks(&x, 1, 1, 0b0001).unwrap();
    let qq = q(3);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 27_000;
    let mut gauge: HashMap<u64, u64> = HashMap::new();
    let mut plain: HashMap<u64, u64> = HashMap::new();
    for _ in 0..n {
        let (f, g) = sample_general_gauge(&x, &pair, qq, &mut rng);
        *gauge.entry(f.sub(&g.unwrap().coboundary(&x)).code()).or_insert(0) += 1;
        *plain.entry(resample_spins(&x, &pair, qq, &mut rng).code()).or_insert(0) += 1;
    }
    let mut keys: Vec<u64> = gauge.keys().chain(plain.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    // Both are uniform on the 9 compatible cochains; two-sample chi-square.
    assert_eq!(keys.len(), 9);
    let stat: f64 = keys
        .iter()
        .map(|k| {
            let (a, b) = (*gauge.get(k).unwrap_or(&0) as f64, *plain.get(k).unwrap_or(&0) as f64);
            (a - b).powi(2) / (a + b)
        })
        .sum();
    let p = 1.0 - ChiSquared::new(8.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 = {stat}, p = {p}");
}

#[test]
fn pair_marginal_matches_rho_on_two_squares() {
    let x = Complex::cubical_box(2, &[2, 1]).unwrap();
    let params = ModelParams::from_ints(3, 1, 2, 1).unwrap();
    let rho = enumerate_rho(&params, &x, &EnumGuard::default()).unwrap();
    let mut cfg = RunConfig::new(McParams::from_model(&params).unwrap(), 40_000, 99);
    cfg.burn_in = 200;
    cfg.n_chains = 5;
    cfg.thinning = 2;
    cfg.keep_series = true;
    let res = run_chain(&cfg, &x, &[Observable::StateCode]).unwrap();
    let mut counts = vec![0f64; rho.len()];
    for chain in res.series.unwrap() {
        for v in &chain[0] {
            counts[*v as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    // Pool states with small expected counts into one bin.
    let (mut stat, mut bins, mut pool_obs, mut pool_exp) = (0.0, 0usize, 0.0, 0.0);
    for (p, c) in rho.probs_f64().iter().zip(&counts) {
        let exp = p * total;
        if exp < 5.0 {
            pool_obs += c;
            pool_exp += exp;
        } else {
            stat += (c - exp).powi(2) / exp;
            bins += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp;
        bins += 1;
    }
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 = {stat} on {} dof, p = {p}", bins - 1);
}

#[test]
fn v_events_of_halves_imply_v_event_of_loop() {
    let x = Complex::cubical_box(2, &[2, 2]).unwrap();
    for qq in [2u32, 3] {
        let fam = rect_loop(2, 2, &x, q(qq)).unwrap();
        let (n2, n1) = (x.count(2), x.count(1));
        for m2 in 0..1u64 << n2 {
            for m1 in 0..1u64 << n1 {
                let pair = RelPair::from_masks(&x, 1, m2, m1).unwrap();
                let a = v_gamma(&x, &pair, &fam.gamma_prime, q(qq)).unwrap();
                let b = v_gamma(&x, &pair, &fam.gamma_double_prime, q(qq)).unwrap();
                if a && b {
                    assert!(v_gamma(&x, &pair, &fam.gamma, q(qq)).unwrap());
                }
            }
        }
    }
}
