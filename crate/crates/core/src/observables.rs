//! Loops, Wilson variables, perimeters and the Marcu–Fredenhagen ratio.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::complex::{Cell, Chain, Cochain, Complex, Geometry};
use crate::error::{Error, Result};
use crate::gfq::Prime;

/// Mean, standard error and sample count of a scalar estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_samples: u64,
}

impl Estimate {
    /// An exactly known value.
    pub fn exact(mean: f64) -> Self {
        Estimate {
            mean,
            std_err: 0.0,
            n_samples: 0,
        }
    }
}

/// A square loop together with its upper and lower halves.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopFamily {
    pub n: usize,
    pub gamma: Chain,
    /// Upper half, from the right midpoint to the left midpoint.
    pub gamma_prime: Chain,
    /// Lower half, from the left midpoint to the right midpoint.
    pub gamma_double_prime: Chain,
    /// Left midpoint (vertex id).
    pub x_n: usize,
    /// Right midpoint (vertex id).
    pub y_n: usize,
}

/// Lower-left corner of an `n × n` square in the first two coordinates: centred
/// in a box, at the origin of a torus.
fn square_origin(n: usize, d: usize, x: &Complex) -> Result<Vec<usize>> {
    let misfit = |reason: String| Error::DoesNotFit { n, reason };
    if n == 0 {
        return Err(misfit("loop side must be positive".into()));
    }
    if d < 2 || x.ambient_dim() != d {
        return Err(misfit(format!(
            "needs a cubical complex of dimension {d} >= 2, got {}",
            x.ambient_dim()
        )));
    }
    match x.geometry() {
        Geometry::Box { extents, .. } => {
            if extents[0] < n || extents[1] < n {
                return Err(misfit(format!(
                    "box extents {}x{} are smaller than the loop",
                    extents[0], extents[1]
                )));
            }
            Ok(extents
                .iter()
                .enumerate()
                .map(|(k, &w)| if k < 2 { (w - n) / 2 } else { w / 2 })
                .collect())
        }
        Geometry::Torus { n: period, .. } => {
            if *period <= n {
                return Err(misfit(format!("torus period {period} must exceed the loop side")));
            }
            Ok(vec![0; d])
        }
        Geometry::Explicit { .. } => Err(misfit("not a cubical complex".into())),
    }
}

/// Counterclockwise walk around the square as `(edge id, sign)`, starting
/// at the right midpoint `(n, n/2)` (rounded down) and ending there.
fn square_walk(n: usize, origin: &[usize], x: &Complex) -> Result<Vec<(usize, i64)>> {
    let edge = |a: usize, b: usize, dir: usize| {
        let mut p = origin.to_vec();
        p[0] += a;
        p[1] += b;
        x.cell_id(&Cell::new(p, vec![dir]))
    };
    let h = n / 2;
    let mut walk = Vec::with_capacity(4 * n);
    for b in h..n {
        walk.push((edge(n, b, 1)?, 1));
    }
    for a in (0..n).rev() {
        walk.push((edge(a, n, 0)?, -1));
    }
    for b in (0..n).rev() {
        walk.push((edge(0, b, 1)?, -1));
    }
    for a in 0..n {
        walk.push((edge(a, 0, 0)?, 1));
    }
    for b in 0..h {
        walk.push((edge(n, b, 1)?, 1));
    }
    Ok(walk)
}

/// The counterclockwise boundary of an `n × n` square in the first two
/// coordinates, placed as in [`rect_loop`]; any side `n >= 1`.
pub fn square_loop(n: usize, d: usize, x: &Complex, q: Prime) -> Result<Chain> {
    let origin = square_origin(n, d, x)?;
    let mut gamma = Chain::zero(1, q);
    for (e, s) in square_walk(n, &origin, x)? {
        gamma.add_term(e, s);
    }
    Ok(gamma)
}

/// The counterclockwise boundary of an `n × n` square in the first two
/// coordinates, split at the midpoints of its vertical sides.
///
/// In a box the square is centred; on a torus its lower-left corner is the
/// origin. All further coordinates are at the centre of the box (or 0).
pub fn rect_loop(n: usize, d: usize, x: &Complex, q: Prime) -> Result<LoopFamily> {
    if n % 2 != 0 {
        return Err(Error::DoesNotFit {
            n,
            reason: "loop side must be a positive even integer".into(),
        });
    }
    let origin = square_origin(n, d, x)?;
    let walk = square_walk(n, &origin, x)?;
    let mut upper = Chain::zero(1, q);
    let mut lower = Chain::zero(1, q);
    // The first 2n steps run from the right midpoint over the top to the left one.
    for (k, &(e, s)) in walk.iter().enumerate() {
        if k < 2 * n {
            upper.add_term(e, s);
        } else {
            lower.add_term(e, s);
        }
    }
    let vertex = |a: usize, b: usize| {
        let mut p = origin.clone();
        p[0] += a;
        p[1] += b;
        x.cell_id(&Cell::vertex(p))
    };
    Ok(LoopFamily {
        n,
        gamma: upper.add(&lower),
        gamma_prime: upper,
        gamma_double_prime: lower,
        x_n: vertex(0, n / 2)?,
        y_n: vertex(n, n / 2)?,
    })
}

/// `W_γ(f) = exp(2πi f(γ) / q)`.
pub fn wilson_value(f: &Cochain, gamma: &Chain) -> Complex64 {
    let q = f.modulus().get() as f64;
    let theta = std::f64::consts::TAU * f.eval(gamma) as f64 / q;
    Complex64::from_polar(1.0, theta)
}

/// Number of cells in the support of `γ`.
pub fn perimeter(gamma: &Chain) -> usize {
    gamma.support_len()
}

/// Result of [`mf_ratio`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfRatio {
    pub estimate: Estimate,
    /// The denominator is within two standard errors of zero.
    pub near_degenerate: bool,
}

/// `E(W_{γ'})² / E(W_γ)` with first-order error propagation. The numerator
/// argument is the half-loop expectation, the denominator the full loop.
pub fn mf_ratio(half: &Estimate, full: &Estimate) -> Result<MfRatio> {
    if !(full.mean > 0.0) {
        return Err(Error::DegenerateDenominator {
            mean: full.mean,
            std_err: full.std_err,
        });
    }
    let r = half.mean * half.mean / full.mean;
    let rel_half = if half.mean != 0.0 { 2.0 * half.std_err / half.mean.abs() } else { 0.0 };
    let rel_full = full.std_err / full.mean;
    let std_err = if half.mean == 0.0 {
        2.0 * half.std_err * half.std_err / full.mean
    } else {
        r.abs() * (rel_half * rel_half + rel_full * rel_full).sqrt()
    };
    Ok(MfRatio {
        estimate: Estimate {
            mean: r,
            std_err,
            n_samples: half.n_samples.min(full.n_samples),
        },
        near_degenerate: full.mean <= 2.0 * full.std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::Cochain;
    use proptest::prelude::{prop_assert, proptest};

    fn q(p: u32) -> Prime {
        Prime::new(p).unwrap()
    }

    #[test]
    fn square_loop_in_box() {
        let x = Complex::cubical_box(2, &[4, 4]).unwrap();
        let fam = rect_loop(2, 2, &x, q(3)).unwrap();
        assert_eq!(perimeter(&fam.gamma), 8);
        assert_eq!(perimeter(&fam.gamma_prime), 4);
        assert_eq!(perimeter(&fam.gamma_double_prime), 4);
        assert!(fam.gamma.boundary(&x).is_zero());
        let b = fam.gamma_prime.boundary(&x);
        let expected = Chain::from_terms(0, q(3), &[(fam.x_n, 1), (fam.y_n, -1)]);
        assert_eq!(b, expected);
        assert_eq!(x.cell(0, fam.x_n).unwrap().base, vec![1, 2]);
        assert_eq!(x.cell(0, fam.y_n).unwrap().base, vec![3, 2]);
    }

    #[test]
    fn halves_partition_the_loop() {
        for n in [2, 4, 6] {
            let x = Complex::torus(3, n + 1).unwrap();
            let fam = rect_loop(n, 3, &x, q(2)).unwrap();
            assert_eq!(perimeter(&fam.gamma), 4 * n);
            assert_eq!(perimeter(&fam.gamma_prime), 2 * n);
            assert!(fam.gamma_prime.terms().all(|(e, _)| fam.gamma_double_prime.coeff(e) == 0));
            assert!(fam.gamma.boundary(&x).is_zero());
        }
    }

    #[test]
    fn loop_orientation_is_counterclockwise() {
        let x = Complex::cubical_box(2, &[2, 2]).unwrap();
        let fam = rect_loop(2, 2, &x, q(5)).unwrap();
        // The bottom edge (0,0)->(1,0) is traversed in the +x direction.
        let e = x.cell_id(&Cell::new(vec![0, 0], vec![0])).unwrap();
        assert_eq!(fam.gamma.coeff(e), 1);
        let top = x.cell_id(&Cell::new(vec![0, 2], vec![0])).unwrap();
        assert_eq!(fam.gamma.coeff(top), 4);
    }

    #[test]
    fn loops_that_do_not_fit() {
        let x = Complex::cubical_box(2, &[3, 3]).unwrap();
        assert!(matches!(rect_loop(4, 2, &x, q(2)), Err(Error::DoesNotFit { .. })));
        assert!(matches!(rect_loop(3, 2, &x, q(2)), Err(Error::DoesNotFit { .. })));
        let t = Complex::torus(2, 2).unwrap();
        assert!(matches!(rect_loop(2, 2, &t, q(2)), Err(Error::DoesNotFit { .. })));
        assert!(matches!(
            rect_loop(2, 2, &Complex::filled_square_with_loop(), q(2)),
            Err(Error::DoesNotFit { .. })
        ));
    }

    #[test]
    fn wilson_values() {
        let x = Complex::cubical_box(2, &[1, 1]).unwrap();
        let gamma = Chain::from_terms(1, q(2), &[(0, 1)]);
        assert_eq!(wilson_value(&Cochain::zero(&x, 1, q(2)), &gamma), Complex64::new(1.0, 0.0));
        let mut f = Cochain::zero(&x, 1, q(2));
        f.set(0, 1);
        assert!((wilson_value(&f, &gamma) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        let mut f3 = Cochain::zero(&x, 1, q(3));
        f3.set(0, 1);
        let g3 = Chain::from_terms(1, q(3), &[(0, 1)]);
        let w = Complex64::from_polar(1.0, std::f64::consts::TAU / 3.0);
        assert!((wilson_value(&f3, &g3) - w).norm() < 1e-12);
    }

    #[test]
    fn odd_squares() {
        let x = Complex::cubical_box(3, &[3, 3, 3]).unwrap();
        for n in 1..=3 {
            let g = square_loop(n, 3, &x, q(3)).unwrap();
            assert_eq!(perimeter(&g), 4 * n);
            assert!(g.boundary(&x).is_zero());
        }
        let even = square_loop(2, 3, &x, q(3)).unwrap();
        assert_eq!(even, rect_loop(2, 3, &x, q(3)).unwrap().gamma);
    }

    #[test]
    fn perimeter_counts_support() {
        assert_eq!(perimeter(&Chain::zero(1, q(3))), 0);
        assert_eq!(perimeter(&Chain::from_terms(1, q(3), &[(4, 2)])), 1);
    }

    #[test]
    fn mf_ratio_cases() {
        let e = Estimate { mean: 0.5, std_err: 0.01, n_samples: 100 };
        let r = mf_ratio(&e, &Estimate { mean: 0.25, std_err: 0.01, n_samples: 100 }).unwrap();
        assert!((r.estimate.mean - 1.0).abs() < 1e-12);
        assert!(!r.near_degenerate);
        let one = mf_ratio(&Estimate::exact(1.0), &Estimate::exact(1.0)).unwrap();
        assert_eq!(one.estimate.mean, 1.0);
        assert_eq!(one.estimate.std_err, 0.0);
        assert!(matches!(
            mf_ratio(&e, &Estimate::exact(0.0)),
            Err(Error::DegenerateDenominator { .. })
        ));
        let flagged = mf_ratio(&e, &Estimate { mean: 0.01, std_err: 0.01, n_samples: 10 }).unwrap();
        assert!(flagged.near_degenerate);
    }

    proptest! {
        #[test]
        fn wilson_is_multiplicative(vals in proptest::collection::vec(0u32..5, 12),
                                    a in proptest::collection::vec(-4i64..5, 12),
                                    b in proptest::collection::vec(-4i64..5, 12)) {
            let q5 = q(5);
            let f = Cochain::from_values(1, q5, vals);
            let ga = Chain::from_terms(1, q5, &a.iter().copied().enumerate().collect::<Vec<_>>());
            let gb = Chain::from_terms(1, q5, &b.iter().copied().enumerate().collect::<Vec<_>>());
            let lhs = wilson_value(&f, &ga.add(&gb));
            let rhs = wilson_value(&f, &ga) * wilson_value(&f, &gb);
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }
}
