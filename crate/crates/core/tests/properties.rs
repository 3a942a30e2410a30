//! Algebraic invariants over random inputs.

use mimofp::classifier::rdtg;
use mimofp::impairments::{apply_device, default_profiles};
use mimofp::numerics::{kron, numerical_rank, svd, unvec, vec, CMatrix, C64, RANK_TOL};
use mimofp::rng::{complex_gaussian, seeded, substream};
use mimofp::stbc::{alamouti, encode, tarokh_g3};
use mimofp::waveform::{lltf, SAMPLE_RATE};
use proptest::prelude::*;

fn random(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = seeded(seed);
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng, 1.0))
}

fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && (a - b).max_abs() <= tol * (1.0 + a.max_abs())
}

/// Random unitary: the left singular vectors of a Gaussian matrix.
fn unitary(n: usize, seed: u64) -> CMatrix {
    svd(&random(n, n, seed)).unwrap().u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kron_mixed_product(m in 1usize..4, n in 1usize..4, p in 1usize..4, q in 1usize..4, seed in any::<u64>()) {
        let a = random(m, n, seed);
        let b = random(p, q, seed ^ 1);
        let c = random(n, 2, seed ^ 2);
        let d = random(q, 3, seed ^ 3);
        let lhs = &kron(&a, &b) * &kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn vec_of_product(m in 1usize..4, n in 1usize..4, p in 1usize..4, seed in any::<u64>()) {
        let a = random(m, n, seed);
        let x = random(n, p, seed ^ 5);
        let b = random(p, 2, seed ^ 6);
        let lhs = vec(&(&(&a * &x) * &b));
        let rhs = &kron(&b.transpose(), &a) * &vec(&x);
        prop_assert!(close(&lhs, &rhs, 1e-12));
        prop_assert_eq!(unvec(vec(&x).as_slice(), n, p).unwrap(), x);
    }

    #[test]
    fn rank_of_a_product_of_thin_factors(rows in 2usize..8, cols in 2usize..8, r in 1usize..4, seed in any::<u64>()) {
        let r = r.min(rows).min(cols);
        let a = &random(rows, r, seed) * &random(r, cols, seed ^ 9);
        prop_assert_eq!(numerical_rank(&a, RANK_TOL).unwrap(), r);
    }

    #[test]
    fn singular_values_are_unitarily_invariant(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let a = random(rows, cols, seed);
        let b = &(&unitary(rows, seed ^ 11) * &a) * &unitary(cols, seed ^ 12);
        let (sa, sb) = (svd(&a).unwrap(), svd(&b).unwrap());
        for (x, y) in sa.sigma.iter().zip(&sb.sigma) {
            prop_assert!((x - y).abs() < 1e-10 * (1.0 + sa.sigma[0]));
        }
        prop_assert!(close(&sa.reconstruct(), &a, 1e-12));
    }

    #[test]
    fn rdtg_ignores_a_common_scale(same in 1.0f64..100.0, frac in 0.0f64..1.0, k in 0.01f64..10.0) {
        let diff = same * frac;
        let base = rdtg(same, diff).unwrap();
        prop_assert!((rdtg(k * same, k * diff).unwrap() - base).abs() < 1e-9);
        prop_assert!((base - 100.0 * (1.0 - frac)).abs() < 1e-9);
    }

    #[test]
    fn encoding_is_real_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        for code in [alamouti(), tarokh_g3()] {
            let mut rng = seeded(seed);
            let s1: Vec<C64> = (0..code.n()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let s2: Vec<C64> = (0..code.n()).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let mix: Vec<C64> = s1.iter().zip(&s2).map(|(x, y)| x * a + y * b).collect();
            let lhs = encode(&code, &mix).unwrap();
            let rhs = &encode(&code, &s1).unwrap().scale(C64::new(a, 0.0))
                + &encode(&code, &s2).unwrap().scale(C64::new(b, 0.0));
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }
    }

    #[test]
    fn impairments_are_deterministic_per_seed(device in 0usize..10, seed in any::<u64>()) {
        let p = &default_profiles()[device];
        let x = lltf();
        let a = apply_device(p, &x, &mut substream(seed, &[1])).unwrap();
        let b = apply_device(p, &x, &mut substream(seed, &[1])).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.len(), x.len());
        prop_assert!(a.sample_rate == SAMPLE_RATE);
        let c = apply_device(p, &x, &mut substream(seed.wrapping_add(1), &[1])).unwrap();
        prop_assert!(a != c || p.phase_noise_dbc_hz.is_none());
    }
}
