//! Property-based invariants over randomized inputs: symmetries and
//! closed-form identities that must hold for every admissible parameter.

use hermite_core::chaos::{multiple_integral, DiscretizedKernel};
use hermite_core::gram::{factorize, gram_matrix, pivoted_determinant};
use hermite_core::numeric::{adaptive_quad, QuadSettings};
use hermite_core::{
    beta, build_grid, make_params, power_law_double_integral, sample_increments, DerivativeVector,
};
use proptest::prelude::*;
use std::sync::Arc;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn beta_is_symmetric(a in 0.05f64..4.0, b in 0.05f64..4.0) {
        let x = beta(a, b).unwrap();
        let y = beta(b, a).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
    }

    #[test]
    fn power_law_closed_form_matches_quadrature(
        s in 0.1f64..2.0,
        t in 0.1f64..2.0,
        lambda in -0.95f64..-0.05,
    ) {
        let closed = power_law_double_integral(s, t, lambda).unwrap();
        // integrate the inner variable analytically, the outer numerically
        let inner = |u: f64| {
            (u.powf(lambda + 1.0) + (t - u).abs().powf(lambda + 1.0)
                - ((u - t).max(0.0)).powf(lambda + 1.0) * 2.0)
                / (lambda + 1.0)
        };
        let numeric = adaptive_quad(&inner, 0.0, s, QuadSettings::default()).unwrap();
        prop_assert!(
            (closed - numeric).abs() <= 1e-6 * closed.abs().max(1.0),
            "closed {closed} vs numeric {numeric}"
        );
    }

    #[test]
    fn normalizing_constant_positive_and_finite(q in 1u32..4, h in 0.51f64..0.99) {
        let p = make_params(q, h).unwrap();
        prop_assert!(p.c.is_finite() && p.c > 0.0);
        prop_assert!(p.h0 > 0.5 && p.h0 < 1.0);
    }

    #[test]
    fn multiple_integral_is_linear_in_the_kernel(
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let grid = Arc::new(build_grid(1.0, 1.0, 24).unwrap());
        let n = grid.n_cells;
        let mut vals_f = vec![0.0; n * n];
        let mut vals_g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                vals_f[i * n + j] = ((i * 7 + j * 3 + seed as usize) % 11) as f64 - 5.0;
                vals_g[i * n + j] = ((i * 5 + j * 13 + seed as usize) % 7) as f64 - 3.0;
            }
        }
        let combo: Vec<f64> =
            vals_f.iter().zip(&vals_g).map(|(x, y)| a * x + b * y).collect();
        let kf = DiscretizedKernel::dense2(grid.clone(), vals_f).unwrap();
        let kg = DiscretizedKernel::dense2(grid.clone(), vals_g).unwrap();
        let kc = DiscretizedKernel::dense2(grid.clone(), combo).unwrap();
        let w = sample_increments(&grid, 99, seed);
        let lhs = multiple_integral(&kc, &w).unwrap();
        let rhs = a * multiple_integral(&kf, &w).unwrap() + b * multiple_integral(&kg, &w).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn gram_det_invariant_under_reordering(
        seed in 0u64..500,
        n_vecs in 2usize..5,
    ) {
        use rand::{RngCore, SeedableRng};
        let grid = Arc::new(build_grid(1.0, 1.0, 16).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<DerivativeVector> = (0..n_vecs)
            .map(|k| DerivativeVector {
                values: (0..16)
                    .map(|_| rng.next_u32() as f64 / u32::MAX as f64 * 2.0 - 1.0)
                    .collect(),
                t: k as f64 + 1.0,
                sample_id: seed,
                grid: grid.clone(),
            })
            .collect();
        // near-singular families lose relative det accuracy to cancellation;
        // allow an absolute floor at rounding scale of the norm product
        let floor = 1e-12 * vectors.iter().map(|v| v.norm_sq()).product::<f64>();
        let det = factorize(&vectors).unwrap().det;
        let mut reversed = vectors.clone();
        reversed.reverse();
        let det_rev = factorize(&reversed).unwrap().det;
        prop_assert!(
            (det - det_rev).abs() <= 1e-8 * det.abs().max(det_rev.abs()) + floor,
            "det {det} vs reversed {det_rev}"
        );
        let oracle = pivoted_determinant(&gram_matrix(&vectors).unwrap());
        prop_assert!(
            (det - oracle).abs() <= 1e-8 * det.abs().max(oracle.abs()) + floor,
            "det {det} vs oracle {oracle}"
        );
    }
}
