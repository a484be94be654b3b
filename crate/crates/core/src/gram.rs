//! Malliavin (Gram) matrices of derivative vectors, the projection-residual
//! factorization of the determinant, and restricted norms.
//!
//! The factorization works on the vectors themselves via modified
//! Gram-Schmidt under the delta-weighted inner product; the assembled matrix
//! with a pivoted-elimination determinant serves as the independent oracle.

use crate::error::{HermiteError, Result};
use crate::kernels::DerivativeVector;
use crate::numeric::pairwise_dot;

/// Gram matrix entries[i][j] = sum_k v_i[k] v_j[k] delta, stored row-major.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

/// Determinant and the squared residual norms of successive projections:
/// residual_sq[0] = ||v_1||^2, residual_sq[j] = squared distance of v_{j+1}
/// to the span of the previous vectors; det is their product.
#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub det: f64,
    pub residual_sq: Vec<f64>,
}

fn check_shared_grid(vectors: &[DerivativeVector]) -> Result<()> {
    let Some(first) = vectors.first() else { return Ok(()) };
    for v in &vectors[1..] {
        if v.grid.as_ref() != first.grid.as_ref() {
            return Err(HermiteError::Shape(
                "derivative vectors live on different grids".into(),
            ));
        }
    }
    Ok(())
}

/// Assembles the Malliavin matrix; the upper triangle is computed and
/// mirrored, so symmetry is exact.
pub fn gram_matrix(vectors: &[DerivativeVector]) -> Result<GramMatrix> {
    check_shared_grid(vectors)?;
    let n = vectors.len();
    let delta = vectors.first().map_or(0.0, |v| v.grid.delta);
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = pairwise_dot(&vectors[i].values, &vectors[j].values) * delta;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, entries })
}

/// Determinant by Gaussian elimination with partial pivoting; the oracle for
/// the projection-residual factorization.
pub fn pivoted_determinant(m: &GramMatrix) -> f64 {
    let n = m.n;
    let mut a = m.entries.clone();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
        }
    }
    det
}

/// Modified Gram-Schmidt with one reorthogonalization pass under the
/// delta-weighted inner product. Derivative vectors at nearby times are
/// nearly parallel (long memory), so classical GS loses orthogonality.
///
/// Returns the orthogonal basis (unnormalized residual vectors) and their
/// squared norms. Zero residuals are legitimate outputs, never clamped.
fn mgs(vectors: &[DerivativeVector]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_shared_grid(vectors)?;
    let delta = vectors.first().map_or(0.0, |v| v.grid.delta);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    let mut norms_sq: Vec<f64> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.values.clone();
        for _pass in 0..2 {
            for (u, &nsq) in basis.iter().zip(&norms_sq) {
                if nsq == 0.0 {
                    continue;
                }
                let coef = pairwise_dot(&w, u) * delta / nsq;
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= coef * ui;
                }
            }
        }
        let nsq = pairwise_dot(&w, &w) * delta;
        basis.push(w);
        norms_sq.push(nsq);
    }
    Ok((basis, norms_sq))
}

/// Projection-residual factorization of det(Gram): det = ||v_1||^2 times the
/// product of squared residual norms.
pub fn factorize(vectors: &[DerivativeVector]) -> Result<FactorizationResult> {
    let (_, residual_sq) = mgs(vectors)?;
    let det = residual_sq.iter().product();
    Ok(FactorizationResult { det, residual_sq })
}

/// Squared distance of `target` to the span of `vectors`.
pub fn residual_norm_sq(vectors: &[DerivativeVector], target: &DerivativeVector) -> Result<f64> {
    if let Some(first) = vectors.first() {
        if first.grid.as_ref() != target.grid.as_ref() {
            return Err(HermiteError::Shape(
                "target lives on a different grid than the span".into(),
            ));
        }
    }
    let (basis, norms_sq) = mgs(vectors)?;
    let delta = target.grid.delta;
    let mut w = target.values.clone();
    for _pass in 0..2 {
        for (u, &nsq) in basis.iter().zip(&norms_sq) {
            if nsq == 0.0 {
                continue;
            }
            let coef = pairwise_dot(&w, u) * delta / nsq;
            for (wi, ui) in w.iter_mut().zip(u) {
                *wi -= coef * ui;
            }
        }
    }
    Ok(pairwise_dot(&w, &w) * delta)
}

/// Restriction of the squared norm to cells with midpoint in [a, b].
pub fn restricted_norm_sq(v: &DerivativeVector, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Err(HermiteError::Domain(format!(
            "restriction interval [{a}, {b}] is empty"
        )));
    }
    let vals: Vec<f64> = v
        .grid
        .midpoints
        .iter()
        .zip(&v.values)
        .filter(|(&m, _)| m >= a && m <= b)
        .map(|(_, &x)| x * x)
        .collect();
    if vals.is_empty() {
        return Err(HermiteError::Domain(format!(
            "no cell midpoint falls inside [{a}, {b}]"
        )));
    }
    Ok(crate::numeric::pairwise_sum(&vals) * v.grid.delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::kernels::KernelCache;
    use crate::numeric::QuadSettings;
    use crate::params::make_params;
    use crate::TimeGrid;
    use std::sync::Arc;

    fn vec_on(grid: &Arc<TimeGrid>, values: Vec<f64>) -> DerivativeVector {
        DerivativeVector { values, t: 1.0, sample_id: 0, grid: grid.clone() }
    }

    fn pseudo(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn gram_of_disjoint_supports_is_diagonal() {
        let g = Arc::new(build_grid(1.0, 1.0, 8).unwrap());
        let mut a = vec![0.0; 8];
        a[0] = 2.0;
        a[1] = 1.0;
        let mut b = vec![0.0; 8];
        b[5] = 3.0;
        let m = gram_matrix(&[vec_on(&g, a), vec_on(&g, b)]).unwrap();
        assert_eq!(m.entries[1], 0.0);
        assert_eq!(m.entries[2], 0.0);
        assert!((m.entries[0] - 5.0 * g.delta).abs() < 1e-14);
        assert!((m.entries[3] - 9.0 * g.delta).abs() < 1e-14);
    }

    #[test]
    fn gram_matches_brute_force_and_duplicate_is_singular() {
        let g = Arc::new(build_grid(1.0, 1.0, 16).unwrap());
        let mut seed = 3u64;
        let vs: Vec<DerivativeVector> = (0..3)
            .map(|_| vec_on(&g, (0..16).map(|_| pseudo(&mut seed)).collect()))
            .collect();
        let m = gram_matrix(&vs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..16 {
                    acc += vs[i].values[k] * vs[j].values[k] * g.delta;
                }
                assert!((m.entries[i * 3 + j] - acc).abs() < 1e-12);
            }
        }

        let dup = vec![vs[0].clone(), vs[1].clone(), vs[0].clone()];
        let md = gram_matrix(&dup).unwrap();
        let trace: f64 = (0..3).map(|i| md.entries[i * 3 + i]).sum();
        assert!(pivoted_determinant(&md).abs() < 1e-10 * trace.powi(3));
        assert!(factorize(&dup).unwrap().det.abs() < 1e-10 * trace.powi(3));
    }

    #[test]
    fn factorize_single_and_orthogonal() {
        let g = Arc::new(build_grid(1.0, 1.0, 8).unwrap());
        let mut a = vec![0.0; 8];
        a[0] = 2.0;
        let f = factorize(&[vec_on(&g, a.clone())]).unwrap();
        assert!((f.det - 4.0 * g.delta).abs() < 1e-14);

        let mut b = vec![0.0; 8];
        b[4] = 5.0;
        let f2 = factorize(&[vec_on(&g, a), vec_on(&g, b)]).unwrap();
        assert!((f2.residual_sq[0] - 4.0 * g.delta).abs() < 1e-14);
        assert!((f2.residual_sq[1] - 25.0 * g.delta).abs() < 1e-14);
        assert!((f2.det - 100.0 * g.delta * g.delta).abs() < 1e-12);
    }

    #[test]
    fn factorization_matches_pivoted_determinant() {
        // random families of dimension 2..6 on grids of 16..64 cells
        let mut seed = 17u64;
        for trial in 0..200 {
            let n_cells = 16 + (trial % 4) * 16;
            let dim = 2 + trial % 5;
            let g = Arc::new(build_grid(1.0, 1.0, n_cells).unwrap());
            let vs: Vec<DerivativeVector> = (0..dim)
                .map(|_| vec_on(&g, (0..n_cells).map(|_| pseudo(&mut seed)).collect()))
                .collect();
            let f = factorize(&vs).unwrap();
            let det_oracle = pivoted_determinant(&gram_matrix(&vs).unwrap());
            let scale = f.det.abs().max(det_oracle.abs()).max(1e-300);
            assert!(
                (f.det - det_oracle).abs() <= 1e-8 * scale,
                "trial {trial}: {} vs {det_oracle}",
                f.det
            );
        }
    }

    #[test]
    fn det_invariant_under_reordering() {
        let g = Arc::new(build_grid(1.0, 1.0, 32).unwrap());
        let mut seed = 9u64;
        let vs: Vec<DerivativeVector> = (0..4)
            .map(|_| vec_on(&g, (0..32).map(|_| pseudo(&mut seed)).collect()))
            .collect();
        let d1 = factorize(&vs).unwrap().det;
        let perm = vec![vs[2].clone(), vs[0].clone(), vs[3].clone(), vs[1].clone()];
        let d2 = factorize(&perm).unwrap().det;
        assert!((d1 - d2).abs() < 1e-10 * d1.abs());
    }

    #[test]
    fn residual_norm_properties() {
        let g = Arc::new(build_grid(1.0, 1.0, 16).unwrap());
        let mut seed = 5u64;
        let target = vec_on(&g, (0..16).map(|_| pseudo(&mut seed)).collect());
        // empty span
        let full = residual_norm_sq(&[], &target).unwrap();
        let nsq = pairwise_dot(&target.values, &target.values) * g.delta;
        assert!((full - nsq).abs() < 1e-14);

        // target in span
        let scaled = vec_on(&g, target.values.iter().map(|v| 3.0 * v).collect());
        let r = residual_norm_sq(&[scaled.clone()], &target).unwrap();
        assert!(r < 1e-10 * nsq);

        // span {e1}, target e1 + e2
        let mut e1 = vec![0.0; 16];
        e1[0] = 1.0;
        let mut e12 = vec![0.0; 16];
        e12[0] = 1.0;
        e12[1] = 1.0;
        let r2 = residual_norm_sq(&[vec_on(&g, e1)], &vec_on(&g, e12)).unwrap();
        assert!((r2 - g.delta).abs() < 1e-14);

        // weak monotonicity as vectors are added
        let spans: Vec<DerivativeVector> = (0..4)
            .map(|_| vec_on(&g, (0..16).map(|_| pseudo(&mut seed)).collect()))
            .collect();
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let r = residual_norm_sq(&spans[..k], &target).unwrap();
            assert!(r <= prev + 1e-12, "residual grew at k={k}");
            prev = r;
        }
    }

    #[test]
    fn restricted_norm_basics_and_kernel_oracle() {
        let g = Arc::new(build_grid(2.0, 2.0, 128).unwrap());
        let mut seed = 77u64;
        let v = vec_on(&g, (0..128).map(|_| pseudo(&mut seed)).collect());
        let full = restricted_norm_sq(&v, g.x_min, g.x_max).unwrap();
        assert!((full - pairwise_dot(&v.values, &v.values) * g.delta).abs() < 1e-12);
        let mut outside = vec![0.0; 128];
        outside[0] = 4.0; // cell midpoint near -2
        assert_eq!(restricted_norm_sq(&vec_on(&g, outside), 0.0, 1.0).unwrap(), 0.0);
        assert!(restricted_norm_sq(&v, 1.0, 0.0).is_err());

        // deterministic q=1 derivative: ||DZ_1||^2 restricted to [0,1]
        // against the quadrature of the continuum kernel section
        let p = make_params(1, 0.7).unwrap();
        let cache = KernelCache::in_memory();
        let quad = QuadSettings::default();
        let big = Arc::new(build_grid(14.0, 2.0, 512).unwrap());
        let w = crate::grid::sample_increments(&big, 0, 0);
        let d = crate::kernels::malliavin_derivative(&cache, &p, 1.0, &w, quad, &big).unwrap();
        let got = restricted_norm_sq(&d, 0.0, 1.0).unwrap();
        // continuum value of int_0^1 L_1(r)^2 dr for H = 0.7, from the
        // analytic q=1 section integrated by high-resolution quadrature
        let expect = 0.8514622702;
        assert!((got - expect).abs() < 0.01 * expect, "{got} vs {expect}");
    }
}
