//! Hermite polynomials, discretized multiple Wiener-Itô integrals
//! (off-diagonal sums), contractions, symmetrization, the product formula,
//! and Monte Carlo isometry verification.
//!
//! The discrete multiple integral of order q is the off-diagonal Riemann sum
//! over index tuples with all indices distinct. This matches the defining
//! property of multiple integrals (vanishing on diagonals) and makes
//! E[I_q] = 0 exact at any grid size.

use crate::error::{HermiteError, Result};
use crate::grid::{TimeGrid, WienerSample};
use crate::numeric::{pairwise_dot, pairwise_sum};
use rayon::prelude::*;
use std::sync::Arc;

/// Default cap on the order of multiple integrals.
pub const Q_MAX_DEFAULT: usize = 3;

/// Largest grid for direct order-3 loops (dense or lazy).
const MAX_N_ORDER3: usize = 192;
/// Largest grid for direct order-4 loops.
const MAX_N_ORDER4: usize = 32;

/// Storage/evaluation strategy for a kernel of q grid variables. Kernels are
/// lazy index-tuple functions where dense storage would explode (an order-3
/// kernel on 512 cells would need 512^3 entries); dense caching is used for
/// order <= 2, and symmetrized elementary tensors keep a factored form that
/// admits O(n) off-diagonal sums at any order.
#[derive(Clone)]
pub enum KernelData {
    /// Order-0 kernel (a constant); the multiple integral is the constant.
    Scalar(f64),
    /// Order-1 kernel by cell values.
    Dense1(Vec<f64>),
    /// Order-2 kernel, row-major n x n cell values.
    Dense2 { n: usize, values: Vec<f64> },
    /// Order-3 kernel, row-major n^3 cell values; only for small grids.
    Dense3 { n: usize, values: Vec<f64> },
    /// coeff * symmetrization of factors[0] x ... x factors[q-1].
    Product { coeff: f64, factors: Vec<Vec<f64>> },
    /// Arbitrary index-tuple function.
    Lazy {
        order: usize,
        eval: Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>,
    },
}

/// A symmetric (or to-be-symmetrized) function of `order` grid variables.
#[derive(Clone)]
pub struct DiscretizedKernel {
    pub order: usize,
    pub grid: Arc<TimeGrid>,
    pub data: KernelData,
    pub symmetric: bool,
}

impl DiscretizedKernel {
    pub fn dense1(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(HermiteError::Shape(format!(
                "order-1 kernel has {} values on a grid of {} cells",
                values.len(),
                grid.n_cells
            )));
        }
        Ok(DiscretizedKernel { order: 1, grid, data: KernelData::Dense1(values), symmetric: true })
    }

    pub fn dense2(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        let n = grid.n_cells;
        if values.len() != n * n {
            return Err(HermiteError::Shape(format!(
                "order-2 kernel has {} values, expected {}",
                values.len(),
                n * n
            )));
        }
        let symmetric = (0..n).all(|i| (0..i).all(|j| values[i * n + j] == values[j * n + i]));
        Ok(DiscretizedKernel { order: 2, grid, data: KernelData::Dense2 { n, values }, symmetric })
    }

    pub fn dense3(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        let n = grid.n_cells;
        if n > MAX_N_ORDER3 {
            return Err(HermiteError::Resource(format!(
                "dense order-3 storage refused for {n} cells (cap {MAX_N_ORDER3})"
            )));
        }
        if values.len() != n * n * n {
            return Err(HermiteError::Shape(format!(
                "order-3 kernel has {} values, expected {}",
                values.len(),
                n * n * n
            )));
        }
        Ok(DiscretizedKernel {
            order: 3,
            grid,
            data: KernelData::Dense3 { n, values },
            symmetric: false,
        })
    }

    /// coeff times the symmetrized elementary tensor of the given factors.
    pub fn product(grid: Arc<TimeGrid>, coeff: f64, factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Ok(DiscretizedKernel {
                order: 0,
                grid,
                data: KernelData::Scalar(coeff),
                symmetric: true,
            });
        }
        for f in &factors {
            if f.len() != grid.n_cells {
                return Err(HermiteError::Shape(format!(
                    "product factor has {} values on a grid of {} cells",
                    f.len(),
                    grid.n_cells
                )));
            }
        }
        let order = factors.len();
        Ok(DiscretizedKernel {
            order,
            grid,
            data: KernelData::Product { coeff, factors },
            symmetric: true,
        })
    }

    pub fn lazy(
        grid: Arc<TimeGrid>,
        order: usize,
        symmetric: bool,
        eval: Arc<dyn Fn(&[usize]) -> f64 + Send + Sync>,
    ) -> Self {
        DiscretizedKernel { order, grid, data: KernelData::Lazy { order, eval }, symmetric }
    }

    /// Value at one index tuple (length must equal the order).
    pub fn eval(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.order);
        match &self.data {
            KernelData::Scalar(c) => *c,
            KernelData::Dense1(v) => v[idx[0]],
            KernelData::Dense2 { n, values } => values[idx[0] * n + idx[1]],
            KernelData::Dense3 { n, values } => values[(idx[0] * n + idx[1]) * n + idx[2]],
            KernelData::Product { coeff, factors } => {
                // average over factor-to-slot assignments
                let q = factors.len();
                let mut perm: Vec<usize> = (0..q).collect();
                let mut acc = 0.0;
                let mut count = 0.0;
                loop {
                    let mut term = 1.0;
                    for (slot, &f) in perm.iter().enumerate() {
                        term *= factors[f][idx[slot]];
                    }
                    acc += term;
                    count += 1.0;
                    if !next_permutation(&mut perm) {
                        break;
                    }
                }
                coeff * acc / count
            }
            KernelData::Lazy { eval, .. } => eval(idx),
        }
    }
}

/// Lexicographic next-permutation; false once the last permutation is reached.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Probabilists' Hermite polynomial H_q(x) via the recursion
/// H_0 = 1, H_1 = x, H_{q+1} = x H_q - q H_{q-1}.
pub fn hermite_poly(q: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if q == 0 {
        return p0;
    }
    for k in 1..q {
        let p2 = x * p1 - k as f64 * p0;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// All set partitions of {0, .., n-1}, as lists of blocks.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for mut p in set_partitions(n - 1) {
        for b in 0..p.len() {
            let mut q = p.clone();
            q[b].push(n - 1);
            out.push(q);
        }
        p.push(vec![n - 1]);
        out.push(p);
    }
    out
}

/// Off-diagonal sum over distinct index tuples of prod_j x_j[i_j], by the
/// set-partition inclusion-exclusion: sum over partitions pi of
/// prod_blocks (-1)^{|B|-1} (|B|-1)! * sum_i prod_{j in B} x_j[i].
fn offdiag_product_sum(xs: &[Vec<f64>]) -> f64 {
    let q = xs.len();
    let n = xs[0].len();
    let mut total = 0.0;
    for partition in set_partitions(q) {
        let mut weight = 1.0;
        let mut term = 1.0;
        for block in &partition {
            let len = block.len();
            weight *= if len % 2 == 0 { -1.0 } else { 1.0 } * fact(len - 1);
            let vals: Vec<f64> = (0..n)
                .map(|i| block.iter().map(|&j| xs[j][i]).product())
                .collect();
            term *= pairwise_sum(&vals);
        }
        total += weight * term;
    }
    total
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binom(n: usize, k: usize) -> f64 {
    fact(n) / (fact(k) * fact(n - k))
}

/// Discrete multiple Wiener-Itô integral: the sum over index tuples with all
/// indices distinct of f(i_1,..,i_q) * dB_{i_1} ... dB_{i_q}, with the default
/// order cap.
pub fn multiple_integral(f: &DiscretizedKernel, sample: &WienerSample) -> Result<f64> {
    multiple_integral_with_qmax(f, sample, Q_MAX_DEFAULT)
}

/// As `multiple_integral` with an explicit order cap (the product formula
/// needs intermediate orders up to p + q).
pub fn multiple_integral_with_qmax(
    f: &DiscretizedKernel,
    sample: &WienerSample,
    q_max: usize,
) -> Result<f64> {
    if f.order > q_max {
        return Err(HermiteError::Resource(format!(
            "multiple integral of order {} exceeds the cap {q_max}",
            f.order
        )));
    }
    let b = &sample.increments;
    if b.len() != f.grid.n_cells {
        return Err(HermiteError::Shape(format!(
            "sample has {} increments, kernel grid has {} cells",
            b.len(),
            f.grid.n_cells
        )));
    }
    let n = b.len();
    match &f.data {
        KernelData::Scalar(c) => Ok(*c),
        KernelData::Dense1(v) => Ok(pairwise_dot(v, b)),
        KernelData::Dense2 { n, values } => {
            // sum_{i != j} K_ij b_i b_j = sum_i b_i (K b)_i - sum_i K_ii b_i^2
            let terms: Vec<f64> = (0..*n)
                .map(|i| {
                    let row = &values[i * n..(i + 1) * n];
                    b[i] * (pairwise_dot(row, b) - row[i] * b[i])
                })
                .collect();
            Ok(pairwise_sum(&terms))
        }
        KernelData::Dense3 { n, values } => {
            let terms: Vec<f64> = (0..*n)
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..*n {
                        if j == i {
                            continue;
                        }
                        let bij = b[i] * b[j];
                        let row = &values[(i * n + j) * n..(i * n + j) * n + n];
                        let mut inner = 0.0;
                        for (k, &v) in row.iter().enumerate() {
                            if k != i && k != j {
                                inner += v * b[k];
                            }
                        }
                        acc += bij * inner;
                    }
                    acc
                })
                .collect();
            Ok(pairwise_sum(&terms))
        }
        KernelData::Product { coeff, factors } => {
            // off-diagonal sums are invariant under permuting the factors, so
            // the symmetrization average collapses to the plain product
            let xs: Vec<Vec<f64>> = factors
                .iter()
                .map(|a| a.iter().zip(b).map(|(x, y)| x * y).collect())
                .collect();
            Ok(coeff * offdiag_product_sum(&xs))
        }
        KernelData::Lazy { order, eval } => {
            match order {
                0 => Ok(eval(&[])),
                1 => {
                    let vals: Vec<f64> = (0..n).map(|i| eval(&[i]) * b[i]).collect();
                    Ok(pairwise_sum(&vals))
                }
                2 => {
                    let terms: Vec<f64> = (0..n)
                        .map(|i| {
                            let mut acc = 0.0;
                            for j in 0..n {
                                if j != i {
                                    acc += eval(&[i, j]) * b[j];
                                }
                            }
                            acc * b[i]
                        })
                        .collect();
                    Ok(pairwise_sum(&terms))
                }
                3 => {
                    if n > MAX_N_ORDER3 {
                        return Err(HermiteError::Resource(format!(
                            "lazy order-3 integral refused for {n} cells (cap {MAX_N_ORDER3})"
                        )));
                    }
                    let terms: Vec<f64> = (0..n)
                        .map(|i| {
                            let mut acc = 0.0;
                            for j in 0..n {
                                if j == i {
                                    continue;
                                }
                                for k in 0..n {
                                    if k != i && k != j {
                                        acc += eval(&[i, j, k]) * b[j] * b[k];
                                    }
                                }
                            }
                            acc * b[i]
                        })
                        .collect();
                    Ok(pairwise_sum(&terms))
                }
                4 => {
                    if n > MAX_N_ORDER4 {
                        return Err(HermiteError::Resource(format!(
                            "lazy order-4 integral refused for {n} cells (cap {MAX_N_ORDER4})"
                        )));
                    }
                    let terms: Vec<f64> = (0..n)
                        .map(|i| {
                            let mut acc = 0.0;
                            for j in 0..n {
                                if j == i {
                                    continue;
                                }
                                for k in 0..n {
                                    if k == i || k == j {
                                        continue;
                                    }
                                    for l in 0..n {
                                        if l != i && l != j && l != k {
                                            acc += eval(&[i, j, k, l]) * b[j] * b[k] * b[l];
                                        }
                                    }
                                }
                            }
                            acc * b[i]
                        })
                        .collect();
                    Ok(pairwise_sum(&terms))
                }
                o => Err(HermiteError::Resource(format!(
                    "lazy multiple integrals support order <= 4, got {o}"
                ))),
            }
        }
    }
}

/// r-contraction f (x)_r g: partial summation over r shared indices weighted
/// by delta^r; r = 0 is the tensor product. The shared indices range over the
/// whole grid (diagonals included), matching the continuum integral.
pub fn contraction(
    f: &DiscretizedKernel,
    g: &DiscretizedKernel,
    r: usize,
) -> Result<DiscretizedKernel> {
    let (p, q) = (f.order, g.order);
    if r > p.min(q) {
        return Err(HermiteError::Domain(format!(
            "contraction index r={r} exceeds min(p,q)=min({p},{q})"
        )));
    }
    if !Arc::ptr_eq(&f.grid, &g.grid) && f.grid.as_ref() != g.grid.as_ref() {
        return Err(HermiteError::Shape("contraction across different grids".into()));
    }
    let grid = f.grid.clone();
    let delta = grid.delta;
    let n = grid.n_cells;
    let out_order = p + q - 2 * r;

    // fully dense/vector specializations first
    match (&f.data, &g.data, r) {
        (KernelData::Dense1(a), KernelData::Dense1(b), 1) => {
            let s = pairwise_dot(a, b) * delta;
            return Ok(DiscretizedKernel { order: 0, grid, data: KernelData::Scalar(s), symmetric: true });
        }
        (KernelData::Dense1(a), KernelData::Dense1(b), 0) => {
            let mut values = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    values[i * n + j] = a[i] * b[j];
                }
            }
            return DiscretizedKernel::dense2(grid, values);
        }
        (KernelData::Dense2 { n, values }, KernelData::Dense1(b), 1) => {
            let out = (0..*n)
                .map(|i| pairwise_dot(&values[i * n..(i + 1) * n], b) * delta)
                .collect();
            return DiscretizedKernel::dense1(grid, out);
        }
        (KernelData::Dense1(a), KernelData::Dense2 { n, values }, 1) => {
            let out = (0..*n)
                .map(|j| (0..*n).map(|i| a[i] * values[i * n + j]).sum::<f64>() * delta)
                .collect();
            return DiscretizedKernel::dense1(grid, out);
        }
        (KernelData::Dense2 { n, values: fa }, KernelData::Dense2 { values: ga, .. }, 1) => {
            // delta-scaled matrix product
            let mut out = vec![0.0; n * n];
            for i in 0..*n {
                for j in 0..*n {
                    let mut acc = 0.0;
                    for k in 0..*n {
                        acc += fa[i * n + k] * ga[k * n + j];
                    }
                    out[i * n + j] = acc * delta;
                }
            }
            return DiscretizedKernel::dense2(grid, out);
        }
        (KernelData::Dense2 { n, values: fa }, KernelData::Dense2 { values: ga, .. }, 2) => {
            let vals: Vec<f64> = (0..n * n).map(|i| fa[i] * ga[i]).collect();
            let s = pairwise_sum(&vals) * delta * delta;
            return Ok(DiscretizedKernel { order: 0, grid, data: KernelData::Scalar(s), symmetric: true });
        }
        _ => {}
    }

    // lazy fallback; summation cost n^r per evaluation, so keep r small
    if r > 2 {
        return Err(HermiteError::Resource(format!(
            "lazy contraction supports r <= 2, got r={r}"
        )));
    }
    let fc = f.clone();
    let gc = g.clone();
    let eval = Arc::new(move |idx: &[usize]| -> f64 {
        let (fi, gi) = idx.split_at(fc.order - r);
        let mut fidx = fi.to_vec();
        let mut gidx = gi.to_vec();
        fidx.resize(fc.order, 0);
        gidx.resize(gc.order, 0);
        match r {
            0 => fc.eval(&fidx) * gc.eval(&gidx),
            1 => {
                let mut acc = 0.0;
                for s in 0..n {
                    fidx[fc.order - 1] = s;
                    gidx[gc.order - 1] = s;
                    acc += fc.eval(&fidx) * gc.eval(&gidx);
                }
                acc * delta
            }
            _ => {
                let mut acc = 0.0;
                for s1 in 0..n {
                    for s2 in 0..n {
                        fidx[fc.order - 2] = s1;
                        fidx[fc.order - 1] = s2;
                        gidx[gc.order - 2] = s1;
                        gidx[gc.order - 1] = s2;
                        acc += fc.eval(&fidx) * gc.eval(&gidx);
                    }
                }
                acc * delta * delta
            }
        }
    });
    Ok(DiscretizedKernel::lazy(grid, out_order, false, eval))
}

/// Symmetrization: the average of eval over all index permutations.
pub fn symmetrize(f: &DiscretizedKernel) -> Result<DiscretizedKernel> {
    if f.order > 4 {
        return Err(HermiteError::Resource(format!(
            "symmetrization costs order! per evaluation; order {} refused",
            f.order
        )));
    }
    if f.symmetric || f.order <= 1 {
        let mut out = f.clone();
        out.symmetric = true;
        return Ok(out);
    }
    match &f.data {
        KernelData::Dense2 { n, values } => {
            let mut out = values.clone();
            for i in 0..*n {
                for j in 0..i {
                    let m = 0.5 * (values[i * n + j] + values[j * n + i]);
                    out[i * n + j] = m;
                    out[j * n + i] = m;
                }
            }
            DiscretizedKernel::dense2(f.grid.clone(), out)
        }
        _ => {
            let fc = f.clone();
            let order = f.order;
            let eval = Arc::new(move |idx: &[usize]| -> f64 {
                let mut perm: Vec<usize> = (0..order).collect();
                let mut acc = 0.0;
                let mut count = 0.0;
                loop {
                    let permuted: Vec<usize> = perm.iter().map(|&k| idx[k]).collect();
                    acc += fc.eval(&permuted);
                    count += 1.0;
                    if !next_permutation(&mut perm) {
                        break;
                    }
                }
                acc / count
            });
            Ok(DiscretizedKernel::lazy(f.grid.clone(), order, true, eval))
        }
    }
}

/// The exact second moment E[I_p(f) I_q(g)] of the discrete off-diagonal
/// sums: 0 for p != q, and p! * sum over distinct tuples of the symmetrized
/// kernels times delta^p otherwise.
pub fn isometry_target(f: &DiscretizedKernel, g: &DiscretizedKernel) -> Result<f64> {
    if f.order != g.order {
        return Ok(0.0);
    }
    let p = f.order;
    let fs = symmetrize(f)?;
    let gs = symmetrize(g)?;
    let n = f.grid.n_cells;
    let dp = f.grid.delta.powi(p as i32);
    let raw = match p {
        0 => fs.eval(&[]) * gs.eval(&[]),
        1 => {
            let vals: Vec<f64> = (0..n).map(|i| fs.eval(&[i]) * gs.eval(&[i])).collect();
            pairwise_sum(&vals)
        }
        2 => {
            let terms: Vec<f64> = (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..n {
                        if j != i {
                            acc += fs.eval(&[i, j]) * gs.eval(&[i, j]);
                        }
                    }
                    acc
                })
                .collect();
            pairwise_sum(&terms)
        }
        3 => {
            if n > MAX_N_ORDER3 {
                return Err(HermiteError::Resource(format!(
                    "order-3 isometry target refused for {n} cells (cap {MAX_N_ORDER3})"
                )));
            }
            let terms: Vec<f64> = (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        for k in 0..n {
                            if k != i && k != j {
                                acc += fs.eval(&[i, j, k]) * gs.eval(&[i, j, k]);
                            }
                        }
                    }
                    acc
                })
                .collect();
            pairwise_sum(&terms)
        }
        o => {
            return Err(HermiteError::Resource(format!(
                "isometry target supports order <= 3, got {o}"
            )))
        }
    };
    Ok(fact(p) * raw * dp)
}

/// Monte Carlo isometry report: estimate of E[I_p(f) I_q(g)] vs its exact
/// discrete target.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IsometryReport {
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub n_samples: usize,
    pub pass: bool,
}

/// Mean and standard error of a sample vector, with deterministic summation.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let devs: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&devs) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Streams `0..n_samples` of the given seed, evaluated in parallel; the
/// returned vector is ordered by stream, so reductions are reproducible at
/// any thread count.
pub fn sample_map<T: Send>(
    grid: &Arc<TimeGrid>,
    seed: u64,
    n_samples: usize,
    f: impl Fn(&WienerSample) -> T + Sync,
) -> Vec<T> {
    (0..n_samples as u64)
        .into_par_iter()
        .map(|stream| {
            let w = crate::grid::sample_increments(grid, seed, stream);
            f(&w)
        })
        .collect()
}

/// MC check of the isometry E[I_p(f) I_q(g)] = p! <f~, g~> (p = q) or 0.
pub fn isometry_check(
    f: &DiscretizedKernel,
    g: &DiscretizedKernel,
    n_samples: usize,
    seed: u64,
) -> Result<IsometryReport> {
    let target = isometry_target(f, g)?;
    let products: Vec<f64> = sample_map(&f.grid, seed, n_samples, |w| {
        let a = multiple_integral_with_qmax(f, w, 4).expect("validated order");
        let b = multiple_integral_with_qmax(g, w, 4).expect("validated order");
        a * b
    });
    let (estimate, std_error) = mean_and_se(&products);
    let pass = (estimate - target).abs() <= 3.0 * std_error;
    Ok(IsometryReport { estimate, std_error, target, n_samples, pass })
}

/// Per-sample mean-square discrepancy of the product formula
/// I_p(f) I_q(g) = sum_r r! C(p,r) C(q,r) I_{p+q-2r}(sym(f (x)_r g)).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProductFormulaReport {
    pub mean_square_gap: f64,
    pub mean_square_lhs: f64,
    pub n_samples: usize,
}

/// Factors of a symmetrized elementary tensor, treating Dense1 as a
/// one-factor product.
fn product_form(k: &DiscretizedKernel) -> Option<(f64, Vec<Vec<f64>>)> {
    match &k.data {
        KernelData::Dense1(v) => Some((1.0, vec![v.clone()])),
        KernelData::Product { coeff, factors } => Some((*coeff, factors.clone())),
        _ => None,
    }
}

/// sym(f (x)_r g) with closed forms for symmetrized elementary tensors, so
/// the product formula stays O(n) per sample on large grids.
fn symmetrized_contraction(
    f: &DiscretizedKernel,
    g: &DiscretizedKernel,
    r: usize,
) -> Result<DiscretizedKernel> {
    if let (Some((cf, ff)), Some((cg, gf))) = (product_form(f), product_form(g)) {
        let grid = f.grid.clone();
        let delta = grid.delta;
        if r == 0 {
            // sym of a product of symmetrized tensors is the symmetrized
            // tensor over the pooled factors
            let mut factors = ff;
            factors.extend(gf);
            return DiscretizedKernel::product(grid, cf * cg, factors);
        }
        if f.order == 1 && g.order == 2 && r == 1 {
            // (a (x)_1 sym(u (x) v))(j) = c/2 (u_j <v,a> + v_j <u,a>) delta
            let a = &ff[0];
            let (u, v) = (&gf[0], &gf[1]);
            let va = pairwise_dot(v, a) * delta;
            let ua = pairwise_dot(u, a) * delta;
            let out: Vec<f64> = u
                .iter()
                .zip(v)
                .map(|(ui, vi)| 0.5 * cf * cg * (ui * va + vi * ua))
                .collect();
            return DiscretizedKernel::dense1(grid, out);
        }
        if g.order == 1 && f.order == 2 && r == 1 {
            return symmetrized_contraction(g, f, r);
        }
    }
    symmetrize(&contraction(f, g, r)?)
}

pub fn product_formula_check(
    f: &DiscretizedKernel,
    g: &DiscretizedKernel,
    n_samples: usize,
    seed: u64,
) -> Result<ProductFormulaReport> {
    let (p, q) = (f.order, g.order);
    if p + q > 4 {
        return Err(HermiteError::Resource(format!(
            "product formula check requires p + q <= 4, got {p} + {q}"
        )));
    }
    let mut terms: Vec<(f64, DiscretizedKernel)> = Vec::new();
    for r in 0..=p.min(q) {
        let coeff = fact(r) * binom(p, r) * binom(q, r);
        let k = symmetrized_contraction(f, g, r)?;
        terms.push((coeff, k));
    }
    let gaps: Vec<(f64, f64)> = sample_map(&f.grid, seed, n_samples, |w| {
        let lhs = multiple_integral_with_qmax(f, w, 4).expect("validated order")
            * multiple_integral_with_qmax(g, w, 4).expect("validated order");
        let mut rhs = 0.0;
        for (c, k) in &terms {
            rhs += c * multiple_integral_with_qmax(k, w, 4).expect("validated order");
        }
        (lhs, lhs - rhs)
    });
    let sq_gap: Vec<f64> = gaps.iter().map(|(_, d)| d * d).collect();
    let sq_lhs: Vec<f64> = gaps.iter().map(|(l, _)| l * l).collect();
    Ok(ProductFormulaReport {
        mean_square_gap: pairwise_sum(&sq_gap) / n_samples as f64,
        mean_square_lhs: pairwise_sum(&sq_lhs) / n_samples as f64,
        n_samples,
    })
}
