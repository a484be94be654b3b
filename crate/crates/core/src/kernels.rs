//! The Hermite-process kernel L_t^{H,q}: pointwise singularity-aware
//! evaluation, cell-averaged grid discretizations with a persistent cache,
//! process samples Z_t, pathwise Malliavin derivatives D_r Z_t, and the
//! analytic expected inner product of derivatives.

use crate::chaos::{multiple_integral, DiscretizedKernel, KernelData};
use crate::error::{HermiteError, Result};
use crate::grid::{TimeGrid, WienerSample};
use crate::numeric::{adaptive_quad, fnv1a, pairwise_dot, QuadSettings};
use crate::params::{a_constant, power_law_double_integral, HermiteParams};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read as _};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// Largest grid on which a dense order-3 kernel is built (n^3 quadratures).
const MAX_N_BUILD3: usize = 64;

/// One pointwise kernel evaluation task: L_t^{H,q}(xi_1..xi_q) with fixed
/// quadrature settings. Evaluation is deterministic in (params, t, quad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub params: HermiteParams,
    pub t: f64,
    pub quad: QuadSettings,
}

/// One pathwise realization of r -> D_r Z_t on the grid cells.
#[derive(Debug, Clone)]
pub struct DerivativeVector {
    pub values: Vec<f64>,
    pub t: f64,
    pub sample_id: u64,
    pub grid: Arc<TimeGrid>,
}

impl DerivativeVector {
    /// delta-weighted squared norm.
    pub fn norm_sq(&self) -> f64 {
        pairwise_dot(&self.values, &self.values) * self.grid.delta
    }
}

/// Pointwise kernel value c(H,q) int_0^t prod_j (s - xi_j)_+^{H0-3/2} ds,
/// with the sign convention -int_t^0 for t < 0.
///
/// The only singular point of the integrand inside the s-range is the largest
/// xi when it coincides with the lower limit; the substitution
/// w = (s - xi_max)^{1+mu} (mu = multiplicity * (H0-3/2)) absorbs it exactly,
/// leaving a bounded integrand. Coincident arguments can push mu to -1 or
/// below, where the integral diverges and a numeric error is returned.
pub fn kernel_value(spec: &KernelSpec, xi: &[f64]) -> Result<f64> {
    let p = &spec.params;
    if xi.len() != p.q as usize {
        return Err(HermiteError::Shape(format!(
            "kernel of order {} evaluated on {} arguments",
            p.q,
            xi.len()
        )));
    }
    let t = spec.t;
    if t == 0.0 {
        return Ok(0.0);
    }
    let alpha = p.kernel_exponent;
    let xs = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lower, upper, sign) = if t > 0.0 {
        (xs.max(0.0), t, 1.0)
    } else {
        (xs.max(t), 0.0, -1.0)
    };
    if lower >= upper {
        return Ok(0.0);
    }

    let integral = if xs < lower {
        // all xi strictly below the s-range: smooth integrand
        let xi_own = xi.to_vec();
        adaptive_quad(
            &move |s: f64| xi_own.iter().map(|&x| (s - x).powf(alpha)).product::<f64>(),
            lower,
            upper,
            spec.quad,
        )?
    } else {
        // singular at s = lower = xi_max
        let mult = xi.iter().filter(|&&x| x == xs).count();
        let mu = mult as f64 * alpha;
        let pexp = 1.0 + mu;
        if pexp <= 0.0 {
            return Err(HermiteError::Numeric(format!(
                "kernel divergent at xi with {mult}-fold coincidence (exponent {mu} <= -1)"
            )));
        }
        let others: Vec<f64> = xi.iter().cloned().filter(|&x| x != xs).collect();
        let w_max = (upper - lower).powf(pexp);
        adaptive_quad(
            &move |w: f64| {
                let s = lower + w.powf(1.0 / pexp);
                others.iter().map(|&x| (s - x).powf(alpha)).product::<f64>() / pexp
            },
            0.0,
            w_max,
            spec.quad,
        )?
    };
    Ok(sign * p.c * integral)
}

/// Signed antiderivative helper: u_+^e.
fn pow_plus(u: f64, e: f64) -> f64 {
    if u > 0.0 {
        u.powf(e)
    } else {
        0.0
    }
}

/// s-integral of the product of per-factor cell averages over [lower, upper],
/// split at every cell edge where a factor's derivative is singular.
fn cell_integrand_integral(
    corners: &[(f64, f64)],
    m: f64,
    lower: f64,
    upper: f64,
    quad: QuadSettings,
) -> Result<f64> {
    let mut cuts: Vec<f64> = vec![lower, upper];
    for &(lo, hi) in corners {
        for e in [lo, hi] {
            if e > lower && e < upper {
                cuts.push(e);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let corners = corners.to_vec();
    let f = move |s: f64| {
        corners
            .iter()
            .map(|&(lo, hi)| pow_plus(s - lo, m) - pow_plus(s - hi, m))
            .product::<f64>()
    };
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += adaptive_quad(&f, pair[0], pair[1], quad)?;
    }
    Ok(total)
}

/// Builds the cell-averaged discretization of L_t^{H,q} on the grid: entry
/// (i_1..i_q) is the average of the kernel over the cell box, i.e.
/// c / (m delta)^q * int_0^t prod_j ((s-lo_j)_+^m - (s-hi_j)_+^m) ds with
/// m = H0 - 1/2.
///
/// Cell averages (rather than midpoint values) make refinements on nested
/// grids L^2 projections, so the discrete variance increases monotonically
/// under refinement, and rows beyond t vanish exactly when t lies on a cell
/// boundary.
pub fn build_cell_kernel(
    params: &HermiteParams,
    t: f64,
    grid: &Arc<TimeGrid>,
    quad: QuadSettings,
) -> Result<DiscretizedKernel> {
    if !grid.contains(t) && t != 0.0 {
        return Err(HermiteError::Domain(format!(
            "time {t} outside the grid ({}, {})",
            grid.x_min, grid.x_max
        )));
    }
    let q = params.q as usize;
    let n = grid.n_cells;
    let m = params.h0 - 0.5;
    let scale = params.c / (m * grid.delta).powi(q as i32);
    let (lower0, upper0, sign) = if t >= 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };

    match q {
        1 => {
            // fully analytic: the s-integral of (s-a)_+^m is (s-a)_+^{m+1}/(m+1)
            let pp = |u: f64| pow_plus(u, m + 1.0) / (m + 1.0);
            let values = (0..n)
                .map(|i| {
                    let lo = grid.cell_left(i);
                    let hi = lo + grid.delta;
                    scale * ((pp(t - lo) - pp(-lo)) - (pp(t - hi) - pp(-hi)))
                })
                .collect();
            DiscretizedKernel::dense1(grid.clone(), values)
        }
        2 => {
            let mut values = vec![0.0; n * n];
            let d = grid.delta;
            let mut row_err: Option<HermiteError> = None;
            for i in 0..n {
                let lo_i = grid.cell_left(i);
                if lo_i >= upper0 {
                    continue;
                }
                for j in 0..=i {
                    let lo_j = grid.cell_left(j);
                    let lower = lower0.max(lo_j.min(lo_i));
                    let corners = [(lo_i, lo_i + d), (lo_j, lo_j + d)];
                    match cell_integrand_integral(&corners, m, lower, upper0, quad) {
                        Ok(v) => {
                            let v = sign * scale * v;
                            values[i * n + j] = v;
                            values[j * n + i] = v;
                        }
                        Err(e) => {
                            row_err = Some(e);
                        }
                    }
                }
                if row_err.is_some() {
                    break;
                }
            }
            if let Some(e) = row_err {
                return Err(e);
            }
            DiscretizedKernel::dense2(grid.clone(), values)
        }
        3 => {
            if n > MAX_N_BUILD3 {
                return Err(HermiteError::Resource(format!(
                    "dense order-3 kernel build refused for {n} cells (cap {MAX_N_BUILD3})"
                )));
            }
            let mut values = vec![0.0; n * n * n];
            let d = grid.delta;
            for i in 0..n {
                let lo_i = grid.cell_left(i);
                if lo_i >= upper0 {
                    continue;
                }
                for j in 0..=i {
                    let lo_j = grid.cell_left(j);
                    for k in 0..=j {
                        let lo_k = grid.cell_left(k);
                        let corners = [(lo_i, lo_i + d), (lo_j, lo_j + d), (lo_k, lo_k + d)];
                        let v = sign
                            * scale
                            * cell_integrand_integral(&corners, m, lower0, upper0, quad)?;
                        for (a, b, c) in
                            [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)]
                        {
                            values[(a * n + b) * n + c] = v;
                        }
                    }
                }
            }
            let mut kernel = DiscretizedKernel::dense3(grid.clone(), values)?;
            kernel.symmetric = true;
            Ok(kernel)
        }
        o => Err(HermiteError::Resource(format!(
            "kernel discretization supports order <= 3, got {o}"
        ))),
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    q: u32,
    h: u64,
    t: u64,
    x_min: u64,
    x_max: u64,
    n_cells: u64,
    tol: u64,
    max_depth: u32,
}

impl CacheKey {
    fn new(params: &HermiteParams, t: f64, grid: &TimeGrid, quad: QuadSettings) -> CacheKey {
        CacheKey {
            q: params.q,
            h: params.h.to_bits(),
            t: t.to_bits(),
            x_min: grid.x_min.to_bits(),
            x_max: grid.x_max.to_bits(),
            n_cells: grid.n_cells as u64,
            tol: quad.tol.to_bits(),
            max_depth: quad.max_depth,
        }
    }

    fn words(&self) -> [u64; 8] {
        [
            self.q as u64,
            self.h,
            self.t,
            self.x_min,
            self.x_max,
            self.n_cells,
            self.tol,
            self.max_depth as u64,
        ]
    }
}

const CACHE_MAGIC: u32 = 0x484b_524e; // "HKRN"
const CACHE_VERSION: u32 = 1;

/// Per-t kernel cache: in-memory always, plus optional binary disk
/// persistence between runs. Files carry a versioned header with the full
/// key and are invalidated on any mismatch.
pub struct KernelCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<CacheKey, Arc<DiscretizedKernel>>>,
}

impl KernelCache {
    pub fn new(dir: Option<PathBuf>) -> KernelCache {
        KernelCache { dir, mem: Mutex::new(HashMap::new()) }
    }

    /// In-memory only.
    pub fn in_memory() -> KernelCache {
        KernelCache::new(None)
    }

    pub fn get_or_build(
        &self,
        params: &HermiteParams,
        t: f64,
        grid: &Arc<TimeGrid>,
        quad: QuadSettings,
    ) -> Result<Arc<DiscretizedKernel>> {
        let key = CacheKey::new(params, t, grid, quad);
        if let Some(k) = self.mem.lock().unwrap().get(&key) {
            return Ok(k.clone());
        }
        if let Some(k) = self.try_load(&key, grid) {
            self.mem.lock().unwrap().insert(key, k.clone());
            return Ok(k);
        }
        let kernel = Arc::new(build_cell_kernel(params, t, grid, quad)?);
        self.try_store(&key, &kernel);
        self.mem.lock().unwrap().insert(key, kernel.clone());
        Ok(kernel)
    }

    fn file_path(&self, key: &CacheKey) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let mut bytes = Vec::with_capacity(64);
        for w in key.words() {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        Some(dir.join(format!("kernel-{:016x}.bin", fnv1a(&bytes))))
    }

    fn try_load(&self, key: &CacheKey, grid: &Arc<TimeGrid>) -> Option<Arc<DiscretizedKernel>> {
        let path = self.file_path(key)?;
        let file = std::fs::File::open(path).ok()?;
        let mut r = BufReader::new(file);
        if r.read_u32::<LittleEndian>().ok()? != CACHE_MAGIC {
            return None;
        }
        if r.read_u32::<LittleEndian>().ok()? != CACHE_VERSION {
            return None;
        }
        for w in key.words() {
            if r.read_u64::<LittleEndian>().ok()? != w {
                return None;
            }
        }
        let order = r.read_u32::<LittleEndian>().ok()? as usize;
        let len = r.read_u64::<LittleEndian>().ok()? as usize;
        let mut values = vec![0.0f64; len];
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf).ok()?;
        for (i, c) in buf.chunks_exact(8).enumerate() {
            values[i] = f64::from_le_bytes(c.try_into().unwrap());
        }
        let kernel = match order {
            1 => DiscretizedKernel::dense1(grid.clone(), values).ok()?,
            2 => DiscretizedKernel::dense2(grid.clone(), values).ok()?,
            3 => {
                let mut k = DiscretizedKernel::dense3(grid.clone(), values).ok()?;
                k.symmetric = true;
                k
            }
            _ => return None,
        };
        Some(Arc::new(kernel))
    }

    fn try_store(&self, key: &CacheKey, kernel: &DiscretizedKernel) {
        let Some(path) = self.file_path(key) else { return };
        let values: &[f64] = match &kernel.data {
            KernelData::Dense1(v) => v,
            KernelData::Dense2 { values, .. } => values,
            KernelData::Dense3 { values, .. } => values,
            _ => return,
        };
        let write = || -> std::io::Result<()> {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut w = BufWriter::new(std::fs::File::create(&path)?);
            w.write_u32::<LittleEndian>(CACHE_MAGIC)?;
            w.write_u32::<LittleEndian>(CACHE_VERSION)?;
            for word in key.words() {
                w.write_u64::<LittleEndian>(word)?;
            }
            w.write_u32::<LittleEndian>(kernel.order as u32)?;
            w.write_u64::<LittleEndian>(values.len() as u64)?;
            for v in values {
                w.write_f64::<LittleEndian>(*v)?;
            }
            Ok(())
        };
        // cache write failure is not an error; the kernel is still usable
        let _ = write();
    }
}

/// Samples Z_{t_k} = I_q(L_{t_k}) for each requested time on one Wiener
/// sample; kernels are cached per t and reused across samples.
pub fn hermite_process_sample(
    cache: &KernelCache,
    params: &HermiteParams,
    times: &[f64],
    sample: &WienerSample,
    quad: QuadSettings,
    grid: &Arc<TimeGrid>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t == 0.0 {
            out.push(0.0);
            continue;
        }
        if !grid.contains(t) {
            return Err(HermiteError::Domain(format!(
                "time {t} outside the grid ({}, {})",
                grid.x_min, grid.x_max
            )));
        }
        let kernel = cache.get_or_build(params, t, grid, quad)?;
        out.push(multiple_integral(&kernel, sample)?);
    }
    Ok(out)
}

/// Pathwise Malliavin derivative D_r Z_t as a grid vector: the partial
/// derivative of the off-diagonal sum with respect to the increment at cell
/// r, which discretizes q * I_{q-1}(L_t(., r)).
pub fn malliavin_derivative(
    cache: &KernelCache,
    params: &HermiteParams,
    t: f64,
    sample: &WienerSample,
    quad: QuadSettings,
    grid: &Arc<TimeGrid>,
) -> Result<DerivativeVector> {
    if t != 0.0 && !grid.contains(t) {
        return Err(HermiteError::Domain(format!(
            "time {t} outside the grid ({}, {})",
            grid.x_min, grid.x_max
        )));
    }
    let n = grid.n_cells;
    if sample.increments.len() != n {
        return Err(HermiteError::Shape(format!(
            "sample has {} increments, grid has {n} cells",
            sample.increments.len()
        )));
    }
    let values = if t == 0.0 {
        vec![0.0; n]
    } else {
        let kernel = cache.get_or_build(params, t, grid, quad)?;
        let b = &sample.increments;
        match &kernel.data {
            KernelData::Dense1(v) => v.clone(),
            KernelData::Dense2 { n, values } => (0..*n)
                .map(|i| {
                    let row = &values[i * n..(i + 1) * n];
                    2.0 * (pairwise_dot(row, b) - row[i] * b[i])
                })
                .collect(),
            KernelData::Dense3 { n, values } => (0..*n)
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..*n {
                        if j == i {
                            continue;
                        }
                        let row = &values[(i * n + j) * n..(i * n + j) * n + n];
                        let mut inner = 0.0;
                        for (k, &v) in row.iter().enumerate() {
                            if k != i && k != j {
                                inner += v * b[k];
                            }
                        }
                        acc += b[j] * inner;
                    }
                    3.0 * acc
                })
                .collect(),
            _ => {
                return Err(HermiteError::Resource(
                    "malliavin derivative requires a dense kernel".into(),
                ))
            }
        }
    };
    Ok(DerivativeVector { values, t, sample_id: sample.stream_id, grid: grid.clone() })
}

/// E<DZ_s, DZ_t> = q^2 (q-1)! a(H,q,q-1) int_0^s int_0^t |u-v|^{2(H-1)},
/// the scalar r = q-1 term of the product formula; equals q R_fBm(s,t).
pub fn expected_derivative_inner(params: &HermiteParams, s: f64, t: f64) -> Result<f64> {
    let a = a_constant(params, params.q - 1)?;
    let pl = power_law_double_integral(s, t, 2.0 * (params.h - 1.0))?;
    let qf = params.q as f64;
    let fact_qm1: f64 = (1..params.q as u64).map(|k| k as f64).product();
    Ok(qf * qf * fact_qm1 * a * pl)
}
