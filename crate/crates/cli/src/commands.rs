//! One function per subcommand. Each builds its experiment from the resolved
//! config, writes `<name>.csv` + `<name>_summary.json`, and returns the
//! overall verdict.

use crate::config::ExperimentConfig;
use crate::output::{fmt_num, persist, CsvTable, ResultManifest};
use hermite_core::chaos::{
    isometry_check, isometry_target, product_formula_check, DiscretizedKernel,
};
use hermite_core::experiments::{
    covariance_validation, det_positivity_experiment, gaussian_oracle, malliavin_selfsim_test,
    pathwise_residual_inequality, self_similarity_test, slnd_dominance_test,
    stationary_increments_test, ExperimentContext,
};
use hermite_core::gram::factorize;
use hermite_core::{build_grid, make_params, HermiteError, KernelCache, Result, TimeGrid};
use serde::Serialize;
use serde_json::json;
use std::path::Path;
use std::sync::Arc;

pub struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out_dir: &'a Path,
}

impl Run<'_> {
    fn grid(&self) -> Result<Arc<TimeGrid>> {
        Ok(Arc::new(build_grid(self.cfg.grid_m, self.cfg.x_max, self.cfg.n_cells)?))
    }

    fn context<'a>(&self, cache: &'a KernelCache) -> Result<ExperimentContext<'a>> {
        Ok(ExperimentContext {
            cache,
            params: make_params(self.cfg.q, self.cfg.h)?,
            grid: self.grid()?,
            quad: self.cfg.quad,
            seed: self.cfg.seed,
        })
    }

    fn cache(&self) -> KernelCache {
        KernelCache::new(self.cfg.cache_dir.clone())
    }

    fn check_times(&self, grid: &TimeGrid, times: &[f64]) -> Result<()> {
        for &t in times {
            if t != 0.0 && !grid.contains(t) {
                return Err(HermiteError::Config(format!(
                    "key `times`: t={t} outside the grid ({}, {}]",
                    grid.x_min, grid.x_max
                )));
            }
        }
        Ok(())
    }

    fn finish<T: Serialize>(
        &self,
        name: &str,
        table: &CsvTable,
        stream_ranges: Vec<[u64; 2]>,
        pass: bool,
        results: T,
    ) -> Result<bool> {
        let manifest = ResultManifest::new(name, self.cfg, stream_ranges, pass);
        persist(self.out_dir, name, table, manifest, results)?;
        Ok(pass)
    }

    pub fn simulate(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        self.check_times(&ctx.grid, &self.cfg.times)?;
        let n = self.cfg.n_samples;
        let z = ctx.z_samples(&self.cfg.times, 0, n)?;
        let mut cols = vec!["sample_id".to_string()];
        cols.extend(self.cfg.times.iter().map(|t| format!("z_t{t}")));
        let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut table = CsvTable::new(&col_refs);
        for (s, row) in z.iter().enumerate() {
            let mut out = vec![s.to_string()];
            out.extend(row.iter().map(|v| fmt_num(*v)));
            table.push(out);
        }
        let per_time: Vec<_> = self
            .cfg
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let vals: Vec<f64> = z.iter().map(|row| row[i]).collect();
                let (mean, se) = hermite_core::chaos::mean_and_se(&vals);
                let m2: Vec<f64> = vals.iter().map(|v| v * v).collect();
                let (second_moment, m2_se) = hermite_core::chaos::mean_and_se(&m2);
                json!({"t": t, "mean": mean, "std_error": se,
                       "second_moment": second_moment, "second_moment_se": m2_se})
            })
            .collect();
        self.finish("simulate", &table, vec![[0, n as u64]], true, json!({"per_time": per_time}))
    }

    pub fn validate_cov(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        self.check_times(&ctx.grid, &self.cfg.times)?;
        let rep = covariance_validation(&ctx, &self.cfg.times, self.cfg.n_samples)?;
        let mut table = CsvTable::new(&["s", "t", "target", "estimate", "std_error", "pass"]);
        for e in &rep.entries {
            table.push(vec![
                fmt_num(e.s),
                fmt_num(e.t),
                fmt_num(e.target),
                fmt_num(e.estimate),
                fmt_num(e.std_error),
                e.pass.to_string(),
            ]);
        }
        let pass = rep.pass;
        self.finish("validate_cov", &table, vec![[0, self.cfg.n_samples as u64]], pass, rep)
    }

    fn ks_table(rep: &hermite_core::experiments::SymmetryReport) -> CsvTable {
        let mut table =
            CsvTable::new(&["case", "statistic", "threshold", "n_x", "n_y", "pass"]);
        for c in &rep.cases {
            table.push(vec![
                c.label.clone(),
                fmt_num(c.outcome.statistic),
                fmt_num(c.outcome.threshold),
                c.outcome.n_x.to_string(),
                c.outcome.n_y.to_string(),
                c.outcome.pass.to_string(),
            ]);
        }
        table
    }

    pub fn validate_ss(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        let scaled: Vec<f64> = self.cfg.times.iter().map(|t| t * self.cfg.scale_c).collect();
        self.check_times(&ctx.grid, &self.cfg.times)?;
        self.check_times(&ctx.grid, &scaled)?;
        let n = self.cfg.n_samples as u64;
        let rep = self_similarity_test(
            &ctx,
            self.cfg.scale_c,
            &self.cfg.times,
            self.cfg.n_samples,
            self.cfg.alpha,
        )?;
        let table = Self::ks_table(&rep);
        let pass = rep.pass;
        self.finish("validate_ss", &table, vec![[0, n], [n, 2 * n]], pass, rep)
    }

    pub fn validate_si(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        let shift = self.cfg.shift.unwrap_or(0.5);
        let shifted: Vec<f64> = self.cfg.times.iter().map(|t| t + shift).collect();
        self.check_times(&ctx.grid, &self.cfg.times)?;
        self.check_times(&ctx.grid, &shifted)?;
        let sign_leg = self.cfg.times.iter().all(|&t| ctx.grid.contains(-t));
        let n = self.cfg.n_samples as u64;
        let rep = stationary_increments_test(
            &ctx,
            shift,
            &self.cfg.times,
            self.cfg.n_samples,
            self.cfg.alpha,
        )?;
        let table = Self::ks_table(&rep);
        let mut ranges = vec![[0, n], [n, 2 * n]];
        if sign_leg {
            ranges.push([2 * n, 3 * n]);
        }
        let pass = rep.pass;
        self.finish("validate_si", &table, ranges, pass, rep)
    }

    pub fn malliavin_ss(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        for &(s, t) in &self.cfg.pairs {
            self.check_times(&ctx.grid, &[s, t, self.cfg.scale_c * s, self.cfg.scale_c * t])?;
            if let Some(a) = self.cfg.shift {
                self.check_times(&ctx.grid, &[s + a, t + a, a])?;
            }
        }
        let rep = malliavin_selfsim_test(
            &ctx,
            self.cfg.scale_c,
            &self.cfg.pairs,
            self.cfg.shift,
            self.cfg.n_samples,
            self.cfg.alpha,
        )?;
        let table = Self::ks_table(&rep);
        let n = self.cfg.n_samples as u64;
        let batches = if self.cfg.q == 1 {
            1
        } else {
            self.cfg.pairs.len() as u64 * if self.cfg.shift.is_some() { 4 } else { 2 }
        };
        let pass = rep.pass;
        self.finish("malliavin_ss", &table, vec![[0, batches * n]], pass, rep)
    }

    pub fn gram_det(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        self.check_times(&ctx.grid, &self.cfg.times)?;
        let n = self.cfg.n_samples;
        let all = ctx.derivatives(&self.cfg.times, 0, n)?;
        let mut cols = vec!["sample_id".to_string(), "det".to_string()];
        cols.extend((0..self.cfg.times.len()).map(|k| format!("residual_sq_{k}")));
        let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
        let mut table = CsvTable::new(&col_refs);
        let mut dets = Vec::with_capacity(n);
        for (s, d) in all.iter().enumerate() {
            let f = factorize(d)?;
            let mut row = vec![s.to_string(), fmt_num(f.det)];
            row.extend(f.residual_sq.iter().map(|r| fmt_num(*r)));
            table.push(row);
            dets.push(f.det);
        }
        let mut sorted = dets.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pass = sorted[0] > 0.0;
        let results = json!({
            "min_det": sorted[0],
            "median_det": sorted[sorted.len() / 2],
            "max_det": sorted[sorted.len() - 1],
            "deterministic": self.cfg.q == 1,
            "pass": pass,
        });
        self.finish("gram_det", &table, vec![[0, n as u64]], pass, results)
    }

    pub fn slnd(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        let mut time_grid = vec![0.0];
        time_grid.extend(&self.cfg.times);
        self.check_times(&ctx.grid, &self.cfg.times)?;
        self.check_times(&ctx.grid, &[1.0])?;
        let rep = slnd_dominance_test(
            &ctx,
            &time_grid,
            self.cfg.level_j,
            self.cfg.n_samples,
            self.cfg.alpha,
        )?;
        let mut table =
            CsvTable::new(&["test", "statistic", "threshold", "n_samples", "pass"]);
        table.push(vec![
            rep.dominance.name.clone(),
            fmt_num(rep.dominance.statistic),
            fmt_num(rep.dominance.threshold),
            rep.dominance.n_samples.to_string(),
            rep.dominance.pass.to_string(),
        ]);
        let n = self.cfg.n_samples as u64;
        let ranges = if self.cfg.q == 1 { vec![[0, 1]] } else { vec![[0, n], [n, 2 * n]] };
        let pass = rep.pass;
        self.finish("slnd", &table, ranges, pass, rep)
    }

    pub fn det_positivity(&self) -> Result<bool> {
        let cache = self.cache();
        let ctx = self.context(&cache)?;
        self.check_times(&ctx.grid, &self.cfg.times)?;
        let rep = det_positivity_experiment(
            &ctx,
            &self.cfg.times,
            self.cfg.n_samples,
            self.cfg.floor_factor,
        )?;
        let ineq = pathwise_residual_inequality(
            &ctx,
            &{
                let mut g = vec![0.0];
                g.extend(&self.cfg.times);
                g
            },
            self.cfg.n_samples.min(1000),
        )?;
        let mut table = CsvTable::new(&[
            "min_det",
            "median_det",
            "fraction_at_floor",
            "n_samples",
            "inequality_violations",
            "pass",
        ]);
        let pass = rep.pass && ineq.pass;
        table.push(vec![
            fmt_num(rep.min_det),
            fmt_num(rep.median_det),
            fmt_num(rep.fraction_at_floor),
            rep.n_samples.to_string(),
            ineq.violations.to_string(),
            pass.to_string(),
        ]);
        let results = json!({"det": rep, "pathwise_inequality": ineq, "pass": pass});
        self.finish("det_positivity", &table, vec![[0, self.cfg.n_samples as u64]], pass, results)
    }

    pub fn chaos_tests(&self) -> Result<bool> {
        let cache = self.cache();
        let grid = self.grid()?;
        let quad = self.cfg.quad;
        let t = 1.0;
        let p1 = make_params(1, self.cfg.h)?;
        let p2 = make_params(2, self.cfg.h)?;
        let k1 = cache.get_or_build(&p1, t, &grid, quad)?;
        let k2 = cache.get_or_build(&p2, t, &grid, quad)?;
        let n = self.cfg.n_samples;
        let seed = self.cfg.seed;

        let mut table = CsvTable::new(&[
            "test", "p", "q", "estimate", "target", "std_error", "pass",
        ]);
        let mut all_pass = true;
        let mut iso_reports = Vec::new();
        for (label, f, g) in [("1,1", &*k1, &*k1), ("1,2", &*k1, &*k2), ("2,2", &*k2, &*k2)] {
            let rep = isometry_check(f, g, n, seed)?;
            all_pass &= rep.pass;
            let (p, q) = (f.order, g.order);
            table.push(vec![
                "isometry".to_string(),
                p.to_string(),
                q.to_string(),
                fmt_num(rep.estimate),
                fmt_num(rep.target),
                fmt_num(rep.std_error),
                rep.pass.to_string(),
            ]);
            iso_reports.push(json!({"pair": label, "report": rep}));
        }

        // product formula on the first-chaos kernel and a rank-one order-2
        // tensor built from the unit-normalized indicator of [0,1]
        let count = grid.midpoints.iter().filter(|&&m| m > 0.0 && m < 1.0).count();
        let a: Vec<f64> = grid
            .midpoints
            .iter()
            .map(|&m| {
                if m > 0.0 && m < 1.0 {
                    1.0 / (count as f64 * grid.delta).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let rank_one =
            DiscretizedKernel::product(grid.clone(), 1.0, vec![a.clone(), a.clone()])?;
        let ka = DiscretizedKernel::dense1(grid.clone(), a)?;
        let mut pf_reports = Vec::new();
        for (label, f, g) in
            [("1,1", &*k1, &ka), ("1,2-rank-one", &*k1, &rank_one)]
        {
            let rep = product_formula_check(f, g, n, seed)?;
            let threshold = 5e-2 * rep.mean_square_lhs + 1e-12;
            let pass = rep.mean_square_gap <= threshold;
            all_pass &= pass;
            table.push(vec![
                "product_formula".to_string(),
                f.order.to_string(),
                g.order.to_string(),
                fmt_num(rep.mean_square_gap),
                fmt_num(threshold),
                fmt_num(rep.mean_square_lhs),
                pass.to_string(),
            ]);
            pf_reports.push(json!({"pair": label, "report": rep, "pass": pass}));
        }
        let results =
            json!({"isometry": iso_reports, "product_formula": pf_reports, "pass": all_pass});
        self.finish("chaos_tests", &table, vec![[0, n as u64]], all_pass, results)
    }

    pub fn oracle(&self) -> Result<bool> {
        let rep = gaussian_oracle(self.cfg.h, &self.cfg.times)?;
        let mut table = CsvTable::new(&["k", "t", "conditional_variance"]);
        for (k, (&t, &v)) in self.cfg.times.iter().zip(&rep.conditional_variances).enumerate() {
            table.push(vec![k.to_string(), fmt_num(t), fmt_num(v)]);
        }
        let pass = rep.agreement;
        self.finish("oracle", &table, vec![], pass, rep)
    }

    pub fn refine(&self) -> Result<bool> {
        // deterministic second-moment study: E[Z_1^2] is an exact function of
        // the discretized kernel, no sampling needed
        let cache = self.cache();
        let params = make_params(self.cfg.q, self.cfg.h)?;
        let mut table = CsvTable::new(&["n_cells", "second_moment", "gap"]);
        let mut gaps = Vec::new();
        let mut rows = Vec::new();
        for &n in &self.cfg.refine_cells {
            let grid = Arc::new(build_grid(self.cfg.grid_m, self.cfg.x_max, n)?);
            let k = cache.get_or_build(&params, 1.0, &grid, self.cfg.quad)?;
            let m2 = isometry_target(&k, &k)?;
            let gap = (1.0 - m2).abs();
            table.push(vec![n.to_string(), fmt_num(m2), fmt_num(gap)]);
            rows.push(json!({"n_cells": n, "second_moment": m2, "gap": gap}));
            gaps.push(gap);
        }
        let pass = gaps.windows(2).all(|w| w[1] < w[0]);
        let results = json!({"rows": rows, "monotone_refinement": pass});
        self.finish("refine", &table, vec![], pass, results)
    }
}

/// Maps a subcommand name to its runner; names mirror the CLI verbs.
pub fn dispatch(name: &str, run: &Run) -> Result<bool> {
    match name {
        "simulate" => run.simulate(),
        "validate-cov" => run.validate_cov(),
        "validate-ss" => run.validate_ss(),
        "validate-si" => run.validate_si(),
        "malliavin-ss" => run.malliavin_ss(),
        "gram-det" => run.gram_det(),
        "slnd" => run.slnd(),
        "det-positivity" => run.det_positivity(),
        "chaos-tests" => run.chaos_tests(),
        "oracle" => run.oracle(),
        "refine" => run.refine(),
        other => Err(HermiteError::Config(format!("unknown subcommand `{other}`"))),
    }
}
