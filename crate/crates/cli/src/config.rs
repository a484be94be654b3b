//! Flat `key = value` configuration files: diff-able, hashed verbatim into
//! every result manifest. Lists are comma-separated; pairs use `s:t`.

use hermite_core::numeric::{fnv1a, QuadSettings};
use hermite_core::{HermiteError, Result};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Raw parsed file: key -> (line number, value). Keys are unique.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let stripped = line.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| {
                HermiteError::Config(format!("line {lineno}: expected `key = value`, got `{stripped}`"))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(HermiteError::Config(format!("line {lineno}: empty key")));
            }
            if entries.contains_key(&key) {
                return Err(HermiteError::Config(format!(
                    "line {lineno}: duplicate key `{key}`"
                )));
            }
            entries.insert(key, (lineno, value.trim().to_string()));
        }
        Ok(RawConfig { entries })
    }

    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, lineno: usize, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        HermiteError::Config(format!(
            "line {lineno}: key `{key}`: cannot parse `{raw}` as {}",
            std::any::type_name::<T>()
        ))
    })
}

/// Fully resolved experiment configuration; every number in the outputs is a
/// function of these fields plus the tool version.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub q: u32,
    pub h: f64,
    pub grid_m: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub times: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub n_samples: usize,
    pub alpha: f64,
    pub seed: u64,
    pub quad: QuadSettings,
    pub threads: usize,
    pub scale_c: f64,
    pub shift: Option<f64>,
    pub level_j: usize,
    pub floor_factor: f64,
    pub refine_cells: Vec<usize>,
    pub out_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "q", "h", "grid_m", "x_max", "n_cells", "times", "pairs", "n_samples", "alpha", "seed",
    "quad_tol", "quad_max_depth", "threads", "scale_c", "shift", "level_j", "floor_factor",
    "refine_cells", "out_dir", "cache_dir",
];

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<ExperimentConfig> {
        for key in raw.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                let (lineno, _) = raw.get(key).unwrap();
                return Err(HermiteError::Config(format!(
                    "line {lineno}: unknown key `{key}`"
                )));
            }
        }

        macro_rules! scalar {
            ($key:literal, $default:expr) => {
                match raw.get($key) {
                    Some((lineno, v)) => parse_scalar($key, *lineno, v)?,
                    None => $default,
                }
            };
        }

        let times = match raw.get("times") {
            Some((lineno, v)) => parse_list("times", *lineno, v)?,
            None => vec![1.0],
        };
        let pairs = match raw.get("pairs") {
            Some((lineno, v)) => parse_pairs(*lineno, v)?,
            None => vec![(1.0, 1.0), (0.5, 1.0)],
        };
        let refine_cells = match raw.get("refine_cells") {
            Some((lineno, v)) => parse_list::<usize>("refine_cells", *lineno, v)?,
            None => vec![128, 256, 512],
        };
        let shift = match raw.get("shift") {
            Some((lineno, v)) => Some(parse_scalar("shift", *lineno, v)?),
            None => None,
        };
        let cache_dir = raw.get("cache_dir").map(|(_, v)| PathBuf::from(v));
        let out_dir = raw
            .get("out_dir")
            .map(|(_, v)| PathBuf::from(v))
            .unwrap_or_else(|| PathBuf::from("results"));

        let cfg = ExperimentConfig {
            q: scalar!("q", 2),
            h: scalar!("h", 0.7),
            grid_m: scalar!("grid_m", 14.0),
            x_max: scalar!("x_max", 2.0),
            n_cells: scalar!("n_cells", 512),
            times,
            pairs,
            n_samples: scalar!("n_samples", 1000),
            alpha: scalar!("alpha", 0.01),
            seed: scalar!("seed", 1),
            quad: QuadSettings {
                tol: scalar!("quad_tol", 1e-10),
                max_depth: scalar!("quad_max_depth", 48),
            },
            threads: scalar!("threads", 0),
            scale_c: scalar!("scale_c", 2.0),
            shift,
            level_j: scalar!("level_j", 2),
            floor_factor: scalar!("floor_factor", 1e-12),
            refine_cells,
            out_dir,
            cache_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        // only ranges every subcommand needs; the Hermite-specific H > 1/2
        // constraint is enforced where params are actually built (`oracle`
        // is pure Gaussian analytics and accepts any H in (0,1))
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(HermiteError::Config(format!(
                "key `h`: must lie in (0,1), got {}",
                self.h
            )));
        }
        if !(1..=3).contains(&self.q) {
            return Err(HermiteError::Config(format!(
                "key `q`: supported orders are 1..=3, got {}",
                self.q
            )));
        }
        if self.n_samples == 0 {
            return Err(HermiteError::Config("key `n_samples`: must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HermiteError::Config(format!(
                "key `alpha`: must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.times.is_empty() {
            return Err(HermiteError::Config("key `times`: list is empty".into()));
        }
        if self.refine_cells.len() < 2 {
            return Err(HermiteError::Config(
                "key `refine_cells`: need at least two grid sizes".into(),
            ));
        }
        Ok(())
    }

    /// Canonical serialization: sorted `key = value` lines covering every
    /// field that influences a result number. Hashing this text gives the
    /// manifest's config hash. `threads` and `out_dir` are excluded: worker
    /// count and file placement must not change any output byte.
    pub fn canonical(&self) -> String {
        let mut lines = vec![
            format!("alpha = {}", self.alpha),
            format!(
                "cache_dir = {}",
                self.cache_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
            ),
            format!("floor_factor = {}", self.floor_factor),
            format!("grid_m = {}", self.grid_m),
            format!("h = {}", self.h),
            format!("level_j = {}", self.level_j),
            format!("n_cells = {}", self.n_cells),
            format!("n_samples = {}", self.n_samples),
            format!(
                "pairs = {}",
                self.pairs.iter().map(|(s, t)| format!("{s}:{t}")).collect::<Vec<_>>().join(",")
            ),
            format!("q = {}", self.q),
            format!("quad_max_depth = {}", self.quad.max_depth),
            format!("quad_tol = {}", self.quad.tol),
            format!(
                "refine_cells = {}",
                self.refine_cells.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("scale_c = {}", self.scale_c),
            format!("seed = {}", self.seed),
            format!("shift = {}", self.shift.map(|s| s.to_string()).unwrap_or_default()),
            format!(
                "times = {}",
                self.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("x_max = {}", self.x_max),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a(self.canonical().as_bytes()))
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, lineno: usize, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|item| parse_scalar(key, lineno, item.trim()))
        .collect()
}

fn parse_pairs(lineno: usize, raw: &str) -> Result<Vec<(f64, f64)>> {
    raw.split(',')
        .map(|item| {
            let (s, t) = item.trim().split_once(':').ok_or_else(|| {
                HermiteError::Config(format!(
                    "line {lineno}: key `pairs`: expected `s:t`, got `{item}`"
                ))
            })?;
            Ok((
                parse_scalar("pairs", lineno, s.trim())?,
                parse_scalar("pairs", lineno, t.trim())?,
            ))
        })
        .collect()
}
