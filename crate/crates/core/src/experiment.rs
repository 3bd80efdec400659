//! Sweep harness: for each dataset size and seed, fit the empirical model
//! once, run every configured method on it, and record the sub-optimality
//! gap of the returned policy under the true MDP. Aggregates are the mean
//! and the 5th/95th percentiles across seeds.

use crate::baselines::{lcb_value_iteration, nonrobust_empirical_vi, LcbConfig};
use crate::data::{behavior_partial, behavior_uniform, draw_eta, estimate_model, sample_dataset};
use crate::error::Error;
use crate::garnet::generate_garnet_with;
use crate::mdp::{
    exact_value_iteration, policy_evaluation, scalar_value, DeterministicPolicy, TabularMdp,
};
use crate::robust::{
    robust_value_iteration, robust_value_iteration_bernstein, EmpiricalRobustModel, RadiusStyle,
};
use crate::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DroHoeffding,
    DroBernstein,
    Lcb,
    Nonrobust,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::DroHoeffding => "dro_hoeffding",
            Method::DroBernstein => "dro_bernstein",
            Method::Lcb => "lcb",
            Method::Nonrobust => "nonrobust",
        }
    }

    pub const ALL: [Method; 4] = [
        Method::DroHoeffding,
        Method::DroBernstein,
        Method::Lcb,
        Method::Nonrobust,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dro_hoeffding" | "dro-hoeffding" => Ok(Method::DroHoeffding),
            "dro_bernstein" | "dro-bernstein" => Ok(Method::DroBernstein),
            "lcb" => Ok(Method::Lcb),
            "nonrobust" => Ok(Method::Nonrobust),
            other => Err(Error::invalid(format!(
                "unknown method '{other}' (expected dro-hoeffding, dro-bernstein, lcb or nonrobust)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Uniform,
    Partial,
}

impl FromStr for Coverage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Coverage::Uniform),
            "partial" => Ok(Coverage::Partial),
            other => Err(Error::invalid(format!(
                "unknown coverage '{other}' (expected uniform or partial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpSource {
    Garnet {
        states: usize,
        actions: usize,
        seed: u64,
    },
    File(PathBuf),
}

fn default_delta() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.95
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp_source: MdpSource,
    pub coverage: Coverage,
    pub methods: Vec<Method>,
    pub sizes: Vec<u64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must be nonempty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(*m) {
                return Err(Error::InvalidConfig(format!("duplicate method {m}")));
            }
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidConfig("sizes must be nonempty".into()));
        }
        if !self.sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("sizes must be strictly increasing".into()));
        }
        if self.sizes[0] == 0 {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be nonempty".into()));
        }
        let mut seed_set = std::collections::BTreeSet::new();
        for s in &self.seeds {
            if !seed_set.insert(*s) {
                return Err(Error::InvalidConfig(format!("duplicate seed {s}")));
            }
        }
        if !(1e-6..=0.5).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in [1e-6, 0.5], got {}",
                self.delta
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn build_mdp(&self) -> Result<TabularMdp> {
        match &self.mdp_source {
            MdpSource::Garnet {
                states,
                actions,
                seed,
            } => generate_garnet_with(*states, *actions, *seed, self.gamma, None),
            MdpSource::File(path) => TabularMdp::load(path)?.with_discount(self.gamma),
        }
    }
}

/// One (method, dataset size, seed) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub method: Method,
    pub n: u64,
    pub seed: u64,
    pub gap: f64,
    /// Reserved column, always zero: the CSV tables carry a byte-level
    /// reproducibility guarantee that a measured clock cannot satisfy.
    /// Measured wall times live in [`ExperimentResult::timings`].
    pub runtime_ms: u64,
    pub iterations: usize,
}

/// Measured wall time of one method run; informational only, excluded from
/// the deterministic tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: Method,
    pub n: u64,
    pub seed: u64,
    pub wall_ms: f64,
}

/// Per (method, dataset size) aggregate across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub n: u64,
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<GapRow>,
    pub aggregates: Vec<Aggregate>,
    /// Measured wall times, ordered like `rows`.
    pub timings: Vec<TimingRow>,
    /// Action shared by the partial-coverage behavior, when applicable.
    pub eta: Option<usize>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dataset seed for one (size, seed) cell. Methods share the cell's dataset
/// so they are compared on identical data.
pub fn derive_dataset_seed(base_seed: u64, n: u64, seed: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(n ^ splitmix64(seed)))
}

/// Empirical percentile by linear interpolation between order statistics.
/// `sorted` must be ascending, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Shortfall of `pi` against the optimal policy from the initial
/// distribution: `rho^T V* - rho^T V_pi`, with `V*` solved at `tol / 10`.
pub fn suboptimality_gap(mdp: &TabularMdp, pi: &DeterministicPolicy, tol: f64) -> Result<f64> {
    let (v_star, _) = exact_value_iteration(mdp, tol / 10.0)?;
    let v_pi = policy_evaluation(mdp, pi)?;
    Ok(scalar_value(&v_star, mdp.initial_dist()) - scalar_value(&v_pi, mdp.initial_dist()))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_sweep_with_jobs(cfg, 1)
}

/// Run the sweep with `jobs` worker threads over the (size, seed) cells.
/// Cells are independent and each cell's arithmetic is sequential, so the
/// result is identical for any `jobs`.
pub fn run_sweep_with_jobs(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mdp = cfg.build_mdp()?;
    let (v_star, pi_star) = exact_value_iteration(&mdp, cfg.tol / 10.0)?;
    let opt = scalar_value(&v_star, mdp.initial_dist());
    let (mu, eta) = match cfg.coverage {
        Coverage::Uniform => (
            behavior_uniform(mdp.num_states(), mdp.num_actions()),
            None,
        ),
        Coverage::Partial => {
            let eta = draw_eta(mdp.num_actions(), splitmix64(cfg.base_seed ^ 0x0065_7461));
            (
                behavior_partial(&pi_star, eta, mdp.num_actions())?,
                Some(eta),
            )
        }
    };

    let cells: Vec<(u64, u64)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();

    let run_cell = |&(n, seed): &(u64, u64)| -> Result<Vec<(GapRow, TimingRow)>> {
        let wrap = |m: Method, e: Error| Error::MethodRun {
            method: m.name().to_string(),
            n,
            seed,
            source: Box::new(e),
        };
        let data = sample_dataset(
            &mdp,
            &mu,
            n as usize,
            derive_dataset_seed(cfg.base_seed, n, seed),
        )?;
        let model = estimate_model(&data)?;
        let mut rows = Vec::with_capacity(cfg.methods.len());
        for &method in &cfg.methods {
            let start = Instant::now();
            let (policy, iterations) = match method {
                Method::DroHoeffding => {
                    let style = RadiusStyle::hoeffding(cfg.delta).map_err(|e| wrap(method, e))?;
                    let robust = EmpiricalRobustModel::new(model.clone(), style, cfg.gamma)
                        .map_err(|e| wrap(method, e))?;
                    let sol =
                        robust_value_iteration(&robust, cfg.tol).map_err(|e| wrap(method, e))?;
                    (sol.policy, sol.iterations)
                }
                Method::DroBernstein => {
                    let style = RadiusStyle::bernstein(cfg.delta).map_err(|e| wrap(method, e))?;
                    let robust = EmpiricalRobustModel::new(model.clone(), style, cfg.gamma)
                        .map_err(|e| wrap(method, e))?;
                    let sol = robust_value_iteration_bernstein(&robust, &data, cfg.tol)
                        .map_err(|e| wrap(method, e))?;
                    (sol.policy, sol.iterations)
                }
                Method::Lcb => {
                    let lcb_cfg = LcbConfig::new(cfg.delta, 1.0).map_err(|e| wrap(method, e))?;
                    let (_, policy, iterations) =
                        lcb_value_iteration(&model, &lcb_cfg, cfg.gamma, cfg.tol)
                            .map_err(|e| wrap(method, e))?;
                    (policy, iterations)
                }
                Method::Nonrobust => {
                    let (_, policy, iterations) =
                        nonrobust_empirical_vi(&model, cfg.gamma, cfg.tol)
                            .map_err(|e| wrap(method, e))?;
                    (policy, iterations)
                }
            };
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let v_pi = policy_evaluation(&mdp, &policy).map_err(|e| wrap(method, e))?;
            let gap = opt - scalar_value(&v_pi, mdp.initial_dist());
            rows.push((
                GapRow {
                    method,
                    n,
                    seed,
                    gap,
                    runtime_ms: 0,
                    iterations,
                },
                TimingRow {
                    method,
                    n,
                    seed,
                    wall_ms,
                },
            ));
        }
        Ok(rows)
    };

    let nested: Vec<Vec<(GapRow, TimingRow)>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect::<Result<Vec<_>>>())?
    } else {
        cells.iter().map(run_cell).collect::<Result<Vec<_>>>()?
    };

    let mut paired: Vec<(GapRow, TimingRow)> = nested.into_iter().flatten().collect();
    paired.sort_by(|a, b| {
        a.0.method
            .name()
            .cmp(b.0.method.name())
            .then(a.0.n.cmp(&b.0.n))
            .then(a.0.seed.cmp(&b.0.seed))
    });
    let (rows, timings): (Vec<GapRow>, Vec<TimingRow>) = paired.into_iter().unzip();

    let mut aggregates = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (method, n) = (rows[i].method, rows[i].n);
        let mut gaps = Vec::new();
        while i < rows.len() && rows[i].method == method && rows[i].n == n {
            gaps.push(rows[i].gap);
            i += 1;
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        aggregates.push(Aggregate {
            method,
            n,
            mean,
            p5: percentile(&gaps, 0.05),
            p95: percentile(&gaps, 0.95),
        });
    }

    Ok(ExperimentResult {
        rows,
        aggregates,
        timings,
        eta,
    })
}

/// Optional companion table with measured wall times; not part of the
/// reproducibility contract.
pub fn emit_timings(res: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut body = String::from("method,N,seed,wall_ms\n");
    for t in &res.timings {
        body.push_str(&format!("{},{},{},{}\n", t.method, t.n, t.seed, t.wall_ms));
    }
    let path = dir.join("timings.csv");
    std::fs::write(&path, body).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Write `raw.csv` and `agg.csv` under `dir` (UTF-8, `\n` line endings,
/// rows ordered by method name, then size, then seed).
pub fn emit_tables(res: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    };
    let mut raw = String::from("method,N,seed,gap,runtime_ms,iterations\n");
    for r in &res.rows {
        raw.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method, r.n, r.seed, r.gap, r.runtime_ms, r.iterations
        ));
    }
    write("raw.csv", raw)?;
    let mut agg = String::from("method,N,mean,p5,p95\n");
    for a in &res.aggregates {
        agg.push_str(&format!(
            "{},{},{},{},{}\n",
            a.method, a.n, a.mean, a.p5, a.p95
        ));
    }
    write("agg.csv", agg)
}
