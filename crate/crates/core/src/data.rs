//! Offline dataset generation and empirical-model estimation.
//!
//! Datasets are lists of i.i.d. `(s, a, s', r)` tuples: the pair `(s, a)` is
//! drawn from a behavior distribution over the state-action grid, `s'` from
//! the true kernel, and `r` is the deterministic reward. Sampling uses one
//! counter-based RNG stream per tuple so that generation is reproducible and
//! independent of evaluation order.

use crate::error::Error;
use crate::mdp::{validate_prob_vector, DeterministicPolicy, TabularMdp};
use crate::Result;
use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Probability distribution over the `(s, a)` grid.
#[derive(Debug, Clone)]
pub struct BehaviorDistribution {
    pub weights: Array2<f64>,
}

impl BehaviorDistribution {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let dist = Self { weights };
        dist.validate(1e-10)?;
        Ok(dist)
    }

    pub fn num_states(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weight(&self, state: usize, action: usize) -> f64 {
        self.weights[[state, action]]
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        // flattened row-major view: index = s * A + a
        self.weights
            .view()
            .into_shape_with_order(self.weights.len())
            .expect("contiguous weights")
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        validate_prob_vector(self.weights(), tol)
            .map_err(|e| Error::InvalidDistribution(format!("behavior distribution: {e}")))
    }

    /// Smallest positive entry.
    pub fn mu_min(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Uniform behavior: every pair gets mass `1 / (S A)`.
pub fn behavior_uniform(num_states: usize, num_actions: usize) -> BehaviorDistribution {
    let w = 1.0 / (num_states * num_actions) as f64;
    BehaviorDistribution {
        weights: Array2::from_elem((num_states, num_actions), w),
    }
}

/// Partial-coverage behavior: per state, mass `1/(2S)` on the comparator's
/// action and `1/(2S)` on one globally fixed action `eta` (merging to `1/S`
/// where they coincide).
pub fn behavior_partial(
    pi_star: &DeterministicPolicy,
    eta: usize,
    num_actions: usize,
) -> Result<BehaviorDistribution> {
    if eta >= num_actions {
        return Err(Error::invalid(format!(
            "eta = {eta} out of range (A = {num_actions})"
        )));
    }
    let s = pi_star.num_states();
    let half = 1.0 / (2.0 * s as f64);
    let mut weights = Array2::zeros((s, num_actions));
    for state in 0..s {
        if pi_star.action(state) >= num_actions {
            return Err(Error::invalid("policy action out of range"));
        }
        weights[[state, pi_star.action(state)]] += half;
        weights[[state, eta]] += half;
    }
    BehaviorDistribution::new(weights)
}

/// Draw the shared `eta` action for partial coverage from a seed.
pub fn draw_eta(num_actions: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.gen_range(0..num_actions)
}

/// One logged interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
}

/// Fixed batch of transitions plus derived visit counts.
#[derive(Debug, Clone)]
pub struct OfflineDataset {
    num_states: usize,
    num_actions: usize,
    tuples: Vec<Transition>,
    counts_sa: Array2<u64>,
    counts_s: Array1<u64>,
    seed: u64,
    /// Generating behavior distribution, when known.
    pub mu: Option<BehaviorDistribution>,
}

impl OfflineDataset {
    pub fn from_tuples(
        num_states: usize,
        num_actions: usize,
        tuples: Vec<Transition>,
        seed: u64,
    ) -> Result<Self> {
        let mut counts_sa = Array2::zeros((num_states, num_actions));
        let mut counts_s = Array1::zeros(num_states);
        for (i, t) in tuples.iter().enumerate() {
            if t.state >= num_states || t.next_state >= num_states {
                return Err(Error::InvalidDataset(format!(
                    "tuple {i}: state index out of range (S = {num_states})"
                )));
            }
            if t.action >= num_actions {
                return Err(Error::InvalidDataset(format!(
                    "tuple {i}: action index out of range (A = {num_actions})"
                )));
            }
            if !t.reward.is_finite() {
                return Err(Error::InvalidDataset(format!("tuple {i}: non-finite reward")));
            }
            counts_sa[[t.state, t.action]] += 1;
            counts_s[t.state] += 1;
        }
        Ok(Self {
            num_states,
            num_actions,
            tuples,
            counts_sa,
            counts_s,
            seed,
            mu: None,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn tuples(&self) -> &[Transition] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Visit count of each `(s, a)` pair.
    pub fn counts_sa(&self) -> &Array2<u64> {
        &self.counts_sa
    }

    /// Visit count of each state (summed over actions).
    pub fn counts_s(&self) -> &Array1<u64> {
        &self.counts_s
    }

    /// One record per line `s,a,s_next,r` after a `#S=..,A=..,seed=..` header.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |e| Error::Io {
            path: path.display().to_string(),
            source: e,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        let mut write = || -> std::io::Result<()> {
            writeln!(
                out,
                "#S={},A={},seed={}",
                self.num_states, self.num_actions, self.seed
            )?;
            for t in &self.tuples {
                writeln!(out, "{},{},{},{}", t.state, t.action, t.next_state, t.reward)?;
            }
            out.flush()
        };
        write().map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err("empty file".into()))?
            .map_err(|e| parse_err(e.to_string()))?;
        let rest = header
            .strip_prefix("#S=")
            .ok_or_else(|| parse_err("missing #S=..,A=..,seed=.. header".into()))?;
        let mut fields = rest.split(',');
        let s: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err("bad S in header".into()))?;
        let a: usize = fields
            .next()
            .and_then(|f| f.strip_prefix("A="))
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err("bad A in header".into()))?;
        let seed: u64 = fields
            .next()
            .and_then(|f| f.strip_prefix("seed="))
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err("bad seed in header".into()))?;
        let mut tuples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| parse_err(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let mut f = line.split(',');
            let mut next = |what: &str| {
                f.next()
                    .ok_or_else(|| parse_err(format!("line {}: missing {what}", i + 2)))
            };
            let state = next("s")?
                .parse()
                .map_err(|_| parse_err(format!("line {}: bad s", i + 2)))?;
            let action = next("a")?
                .parse()
                .map_err(|_| parse_err(format!("line {}: bad a", i + 2)))?;
            let next_state = next("s_next")?
                .parse()
                .map_err(|_| parse_err(format!("line {}: bad s_next", i + 2)))?;
            let reward = next("r")?
                .parse()
                .map_err(|_| parse_err(format!("line {}: bad r", i + 2)))?;
            tuples.push(Transition {
                state,
                action,
                next_state,
                reward,
            });
        }
        Self::from_tuples(s, a, tuples, seed)
    }
}

/// Draw `n` i.i.d. tuples: `(s, a) ~ mu`, `s' ~ P(. | s, a)`, `r = r(s, a)`.
///
/// Tuple `i` consumes only stream `i` of a ChaCha generator keyed by `seed`,
/// so the result is bit-reproducible and insensitive to thread scheduling.
pub fn sample_dataset(
    mdp: &TabularMdp,
    mu: &BehaviorDistribution,
    n: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    if mu.num_states() != mdp.num_states() || mu.num_actions() != mdp.num_actions() {
        return Err(Error::InvalidDistribution(
            "behavior distribution shape does not match the MDP".into(),
        ));
    }
    mu.validate(1e-10)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let flat_mu = mu.weights();
    let a = mdp.num_actions();
    let mut tuples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = base.clone();
        rng.set_stream(i as u64);
        let pair = inverse_cdf(flat_mu, rng.gen());
        let (s, act) = (pair / a, pair % a);
        let next = inverse_cdf(mdp.kernel_row(s, act), rng.gen());
        tuples.push(Transition {
            state: s,
            action: act,
            next_state: next,
            reward: mdp.reward()[[s, act]],
        });
    }
    let mut data = OfflineDataset::from_tuples(mdp.num_states(), mdp.num_actions(), tuples, seed)?;
    data.mu = Some(mu.clone());
    Ok(data)
}

fn inverse_cdf(weights: ArrayView1<'_, f64>, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding dust at the top of the CDF; take the last
    // positive-weight index
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Empirical MDP fitted by count ratios.
///
/// Unvisited pairs become absorbing with zero reward: `P(. | s, a)` is the
/// point mass on `s` and `r(s, a) = 0`, which zeroes their action value and
/// steers planners away from them.
#[derive(Debug, Clone)]
pub struct EmpiricalModel {
    pub kernel: Array3<f64>,
    pub reward: Array2<f64>,
    pub counts: Array2<u64>,
}

impl EmpiricalModel {
    pub fn num_states(&self) -> usize {
        self.kernel.dim().0
    }

    pub fn num_actions(&self) -> usize {
        self.kernel.dim().1
    }

    pub fn total_count(&self) -> u64 {
        self.counts.sum()
    }

    pub fn kernel_row(&self, state: usize, action: usize) -> ArrayView1<'_, f64> {
        self.kernel.slice(ndarray::s![state, action, ..])
    }

    /// View the empirical model as a regular MDP (uniform initial state).
    pub fn to_mdp(&self, gamma: f64) -> Result<TabularMdp> {
        let s = self.num_states();
        TabularMdp::new(
            self.kernel.clone(),
            self.reward.clone(),
            gamma,
            Array1::from_elem(s, 1.0 / s as f64),
        )
    }
}

/// Fit the empirical kernel and reward from a dataset.
///
/// Rewards at a pair must agree across tuples (they are deterministic);
/// disagreement means the dataset is corrupted and is rejected.
pub fn estimate_model(data: &OfflineDataset) -> Result<EmpiricalModel> {
    let (s, a) = (data.num_states(), data.num_actions());
    let mut kernel = Array3::zeros((s, a, s));
    let mut reward: Array2<f64> = Array2::zeros((s, a));
    let mut seen = Array2::from_elem((s, a), false);
    for t in data.tuples() {
        kernel[[t.state, t.action, t.next_state]] += 1.0;
        if seen[[t.state, t.action]] {
            if reward[[t.state, t.action]] != t.reward {
                return Err(Error::InvalidDataset(format!(
                    "inconsistent rewards at ({}, {}): {} vs {}",
                    t.state,
                    t.action,
                    reward[[t.state, t.action]],
                    t.reward
                )));
            }
        } else {
            reward[[t.state, t.action]] = t.reward;
            seen[[t.state, t.action]] = true;
        }
    }
    for si in 0..s {
        for ai in 0..a {
            let count = data.counts_sa()[[si, ai]];
            if count == 0 {
                kernel[[si, ai, si]] = 1.0;
            } else {
                let inv = 1.0 / count as f64;
                for sj in 0..s {
                    kernel[[si, ai, sj]] *= inv;
                }
            }
        }
    }
    Ok(EmpiricalModel {
        kernel,
        reward,
        counts: data.counts_sa().clone(),
    })
}
