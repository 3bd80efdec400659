//! Comparison methods: LCB-penalized value iteration and plain (non-robust)
//! dynamic programming on the empirical model.

use crate::data::EmpiricalModel;
use crate::error::Error;
use crate::mdp::{iterate_to_fixed_point, DeterministicPolicy, ValueFunction};
use crate::Result;
use ndarray::{Array1, Array2};

/// Configuration of the LCB reward penalty.
#[derive(Debug, Clone, Copy)]
pub struct LcbConfig {
    pub delta: f64,
    /// Multiplier on the penalty; the constant differs across the VI-LCB
    /// literature, so it is exposed rather than hard-coded.
    pub bonus_scale: f64,
}

impl LcbConfig {
    pub fn new(delta: f64, bonus_scale: f64) -> Result<Self> {
        if !(1e-6..=0.5).contains(&delta) {
            return Err(Error::invalid(format!(
                "delta must lie in [1e-6, 0.5], got {delta}"
            )));
        }
        if !bonus_scale.is_finite() || bonus_scale <= 0.0 {
            return Err(Error::invalid("bonus_scale must be positive"));
        }
        Ok(Self { delta, bonus_scale })
    }
}

impl Default for LcbConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            bonus_scale: 1.0,
        }
    }
}

/// Count-based reward penalty:
/// `b(s,a) = min(1/(1-gamma), c_b * sqrt(log(S A N / delta) / max(N(s,a), 1)) / (1-gamma))`,
/// pinned at the `1/(1-gamma)` cap for unvisited pairs.
fn penalty_table(model: &EmpiricalModel, cfg: &LcbConfig, gamma: f64) -> Array2<f64> {
    let (s, a) = model.counts.dim();
    let horizon = 1.0 / (1.0 - gamma);
    let n_total = model.total_count().max(1);
    let log_term = ((s * a) as f64 * n_total as f64 / cfg.delta).ln();
    let mut b = Array2::zeros((s, a));
    for ((i, j), &n) in model.counts.indexed_iter() {
        b[[i, j]] = if n == 0 {
            horizon
        } else {
            (cfg.bonus_scale * (log_term / n as f64).sqrt() * horizon).min(horizon)
        };
    }
    b
}

/// Pessimistic value iteration: backup
/// `V(s) <- max_a { max(0, r_hat(s,a) - b(s,a)) + gamma * p_hat(s,a)^T V }`.
pub fn lcb_value_iteration(
    model: &EmpiricalModel,
    cfg: &LcbConfig,
    gamma: f64,
    tol: f64,
) -> Result<(ValueFunction, DeterministicPolicy, usize)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!(
            "discount must lie in [0, 1), got {gamma}"
        )));
    }
    let b = penalty_table(model, cfg, gamma);
    let penalized = {
        let mut r = model.reward.clone();
        for (idx, v) in r.indexed_iter_mut() {
            *v = (*v - b[idx]).max(0.0);
        }
        r
    };
    let (sn, an) = (model.num_states(), model.num_actions());
    let backup = |v: &Array1<f64>| {
        let mut out = Array1::zeros(sn);
        for s in 0..sn {
            let mut best = f64::NEG_INFINITY;
            for a in 0..an {
                let q = penalized[[s, a]] + gamma * model.kernel_row(s, a).dot(v);
                if q > best {
                    best = q;
                }
            }
            out[s] = best;
        }
        out
    };
    let (values, iterations, _) = iterate_to_fixed_point(backup, Array1::zeros(sn), gamma, tol)?;
    let mut actions = vec![0usize; sn];
    for s in 0..sn {
        let mut best = f64::NEG_INFINITY;
        for a in 0..an {
            let q = penalized[[s, a]] + gamma * model.kernel_row(s, a).dot(&values);
            if q > best {
                best = q;
                actions[s] = a;
            }
        }
    }
    Ok((
        ValueFunction { values },
        DeterministicPolicy::new(actions, an)?,
        iterations,
    ))
}

/// Plain value iteration on the empirical MDP, no pessimism beyond the
/// absorbing-state convention for unvisited pairs.
pub fn nonrobust_empirical_vi(
    model: &EmpiricalModel,
    gamma: f64,
    tol: f64,
) -> Result<(ValueFunction, DeterministicPolicy, usize)> {
    let mdp = model.to_mdp(gamma)?;
    let backup = |v: &Array1<f64>| {
        crate::mdp::bellman_backup(
            &mdp,
            &ValueFunction {
                values: v.clone(),
            },
        )
        .0
        .values
    };
    let (values, iterations, _) =
        iterate_to_fixed_point(backup, Array1::zeros(mdp.num_states()), gamma, tol)?;
    let value = ValueFunction { values };
    let (_, policy) = crate::mdp::bellman_backup(&mdp, &value);
    Ok((value, policy, iterations))
}
