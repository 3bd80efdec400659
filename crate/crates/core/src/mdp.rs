//! Ground-truth tabular MDP: representation, exact planning, policy
//! evaluation, occupancy measures and concentrability coefficients.

use crate::data::BehaviorDistribution;
use crate::error::Error;
use crate::linalg;
use crate::Result;
use ndarray::{Array1, Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};
use std::path::Path;

const ROW_SUM_TOL: f64 = 1e-12;
pub(crate) const MAX_VI_SWEEPS: usize = 10_000_000;

/// Finite MDP with a deterministic reward in `[0, 1]` and discount in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// Transition kernel, indexed `(s, a, s')`.
    kernel: Array3<f64>,
    /// Reward table, indexed `(s, a)`.
    reward: Array2<f64>,
    discount: f64,
    initial_dist: Array1<f64>,
}

impl TabularMdp {
    pub fn new(
        kernel: Array3<f64>,
        reward: Array2<f64>,
        discount: f64,
        initial_dist: Array1<f64>,
    ) -> Result<Self> {
        let (s, a, s2) = kernel.dim();
        if s == 0 || a == 0 {
            return Err(Error::InvalidModel("state and action counts must be positive".into()));
        }
        if s2 != s {
            return Err(Error::InvalidModel("kernel must be S x A x S".into()));
        }
        if reward.dim() != (s, a) {
            return Err(Error::InvalidModel("reward must be S x A".into()));
        }
        if initial_dist.len() != s {
            return Err(Error::InvalidModel("initial distribution must have length S".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        for ((si, ai), &r) in reward.indexed_iter() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidModel(format!(
                    "reward({si},{ai}) = {r} outside [0, 1]"
                )));
            }
        }
        for si in 0..s {
            for ai in 0..a {
                let row = kernel.slice(ndarray::s![si, ai, ..]);
                validate_prob_vector(row, ROW_SUM_TOL)
                    .map_err(|e| Error::InvalidModel(format!("kernel row ({si},{ai}): {e}")))?;
            }
        }
        validate_prob_vector(initial_dist.view(), ROW_SUM_TOL)
            .map_err(|e| Error::InvalidModel(format!("initial distribution: {e}")))?;
        Ok(Self {
            num_states: s,
            num_actions: a,
            kernel,
            reward,
            discount,
            initial_dist,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> ArrayView1<'_, f64> {
        self.initial_dist.view()
    }

    pub fn kernel(&self) -> &Array3<f64> {
        &self.kernel
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn kernel_row(&self, state: usize, action: usize) -> ArrayView1<'_, f64> {
        self.kernel.slice(ndarray::s![state, action, ..])
    }

    /// Same model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(
            self.kernel.clone(),
            self.reward.clone(),
            discount,
            self.initial_dist.clone(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = MdpFile::from(self);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Solver(format!("serialize mdp: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: MdpFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        file.try_into()
    }
}

/// On-disk MDP document: `{S, A, gamma, rho: [S], r: [S][A], P: [S][A][S]}`.
#[derive(Debug, Serialize, Deserialize)]
struct MdpFile {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "A")]
    a: usize,
    gamma: f64,
    rho: Vec<f64>,
    r: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<Vec<f64>>>,
}

impl From<&TabularMdp> for MdpFile {
    fn from(m: &TabularMdp) -> Self {
        let r = (0..m.num_states)
            .map(|s| (0..m.num_actions).map(|a| m.reward[[s, a]]).collect())
            .collect();
        let p = (0..m.num_states)
            .map(|s| {
                (0..m.num_actions)
                    .map(|a| m.kernel_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        MdpFile {
            s: m.num_states,
            a: m.num_actions,
            gamma: m.discount,
            rho: m.initial_dist.to_vec(),
            r,
            p,
        }
    }
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        let (s, a) = (f.s, f.a);
        if f.r.len() != s || f.p.len() != s || f.rho.len() != s {
            return Err(Error::InvalidModel("mdp document has inconsistent shapes".into()));
        }
        let mut kernel = Array3::zeros((s, a, s));
        let mut reward = Array2::zeros((s, a));
        for (si, (r_row, p_row)) in f.r.iter().zip(&f.p).enumerate() {
            if r_row.len() != a || p_row.len() != a {
                return Err(Error::InvalidModel("mdp document has inconsistent shapes".into()));
            }
            for ai in 0..a {
                reward[[si, ai]] = r_row[ai];
                if p_row[ai].len() != s {
                    return Err(Error::InvalidModel("mdp document has inconsistent shapes".into()));
                }
                for (sj, &v) in p_row[ai].iter().enumerate() {
                    kernel[[si, ai, sj]] = v;
                }
            }
        }
        TabularMdp::new(kernel, reward, f.gamma, Array1::from_vec(f.rho))
    }
}

/// Stationary deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::invalid(format!(
                "policy action {bad} out of range (A = {num_actions})"
            )));
        }
        Ok(Self { actions })
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }
}

/// State-value vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Array1<f64>,
}

impl ValueFunction {
    pub fn zeros(num_states: usize) -> Self {
        Self {
            values: Array1::zeros(num_states),
        }
    }

    pub fn constant(num_states: usize, value: f64) -> Self {
        Self {
            values: Array1::from_elem(num_states, value),
        }
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Discounted occupancy of a policy: state marginal and the induced
/// state-action measure (both sum to one).
#[derive(Debug, Clone)]
pub struct OccupancyMeasure {
    pub state: Array1<f64>,
    pub state_action: Array2<f64>,
}

/// Coverage of a comparator policy's occupancy by a behavior distribution.
///
/// `clipped` caps the occupancy at 1/S before taking the ratio; `unclipped`
/// does not. Pairs the comparator visits but the behavior never samples make
/// both ratios infinite, reported via `uncovered` rather than a panic.
#[derive(Debug, Clone)]
pub struct ConcentrabilityReport {
    pub clipped: f64,
    pub unclipped: f64,
    pub mu_min: f64,
    pub uncovered: bool,
}

pub(crate) fn validate_prob_vector(v: ArrayView1<'_, f64>, tol: f64) -> std::result::Result<(), String> {
    let mut sum = 0.0;
    for &x in v.iter() {
        if !x.is_finite() || x < 0.0 {
            return Err(format!("entry {x} is negative or not finite"));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > tol {
        return Err(format!("sums to {sum}, expected 1 within {tol:e}"));
    }
    Ok(())
}

/// Generic fixed-point loop shared by every value-iteration style solver.
///
/// Stops once successive iterates are within `tol * (1 - gamma) / (2 gamma)`
/// in sup norm (clamped to at most `tol`), which guarantees the result is
/// within `tol` of the fixed point of a `gamma`-contraction.
pub(crate) fn iterate_to_fixed_point<F>(
    backup: F,
    v0: Array1<f64>,
    gamma: f64,
    tol: f64,
) -> Result<(Array1<f64>, usize, f64)>
where
    F: Fn(&Array1<f64>) -> Array1<f64>,
{
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let threshold = if gamma > 0.0 {
        (tol * (1.0 - gamma) / (2.0 * gamma)).min(tol)
    } else {
        tol
    };
    let mut v = v0;
    for sweep in 1..=MAX_VI_SWEEPS {
        let next = backup(&v);
        let diff = v
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if diff <= threshold {
            return Ok((v, sweep, diff));
        }
    }
    Err(Error::Solver(format!(
        "value iteration did not converge within {MAX_VI_SWEEPS} sweeps"
    )))
}

/// One Bellman optimality backup on the true model; returns the new value
/// vector and the greedy action per state (lowest index on ties).
pub fn bellman_backup(mdp: &TabularMdp, v: &ValueFunction) -> (ValueFunction, DeterministicPolicy) {
    let (sn, an) = (mdp.num_states(), mdp.num_actions());
    let mut out = Array1::zeros(sn);
    let mut actions = vec![0usize; sn];
    for s in 0..sn {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..an {
            let q = mdp.reward[[s, a]] + mdp.discount * mdp.kernel_row(s, a).dot(&v.values);
            if q > best {
                best = q;
                best_a = a;
            }
        }
        out[s] = best;
        actions[s] = best_a;
    }
    (
        ValueFunction { values: out },
        DeterministicPolicy { actions },
    )
}

/// Classic value iteration on the exact model.
///
/// The returned value function is within `tol` of the optimum in sup norm and
/// the policy is greedy with respect to it.
pub fn exact_value_iteration(
    mdp: &TabularMdp,
    tol: f64,
) -> Result<(ValueFunction, DeterministicPolicy)> {
    let backup = |v: &Array1<f64>| {
        bellman_backup(
            mdp,
            &ValueFunction {
                values: v.clone(),
            },
        )
        .0
        .values
    };
    let (values, _, _) = iterate_to_fixed_point(backup, Array1::zeros(mdp.num_states()), mdp.discount, tol)?;
    let v = ValueFunction { values };
    let (_, policy) = bellman_backup(mdp, &v);
    Ok((v, policy))
}

/// Evaluate a fixed policy by solving `(I - gamma P_pi) V = r_pi` directly.
pub fn policy_evaluation(mdp: &TabularMdp, pi: &DeterministicPolicy) -> Result<ValueFunction> {
    let sn = mdp.num_states();
    check_policy(mdp, pi)?;
    let mut a = Array2::zeros((sn, sn));
    let mut b = Array1::zeros(sn);
    for s in 0..sn {
        let act = pi.action(s);
        b[s] = mdp.reward[[s, act]];
        let row = mdp.kernel_row(s, act);
        for sp in 0..sn {
            a[[s, sp]] = if s == sp { 1.0 } else { 0.0 } - mdp.discount * row[sp];
        }
    }
    let values = linalg::solve(a.clone(), b.clone())?;
    let residual = (&a.dot(&values) - &b)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::Solver(format!(
            "policy evaluation residual {residual:e} exceeds 1e-10"
        )));
    }
    Ok(ValueFunction { values })
}

/// Expected value of `v` under an initial distribution.
pub fn scalar_value(v: &ValueFunction, rho: ArrayView1<'_, f64>) -> f64 {
    v.values.dot(&rho)
}

/// Discounted occupancy of `pi`: solves the balance system
/// `d = (1 - gamma) * (I - gamma P_pi^T)^{-1} rho`.
pub fn occupancy_measure(mdp: &TabularMdp, pi: &DeterministicPolicy) -> Result<OccupancyMeasure> {
    let sn = mdp.num_states();
    check_policy(mdp, pi)?;
    let mut a = Array2::zeros((sn, sn));
    for s in 0..sn {
        let row = mdp.kernel_row(s, pi.action(s));
        for sp in 0..sn {
            // transposed: column s feeds state sp
            a[[sp, s]] = if s == sp { 1.0 } else { 0.0 } - mdp.discount * row[sp];
        }
    }
    let x = linalg::solve(a, mdp.initial_dist.clone())?;
    let mut state = x * (1.0 - mdp.discount);
    // occupancy is a probability vector up to solver noise; clamp dust
    for v in state.iter_mut() {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    }
    let total: f64 = state.sum();
    if (total - 1.0).abs() > 1e-10 || state.iter().any(|&v| v < 0.0) {
        return Err(Error::Solver(format!(
            "occupancy measure sums to {total}, outside tolerance"
        )));
    }
    let mut state_action = Array2::zeros((sn, mdp.num_actions()));
    for s in 0..sn {
        state_action[[s, pi.action(s)]] = state[s];
    }
    Ok(OccupancyMeasure {
        state,
        state_action,
    })
}

/// Concentrability of a behavior distribution `mu` with respect to the
/// occupancy of `pi_star`:
///
///   clipped   = max over visited pairs of min(d(s,a), 1/S) / mu(s,a)
///   unclipped = max over visited pairs of d(s,a) / mu(s,a)
///
/// Maxima run over pairs with d(s,a) > 0; a visited pair with mu(s,a) = 0
/// makes both coefficients infinite and sets `uncovered`.
pub fn concentrability(
    mdp: &TabularMdp,
    pi_star: &DeterministicPolicy,
    mu: &BehaviorDistribution,
) -> Result<ConcentrabilityReport> {
    if mu.num_states() != mdp.num_states() || mu.num_actions() != mdp.num_actions() {
        return Err(Error::InvalidDistribution(
            "behavior distribution shape does not match the MDP".into(),
        ));
    }
    mu.validate(1e-10)?;
    let occ = occupancy_measure(mdp, pi_star)?;
    let cap = 1.0 / mdp.num_states() as f64;
    let mut clipped = 0.0f64;
    let mut unclipped = 0.0f64;
    let mut uncovered = false;
    for ((s, a), &d) in occ.state_action.indexed_iter() {
        if d <= 0.0 {
            continue;
        }
        let m = mu.weight(s, a);
        if m == 0.0 {
            uncovered = true;
            clipped = f64::INFINITY;
            unclipped = f64::INFINITY;
        } else {
            clipped = clipped.max(d.min(cap) / m);
            unclipped = unclipped.max(d / m);
        }
    }
    let mu_min = mu
        .weights()
        .iter()
        .copied()
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    Ok(ConcentrabilityReport {
        clipped,
        unclipped,
        mu_min,
        uncovered,
    })
}

fn check_policy(mdp: &TabularMdp, pi: &DeterministicPolicy) -> Result<()> {
    if pi.num_states() != mdp.num_states() {
        return Err(Error::invalid("policy length does not match state count"));
    }
    if let Some(&bad) = pi.actions().iter().find(|&&a| a >= mdp.num_actions()) {
        return Err(Error::invalid(format!("policy action {bad} out of range")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    fn single_state_mdp(reward: f64, gamma: f64) -> TabularMdp {
        let mut kernel = Array3::zeros((1, 1, 1));
        kernel[[0, 0, 0]] = 1.0;
        TabularMdp::new(kernel, array![[reward]], gamma, array![1.0]).unwrap()
    }

    /// Two-state chain: s0 -> s1 under every action, s1 absorbing,
    /// r(s0, .) = 0, r(s1, .) = 1.
    fn two_state_chain(gamma: f64) -> TabularMdp {
        let mut kernel = Array3::zeros((2, 1, 2));
        kernel[[0, 0, 1]] = 1.0;
        kernel[[1, 0, 1]] = 1.0;
        TabularMdp::new(kernel, array![[0.0], [1.0]], gamma, array![1.0, 0.0]).unwrap()
    }

    #[test]
    fn vi_single_state_geometric_series() {
        let mdp = single_state_mdp(1.0, 0.9);
        let (v, _) = exact_value_iteration(&mdp, 1e-9).unwrap();
        assert!((v.values[0] - 10.0).abs() <= 1e-9);
    }

    #[test]
    fn vi_zero_reward_gives_zero_value() {
        let mut kernel = Array3::zeros((3, 2, 3));
        for s in 0..3 {
            for a in 0..2 {
                kernel[[s, a, (s + a) % 3]] = 1.0;
            }
        }
        let reward = Array2::zeros((3, 2));
        let mdp = TabularMdp::new(kernel, reward, 0.8, array![1.0, 0.0, 0.0]).unwrap();
        let (v, _) = exact_value_iteration(&mdp, 1e-10).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vi_two_state_chain_hand_solve() {
        // V(s1) = 1 / (1 - 0.5) = 2, V(s0) = 0 + 0.5 * V(s1) = 1
        let mdp = two_state_chain(0.5);
        let (v, _) = exact_value_iteration(&mdp, 1e-10).unwrap();
        assert!((v.values[1] - 2.0).abs() <= 1e-10);
        assert!((v.values[0] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn policy_evaluation_single_state() {
        let mdp = single_state_mdp(1.0, 0.9);
        let pi = DeterministicPolicy::new(vec![0], 1).unwrap();
        let v = policy_evaluation(&mdp, &pi).unwrap();
        assert!((v.values[0] - 10.0).abs() <= 1e-10);
    }

    #[test]
    fn policy_evaluation_matches_vi_on_greedy_policy() {
        let mdp = crate::garnet::generate_garnet(6, 3, 11).unwrap();
        let tol = 1e-8;
        let (v, pi) = exact_value_iteration(&mdp, tol).unwrap();
        let v_pi = policy_evaluation(&mdp, &pi).unwrap();
        assert!(v.sup_distance(&v_pi) <= 2.0 * tol);
    }

    #[test]
    fn policy_evaluation_matches_monte_carlo_rollouts() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        let mdp = crate::garnet::generate_garnet_with(5, 2, 17, 0.9, None).unwrap();
        let pi = DeterministicPolicy::new(vec![0, 1, 0, 1, 0], 2).unwrap();
        let v = policy_evaluation(&mdp, &pi).unwrap();

        // Truncated rollouts from state 0; horizon long enough that the
        // discarded tail is below 1e-8.
        let horizon = 200;
        let n_traj = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mut returns = Vec::with_capacity(n_traj);
        for _ in 0..n_traj {
            let mut s = 0usize;
            let mut acc = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                let a = pi.action(s);
                acc += disc * mdp.reward()[[s, a]];
                disc *= mdp.discount();
                let u: f64 = rng.gen();
                let row = mdp.kernel_row(s, a);
                let mut c = 0.0;
                let mut next = mdp.num_states() - 1;
                for (j, &p) in row.iter().enumerate() {
                    c += p;
                    if u < c {
                        next = j;
                        break;
                    }
                }
                s = next;
            }
            returns.push(acc);
        }
        let mean: f64 = returns.iter().sum::<f64>() / n_traj as f64;
        let var: f64 =
            returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n_traj as f64 - 1.0);
        let se = (var / n_traj as f64).sqrt();
        assert!(
            (v.values[0] - mean).abs() <= 3.0 * se,
            "exact {} vs MC {} +- {}",
            v.values[0],
            mean,
            se
        );
    }

    #[test]
    fn scalar_value_examples() {
        let v = ValueFunction {
            values: array![0.0, 2.0],
        };
        assert_eq!(scalar_value(&v, array![0.0, 1.0].view()), 2.0);
        assert!((scalar_value(&v, array![0.5, 0.5].view()) - 1.0).abs() < 1e-15);
        let v2 = ValueFunction {
            values: array![1.0, 2.0],
        };
        assert!((scalar_value(&v2, array![0.3, 0.7].view()) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn occupancy_absorbing_state() {
        let mdp = single_state_mdp(0.3, 0.7);
        let pi = DeterministicPolicy::new(vec![0], 1).unwrap();
        let occ = occupancy_measure(&mdp, &pi).unwrap();
        assert!((occ.state[0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn occupancy_small_discount_recovers_rho() {
        let mdp = two_state_chain(0.5).with_discount(1e-9).unwrap();
        let pi = DeterministicPolicy::new(vec![0, 0], 1).unwrap();
        let occ = occupancy_measure(&mdp, &pi).unwrap();
        assert!((occ.state[0] - 1.0).abs() <= 1e-6);
        assert!(occ.state[1].abs() <= 1e-6);
    }

    #[test]
    fn occupancy_matches_truncated_series() {
        // 3-state chain 0 -> 1 -> 2 -> 2
        let mut kernel = Array3::zeros((3, 1, 3));
        kernel[[0, 0, 1]] = 1.0;
        kernel[[1, 0, 2]] = 1.0;
        kernel[[2, 0, 2]] = 1.0;
        let mdp = TabularMdp::new(
            kernel,
            array![[0.0], [0.5], [1.0]],
            0.9,
            array![1.0, 0.0, 0.0],
        )
        .unwrap();
        let pi = DeterministicPolicy::new(vec![0, 0, 0], 1).unwrap();
        let occ = occupancy_measure(&mdp, &pi).unwrap();

        // oracle: d(s) = (1 - gamma) * sum_{t <= 200} gamma^t P(S_t = s)
        let mut dist = array![1.0, 0.0, 0.0];
        let mut oracle = Array1::<f64>::zeros(3);
        let mut disc = 1.0;
        for _ in 0..=200 {
            for s in 0..3 {
                oracle[s] += (1.0 - 0.9) * disc * dist[s];
            }
            let mut next = Array1::<f64>::zeros(3);
            for s in 0..3 {
                let row = mdp.kernel_row(s, 0);
                for sp in 0..3 {
                    next[sp] += dist[s] * row[sp];
                }
            }
            dist = next;
            disc *= 0.9;
        }
        for s in 0..3 {
            assert!((occ.state[s] - oracle[s]).abs() <= 1e-8);
        }
    }

    #[test]
    fn concentrability_examples() {
        let mdp = crate::garnet::generate_garnet(4, 2, 3).unwrap();
        let (_, pi) = exact_value_iteration(&mdp, 1e-9).unwrap();
        let occ = occupancy_measure(&mdp, &pi).unwrap();

        // mu equal to the occupancy itself: unclipped coefficient is 1
        let mu = BehaviorDistribution::new(occ.state_action.clone()).unwrap();
        let rep = concentrability(&mdp, &pi, &mu).unwrap();
        assert!((rep.unclipped - 1.0).abs() <= 1e-9);
        assert!(rep.clipped <= 1.0 + 1e-9);
        assert!(!rep.uncovered);

        // uniform mu: unclipped = S * A * max d(s,a)
        let uniform = crate::data::behavior_uniform(4, 2);
        let rep = concentrability(&mdp, &pi, &uniform).unwrap();
        let max_d = occ.state_action.iter().cloned().fold(0.0, f64::max);
        assert!((rep.unclipped - 8.0 * max_d).abs() <= 1e-9);
        assert!(rep.clipped <= rep.unclipped);
        assert!((rep.mu_min - 0.125).abs() <= 1e-15);

        // a visited pair with zero behavior weight is reported as uncovered
        let mut w = occ.state_action.clone();
        let visited = w
            .indexed_iter()
            .find(|(_, &d)| d > 0.0)
            .map(|((s, a), _)| (s, a))
            .unwrap();
        let shifted = w
            .indexed_iter()
            .find(|((s, a), _)| (*s, *a) != visited)
            .map(|((s, a), _)| (s, a))
            .unwrap();
        let moved = w[[visited.0, visited.1]];
        w[[visited.0, visited.1]] = 0.0;
        w[[shifted.0, shifted.1]] += moved;
        let mu = BehaviorDistribution::new(w).unwrap();
        let rep = concentrability(&mdp, &pi, &mu).unwrap();
        assert!(rep.uncovered);
        assert!(rep.clipped.is_infinite() && rep.unclipped.is_infinite());
    }

    #[test]
    fn concentrability_rejects_unnormalized_mu() {
        let mdp = crate::garnet::generate_garnet(3, 2, 5).unwrap();
        let (_, pi) = exact_value_iteration(&mdp, 1e-9).unwrap();
        let w = Array2::from_elem((3, 2), 0.2);
        assert!(BehaviorDistribution::new(w).is_err());
        let mut w = Array2::from_elem((3, 2), 1.0 / 6.0);
        w[[0, 0]] += 1e-6;
        let mu = BehaviorDistribution {
            weights: w,
        };
        assert!(concentrability(&mdp, &pi, &mu).is_err());
    }

    #[test]
    fn vi_iterates_contract_toward_fixed_point() {
        let mdp = crate::garnet::generate_garnet(6, 3, 7).unwrap();
        let (v_star, _) = exact_value_iteration(&mdp, 1e-12).unwrap();
        let mut v = ValueFunction::zeros(6);
        let mut dist = v.sup_distance(&v_star);
        for _ in 0..60 {
            let (next, _) = bellman_backup(&mdp, &v);
            let next_dist = next.sup_distance(&v_star);
            assert!(next_dist <= mdp.discount() * dist + 1e-12);
            v = next;
            dist = next_dist;
        }
    }

    #[test]
    fn rejects_invalid_models() {
        let mut kernel = Array3::zeros((1, 1, 1));
        kernel[[0, 0, 0]] = 1.0;
        // reward out of range
        assert!(TabularMdp::new(kernel.clone(), array![[1.5]], 0.9, array![1.0]).is_err());
        // discount out of range
        assert!(TabularMdp::new(kernel.clone(), array![[0.5]], 1.0, array![1.0]).is_err());
        // row does not sum to one
        let mut bad = Array3::zeros((1, 1, 1));
        bad[[0, 0, 0]] = 0.5;
        assert!(TabularMdp::new(bad, array![[0.5]], 0.9, array![1.0]).is_err());
        // rho does not sum to one
        let mut kernel2 = Array3::zeros((2, 1, 2));
        kernel2[[0, 0, 1]] = 1.0;
        kernel2[[1, 0, 0]] = 1.0;
        assert!(TabularMdp::new(kernel2, array![[0.5], [0.5]], 0.9, array![0.4, 0.4]).is_err());
    }

    #[test]
    fn mdp_file_round_trip() {
        let mdp = crate::garnet::generate_garnet(5, 3, 123).unwrap();
        let dir = std::env::temp_dir().join("robust_offline_rl_mdp_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.json");
        mdp.save(&path).unwrap();
        let back = TabularMdp::load(&path).unwrap();
        assert_eq!(back.num_states(), 5);
        assert_eq!(back.num_actions(), 3);
        for (idx, v) in mdp.kernel().indexed_iter() {
            assert!((back.kernel()[idx] - v).abs() <= 1e-12);
        }
        for (idx, v) in mdp.reward().indexed_iter() {
            assert!((back.reward()[idx] - v).abs() <= 1e-12);
        }
        assert!((back.discount() - mdp.discount()).abs() <= 1e-15);
    }
}
