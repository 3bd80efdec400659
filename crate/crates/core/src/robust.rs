//! L1 uncertainty sets and robust value iteration.
//!
//! Each empirical transition row `p_hat(s, a)` is wrapped in the set
//! `{ q in simplex : ||q - p_hat||_1 <= R(s, a) }`. The robust Bellman backup
//! replaces the expectation over the next state with the support function
//!
//!   sigma(p_hat, R, V) = min { q^T V : q in the set },
//!
//! the pessimistic expected next-state value. Two radius schedules are
//! provided: `hoeffding`, `sqrt(log(SA / delta) / (2 N(s,a)))`, large enough
//! that the true row stays inside the set with probability `1 - delta`, and
//! `bernstein`, `log(N / delta) / N(s,a)`, an order smaller in `N(s,a)`.
//! Both clamp at 2 (the L1 diameter of the simplex), so unvisited pairs get
//! the whole simplex.

use crate::data::{EmpiricalModel, OfflineDataset};
use crate::error::Error;
use crate::mdp::{
    iterate_to_fixed_point, validate_prob_vector, DeterministicPolicy, ValueFunction,
};
use crate::Result;
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Exact-tie widening used when extracting argmax sets from converged values.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Slack before a missing sampled greedy action is reported as a solver bug.
pub const SAMPLED_ACTION_SLACK: f64 = 1e-6;
const ORACLE_MAX_STATES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusKind {
    Hoeffding,
    Bernstein,
}

/// Radius schedule plus its confidence level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusStyle {
    pub kind: RadiusKind,
    pub delta: f64,
}

impl RadiusStyle {
    pub fn new(kind: RadiusKind, delta: f64) -> Result<Self> {
        // radii explode as delta -> 0 and vanish as delta -> 1
        if !(1e-6..=0.5).contains(&delta) {
            return Err(Error::invalid(format!(
                "delta must lie in [1e-6, 0.5], got {delta}"
            )));
        }
        Ok(Self { kind, delta })
    }

    pub fn hoeffding(delta: f64) -> Result<Self> {
        Self::new(RadiusKind::Hoeffding, delta)
    }

    pub fn bernstein(delta: f64) -> Result<Self> {
        Self::new(RadiusKind::Bernstein, delta)
    }
}

/// Per-pair uncertainty radii from visit counts.
///
/// `n_total` is the dataset size; the bernstein schedule needs it positive.
/// Pairs with no samples get radius 2 under both schedules.
pub fn radius_table(
    counts: &Array2<u64>,
    style: &RadiusStyle,
    n_total: u64,
) -> Result<Array2<f64>> {
    let (s, a) = counts.dim();
    let log_term = match style.kind {
        RadiusKind::Hoeffding => ((s * a) as f64 / style.delta).ln(),
        RadiusKind::Bernstein => {
            if n_total == 0 {
                return Err(Error::invalid(
                    "bernstein radius needs a nonempty dataset".to_string(),
                ));
            }
            (n_total as f64 / style.delta).ln()
        }
    };
    let mut out = Array2::zeros((s, a));
    for ((i, j), &n) in counts.indexed_iter() {
        out[[i, j]] = if n == 0 {
            2.0
        } else {
            let raw = match style.kind {
                RadiusKind::Hoeffding => (log_term / (2.0 * n as f64)).sqrt(),
                RadiusKind::Bernstein => log_term / n as f64,
            };
            raw.min(2.0)
        };
    }
    Ok(out)
}

fn validate_sigma_inputs(p_hat: ArrayView1<'_, f64>, radius: f64, v: ArrayView1<'_, f64>) -> Result<()> {
    if !radius.is_finite() || radius < 0.0 {
        return Err(Error::invalid(format!("radius must be >= 0, got {radius}")));
    }
    if p_hat.len() != v.len() {
        return Err(Error::invalid("p_hat and v lengths differ"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("value vector has non-finite entries"));
    }
    validate_prob_vector(p_hat, 1e-9).map_err(Error::InvalidDistribution)
}

/// States sorted by value, largest first, ties by ascending index.
fn descending_order(v: ArrayView1<'_, f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    idx
}

fn argmin_low_index(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

/// Greedy transfer with the sort precomputed; exact minimizer of `q^T v`.
///
/// Total movable mass is `min(R / 2, 1 - p_hat[receiver])`: one unit moved
/// costs two units of L1 budget, and the receiver cannot exceed mass one.
/// Mass lands on the minimum-value state and is drained from the
/// largest-value states first.
fn support_function_presorted(
    p_hat: ArrayView1<'_, f64>,
    radius: f64,
    v: ArrayView1<'_, f64>,
    order_desc: &[usize],
    receiver: usize,
) -> f64 {
    let eps = (radius / 2.0).min(1.0 - p_hat[receiver]).max(0.0);
    let mut value = p_hat.dot(&v) + eps * v[receiver];
    let mut remaining = eps;
    for &i in order_desc {
        if remaining <= 0.0 {
            break;
        }
        if i == receiver {
            continue;
        }
        let take = p_hat[i].min(remaining);
        value -= take * v[i];
        remaining -= take;
    }
    value
}

/// Support function of the L1 uncertainty set: exact minimum of `q^T v` over
/// `{ q in simplex : ||q - p_hat||_1 <= radius }`, in `O(S log S)`.
pub fn support_function(
    p_hat: ArrayView1<'_, f64>,
    radius: f64,
    v: ArrayView1<'_, f64>,
) -> Result<f64> {
    validate_sigma_inputs(p_hat, radius, v)?;
    let order = descending_order(v);
    let receiver = argmin_low_index(v);
    Ok(support_function_presorted(p_hat, radius, v, &order, receiver))
}

/// Span-penalty dual form of the support function:
///
///   max over 0 <= mu <= v of  p_hat^T (v - mu) - radius * span(v - mu).
///
/// The maximizer caps the value vector, `mu = max(v - theta, 0)`, so the
/// search is one-dimensional over the cap `theta`; the objective is piecewise
/// linear in `theta` with breakpoints at the entries of `v`, so scanning
/// those is exact. Note the penalty coefficient corresponds to an L1 ball of
/// twice the radius: this form at radius R equals `support_function` at
/// radius 2R (see the cross-check tests). It is kept as a secondary route for
/// validating the primal, not used inside the solver.
pub fn support_function_dual(
    p_hat: ArrayView1<'_, f64>,
    radius: f64,
    v: ArrayView1<'_, f64>,
) -> Result<f64> {
    validate_sigma_inputs(p_hat, radius, v)?;
    if v.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid(
            "dual form requires a nonnegative value vector",
        ));
    }
    let mut best = f64::NEG_INFINITY;
    for &theta in v.iter() {
        let mut expect = 0.0;
        let mut cap_max = f64::NEG_INFINITY;
        let mut cap_min = f64::INFINITY;
        for (i, &p) in p_hat.iter().enumerate() {
            let capped = v[i].min(theta);
            expect += p * capped;
            cap_max = cap_max.max(capped);
            cap_min = cap_min.min(capped);
        }
        best = best.max(expect - radius * (cap_max - cap_min));
    }
    Ok(best)
}

/// Brute-force oracle for `support_function`: exhaustive enumeration of the
/// vertices of `{ q in simplex : ||q - p_hat||_1 <= radius }`.
///
/// Every vertex has at most two coordinates away from `{0, p_hat[i]}`: one
/// receiver above `p_hat` and at most one partially drained donor, the rest
/// either untouched or drained to zero. Enumerating (receiver, drained
/// subset, partial donor) covers all vertices, so the minimum over them is
/// the exact LP optimum. Exponential in S; rejected above test scale.
pub fn support_function_lp_oracle(
    p_hat: ArrayView1<'_, f64>,
    radius: f64,
    v: ArrayView1<'_, f64>,
) -> Result<f64> {
    validate_sigma_inputs(p_hat, radius, v)?;
    let s = v.len();
    if s > ORACLE_MAX_STATES {
        return Err(Error::invalid(format!(
            "oracle supports at most {ORACLE_MAX_STATES} states, got {s}"
        )));
    }
    let budget = radius / 2.0;
    let base = p_hat.dot(&v);
    let mut best = base;
    for receiver in 0..s {
        let others: Vec<usize> = (0..s).filter(|&i| i != receiver).collect();
        let m = others.len();
        for mask in 0u32..(1 << m) {
            let mut drained_mass = 0.0;
            let mut drained_value = 0.0;
            for (k, &i) in others.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    drained_mass += p_hat[i];
                    drained_value += p_hat[i] * v[i];
                }
            }
            if drained_mass <= budget {
                let value = base + drained_mass * v[receiver] - drained_value;
                best = best.min(value);
                let slack = budget - drained_mass;
                if slack > 0.0 {
                    for (k, &b) in others.iter().enumerate() {
                        if mask & (1 << k) != 0 {
                            continue;
                        }
                        let x = p_hat[b].min(slack);
                        let value = base + (drained_mass + x) * v[receiver]
                            - drained_value
                            - x * v[b];
                        best = best.min(value);
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Empirical model wrapped in per-pair L1 uncertainty sets.
#[derive(Debug, Clone)]
pub struct EmpiricalRobustModel {
    pub model: EmpiricalModel,
    pub radius: Array2<f64>,
    pub style: RadiusStyle,
    pub gamma: f64,
}

impl EmpiricalRobustModel {
    /// Build with radii derived from the model's visit counts.
    pub fn new(model: EmpiricalModel, style: RadiusStyle, gamma: f64) -> Result<Self> {
        let radius = radius_table(&model.counts, &style, model.total_count())?;
        Self::with_radius(model, radius, style, gamma)
    }

    /// Build with an explicit radius table (used by tests and the radius
    /// override escape hatch; entries must lie in `[0, 2]`).
    pub fn with_radius(
        model: EmpiricalModel,
        radius: Array2<f64>,
        style: RadiusStyle,
        gamma: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!(
                "discount must lie in [0, 1), got {gamma}"
            )));
        }
        if radius.dim() != model.counts.dim() {
            return Err(Error::invalid("radius table shape mismatch"));
        }
        if let Some(&bad) = radius.iter().find(|r| !(0.0..=2.0).contains(*r)) {
            return Err(Error::invalid(format!(
                "radius {bad} outside [0, 2]"
            )));
        }
        for s in 0..model.num_states() {
            for a in 0..model.num_actions() {
                validate_prob_vector(model.kernel_row(s, a), 1e-9)
                    .map_err(|e| Error::InvalidModel(format!("empirical row ({s},{a}): {e}")))?;
            }
        }
        Ok(Self {
            model,
            radius,
            style,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.model.num_actions()
    }
}

/// Output of robust value iteration.
#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub value: ValueFunction,
    pub policy: DeterministicPolicy,
    pub iterations: usize,
    pub residual: f64,
}

/// One robust Bellman backup (Jacobi sweep):
/// `V'(s) = max_a { r_hat(s,a) + gamma * sigma(p_hat(s,a), R(s,a), V) }`,
/// with the greedy action recorded per state (lowest index on ties).
pub fn robust_bellman_apply(
    model: &EmpiricalRobustModel,
    v: &ValueFunction,
) -> (ValueFunction, DeterministicPolicy) {
    let (values, q) = robust_backup(model, &v.values);
    let mut actions = vec![0usize; model.num_states()];
    for s in 0..model.num_states() {
        let mut best = f64::NEG_INFINITY;
        for a in 0..model.num_actions() {
            if q[[s, a]] > best {
                best = q[[s, a]];
                actions[s] = a;
            }
        }
    }
    (
        ValueFunction { values },
        DeterministicPolicy::new(actions, model.num_actions()).expect("actions in range"),
    )
}

/// Backup returning the full action-value table; the sort over the previous
/// iterate is shared by every `(s, a)` pair, giving `O(S^2 A + S log S)` per
/// sweep.
fn robust_backup(model: &EmpiricalRobustModel, values: &Array1<f64>) -> (Array1<f64>, Array2<f64>) {
    let (sn, an) = (model.num_states(), model.num_actions());
    let view = values.view();
    let order = descending_order(view);
    let receiver = argmin_low_index(view);
    let mut q = Array2::zeros((sn, an));
    let mut out = Array1::zeros(sn);
    for s in 0..sn {
        let mut best = f64::NEG_INFINITY;
        for a in 0..an {
            let sigma = support_function_presorted(
                model.model.kernel_row(s, a),
                model.radius[[s, a]],
                view,
                &order,
                receiver,
            );
            let qv = model.model.reward[[s, a]] + model.gamma * sigma;
            q[[s, a]] = qv;
            if qv > best {
                best = qv;
            }
        }
        out[s] = best;
    }
    (out, q)
}

/// Robust value iteration from `V = 0`.
pub fn robust_value_iteration(model: &EmpiricalRobustModel, tol: f64) -> Result<RobustSolution> {
    robust_value_iteration_from(model, ValueFunction::zeros(model.num_states()), tol)
}

/// Robust value iteration from an explicit initial value vector.
pub fn robust_value_iteration_from(
    model: &EmpiricalRobustModel,
    v0: ValueFunction,
    tol: f64,
) -> Result<RobustSolution> {
    let backup = |v: &Array1<f64>| robust_backup(model, v).0;
    let (values, iterations, residual) =
        iterate_to_fixed_point(backup, v0.values, model.gamma, tol)?;
    let value = ValueFunction { values };
    let (_, policy) = robust_bellman_apply(model, &value);
    Ok(RobustSolution {
        value,
        policy,
        iterations,
        residual,
    })
}

/// Robust value iteration with sampled-action policy extraction.
///
/// Same fixed point as `robust_value_iteration`; the greedy policy at states
/// with `N(s) > 0` is restricted to actions that appear in the dataset. An
/// argmax-tied sampled action always exists at the exact fixed point, so
/// failing to find one within `SAMPLED_ACTION_SLACK` of the maximum is
/// reported as a solver bug rather than silently ignored.
pub fn robust_value_iteration_bernstein(
    model: &EmpiricalRobustModel,
    data: &OfflineDataset,
    tol: f64,
) -> Result<RobustSolution> {
    if model.style.kind != RadiusKind::Bernstein {
        return Err(Error::invalid(
            "sampled-action extraction is defined for bernstein-style models",
        ));
    }
    if *data.counts_sa() != model.model.counts {
        return Err(Error::invalid(
            "dataset counts do not match the model's counts",
        ));
    }
    let backup = |v: &Array1<f64>| robust_backup(model, v).0;
    let (values, iterations, residual) = iterate_to_fixed_point(
        backup,
        Array1::zeros(model.num_states()),
        model.gamma,
        tol,
    )?;
    let (_, q) = robust_backup(model, &values);
    let (sn, an) = (model.num_states(), model.num_actions());
    let mut actions = vec![0usize; sn];
    for s in 0..sn {
        let qmax = (0..an).map(|a| q[[s, a]]).fold(f64::NEG_INFINITY, f64::max);
        if data.counts_s()[s] == 0 {
            // no restriction possible; plain argmax, lowest index on ties
            let mut best = f64::NEG_INFINITY;
            for a in 0..an {
                if q[[s, a]] > best {
                    best = q[[s, a]];
                    actions[s] = a;
                }
            }
        } else {
            let sampled = |a: usize| data.counts_sa()[[s, a]] > 0;
            let within = |a: usize, tol: f64| qmax - q[[s, a]] <= tol;
            let pick = (0..an)
                .find(|&a| sampled(a) && within(a, TIE_TOLERANCE))
                .or_else(|| (0..an).find(|&a| sampled(a) && within(a, SAMPLED_ACTION_SLACK)));
            match pick {
                Some(a) => actions[s] = a,
                None => {
                    return Err(Error::NoSampledGreedyAction {
                        state: s,
                        tolerance: SAMPLED_ACTION_SLACK,
                    })
                }
            }
        }
    }
    Ok(RobustSolution {
        value: ValueFunction { values },
        policy: DeterministicPolicy::new(actions, an)?,
        iterations,
        residual,
    })
}

/// On-disk solution document:
/// `{value: [S], policy: [S], iterations, residual, style, delta}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub value: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub style: String,
    pub delta: f64,
}

impl SolutionRecord {
    pub fn new(solution: &RobustSolution, style: impl Into<String>, delta: f64) -> Self {
        Self {
            value: solution.value.values.to_vec(),
            policy: solution.policy.actions().to_vec(),
            iterations: solution.iterations,
            residual: solution.residual,
            style: style.into(),
            delta,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Solver(format!("serialize solution: {e}")))?;
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
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
