//! Random tabular MDP generator in the Garnet style.
//!
//! Per `(s, a)` pair: draw `omega, sigma, nu, psi ~ Uniform[0, 100]`, fill the
//! kernel row with `Normal(omega, sigma)` draws clamped at zero and
//! renormalized (uniform fallback for an all-zero row), and draw one raw
//! reward from `Normal(nu, psi)`. Raw rewards are rescaled affinely onto
//! `[0, 1]` over the whole grid afterwards, which preserves the reward
//! ordering; a constant grid maps to 0.5 everywhere.

use crate::error::Error;
use crate::mdp::TabularMdp;
use crate::Result;
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const DEFAULT_DISCOUNT: f64 = 0.95;

/// Generate with the default discount (0.95) and uniform initial state.
pub fn generate_garnet(num_states: usize, num_actions: usize, seed: u64) -> Result<TabularMdp> {
    generate_garnet_with(num_states, num_actions, seed, DEFAULT_DISCOUNT, None)
}

pub fn generate_garnet_with(
    num_states: usize,
    num_actions: usize,
    seed: u64,
    discount: f64,
    initial_dist: Option<Array1<f64>>,
) -> Result<TabularMdp> {
    if num_states < 2 {
        return Err(Error::invalid("garnet requires at least 2 states"));
    }
    if num_actions == 0 {
        return Err(Error::invalid("garnet requires at least 1 action"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kernel = Array3::zeros((num_states, num_actions, num_states));
    let mut raw_reward = Array2::zeros((num_states, num_actions));
    for s in 0..num_states {
        for a in 0..num_actions {
            let omega: f64 = rng.gen_range(0.0..100.0);
            let sigma: f64 = rng.gen_range(0.0..100.0);
            let nu: f64 = rng.gen_range(0.0..100.0);
            let psi: f64 = rng.gen_range(0.0..100.0);
            let kernel_dist = Normal::new(omega, sigma)
                .map_err(|e| Error::Solver(format!("normal distribution: {e}")))?;
            let mut sum = 0.0;
            for sp in 0..num_states {
                let x: f64 = kernel_dist.sample(&mut rng).max(0.0);
                kernel[[s, a, sp]] = x;
                sum += x;
            }
            if sum > 0.0 {
                for sp in 0..num_states {
                    kernel[[s, a, sp]] /= sum;
                }
            } else {
                for sp in 0..num_states {
                    kernel[[s, a, sp]] = 1.0 / num_states as f64;
                }
            }
            let reward_dist = Normal::new(nu, psi)
                .map_err(|e| Error::Solver(format!("normal distribution: {e}")))?;
            raw_reward[[s, a]] = reward_dist.sample(&mut rng);
        }
    }
    let lo = raw_reward.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw_reward.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let reward = if hi > lo {
        raw_reward.mapv(|r| ((r - lo) / (hi - lo)).clamp(0.0, 1.0))
    } else {
        Array2::from_elem((num_states, num_actions), 0.5)
    };
    let rho = initial_dist
        .unwrap_or_else(|| Array1::from_elem(num_states, 1.0 / num_states as f64));
    TabularMdp::new(kernel, reward, discount, rho)
}
