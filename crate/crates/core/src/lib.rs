//! Robust offline reinforcement learning laboratory.
//!
//! The crate bundles four pieces that together make a self-contained desk-scale
//! testbed for conservative-smoothing offline RL:
//!
//! * [`nn`] — a minimal feedforward substrate (MLPs with explicit reverse-mode
//!   gradients, a squashed-Gaussian policy, Adam).
//! * [`envs`] — toy continuous-control environments plus offline dataset
//!   generation, observation normalization, and score normalization.
//! * [`rorl`] — ensemble soft Q-learning with conservative smoothing on
//!   perturbed states and OOD-state pessimism.
//! * [`theory`] — numerical checks of the linear-MDP analysis behind the
//!   training losses: LSVI closed forms, covariance decompositions,
//!   positive-definiteness, LCB penalties, and pessimistic value iteration.
//! * [`attacks`] — adversarial observation attacks and robustness evaluation.

pub mod attacks;
pub mod envs;
pub mod nn;
pub mod rng;
pub mod rorl;
pub mod theory;
