//! Composite timestep reward and the two episode objectives.
//!
//! The timestep reward is a sum of three terms over the node concentrations
//! `c` (mg/L) and injection actions `a`:
//!
//! ```text
//! penalty = (-10/K) * sum_i [ max(c_i - 0.4, 0) + 5 * max(0.2 - c_i, 0) ]
//! bonus   = ( 5/K)  * #{ i : 0.2 <= c_i <= 0.4 }
//! cost    = -0.1 * sum_j a_j
//! ```
//!
//! Deviations below the lower bound carry 5x the weight of deviations above
//! the upper bound. The in-range band is the closed interval [0.2, 0.4].

use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};

/// Regulatory band on node concentrations, mg/L.
pub const BAND_LOW: f64 = 0.2;
pub const BAND_HIGH: f64 = 0.4;
/// Scale of the violation penalty term.
pub const PENALTY_SCALE: f64 = 10.0;
/// Per-node bonus scale for being inside the band.
pub const BONUS_SCALE: f64 = 5.0;
/// Extra weight on lower-bound violations.
pub const LOWER_WEIGHT: f64 = 5.0;
/// Weight of the injection cost term.
pub const COST_WEIGHT: f64 = 0.1;

/// The three components of the timestep reward plus their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub penalty_cl: f64,
    pub bonus_cl: f64,
    pub cost_cl: f64,
    pub total: f64,
}

impl RewardComponents {
    /// The concentration-dependent part (penalty + bonus), which is what the
    /// surrogate predicts; the cost part is an exact function of the actions.
    pub fn concentration_component(&self) -> f64 {
        self.penalty_cl + self.bonus_cl
    }
}

/// Episode-level objectives, both minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    /// Fraction of (node, timestep) pairs outside [BAND_LOW, BAND_HIGH].
    pub violation: f64,
    /// Total injected chlorine over the episode, unit injections.
    pub cost: f64,
}

impl ObjectiveVector {
    pub fn as_array(&self) -> [f64; 2] {
        [self.violation, self.cost]
    }

    pub fn is_finite(&self) -> bool {
        self.violation.is_finite() && self.cost.is_finite()
    }
}

/// Composite reward of one timestep.
pub fn timestep_reward(concentrations: &[f64], actions: &[f64]) -> Result<RewardComponents> {
    let k = concentrations.len();
    if k == 0 {
        return Err(Error::EmptyInput("timestep_reward needs at least one node"));
    }
    if concentrations.iter().chain(actions.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "timestep_reward got a non-finite concentration or action".into(),
        ));
    }

    let mut hinge_sum = 0.0;
    let mut in_range = 0usize;
    for &c in concentrations {
        hinge_sum += (c - BAND_HIGH).max(0.0) + LOWER_WEIGHT * (BAND_LOW - c).max(0.0);
        if (BAND_LOW..=BAND_HIGH).contains(&c) {
            in_range += 1;
        }
    }
    let penalty_cl = -PENALTY_SCALE / k as f64 * hinge_sum;
    let bonus_cl = BONUS_SCALE / k as f64 * in_range as f64;
    let cost_cl = -COST_WEIGHT * actions.iter().sum::<f64>();

    Ok(RewardComponents {
        penalty_cl,
        bonus_cl,
        cost_cl,
        total: penalty_cl + bonus_cl + cost_cl,
    })
}

/// Count of nodes outside the band; the per-step contribution to `violation`.
pub fn out_of_band_count(concentrations: &[f64]) -> usize {
    concentrations
        .iter()
        .filter(|c| !(BAND_LOW..=BAND_HIGH).contains(*c))
        .count()
}

/// Episode objectives from a full trajectory.
pub fn episode_objectives(traj: &Trajectory) -> Result<ObjectiveVector> {
    if traj.steps.is_empty() {
        return Err(Error::EmptyInput("episode_objectives needs a non-empty trajectory"));
    }
    let k = traj.num_nodes;
    let t = traj.steps.len();
    let violations: usize = traj.steps.iter().map(|s| s.violations).sum();
    let cost: f64 = traj
        .steps
        .iter()
        .map(|s| s.action.iter().sum::<f64>())
        .sum();
    Ok(ObjectiveVector {
        violation: violations as f64 / (k * t) as f64,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Trajectory, TrajectoryStep};
    use proptest::prelude::*;

    fn step(obs: Vec<f64>, action: Vec<f64>, violations: usize) -> TrajectoryStep {
        let reward = timestep_reward(&obs, &action).unwrap();
        TrajectoryStep {
            t: 0,
            obs,
            action,
            reward,
            violations,
        }
    }

    #[test]
    fn fully_in_range_zero_action() {
        let r = timestep_reward(&[0.3], &[0.0]).unwrap();
        assert_eq!(r.penalty_cl, 0.0);
        assert_eq!(r.bonus_cl, 5.0);
        assert_eq!(r.cost_cl, 0.0);
        assert_eq!(r.total, 5.0);
    }

    #[test]
    fn hand_evaluated_mixed_case() {
        // c = [0.5, 0.1]: hinge = (0.5-0.4) + 5*(0.2-0.1) = 0.1 + 0.5 = 0.6
        // penalty = -10/2 * 0.6 = -3.0; no node in range; cost = -0.1*2.0
        let r = timestep_reward(&[0.5, 0.1], &[2.0]).unwrap();
        assert!((r.penalty_cl - -3.0).abs() < 1e-12);
        assert_eq!(r.bonus_cl, 0.0);
        assert!((r.cost_cl - -0.2).abs() < 1e-12);
        assert!((r.total - -3.2).abs() < 1e-12);
    }

    #[test]
    fn closed_interval_boundary() {
        let r = timestep_reward(&[0.2, 0.4], &[0.0, 0.0]).unwrap();
        assert_eq!(r.penalty_cl, 0.0);
        assert_eq!(r.bonus_cl, 5.0);
        assert_eq!(r.cost_cl, 0.0);
        assert_eq!(r.total, 5.0);
    }

    #[test]
    fn empty_nodes_is_an_error() {
        assert!(matches!(
            timestep_reward(&[], &[0.0]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn nan_input_is_an_error() {
        assert!(matches!(
            timestep_reward(&[f64::NAN], &[0.0]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            timestep_reward(&[0.3], &[f64::INFINITY]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn perfect_episode_objectives() {
        let steps = vec![step(vec![0.3, 0.3], vec![0.0], 0); 4];
        let traj = Trajectory {
            num_nodes: 2,
            steps,
        };
        let o = episode_objectives(&traj).unwrap();
        assert_eq!(o.violation, 0.0);
        assert_eq!(o.cost, 0.0);
    }

    #[test]
    fn hand_counted_objectives() {
        // T=2, K=1: first step out of band, second in; actions 0.5 each.
        let traj = Trajectory {
            num_nodes: 1,
            steps: vec![step(vec![0.1], vec![0.5], 1), step(vec![0.3], vec![0.5], 0)],
        };
        let o = episode_objectives(&traj).unwrap();
        assert!((o.violation - 0.5).abs() < 1e-15);
        assert!((o.cost - 1.0).abs() < 1e-15);
    }

    #[test]
    fn always_out_of_band_hits_the_fraction_ceiling() {
        let traj = Trajectory {
            num_nodes: 2,
            steps: vec![step(vec![0.5, 0.1], vec![0.0], 2); 3],
        };
        let o = episode_objectives(&traj).unwrap();
        assert_eq!(o.violation, 1.0);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let traj = Trajectory {
            num_nodes: 1,
            steps: vec![],
        };
        assert!(matches!(
            episode_objectives(&traj),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn lower_bound_weighting_is_exactly_five_fold() {
        for delta in [0.01, 0.05, 0.1, 0.19] {
            let below = timestep_reward(&[BAND_LOW - delta], &[]).unwrap();
            let above = timestep_reward(&[BAND_HIGH + delta], &[]).unwrap();
            let ratio = below.penalty_cl / above.penalty_cl;
            assert!(
                (ratio - 5.0).abs() < 1e-9,
                "delta={delta}: ratio {ratio}"
            );
        }
    }

    proptest! {
        #[test]
        fn action_scaling_only_scales_cost(
            c in prop::collection::vec(0.0f64..2.0, 1..6),
            a in prop::collection::vec(0.0f64..1.0, 0..4),
            lambda in 0.0f64..10.0,
        ) {
            let base = timestep_reward(&c, &a).unwrap();
            let scaled_a: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            let scaled = timestep_reward(&c, &scaled_a).unwrap();
            prop_assert_eq!(base.penalty_cl, scaled.penalty_cl);
            prop_assert_eq!(base.bonus_cl, scaled.bonus_cl);
            prop_assert!((scaled.cost_cl - lambda * base.cost_cl).abs() <= 1e-9 * (1.0 + base.cost_cl.abs()));
        }

        #[test]
        fn permutation_invariance(
            c in prop::collection::vec(0.0f64..2.0, 2..6),
            a in prop::collection::vec(0.0f64..1.0, 2..4),
        ) {
            let base = timestep_reward(&c, &a).unwrap();
            let mut c_rev = c.clone();
            c_rev.reverse();
            let mut a_rev = a.clone();
            a_rev.reverse();
            let permuted = timestep_reward(&c_rev, &a_rev).unwrap();
            // Reordered sums agree to rounding; the in-band count is exact.
            prop_assert!((base.penalty_cl - permuted.penalty_cl).abs() < 1e-12);
            prop_assert_eq!(base.bonus_cl, permuted.bonus_cl);
            prop_assert!((base.cost_cl - permuted.cost_cl).abs() < 1e-12);
        }

        #[test]
        fn penalty_bonus_complementarity(
            c in prop::collection::vec(0.0f64..2.0, 1..6),
        ) {
            let r = timestep_reward(&c, &[]).unwrap();
            let k = c.len() as f64;
            // -K/10 * penalty >= 0, and zero exactly when every node is in band.
            prop_assert!(r.penalty_cl * (-k / 10.0) >= 0.0);
            let all_in = c.iter().all(|x| (BAND_LOW..=BAND_HIGH).contains(x));
            prop_assert_eq!(r.penalty_cl == 0.0, all_in);
            prop_assert_eq!(r.bonus_cl == 5.0, all_in);
            prop_assert_eq!(r.total, r.penalty_cl + r.bonus_cl + r.cost_cl);
        }
    }
}
