//! Stagnation-triggered intervention policy.
//!
//! When an island's momentum drops below the stagnation threshold, the
//! policy chooses between reverting the island to an ancestor snapshot
//! (backtracking) and importing a partner island's best solution
//! (crossover). The choice is sampled from a closed-form weight model over
//! each island's absolute progress:
//!
//! - crossover with partner j gets the direct gain `max(0, A_j - A_i)`;
//! - backtracking gets a dominance term `max(0, A_i - A_best)` plus a
//!   shared-stagnation term `S * (1 - A_i) * (1 - A_best)` where
//!   `S = max(0, 1 - |A_i - A_best|)`;
//! - the best partner additionally gets a synergy bonus `S * A_i * A_best`.
//!
//! So: mutual low progress favors backtracking, mutual high progress favors
//! crossover with the strong partner, and a clear laggard prefers whichever
//! partner is ahead. Backtrack targets are drawn from a power law that
//! favors the earliest snapshots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::progress::ProgressTracker;
use crate::rng::RunRng;

/// Default stagnation threshold. With beta 0.9 this trips after roughly
/// 29 barren iterations from a full momentum of 1.0.
pub const DEFAULT_EPSILON_REL: f64 = 0.05;

/// Default initial freeze window in steps.
pub const DEFAULT_FREEZE_STEPS: u64 = 10;

/// Default power-law exponent for reversion-target sampling.
pub const DEFAULT_ALPHA: f64 = 1.5;

/// Total weight at or below this counts as empty support.
const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no snapshots available to revert to")]
    NoSnapshots,
}

/// Identifier of one island within a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct IslandId(pub u32);

impl std::fmt::Display for IslandId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "island-{}", self.0)
    }
}

/// Tunables of the trigger and sampling machinery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Momentum below this triggers an intervention.
    pub epsilon_rel: f64,
    /// No intervention fires before this many steps have elapsed.
    pub freeze_steps: u64,
    /// Exponent of the reversion-target power law.
    pub alpha: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            epsilon_rel: DEFAULT_EPSILON_REL,
            freeze_steps: DEFAULT_FREEZE_STEPS,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Assembled action weights for one triggered island.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionWeights {
    pub backtrack: f64,
    /// Per-partner crossover weight, ordered by island id.
    pub crossover: Vec<(IslandId, f64)>,
    /// Similarity `S` between the island and its best partner
    /// (0 when there are no partners).
    pub similarity: f64,
}

impl ActionWeights {
    pub fn total(&self) -> f64 {
        self.backtrack + self.crossover.iter().map(|(_, w)| w).sum::<f64>()
    }

    /// Normalized selection probabilities: backtrack first, then each
    /// partner in `crossover` order. All zeros fall back to backtrack.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total();
        if total <= WEIGHT_FLOOR {
            let mut p = vec![0.0; 1 + self.crossover.len()];
            p[0] = 1.0;
            return p;
        }
        let mut p = Vec::with_capacity(1 + self.crossover.len());
        p.push(self.backtrack / total);
        p.extend(self.crossover.iter().map(|(_, w)| w / total));
        p
    }
}

/// What kind of intervention was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    Backtrack,
    Crossover,
}

/// A sampled intervention. `reverted_to_step` is filled in once a backtrack
/// target has been chosen and applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionAction {
    pub kind: InterventionKind,
    pub partner: Option<IslandId>,
    pub reverted_to_step: Option<u64>,
}

impl InterventionAction {
    pub fn backtrack() -> Self {
        Self {
            kind: InterventionKind::Backtrack,
            partner: None,
            reverted_to_step: None,
        }
    }

    pub fn crossover(partner: IslandId) -> Self {
        Self {
            kind: InterventionKind::Crossover,
            partner: Some(partner),
            reverted_to_step: None,
        }
    }
}

/// True when momentum has fallen below the threshold and the initial freeze
/// window has passed. The comparison is strict: momentum exactly at the
/// threshold does not trigger.
pub fn should_trigger(tracker: &ProgressTracker, cfg: &PolicyConfig) -> bool {
    tracker.momentum < cfg.epsilon_rel && tracker.step >= cfg.freeze_steps
}

/// Assembles the action weights for a triggered island with absolute
/// progress `a_i` against `partners` (pairs of island id and absolute
/// progress, self excluded).
///
/// With no partners the action set degenerates to backtracking with
/// weight 1. Ties for the best partner break toward the lowest island id;
/// exactly one partner receives the synergy bonus.
pub fn compute_weights(a_i: f64, partners: &[(IslandId, f64)]) -> ActionWeights {
    debug_assert!((0.0..=1.0).contains(&a_i));
    if partners.is_empty() {
        return ActionWeights {
            backtrack: 1.0,
            crossover: Vec::new(),
            similarity: 0.0,
        };
    }

    let mut sorted: Vec<(IslandId, f64)> = partners.to_vec();
    sorted.sort_by_key(|(id, _)| *id);

    let (best_id, a_best) = sorted
        .iter()
        .fold(None::<(IslandId, f64)>, |acc, &(id, a)| match acc {
            Some((_, best)) if a <= best => acc,
            _ => Some((id, a)),
        })
        .expect("non-empty partner list");

    let similarity = (1.0 - (a_i - a_best).abs()).max(0.0);
    let dominance = (a_i - a_best).max(0.0);
    let stagnation = similarity * (1.0 - a_i) * (1.0 - a_best);
    let synergy = similarity * a_i * a_best;

    let crossover = sorted
        .into_iter()
        .map(|(id, a_j)| {
            let mut w = (a_j - a_i).max(0.0);
            if id == best_id {
                w += synergy;
            }
            (id, w)
        })
        .collect();

    ActionWeights {
        backtrack: dominance + stagnation,
        crossover,
        similarity,
    }
}

/// Samples an action proportionally to its weight. Empty or all-zero
/// support falls back to backtracking.
pub fn sample_action(weights: &ActionWeights, rng: &mut RunRng) -> InterventionAction {
    if weights.total() <= WEIGHT_FLOOR {
        return InterventionAction::backtrack();
    }
    let mut flat = Vec::with_capacity(1 + weights.crossover.len());
    flat.push(weights.backtrack);
    flat.extend(weights.crossover.iter().map(|(_, w)| *w));
    match rng.weighted_index(&flat) {
        Some(0) | None => InterventionAction::backtrack(),
        Some(i) => InterventionAction::crossover(weights.crossover[i - 1].0),
    }
}

/// Unnormalized power-law mass over snapshot positions: position k from the
/// earliest snapshot gets `(k + 1)^-alpha`, so the earliest snapshot always
/// carries the largest mass.
pub fn powerlaw_masses(len: usize, alpha: f64) -> Vec<f64> {
    (0..len).map(|k| ((k + 1) as f64).powf(-alpha)).collect()
}

/// Samples a reversion target from `snapshot_steps` (ascending step
/// indices) under the power law above.
pub fn sample_backtrack_target(
    snapshot_steps: &[u64],
    alpha: f64,
    rng: &mut RunRng,
) -> Result<u64, PolicyError> {
    if snapshot_steps.is_empty() {
        return Err(PolicyError::NoSnapshots);
    }
    debug_assert!(snapshot_steps.windows(2).all(|w| w[0] < w[1]));
    let masses = powerlaw_masses(snapshot_steps.len(), alpha);
    let idx = rng.weighted_index(&masses).unwrap_or(0);
    Ok(snapshot_steps[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progress::ProgressTracker;

    fn tracker(momentum: f64, step: u64) -> ProgressTracker {
        let mut t = ProgressTracker::new(1.0, 0.9);
        t.momentum = momentum;
        t.step = step;
        t
    }

    #[test]
    fn trigger_requires_low_momentum_and_elapsed_freeze() {
        let cfg = PolicyConfig {
            epsilon_rel: 0.1,
            freeze_steps: 10,
            ..PolicyConfig::default()
        };
        assert!(should_trigger(&tracker(0.05, 50), &cfg));
        assert!(!should_trigger(&tracker(0.05, 5), &cfg));
        // Strict inequality at the boundary.
        assert!(!should_trigger(&tracker(0.1, 50), &cfg));
    }

    #[test]
    fn weights_shared_low_progress_favor_backtrack() {
        let w = compute_weights(0.1, &[(IslandId(1), 0.1)]);
        assert!((w.similarity - 1.0).abs() < 1e-15);
        assert!((w.backtrack - 0.81).abs() < 1e-15);
        assert!((w.crossover[0].1 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn weights_shared_high_progress_favor_crossover() {
        let w = compute_weights(0.9, &[(IslandId(1), 0.9)]);
        assert!((w.backtrack - 0.01).abs() < 1e-15);
        assert!((w.crossover[0].1 - 0.81).abs() < 1e-15);
    }

    #[test]
    fn weights_dominant_island_multi_partner() {
        // A_i = 0.7 against partners at 0.2 and 0.4: best partner is 0.4,
        // S = 0.7, dominance = 0.3, stagnation = 0.7 * 0.3 * 0.6 = 0.126,
        // synergy to the best partner = 0.7 * 0.7 * 0.4 = 0.196.
        let w = compute_weights(0.7, &[(IslandId(1), 0.2), (IslandId(2), 0.4)]);
        assert!((w.backtrack - 0.426).abs() < 1e-12);
        assert!((w.crossover[0].1 - 0.0).abs() < 1e-15);
        assert!((w.crossover[1].1 - 0.196).abs() < 1e-12);
    }

    #[test]
    fn weights_laggard_against_strong_partner() {
        // A_i = 0.1 versus a partner at 0.9: the direct gain dominates.
        // S = max(0, 1 - 0.8) = 0.2; w_C = 0.8 + 0.2*0.1*0.9 = 0.818;
        // w_BT = 0 + 0.2*0.9*0.1 = 0.018; P(crossover) ~ 0.978.
        let w = compute_weights(0.1, &[(IslandId(1), 0.9)]);
        assert!((w.backtrack - 0.018).abs() < 1e-12);
        assert!((w.crossover[0].1 - 0.818).abs() < 1e-12);
        let p = w.probabilities();
        assert!((p[1] - 0.818 / 0.836).abs() < 1e-12);
        assert!(p[1] > 0.97);
    }

    #[test]
    fn weights_empty_partner_map_degenerates_to_backtrack() {
        let w = compute_weights(0.3, &[]);
        assert_eq!(w.backtrack, 1.0);
        assert!(w.crossover.is_empty());
    }

    #[test]
    fn synergy_tie_breaks_to_lowest_id() {
        let w = compute_weights(0.5, &[(IslandId(4), 0.8), (IslandId(2), 0.8)]);
        // Both partners share the same base weight; only island 2 gets the
        // synergy bonus.
        let base = 0.3;
        let synergy = (1.0 - 0.3) * 0.5 * 0.8;
        let by_id: std::collections::BTreeMap<_, _> = w.crossover.iter().cloned().collect();
        assert!((by_id[&IslandId(2)] - (base + synergy)).abs() < 1e-12);
        assert!((by_id[&IslandId(4)] - base).abs() < 1e-12);
    }

    #[test]
    fn probabilities_normalize() {
        let w = compute_weights(0.1, &[(IslandId(1), 0.1)]);
        let p = w.probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((p[0] - 0.81 / 0.82).abs() < 1e-12);
    }

    #[test]
    fn sample_single_support_is_deterministic() {
        let w = ActionWeights {
            backtrack: 1.0,
            crossover: vec![],
            similarity: 0.0,
        };
        let mut rng = RunRng::seed_from_u64(1);
        for _ in 0..32 {
            assert_eq!(sample_action(&w, &mut rng).kind, InterventionKind::Backtrack);
        }
    }

    #[test]
    fn sample_all_zero_falls_back_to_backtrack() {
        let w = ActionWeights {
            backtrack: 0.0,
            crossover: vec![(IslandId(1), 0.0)],
            similarity: 1.0,
        };
        let mut rng = RunRng::seed_from_u64(2);
        let a = sample_action(&w, &mut rng);
        assert_eq!(a.kind, InterventionKind::Backtrack);
        assert_eq!(a.partner, None);
    }

    #[test]
    fn sample_frequencies_match_analytic_probability() {
        let w = compute_weights(0.1, &[(IslandId(1), 0.1)]);
        let mut rng = RunRng::seed_from_u64(20240801);
        let draws = 100_000;
        let mut backtracks = 0u32;
        for _ in 0..draws {
            if sample_action(&w, &mut rng).kind == InterventionKind::Backtrack {
                backtracks += 1;
            }
        }
        let freq = f64::from(backtracks) / f64::from(draws);
        let expected = 0.81 / 0.82;
        assert!(
            (freq - expected).abs() < 0.005,
            "freq {freq} vs expected {expected}"
        );
    }

    #[test]
    fn backtrack_target_single_snapshot() {
        let mut rng = RunRng::seed_from_u64(3);
        assert_eq!(sample_backtrack_target(&[0], 1.5, &mut rng), Ok(0));
    }

    #[test]
    fn backtrack_target_empty_list_errors() {
        let mut rng = RunRng::seed_from_u64(3);
        assert_eq!(
            sample_backtrack_target(&[], 1.5, &mut rng),
            Err(PolicyError::NoSnapshots)
        );
    }

    #[test]
    fn backtrack_target_masses_favor_earliest() {
        // Enumerate-and-normalize oracle for [0,1,2,3] at alpha = 1.5.
        let masses = powerlaw_masses(4, 1.5);
        let total: f64 = masses.iter().sum();
        let normalized: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let expected = [0.5984428, 0.2115815, 0.1151704, 0.0748053];
        for (got, want) in normalized.iter().zip(expected) {
            assert!((got - want).abs() < 5e-6, "{got} vs {want}");
        }
        assert!(normalized.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn backtrack_target_stays_in_support() {
        let steps = [0, 7, 19, 23, 40];
        let mut rng = RunRng::seed_from_u64(9);
        for _ in 0..1_000 {
            let t = sample_backtrack_target(&steps, 0.7, &mut rng).unwrap();
            assert!(steps.contains(&t));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        // Literal transcription of the weight formulas, kept independent of
        // the implementation above.
        fn oracle(a_i: f64, partners: &[(IslandId, f64)]) -> (f64, Vec<(IslandId, f64)>) {
            if partners.is_empty() {
                return (1.0, vec![]);
            }
            let mut ps = partners.to_vec();
            ps.sort_by_key(|(id, _)| *id);
            let a_best = ps.iter().map(|(_, a)| *a).fold(f64::NEG_INFINITY, f64::max);
            let j_best = ps.iter().find(|(_, a)| *a == a_best).unwrap().0;
            let s = (1.0 - (a_i - a_best).abs()).max(0.0);
            let w_bt = (a_i - a_best).max(0.0) + s * (1.0 - a_i) * (1.0 - a_best);
            let w_c = ps
                .iter()
                .map(|&(id, a_j)| {
                    let base = (a_j - a_i).max(0.0);
                    let syn = if id == j_best { s * a_i * a_best } else { 0.0 };
                    (id, base + syn)
                })
                .collect();
            (w_bt, w_c)
        }

        proptest! {
            #[test]
            fn weights_match_independent_oracle(
                a_i in 0.0_f64..=1.0,
                partner_values in proptest::collection::vec(0.0_f64..=1.0, 0..6),
            ) {
                let partners: Vec<(IslandId, f64)> = partner_values
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (IslandId(i as u32 + 1), *a))
                    .collect();
                let got = compute_weights(a_i, &partners);
                let (w_bt, w_c) = oracle(a_i, &partners);
                prop_assert!((got.backtrack - w_bt).abs() < 1e-12);
                prop_assert_eq!(got.crossover.len(), w_c.len());
                for ((id_a, wa), (id_b, wb)) in got.crossover.iter().zip(w_c) {
                    prop_assert_eq!(*id_a, id_b);
                    prop_assert!((wa - wb).abs() < 1e-12);
                }
            }

            // Knowledge-transfer principle: crossover weight (excluding the
            // synergy bonus) is monotone non-decreasing in partner progress.
            #[test]
            fn crossover_base_monotone_in_partner_progress(
                a_i in 0.0_f64..=1.0,
                a_lo in 0.0_f64..=1.0,
                bump in 0.0_f64..=0.5,
            ) {
                let a_hi = (a_lo + bump).min(1.0);
                // A third, strictly-best partner absorbs the synergy bonus
                // so the two measured entries carry pure base weight.
                let w = compute_weights(
                    a_i,
                    &[(IslandId(1), a_lo), (IslandId(2), a_hi), (IslandId(3), 1.0)],
                );
                prop_assert!(w.crossover[1].1 >= w.crossover[0].1 - 1e-12);
            }

            // Dominance principle, asserted as formula fidelity: when the
            // triggered island dominates with A_i >= 0.5, backtrack weight
            // wins unless the synergy bonus exceeds dominance + stagnation
            // (the documented high-similarity high-progress region).
            #[test]
            fn dominance_favors_backtrack_outside_synergy_region(
                a_i in 0.5_f64..=1.0,
                deltas in proptest::collection::vec(0.0_f64..=0.5, 1..5),
            ) {
                let partners: Vec<(IslandId, f64)> = deltas
                    .iter()
                    .enumerate()
                    .map(|(k, d)| (IslandId(k as u32 + 1), (a_i - d).max(0.0)))
                    .collect();
                let w = compute_weights(a_i, &partners);
                let max_c = w
                    .crossover
                    .iter()
                    .map(|(_, x)| *x)
                    .fold(f64::NEG_INFINITY, f64::max);
                if w.backtrack < max_c {
                    let a_best = partners.iter().map(|(_, a)| *a).fold(f64::NEG_INFINITY, f64::max);
                    let s = (1.0 - (a_i - a_best).abs()).max(0.0);
                    let dom_plus_stag = (a_i - a_best).max(0.0) + s * (1.0 - a_i) * (1.0 - a_best);
                    prop_assert!(s * a_i * a_best > dom_plus_stag);
                }
            }

            #[test]
            fn probabilities_always_sum_to_one(
                a_i in 0.0_f64..=1.0,
                partner_as in proptest::collection::vec(0.0_f64..=1.0, 0..5),
            ) {
                let partners: Vec<(IslandId, f64)> = partner_as
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (IslandId(i as u32), *a))
                    .collect();
                let p = compute_weights(a_i, &partners).probabilities();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
