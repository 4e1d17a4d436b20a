//! Safety and reachability games on a finite arena.
//!
//! The solvers work on [`Arena`], a plain indexed transition structure, so
//! they can be exercised on small hand-built or random models as well as on
//! a [`SymbolicModel`].

use serde::{Deserialize, Serialize};

use crate::abstraction::{SymbolicModel, SymbolicState};

/// Indexed game arena. Tables are `[state][action]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Arena {
    pub num_actions: usize,
    pub succ: Vec<Vec<Vec<u32>>>,
    /// Initial-time successors; may be empty for non-initial states.
    pub succ0: Vec<Vec<Vec<u32>>>,
    /// `L_F = 1`.
    pub terminal_ok: Vec<Vec<bool>>,
    /// `Ĩ + ε̃ ≤ Ī_S`.
    pub reach_ok: Vec<Vec<bool>>,
    /// `reach_ok` and a determinate initial label.
    pub initial_ok: Vec<Vec<bool>>,
    pub safe: Vec<bool>,
    pub target: Vec<bool>,
    pub initial: Vec<bool>,
}

impl Arena {
    pub fn from_model(model: &SymbolicModel) -> Self {
        let n = model.states.len();
        let na = model.num_pairs();
        let reach_ok: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..na).map(|a| model.within_safe_ceiling(i, a)).collect())
            .collect();
        let initial_ok = (0..n)
            .map(|i| {
                if model.init[i] {
                    (0..na)
                        .map(|a| reach_ok[i][a] && model.label_l[i][a].is_determinate())
                        .collect()
                } else {
                    vec![false; na]
                }
            })
            .collect();
        Self {
            num_actions: na,
            succ: model.trans.clone(),
            succ0: model.trans0.clone(),
            terminal_ok: model.label_lf.clone(),
            reach_ok,
            initial_ok,
            safe: model.safe.clone(),
            target: model.target.clone(),
            initial: model.init.clone(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.succ.len()
    }

    fn all_in(list: &[u32], set: &[bool]) -> bool {
        !list.is_empty() && list.iter().all(|&j| set[j as usize])
    }

    fn succ0_of(&self, x: usize, a: usize) -> &[u32] {
        self.succ0[x].get(a).map_or(&[], Vec::as_slice)
    }
}

/// `Pre_F(P)`: target states with an `L_F` action whose successors all lie in `P`.
pub fn pre_f(arena: &Arena, p: &[bool]) -> Vec<bool> {
    (0..arena.num_states())
        .map(|x| {
            arena.target[x]
                && (0..arena.num_actions)
                    .any(|a| arena.terminal_ok[x][a] && Arena::all_in(&arena.succ[x][a], p))
        })
        .collect()
}

/// `Pre(Q)` over the safe states with the `Ĩ + ε̃ ≤ Ī_S` side condition.
pub fn pre(arena: &Arena, q: &[bool]) -> Vec<bool> {
    (0..arena.num_states())
        .map(|x| {
            arena.safe[x]
                && (0..arena.num_actions)
                    .any(|a| arena.reach_ok[x][a] && Arena::all_in(&arena.succ[x][a], q))
        })
        .collect()
}

/// `Pre_0(X̃')` over initial safe states, using initial-time successors and
/// only pairs with a determinate label.
pub fn pre_0(arena: &Arena, winning: &[bool]) -> Vec<bool> {
    (0..arena.num_states())
        .map(|x| {
            arena.safe[x]
                && arena.initial[x]
                && (0..arena.num_actions)
                    .any(|a| arena.initial_ok[x][a] && Arena::all_in(arena.succ0_of(x, a), winning))
        })
        .collect()
}

/// Allowed actions per state index; empty outside the policy domain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractPolicy {
    pub actions: Vec<Vec<usize>>,
}

impl AbstractPolicy {
    pub fn get(&self, x: usize) -> &[usize] {
        self.actions.get(x).map_or(&[], Vec::as_slice)
    }

    pub fn domain_size(&self) -> usize {
        self.actions.iter().filter(|a| !a.is_empty()).count()
    }
}

/// `𝒩`: `None` for states outside the reachability winning region.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankMap {
    pub ranks: Vec<Option<u32>>,
    /// Rank assigned to initial-only states, one above the last shell.
    pub initial_rank: u32,
}

impl RankMap {
    pub fn get(&self, x: usize) -> Option<u32> {
        self.ranks.get(x).copied().flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafetyResult {
    pub winning: Vec<bool>,
    pub policy: AbstractPolicy,
    pub iterations: usize,
}

/// Greatest fixed point of `P ∩ Pre_F(P)` from the target set.
pub fn safety_game(arena: &Arena) -> SafetyResult {
    let mut p = arena.target.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let pf = pre_f(arena, &p);
        let next: Vec<bool> = p.iter().zip(&pf).map(|(&a, &b)| a && b).collect();
        if next == p {
            break;
        }
        p = next;
    }
    let policy = AbstractPolicy {
        actions: (0..arena.num_states())
            .map(|x| {
                if !p[x] {
                    return Vec::new();
                }
                (0..arena.num_actions)
                    .filter(|&a| arena.terminal_ok[x][a] && Arena::all_in(&arena.succ[x][a], &p))
                    .collect()
            })
            .collect(),
    };
    SafetyResult {
        winning: p,
        policy,
        iterations,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachResult {
    pub winning: Vec<bool>,
    pub initial: Vec<bool>,
    pub ranks: RankMap,
    pub policy: AbstractPolicy,
    pub initial_policy: AbstractPolicy,
    pub iterations: usize,
}

/// Least fixed point of `Q ∪ Pre(Q)` from `seed`, with shell ranks.
pub fn reachability_game(arena: &Arena, seed: &[bool]) -> ReachResult {
    let n = arena.num_states();
    let mut q = seed.to_vec();
    let mut ranks: Vec<Option<u32>> = q.iter().map(|&b| b.then_some(0)).collect();
    let mut shell = 0u32;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let pq = pre(arena, &q);
        let added: Vec<usize> = (0..n).filter(|&x| pq[x] && !q[x]).collect();
        if added.is_empty() {
            break;
        }
        shell += 1;
        for x in added {
            q[x] = true;
            ranks[x] = Some(shell);
        }
    }
    let initial_rank = shell + 1;
    let init = pre_0(arena, &q);
    let below = |list: &[u32], bound: u32| {
        !list.is_empty() && list.iter().all(|&j| ranks[j as usize].is_some_and(|r| r < bound))
    };
    let policy = AbstractPolicy {
        actions: (0..n)
            .map(|x| match ranks[x] {
                Some(r) => (0..arena.num_actions)
                    .filter(|&a| arena.reach_ok[x][a] && below(&arena.succ[x][a], r))
                    .collect(),
                None => Vec::new(),
            })
            .collect(),
    };
    let initial_policy = AbstractPolicy {
        actions: (0..n)
            .map(|x| {
                if !init[x] {
                    return Vec::new();
                }
                (0..arena.num_actions)
                    .filter(|&a| arena.initial_ok[x][a] && below(arena.succ0_of(x, a), initial_rank))
                    .collect()
            })
            .collect(),
    };
    ReachResult {
        winning: q,
        initial: init,
        ranks: RankMap { ranks, initial_rank },
        policy,
        initial_policy,
        iterations,
    }
}

/// Outcome of both games on a symbolic model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synthesis {
    pub model_digest: String,
    pub terminal_set: Vec<bool>,
    pub terminal_policy: AbstractPolicy,
    pub winning_set: Vec<bool>,
    pub initial_set: Vec<bool>,
    pub ranks: RankMap,
    pub reach_policy: AbstractPolicy,
    pub initial_policy: AbstractPolicy,
    pub safety_iterations: usize,
    pub reach_iterations: usize,
}

impl Synthesis {
    pub fn is_feasible(&self) -> bool {
        self.terminal_set.iter().any(|&b| b) && self.initial_set.iter().any(|&b| b)
    }

    pub fn states_in(model: &SymbolicModel, set: &[bool]) -> Vec<SymbolicState> {
        model
            .states
            .iter()
            .zip(set)
            .filter_map(|(&x, &b)| b.then_some(x))
            .collect()
    }

    /// Effective rank of a state when used as an initial state.
    pub fn initial_rank(&self, x: usize) -> u32 {
        self.ranks.get(x).unwrap_or(self.ranks.initial_rank)
    }
}

/// Run the terminal safety game, then the reachability game seeded with its
/// winning set.
pub fn synthesize(model: &SymbolicModel) -> Synthesis {
    let arena = Arena::from_model(model);
    let safety = safety_game(&arena);
    let reach = reachability_game(&arena, &safety.winning);
    Synthesis {
        model_digest: crate::abstraction::config_digest(&model.config),
        terminal_set: safety.winning,
        terminal_policy: safety.policy,
        winning_set: reach.winning,
        initial_set: reach.initial,
        ranks: reach.ranks,
        reach_policy: reach.policy,
        initial_policy: reach.initial_policy,
        safety_iterations: safety.iterations,
        reach_iterations: reach.iterations,
    }
}

/// Post-hoc checks of closure and rank descent; returns the first failure.
pub fn verify_synthesis(model: &SymbolicModel, syn: &Synthesis) -> std::result::Result<(), String> {
    for (x, acts) in syn.terminal_policy.actions.iter().enumerate() {
        for &a in acts {
            if !model.label_lf[x][a] {
                return Err(format!("terminal pair {a} at {:?} lacks L_F", model.states[x]));
            }
            if model.trans[x][a].iter().any(|&j| !syn.terminal_set[j as usize]) {
                return Err(format!("terminal pair {a} at {:?} leaves X'_F", model.states[x]));
            }
        }
        if syn.terminal_set[x] && acts.is_empty() {
            return Err(format!("terminal state {:?} has no pair", model.states[x]));
        }
    }
    for x in 0..model.states.len() {
        let Some(r) = syn.ranks.get(x) else { continue };
        if r > 0 && syn.reach_policy.get(x).is_empty() {
            return Err(format!("ranked state {:?} has no reach pair", model.states[x]));
        }
        for &a in syn.reach_policy.get(x) {
            let descends = model.trans[x][a]
                .iter()
                .all(|&j| syn.ranks.get(j as usize).is_some_and(|rj| rj < r));
            if !descends {
                return Err(format!("reach pair {a} at {:?} does not decrease rank", model.states[x]));
            }
        }
    }
    for x in 0..model.states.len() {
        if syn.initial_set[x] && syn.initial_policy.get(x).is_empty() {
            return Err(format!("initial state {:?} has no initial pair", model.states[x]));
        }
    }
    Ok(())
}
