//! Concrete policies from abstract ones through the relations `R_0` and `R`.

use serde::{Deserialize, Serialize};

use crate::abstraction::{Grid, Label, SymbolicModel, SymbolicState, GRID_TOL};
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::games::{AbstractPolicy, Synthesis};
use crate::reach::IntervalBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    R0,
    R,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relation {
    pub kind: RelationKind,
    pub grid: Grid,
}

impl Relation {
    pub fn new(kind: RelationKind, grid: Grid) -> Self {
        Self { kind, grid }
    }

    pub fn contains(&self, xt: SymbolicState, x: State) -> bool {
        let p = self.grid.point(xt);
        let s_ok = (p.s - x.s).abs() <= self.grid.eta_s / 2.0 + GRID_TOL;
        match self.kind {
            RelationKind::R0 => s_ok && (p.i - x.i).abs() <= self.grid.eta_i / 2.0 + GRID_TOL,
            RelationKind::R => s_ok && self.grid.snap_i(x.i) == Some(xt.m),
        }
    }
}

fn sq_dist(grid: &Grid, xt: SymbolicState, x: State) -> f64 {
    let p = grid.point(xt);
    (p.s - x.s).powi(2) + (p.i - x.i).powi(2)
}

fn better(grid: &Grid, x: State, a: SymbolicState, b: SymbolicState) -> bool {
    let (da, db) = (sq_dist(grid, a, x), sq_dist(grid, b, x));
    da < db || (da == db && a < b)
}

/// Euclidean-nearest candidate; ties go to the lexicographically smallest `(n, m)`.
pub fn nearest_state<I>(x: State, candidates: I, grid: &Grid) -> Result<SymbolicState>
where
    I: IntoIterator<Item = SymbolicState>,
{
    let mut best: Option<SymbolicState> = None;
    for c in candidates {
        if best.is_none_or(|b| better(grid, x, c, b)) {
            best = Some(c);
        }
    }
    best.ok_or(Error::EmptyCandidates)
}

/// Threshold pair refined to the concrete system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcretePair {
    pub pair: usize,
    pub u: f64,
    pub eps: f64,
}

/// Domain hit: the selected grid state and the refined pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub index: usize,
    pub state: SymbolicState,
    pub pairs: Vec<ConcretePair>,
}

/// Refined policies `π_0`, `π` and `π_F` over one synthesis result.
pub struct Controller<'a> {
    pub model: &'a SymbolicModel,
    pub synthesis: &'a Synthesis,
}

impl<'a> Controller<'a> {
    pub fn new(model: &'a SymbolicModel, synthesis: &'a Synthesis) -> Self {
        Self { model, synthesis }
    }

    /// Nearest member of `set` when it is related to `x`.
    ///
    /// A related grid state is always the nearest grid point overall (up to
    /// ties), so the 3×3 block around the rounded indices suffices.
    pub fn nearest_related(&self, x: State, set: &[bool], kind: RelationKind) -> Option<usize> {
        let grid = self.model.grid();
        let n0 = (x.s / grid.eta_s).round() as i32;
        let m0 = (x.i / grid.eta_i).round() as i32;
        let mut best: Option<usize> = None;
        for dn in -1..=1 {
            for dm in -1..=1 {
                let Some(idx) = self.model.index_of(SymbolicState::new(n0 + dn, m0 + dm)) else {
                    continue;
                };
                if !set[idx] {
                    continue;
                }
                if best.is_none_or(|b| better(grid, x, self.model.states[idx], self.model.states[b])) {
                    best = Some(idx);
                }
            }
        }
        best.filter(|&idx| Relation::new(kind, *grid).contains(self.model.states[idx], x))
    }

    fn pairs(&self, policy: &AbstractPolicy, idx: usize) -> Vec<ConcretePair> {
        policy
            .get(idx)
            .iter()
            .map(|&a| {
                let (u, eps) = self.model.pair_values(a);
                ConcretePair { pair: a, u, eps }
            })
            .collect()
    }

    pub fn in_initial_domain(&self, x: State) -> bool {
        self.model.config.bounds.in_initial(x, GRID_TOL)
            && self.nearest_related(x, &self.synthesis.initial_set, RelationKind::R0).is_some()
    }

    pub fn in_reach_domain(&self, x: State) -> bool {
        self.nearest_related(x, &self.synthesis.winning_set, RelationKind::R).is_some()
    }

    pub fn in_terminal_domain(&self, x: State) -> bool {
        self.nearest_related(x, &self.synthesis.terminal_set, RelationKind::R).is_some()
    }

    /// `π_0(x)` with the threshold shifted so the trigger lands on `Ĩ ± ε̃`.
    pub fn query_initial(&self, x: State) -> Result<Query> {
        let idx = self
            .model
            .config
            .bounds
            .in_initial(x, GRID_TOL)
            .then(|| self.nearest_related(x, &self.synthesis.initial_set, RelationKind::R0))
            .flatten()
            .ok_or(Error::Domain {
                s: x.s,
                i: x.i,
                domain: "initial",
            })?;
        let center = self.model.point(idx);
        let pairs = self
            .pairs(&self.synthesis.initial_policy, idx)
            .into_iter()
            .map(|mut p| {
                p.eps = match self.model.label_l[idx][p.pair] {
                    Label::Increase => p.eps + (center.i - x.i),
                    Label::Decrease => p.eps + (x.i - center.i),
                    _ => unreachable!("initial policy holds determinate labels only"),
                };
                p
            })
            .collect();
        Ok(Query {
            index: idx,
            state: self.model.states[idx],
            pairs,
        })
    }

    /// `π(x)`: abstract pairs at the nearest winning grid state.
    pub fn query_reach(&self, x: State) -> Result<Query> {
        let idx = self
            .nearest_related(x, &self.synthesis.winning_set, RelationKind::R)
            .ok_or(Error::Domain {
                s: x.s,
                i: x.i,
                domain: "reach",
            })?;
        Ok(Query {
            index: idx,
            state: self.model.states[idx],
            pairs: self.pairs(&self.synthesis.reach_policy, idx),
        })
    }

    /// `π_F(x)`: abstract pairs at the nearest terminal grid state.
    pub fn query_terminal(&self, x: State) -> Result<Query> {
        let idx = self
            .nearest_related(x, &self.synthesis.terminal_set, RelationKind::R)
            .ok_or(Error::Domain {
                s: x.s,
                i: x.i,
                domain: "terminal",
            })?;
        Ok(Query {
            index: idx,
            state: self.model.states[idx],
            pairs: self.pairs(&self.synthesis.terminal_policy, idx),
        })
    }

    pub fn rank(&self, idx: usize) -> Option<u32> {
        self.synthesis.ranks.get(idx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered: bool,
    pub uncovered: Vec<IntervalBox>,
}

/// Check that the half-cells of `states` cover the initial box.
///
/// The box is cut along every half-cell edge; each elementary piece is then
/// either fully covered or fully uncovered, so testing its midpoint decides it.
pub fn check_initial_coverage(
    bounds: &crate::abstraction::Bounds,
    states: &[SymbolicState],
    grid: &Grid,
) -> CoverageReport {
    let (hs, hi) = (grid.eta_s / 2.0, grid.eta_i / 2.0);
    let cells: Vec<IntervalBox> = states
        .iter()
        .map(|&x| IntervalBox::centered(grid.point(x), hs, hi))
        .collect();
    let cuts = |lo: f64, hi_: f64, edges: &mut dyn Iterator<Item = f64>| {
        let mut v: Vec<f64> = std::iter::once(lo)
            .chain(std::iter::once(hi_))
            .chain(edges.filter(|&e| e > lo && e < hi_))
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= GRID_TOL);
        if v.len() == 1 {
            v.push(v[0]);
        }
        v
    };
    let ss = cuts(
        bounds.s0_lower,
        bounds.s0_upper,
        &mut cells.iter().flat_map(|c| [c.lo.s, c.hi.s]),
    );
    let is = cuts(
        bounds.i0_lower,
        bounds.i0_upper,
        &mut cells.iter().flat_map(|c| [c.lo.i, c.hi.i]),
    );
    let mut uncovered = Vec::new();
    for sw in ss.windows(2) {
        for iw in is.windows(2) {
            let mid = State::new(0.5 * (sw[0] + sw[1]), 0.5 * (iw[0] + iw[1]));
            if !cells.iter().any(|c| c.contains(mid, GRID_TOL)) {
                uncovered.push(IntervalBox {
                    lo: State::new(sw[0], iw[0]),
                    hi: State::new(sw[1], iw[1]),
                });
            }
        }
    }
    CoverageReport {
        covered: uncovered.is_empty(),
        uncovered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::Bounds;

    fn grid() -> Grid {
        Grid::new(0.01, 0.01).unwrap()
    }

    #[test]
    fn nearest_exact_and_tie() {
        let g = grid();
        let c = [SymbolicState::new(10, 7), SymbolicState::new(11, 7)];
        assert_eq!(nearest_state(State::new(0.11, 0.07), c, &g).unwrap(), c[1]);
        assert_eq!(nearest_state(State::new(0.105, 0.07), c, &g).unwrap(), c[0]);
        assert!(matches!(
            nearest_state(State::new(0.1, 0.1), [], &g),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn relations_are_closed() {
        let g = grid();
        let r = Relation::new(RelationKind::R, g);
        let r0 = Relation::new(RelationKind::R0, g);
        let xt = SymbolicState::new(80, 7);
        assert!(r.contains(xt, State::new(0.805, 0.07)));
        assert!(!r.contains(xt, State::new(0.80, 0.071)));
        assert!(r0.contains(xt, State::new(0.795, 0.075)));
        assert!(r0.contains(xt, State::new(0.80, 0.085 - 0.01)));
        assert!(!r0.contains(xt, State::new(0.80, 0.0751)));
    }

    #[test]
    fn coverage_of_full_initial_grid_and_of_nothing() {
        let b = Bounds::tokyo();
        let g = grid();
        let sets = crate::abstraction::build_grid_sets(&b, &g).unwrap();
        let all: Vec<_> = sets.init_states.iter().copied().collect();
        assert!(check_initial_coverage(&b, &all, &g).covered);
        let none = check_initial_coverage(&b, &[], &g);
        assert_eq!(none.uncovered.len(), 1);
        let bx = none.uncovered[0];
        assert_eq!((bx.lo.s, bx.hi.s, bx.lo.i, bx.hi.i), (0.50, 0.80, 0.055, 0.085));
    }

    #[test]
    fn coverage_hole_is_reported() {
        let b = Bounds::tokyo();
        let g = grid();
        let sets = crate::abstraction::build_grid_sets(&b, &g).unwrap();
        let hole = SymbolicState::new(65, 7);
        let rest: Vec<_> = sets.init_states.iter().copied().filter(|&x| x != hole).collect();
        let rep = check_initial_coverage(&b, &rest, &g);
        assert!(!rep.covered);
        let area: f64 = rep.uncovered.iter().map(|c| c.area()).sum();
        assert!((area - 1e-4).abs() < 1e-12);
        for c in &rep.uncovered {
            assert!(c.lo.s >= 0.645 - 1e-12 && c.hi.s <= 0.655 + 1e-12);
        }
    }
}
