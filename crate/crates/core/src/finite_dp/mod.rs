//! Exact dynamic programming over finite state and control sets.
//!
//! Conditional value functions `V_{k→i}(x, x')` are tabulated as
//! [`CondValueMatrix`] values and combined with the min-plus matrix product,
//! which makes the backward Bellman recursion an associative suffix scan.
//! Optimal trajectories are recovered either by composing closed-loop state
//! maps ([`recover_traj_m1`]) or by minimising forward-conditional plus
//! backward values per step ([`recover_traj_m2`]).
//!
//! States and controls are 0-based in memory. The JSON format in [`io`] uses
//! 1-based indices.

mod cost;
pub mod io;

pub use cost::{Cost, ExactCost};

use rayon::prelude::*;
use thiserror::Error;

use crate::scan::{seq_scan, try_par_scan, ScanDirection, ScanError, ScanStats};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("infeasible problem")]
    Infeasible,
    #[error("policy undefined on reached state {state} at step {step}")]
    PolicyUndefined { step: usize, state: usize },
    #[error("brute-force budget exceeded: {sequences} control sequences")]
    BudgetExceeded { sequences: u128 },
}

impl From<ScanError<DpError>> for DpError {
    fn from(e: ScanError<DpError>) -> Self {
        match e {
            ScanError::Empty => DpError::InvalidProblem("empty horizon".into()),
            ScanError::Combine(e) => e,
        }
    }
}

impl From<ScanError> for DpError {
    fn from(_: ScanError) -> Self {
        DpError::InvalidProblem("empty horizon".into())
    }
}

/// Deterministic control problem with tabulated dynamics and costs.
///
/// Step `k` of the horizon `start..end` is stored at offset `k - start`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteProblem<C = f64> {
    n_states: usize,
    n_controls: usize,
    start: usize,
    end: usize,
    next: Vec<Vec<Vec<usize>>>,
    stage_cost: Vec<Vec<Vec<C>>>,
    terminal_cost: Vec<C>,
    initial_state: usize,
}

impl<C: Cost> FiniteProblem<C> {
    /// Builds and validates a problem. `next[k][x][u]` is the successor of
    /// state `x` under control `u` at offset `k`; `stage_cost` has the same
    /// shape.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_controls: usize,
        start: usize,
        end: usize,
        next: Vec<Vec<Vec<usize>>>,
        stage_cost: Vec<Vec<Vec<C>>>,
        terminal_cost: Vec<C>,
        initial_state: usize,
    ) -> Result<Self, DpError> {
        let invalid = |m: String| Err(DpError::InvalidProblem(m));
        if n_states == 0 || n_controls == 0 {
            return invalid("state and control counts must be positive".into());
        }
        if end < start {
            return invalid(format!("horizon end {end} precedes start {start}"));
        }
        let steps = end - start;
        if next.len() != steps || stage_cost.len() != steps {
            return invalid(format!(
                "expected {steps} dynamics and cost tables, got {} and {}",
                next.len(),
                stage_cost.len()
            ));
        }
        for (k, (fk, lk)) in next.iter().zip(&stage_cost).enumerate() {
            if fk.len() != n_states || lk.len() != n_states {
                return invalid(format!("step {k}: tables must have {n_states} rows"));
            }
            for x in 0..n_states {
                if fk[x].len() != n_controls || lk[x].len() != n_controls {
                    return invalid(format!("step {k}, state {x}: expected {n_controls} controls"));
                }
                if let Some(&bad) = fk[x].iter().find(|&&y| y >= n_states) {
                    return invalid(format!("step {k}, state {x}: successor {bad} out of range"));
                }
            }
        }
        if terminal_cost.len() != n_states {
            return invalid(format!("terminal cost must have {n_states} entries"));
        }
        if terminal_cost.iter().all(|c| c.is_infinite()) {
            return invalid("terminal cost is infinite everywhere".into());
        }
        if initial_state >= n_states {
            return invalid(format!("initial state {initial_state} out of range"));
        }
        Ok(FiniteProblem {
            n_states,
            n_controls,
            start,
            end,
            next,
            stage_cost,
            terminal_cost,
            initial_state,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    /// Number of control steps, `end - start`.
    pub fn steps(&self) -> usize {
        self.end - self.start
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Successor of `x` under `u` at offset `k`.
    pub fn next_state(&self, k: usize, x: usize, u: usize) -> usize {
        self.next[k][x][u]
    }

    pub fn stage_cost(&self, k: usize, x: usize, u: usize) -> C {
        self.stage_cost[k][x][u]
    }

    pub fn terminal_cost(&self) -> &[C] {
        &self.terminal_cost
    }

    pub fn next_tables(&self) -> &[Vec<Vec<usize>>] {
        &self.next
    }

    pub fn cost_tables(&self) -> &[Vec<Vec<C>>] {
        &self.stage_cost
    }

    /// Same problem with a different initial state.
    pub fn with_initial_state(&self, x: usize) -> Result<Self, DpError> {
        if x >= self.n_states {
            return Err(DpError::InvalidProblem(format!("initial state {x} out of range")));
        }
        let mut p = self.clone();
        p.initial_state = x;
        Ok(p)
    }

    /// Same problem with one stage cost replaced.
    pub fn with_stage_cost(&self, k: usize, x: usize, u: usize, cost: C) -> Self {
        let mut p = self.clone();
        p.stage_cost[k][x][u] = cost;
        p
    }

    /// Converts every cost with `f`, keeping the structure.
    pub fn map_costs<D: Cost>(&self, f: impl Fn(C) -> D) -> FiniteProblem<D> {
        FiniteProblem {
            n_states: self.n_states,
            n_controls: self.n_controls,
            start: self.start,
            end: self.end,
            next: self.next.clone(),
            stage_cost: self
                .stage_cost
                .iter()
                .map(|t| t.iter().map(|row| row.iter().map(|&c| f(c)).collect()).collect())
                .collect(),
            terminal_cost: self.terminal_cost.iter().map(|&c| f(c)).collect(),
            initial_state: self.initial_state,
        }
    }

    /// Total cost of applying `controls` from the initial state, with the
    /// visited states.
    pub fn rollout(&self, controls: &[usize]) -> (C, Vec<usize>) {
        let mut x = self.initial_state;
        let mut states = vec![x];
        let mut total = C::ZERO;
        for (k, &u) in controls.iter().enumerate() {
            total = total.plus(self.stage_cost[k][x][u]);
            x = self.next[k][x][u];
            states.push(x);
        }
        (total.plus(self.terminal_cost[x]), states)
    }

    /// Cost of a state sequence, using the cheapest control between each pair
    /// of consecutive states. Infinite if some transition is impossible.
    pub fn path_cost(&self, states: &[usize]) -> C {
        assert_eq!(states.len(), self.steps() + 1, "path length must be steps + 1");
        let mut total = C::ZERO;
        for k in 0..self.steps() {
            let (x, y) = (states[k], states[k + 1]);
            let step = (0..self.n_controls)
                .filter(|&u| self.next[k][x][u] == y)
                .map(|u| self.stage_cost[k][x][u])
                .fold(C::INFINITY, Cost::min_cost);
            total = total.plus(step);
        }
        total.plus(self.terminal_cost[states[self.steps()]])
    }
}

/// Tabulated conditional value function: entry `(x, y)` is the cheapest cost
/// of going from `x` to `y`, `+∞` when no path exists.
#[derive(Debug, Clone, PartialEq)]
pub struct CondValueMatrix<C = f64> {
    n: usize,
    data: Vec<C>,
}

impl<C: Cost> CondValueMatrix<C> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for x in 0..n {
            for y in 0..n {
                data.push(f(x, y));
            }
        }
        CondValueMatrix { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<C>>) -> Result<Self, DpError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(DpError::DimensionMismatch {
                left: n,
                right: bad.len(),
            });
        }
        Ok(CondValueMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Min-plus identity: zero diagonal, `+∞` elsewhere.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |x, y| if x == y { C::ZERO } else { C::INFINITY })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, x: usize, y: usize) -> C {
        self.data[x * self.n + y]
    }

    pub fn row(&self, x: usize) -> &[C] {
        &self.data[x * self.n..(x + 1) * self.n]
    }

    pub fn column(&self, y: usize) -> Vec<C> {
        (0..self.n).map(|x| self.get(x, y)).collect()
    }
}

/// Min-plus product: `out[x][y] = min_z a[x][z] + b[z][y]`.
pub fn combine_min_plus<C: Cost>(
    a: &CondValueMatrix<C>,
    b: &CondValueMatrix<C>,
) -> Result<CondValueMatrix<C>, DpError> {
    if a.n != b.n {
        return Err(DpError::DimensionMismatch { left: a.n, right: b.n });
    }
    let n = a.n;
    let mut data = vec![C::INFINITY; n * n];
    for x in 0..n {
        let out = &mut data[x * n..(x + 1) * n];
        for z in 0..n {
            let head = a.data[x * n + z];
            if head.is_infinite() {
                continue;
            }
            for (o, &tail) in out.iter_mut().zip(b.row(z)) {
                *o = o.min_cost(head.plus(tail));
            }
        }
    }
    Ok(CondValueMatrix { n, data })
}

/// Per-step value functions and the greedy policy derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePolicy<C = f64> {
    /// `controls[k][x]` for offsets `k = 0..steps`.
    pub controls: Vec<Vec<usize>>,
    /// `values[k][x]` for offsets `k = 0..=steps`; the last entry is the
    /// terminal cost.
    pub values: Vec<Vec<C>>,
}

impl<C: Cost> FinitePolicy<C> {
    /// Optimal cost from the problem's initial state.
    pub fn optimal_cost(&self, p: &FiniteProblem<C>) -> C {
        self.values[0][p.initial_state]
    }
}

/// Closed-loop state transition, either a full table or a map pinned to one
/// state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateMap {
    Table(Vec<usize>),
    Const(usize),
}

impl StateMap {
    pub fn identity(n: usize) -> Self {
        StateMap::Table((0..n).collect())
    }

    pub fn apply(&self, x: usize) -> usize {
        match self {
            StateMap::Table(m) => m[x],
            StateMap::Const(c) => *c,
        }
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &StateMap) -> StateMap {
        match (self, next) {
            (_, StateMap::Const(c)) => StateMap::Const(*c),
            (StateMap::Const(c), StateMap::Table(m)) => StateMap::Const(m[*c]),
            (StateMap::Table(a), StateMap::Table(b)) => StateMap::Table(a.iter().map(|&x| b[x]).collect()),
        }
    }
}

/// One scan element per step: transition matrices for `start..end`, then the
/// terminal element whose every column is the terminal cost.
pub fn build_elements<C: Cost>(p: &FiniteProblem<C>) -> Vec<CondValueMatrix<C>> {
    let n = p.n_states;
    let mut elements: Vec<CondValueMatrix<C>> = (0..p.steps())
        .into_par_iter()
        .map(|k| {
            let mut m = CondValueMatrix {
                n,
                data: vec![C::INFINITY; n * n],
            };
            for x in 0..n {
                for u in 0..p.n_controls {
                    let y = p.next[k][x][u];
                    let slot = &mut m.data[x * n + y];
                    *slot = slot.min_cost(p.stage_cost[k][x][u]);
                }
            }
            m
        })
        .collect();
    elements.push(CondValueMatrix::from_fn(n, |x, _| p.terminal_cost[x]));
    elements
}

fn greedy_controls<C: Cost>(p: &FiniteProblem<C>, values: &[Vec<C>]) -> Vec<Vec<usize>> {
    (0..p.steps())
        .into_par_iter()
        .map(|k| {
            (0..p.n_states)
                .map(|x| {
                    let mut best = 0;
                    let mut best_cost = C::INFINITY;
                    for u in 0..p.n_controls {
                        let c = p.stage_cost[k][x][u].plus(values[k + 1][p.next[k][x][u]]);
                        if c < best_cost {
                            best = u;
                            best_cost = c;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect()
}

fn check_feasible<C: Cost>(values: &[Vec<C>]) -> Result<(), DpError> {
    if values[0].iter().all(|v| v.is_infinite()) {
        Err(DpError::Infeasible)
    } else {
        Ok(())
    }
}

/// Value functions and policy via a parallel suffix scan of min-plus elements.
pub fn solve_backward<C: Cost>(p: &FiniteProblem<C>) -> Result<FinitePolicy<C>, DpError> {
    solve_backward_instrumented(p).map(|(pol, _)| pol)
}

/// [`solve_backward`] together with the scan statistics.
pub fn solve_backward_instrumented<C: Cost>(p: &FiniteProblem<C>) -> Result<(FinitePolicy<C>, ScanStats), DpError> {
    let elements = build_elements(p);
    let identity = CondValueMatrix::identity(p.n_states);
    let (suffixes, stats) = try_par_scan(&elements, combine_min_plus, &identity, ScanDirection::Reverse)?;
    // Every column of a suffix equals the value function.
    let values: Vec<Vec<C>> = suffixes.iter().map(|s| s.column(0)).collect();
    check_feasible(&values)?;
    let controls = greedy_controls(p, &values);
    Ok((FinitePolicy { controls, values }, stats))
}

/// Classic backward Bellman sweep.
pub fn seq_bellman<C: Cost>(p: &FiniteProblem<C>) -> Result<FinitePolicy<C>, DpError> {
    let steps = p.steps();
    let mut values = vec![Vec::new(); steps + 1];
    values[steps] = p.terminal_cost.clone();
    let mut controls = vec![Vec::new(); steps];
    for k in (0..steps).rev() {
        let mut vk = Vec::with_capacity(p.n_states);
        let mut uk = Vec::with_capacity(p.n_states);
        for x in 0..p.n_states {
            let mut best = 0;
            let mut best_cost = C::INFINITY;
            for u in 0..p.n_controls {
                let c = p.stage_cost[k][x][u].plus(values[k + 1][p.next[k][x][u]]);
                if c < best_cost {
                    best = u;
                    best_cost = c;
                }
            }
            vk.push(best_cost);
            uk.push(best);
        }
        values[k] = vk;
        controls[k] = uk;
    }
    check_feasible(&values)?;
    Ok(FinitePolicy { controls, values })
}

fn start_element<C: Cost>(p: &FiniteProblem<C>) -> CondValueMatrix<C> {
    let xs = p.initial_state;
    CondValueMatrix::from_fn(p.n_states, |_, y| if y == xs { C::ZERO } else { C::INFINITY })
}

/// `V_{S→k}(x_S, ·)` for `k = start+1..=end`, by a forward prefix scan seeded
/// with an element pinned to the initial state.
pub fn forward_conditional<C: Cost>(p: &FiniteProblem<C>) -> Result<Vec<Vec<C>>, DpError> {
    forward_conditional_instrumented(p).map(|(v, _)| v)
}

/// [`forward_conditional`] together with the scan statistics.
pub fn forward_conditional_instrumented<C: Cost>(p: &FiniteProblem<C>) -> Result<(Vec<Vec<C>>, ScanStats), DpError> {
    let mut elements = build_elements(p);
    elements.pop();
    elements.insert(0, start_element(p));
    let identity = CondValueMatrix::identity(p.n_states);
    let (prefixes, stats) = try_par_scan(&elements, combine_min_plus, &identity, ScanDirection::Forward)?;
    let rows = prefixes[1..].iter().map(|m| m.row(p.initial_state).to_vec()).collect();
    Ok((rows, stats))
}

fn closed_loop_maps<C: Cost>(p: &FiniteProblem<C>, pol: &FinitePolicy<C>) -> Vec<StateMap> {
    (0..p.steps())
        .map(|k| {
            let m: Vec<usize> = (0..p.n_states).map(|x| p.next[k][x][pol.controls[k][x]]).collect();
            if k == 0 {
                StateMap::Const(m[p.initial_state])
            } else {
                StateMap::Table(m)
            }
        })
        .collect()
}

fn check_reached<C: Cost>(pol: &FinitePolicy<C>, states: &[usize]) -> Result<(), DpError> {
    for (k, &x) in states.iter().enumerate() {
        if pol.values[k][x].is_infinite() {
            return Err(DpError::PolicyUndefined { step: k, state: x });
        }
    }
    Ok(())
}

/// Optimal state sequence by a forward scan of composed closed-loop maps.
pub fn recover_traj_m1<C: Cost>(p: &FiniteProblem<C>, pol: &FinitePolicy<C>) -> Result<Vec<usize>, DpError> {
    recover_traj_m1_instrumented(p, pol).map(|(s, _)| s)
}

/// [`recover_traj_m1`] together with the scan statistics.
pub fn recover_traj_m1_instrumented<C: Cost>(
    p: &FiniteProblem<C>,
    pol: &FinitePolicy<C>,
) -> Result<(Vec<usize>, ScanStats), DpError> {
    let mut states = vec![p.initial_state];
    let mut stats = ScanStats::default();
    if p.steps() > 0 {
        let maps = closed_loop_maps(p, pol);
        let identity = StateMap::identity(p.n_states);
        let (prefixes, s) = crate::scan::par_scan(
            &maps,
            |a: &StateMap, b: &StateMap| a.then(b),
            &identity,
            ScanDirection::Forward,
        )?;
        stats = s;
        states.extend(prefixes.iter().map(|m| m.apply(p.initial_state)));
    }
    check_reached(pol, &states)?;
    Ok((states, stats))
}

/// Sequential closed-loop rollout of the policy.
pub fn rollout_policy<C: Cost>(p: &FiniteProblem<C>, pol: &FinitePolicy<C>) -> Result<Vec<usize>, DpError> {
    let maps = closed_loop_maps(p, pol);
    let states = if maps.is_empty() {
        vec![p.initial_state]
    } else {
        let (prefixes, _) = seq_scan(&maps, |a: &StateMap, b: &StateMap| a.then(b), ScanDirection::Forward)?;
        std::iter::once(p.initial_state)
            .chain(prefixes.iter().map(|m| m.apply(p.initial_state)))
            .collect()
    };
    check_reached(pol, &states)?;
    Ok(states)
}

/// Optimal state sequence as `argmin_x V_{S→k}(x_S, x) + V_k(x)` per step,
/// ties broken by the smallest state index.
pub fn recover_traj_m2<C: Cost>(
    p: &FiniteProblem<C>,
    fw: &[Vec<C>],
    pol: &FinitePolicy<C>,
) -> Result<Vec<usize>, DpError> {
    if fw.len() != p.steps() {
        return Err(DpError::DimensionMismatch {
            left: p.steps(),
            right: fw.len(),
        });
    }
    let mut states = vec![p.initial_state];
    for (i, forward) in fw.iter().enumerate() {
        let values = &pol.values[i + 1];
        let mut best = None;
        let mut best_cost = C::INFINITY;
        for x in 0..p.n_states {
            let c = forward[x].plus(values[x]);
            if c < best_cost {
                best = Some(x);
                best_cost = c;
            }
        }
        states.push(best.ok_or(DpError::Infeasible)?);
    }
    Ok(states)
}

/// Result of exhaustive search over all control sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce<C = f64> {
    pub cost: C,
    pub controls: Vec<usize>,
    pub states: Vec<usize>,
    /// Whether every optimal control sequence visits the same states.
    pub unique_trajectory: bool,
}

/// Largest number of control sequences [`brute_force_oracle`] will visit.
pub const BRUTE_FORCE_BUDGET: u128 = 10_000_000;

/// Exhaustive minimisation of the total cost over all control sequences.
/// Ties go to the lexicographically smallest control sequence.
pub fn brute_force_oracle<C: Cost>(p: &FiniteProblem<C>) -> Result<BruteForce<C>, DpError> {
    let sequences = (p.n_controls as u128)
        .checked_pow(p.steps() as u32)
        .unwrap_or(u128::MAX);
    if sequences > BRUTE_FORCE_BUDGET {
        return Err(DpError::BudgetExceeded { sequences });
    }
    let mut search = Search {
        p,
        controls: Vec::with_capacity(p.steps()),
        states: vec![p.initial_state],
        best: None,
    };
    search.descend(C::ZERO);
    Ok(search.best.expect("at least one control sequence exists"))
}

struct Search<'a, C> {
    p: &'a FiniteProblem<C>,
    controls: Vec<usize>,
    states: Vec<usize>,
    best: Option<BruteForce<C>>,
}

impl<C: Cost> Search<'_, C> {
    // Depth-first in lexicographic control order.
    fn descend(&mut self, acc: C) {
        let k = self.controls.len();
        let x = *self.states.last().unwrap();
        if k == self.p.steps() {
            let total = acc.plus(self.p.terminal_cost[x]);
            match &mut self.best {
                None => {
                    self.best = Some(BruteForce {
                        cost: total,
                        controls: self.controls.clone(),
                        states: self.states.clone(),
                        unique_trajectory: true,
                    })
                }
                Some(best) if total < best.cost => {
                    *best = BruteForce {
                        cost: total,
                        controls: self.controls.clone(),
                        states: self.states.clone(),
                        unique_trajectory: true,
                    }
                }
                Some(best) if total == best.cost && best.states != self.states => {
                    best.unique_trajectory = false;
                }
                Some(_) => {}
            }
            return;
        }
        for u in 0..self.p.n_controls {
            self.controls.push(u);
            self.states.push(self.p.next[k][x][u]);
            self.descend(acc.plus(self.p.stage_cost[k][x][u]));
            self.states.pop();
            self.controls.pop();
        }
    }
}
