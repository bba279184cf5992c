//! Jacobi eigensolvers driven by a pivot rule.

use serde::{Deserialize, Serialize};

use crate::action::{PivotAction, all_actions, num_actions};
use crate::error::{Error, Result};
use crate::matrix::{
    DenseMatrix, EigenResult, SymMatrix, accumulate_in_place, givens_coefficients, is_converged,
    offdiag_max, rotate_in_place,
};
use crate::scalar::Scalar;
use crate::selfplay::LearnedAgent;

/// Ordered pivots of one solve plus its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvePath<T> {
    pub pivots: Vec<PivotAction>,
    pub steps: usize,
    /// `offdiag_max` after each rotation.
    pub offdiag_trace: Vec<T>,
    pub result: EigenResult<T>,
    pub converged: bool,
    /// Off-diagonal entries inspected while choosing pivots.
    pub element_visits: usize,
}

/// Chooses the next pivot of a not-yet-converged matrix.
pub trait PivotRule<T: Scalar> {
    /// Returns the pivot and the number of entries inspected to find it.
    fn next_pivot(&mut self, a: &SymMatrix<T>, tol: T) -> Result<(PivotAction, usize)>;
}

/// Largest off-diagonal magnitude first.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxElement;

impl<T: Scalar> PivotRule<T> for MaxElement {
    fn next_pivot(&mut self, a: &SymMatrix<T>, _tol: T) -> Result<(PivotAction, usize)> {
        let (_, p) = offdiag_max(a)?;
        Ok((p, num_actions(a.order())))
    }
}

/// Row-major sweep over the upper triangle, skipping entries below
/// tolerance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cyclic {
    cursor: usize,
}

impl<T: Scalar> PivotRule<T> for Cyclic {
    fn next_pivot(&mut self, a: &SymMatrix<T>, tol: T) -> Result<(PivotAction, usize)> {
        let n = a.order();
        for visit in 1..=num_actions(n) {
            let (p, next) = cyclic_next(n, self.cursor)?;
            self.cursor = next;
            if a.get(p.i, p.j).abs() >= tol {
                return Ok((p, visit));
            }
        }
        Err(Error::invalid("cyclic sweep found no pivot above tolerance"))
    }
}

/// Replays a fixed pivot sequence.
#[derive(Debug, Clone)]
pub struct Scripted {
    pivots: Vec<PivotAction>,
    at: usize,
}

impl Scripted {
    pub fn new(pivots: Vec<PivotAction>) -> Self {
        Self { pivots, at: 0 }
    }
}

impl<T: Scalar> PivotRule<T> for Scripted {
    fn next_pivot(&mut self, _a: &SymMatrix<T>, _tol: T) -> Result<(PivotAction, usize)> {
        let p = *self
            .pivots
            .get(self.at)
            .ok_or_else(|| Error::invalid("scripted pivot sequence exhausted"))?;
        self.at += 1;
        Ok((p, 1))
    }
}

/// Pivot at `cursor` in the row-major sweep, and the following cursor.
pub fn cyclic_next(n: usize, cursor: usize) -> Result<(PivotAction, usize)> {
    if n < 2 {
        return Err(Error::invalid("cyclic sweep needs order >= 2"));
    }
    let total = num_actions(n);
    let flat = cursor % total;
    Ok((PivotAction::from_flat(flat, n)?, (flat + 1) % total))
}

/// Default step budget, `20 · n(n-1)/2`.
pub fn default_max_steps(n: usize) -> usize {
    20 * num_actions(n)
}

/// Runs Jacobi rotations chosen by `rule` until converged or out of budget.
pub fn solve_with<T: Scalar, R: PivotRule<T> + ?Sized>(
    a0: &SymMatrix<T>,
    rule: &mut R,
    tol: T,
    max_steps: usize,
) -> Result<SolvePath<T>> {
    let n = a0.order();
    if n < 2 {
        return Err(Error::invalid("solve needs order >= 2"));
    }
    if !(tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if max_steps == 0 {
        return Err(Error::invalid("max_steps must be at least 1"));
    }
    let mut a = a0.clone();
    let mut u = DenseMatrix::identity(n);
    let mut pivots = Vec::new();
    let mut trace = Vec::new();
    let mut visits = 0;
    let converged = loop {
        if is_converged(&a, tol)? {
            break true;
        }
        if pivots.len() == max_steps {
            break false;
        }
        let (p, v) = rule.next_pivot(&a, tol)?;
        visits += v;
        let g = givens_coefficients(&a, p.i, p.j)?;
        rotate_in_place(&mut a, &g)?;
        accumulate_in_place(&mut u, &g)?;
        pivots.push(p);
        trace.push(offdiag_max(&a)?.0);
    };
    Ok(SolvePath {
        steps: pivots.len(),
        result: EigenResult { eigenvalues: a.diag(), vectors: u, rotations_applied: pivots.len() },
        pivots,
        offdiag_trace: trace,
        converged,
        element_visits: visits,
    })
}

/// Pivot strategy selector.
#[derive(Clone, Copy)]
pub enum StrategyKind<'a> {
    MaxElement,
    Cyclic,
    Learned(&'a LearnedAgent),
}

impl std::fmt::Debug for StrategyKind<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StrategyKind::MaxElement => write!(f, "MaxElement"),
            StrategyKind::Cyclic => write!(f, "Cyclic"),
            StrategyKind::Learned(_) => write!(f, "Learned"),
        }
    }
}

pub fn solve(a: &SymMatrix<f64>, strategy: StrategyKind<'_>, tol: f64, max_steps: usize) -> Result<SolvePath<f64>> {
    match strategy {
        StrategyKind::MaxElement => solve_with(a, &mut MaxElement, tol, max_steps),
        StrategyKind::Cyclic => solve_with(a, &mut Cyclic::default(), tol, max_steps),
        StrategyKind::Learned(agent) => agent.solve(a, tol, max_steps),
    }
}

/// Sorted spectrum from a long MaxElement run at `tol = 1e-12`.
///
/// This is a self-consistency oracle: it shares the rotation code with the
/// solvers it checks, but not their stopping point or pivot order.
pub fn reference_spectrum(a: &SymMatrix<f64>) -> Result<Vec<f64>> {
    if a.order() == 1 {
        return Ok(a.diag());
    }
    let path = solve_with(a, &mut MaxElement, 1e-12, 200 * num_actions(a.order()))?;
    Ok(path.result.sorted_eigenvalues())
}

/// Default node budget for [`brute_force_shortest_path`].
pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

/// Exhaustive breadth-first search for the shortest pivot sequence reaching
/// convergence. Only pivots at or above `tol` are expanded.
///
/// Returns `(None, None)` when no sequence of at most `depth_limit` steps
/// converges.
pub fn brute_force_shortest_path(
    a: &SymMatrix<f64>,
    tol: f64,
    depth_limit: usize,
    node_budget: usize,
) -> Result<(Option<usize>, Option<SolvePath<f64>>)> {
    let n = a.order();
    if n < 2 {
        return Err(Error::invalid("search needs order >= 2"));
    }
    if is_converged(a, tol)? {
        let path = solve_with(a, &mut Scripted::new(vec![]), tol, 1)?;
        return Ok((Some(0), Some(path)));
    }
    let mut frontier: Vec<(SymMatrix<f64>, Vec<PivotAction>)> = vec![(a.clone(), vec![])];
    let mut generated = 0usize;
    for depth in 1..=depth_limit {
        let branching = num_actions(n);
        if generated.saturating_add(frontier.len().saturating_mul(branching)) > node_budget {
            return Err(Error::NodeBudgetExceeded { budget: node_budget });
        }
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for (m, path) in &frontier {
            for p in all_actions(n) {
                if m.get(p.i, p.j).abs() < tol {
                    continue;
                }
                generated += 1;
                let mut child = m.clone();
                let g = givens_coefficients(&child, p.i, p.j)?;
                rotate_in_place(&mut child, &g)?;
                let mut child_path = path.clone();
                child_path.push(p);
                if is_converged(&child, tol)? {
                    let witness = solve_with(a, &mut Scripted::new(child_path), tol, depth)?;
                    debug_assert!(witness.converged && witness.steps == depth);
                    return Ok((Some(depth), Some(witness)));
                }
                next.push((child, child_path));
            }
        }
        frontier = next;
    }
    Ok((None, None))
}
