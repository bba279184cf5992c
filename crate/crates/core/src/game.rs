//! The diagonalization game: a single agent picks pivots until every
//! off-diagonal entry is below tolerance or the step budget runs out.

use serde::{Deserialize, Serialize};

use crate::action::{PivotAction, all_actions, num_actions};
use crate::error::{Error, Result};
use crate::matrix::{SymMatrix, Tolerance, givens_coefficients, is_converged, offdiag_sq_norm, rotate_in_place};
use crate::scalar::Scalar;

/// Default episode budget for order-5 games; other orders use
/// `3 · n(n-1)/2`.
pub fn default_game_budget(n: usize) -> usize {
    3 * num_actions(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Only the terminal outcome carries signal.
    #[default]
    Terminal,
    /// Each step also reports the off-diagonal norm drop divided by the
    /// initial off-diagonal norm.
    Shaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub tol: Tolerance,
    /// Step budget; `None` selects [`default_game_budget`].
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub reward: RewardMode,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self { tol: Tolerance::default(), max_steps: None, reward: RewardMode::Terminal }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState<T> {
    pub matrix: SymMatrix<T>,
    pub steps_taken: usize,
    pub tol: T,
    pub max_steps: usize,
    pub reward: RewardMode,
    initial_offdiag_sq: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Diagonalized,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub z: i8,
    pub terminal_kind: TerminalKind,
}

impl Outcome {
    pub const WIN: Outcome = Outcome { z: 1, terminal_kind: TerminalKind::Diagonalized };
    pub const LOSS: Outcome = Outcome { z: -1, terminal_kind: TerminalKind::BudgetExhausted };

    pub fn value(&self) -> f64 {
        f64::from(self.z)
    }
}

#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub state: GameState<T>,
    pub outcome: Option<Outcome>,
    /// Zero unless the game uses [`RewardMode::Shaped`].
    pub reward: T,
}

impl<T: Scalar> GameState<T> {
    pub fn new(matrix: SymMatrix<T>, tol: T, max_steps: usize) -> Result<Self> {
        if matrix.order() < 2 {
            return Err(Error::invalid("game needs order >= 2"));
        }
        if !(tol > T::zero()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        let initial_offdiag_sq = offdiag_sq_norm(&matrix);
        Ok(Self { matrix, steps_taken: 0, tol, max_steps, reward: RewardMode::Terminal, initial_offdiag_sq })
    }

    pub fn from_config(matrix: SymMatrix<T>, cfg: &GameConfig) -> Result<Self> {
        let tol = cfg.tol.resolve(&matrix)?;
        let budget = cfg.max_steps.unwrap_or_else(|| default_game_budget(matrix.order()));
        let mut s = Self::new(matrix, tol, budget)?;
        s.reward = cfg.reward;
        Ok(s)
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    pub fn is_diagonalized(&self) -> bool {
        is_converged(&self.matrix, self.tol).expect("tolerance validated at construction")
    }

    /// Outcome if this state is terminal.
    pub fn terminal(&self) -> Option<Outcome> {
        if self.is_diagonalized() {
            Some(Outcome::WIN)
        } else if self.steps_taken >= self.max_steps {
            Some(Outcome::LOSS)
        } else {
            None
        }
    }

    pub fn is_legal(&self, a: &PivotAction) -> bool {
        a.j < self.order() && a.i < a.j && self.matrix.get(a.i, a.j).abs() >= self.tol
    }

    pub fn legal_actions(&self) -> Vec<PivotAction> {
        all_actions(self.order()).filter(|a| self.is_legal(a)).collect()
    }

    pub fn legal_mask(&self) -> Vec<bool> {
        all_actions(self.order()).map(|a| self.is_legal(&a)).collect()
    }

    pub fn step(&self, a: PivotAction) -> Result<Transition<T>> {
        if self.terminal().is_some() {
            return Err(Error::AlreadyTerminal);
        }
        let n = self.order();
        if a.i >= n || a.j >= n {
            return Err(Error::IndexOutOfRange { i: a.i, j: a.j, n });
        }
        if a.i >= a.j {
            return Err(Error::IllegalAction { i: a.i, j: a.j, reason: "not above the diagonal" });
        }
        if !self.is_legal(&a) {
            return Err(Error::IllegalAction { i: a.i, j: a.j, reason: "entry below tolerance" });
        }
        let before = offdiag_sq_norm(&self.matrix);
        let mut next = self.clone();
        let g = givens_coefficients(&next.matrix, a.i, a.j)?;
        rotate_in_place(&mut next.matrix, &g)?;
        next.steps_taken += 1;
        let reward = match self.reward {
            RewardMode::Terminal => T::zero(),
            RewardMode::Shaped if self.initial_offdiag_sq > T::zero() => {
                (before - offdiag_sq_norm(&next.matrix)) / self.initial_offdiag_sq
            }
            RewardMode::Shaped => T::zero(),
        };
        let outcome = next.terminal();
        Ok(Transition { state: next, outcome, reward })
    }

    /// One-channel `n×n` tensor of entries divided by `max(1e-30, max|A|)`.
    pub fn encode(&self) -> Vec<f64> {
        encode_matrix(&self.matrix)
    }
}

pub fn encode_matrix<T: Scalar>(a: &SymMatrix<T>) -> Vec<f64> {
    let scale = a.max_abs().to_f64_lossy().max(1e-30);
    a.as_slice().iter().map(|v| v.to_f64_lossy() / scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(rows: &[&[f64]], max_steps: usize) -> GameState<f64> {
        let m = SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        GameState::new(m, 1e-5, max_steps).unwrap()
    }

    #[test]
    fn legal_action_examples() {
        let d = GameState::new(SymMatrix::diagonal(&[1.0, 2.0, 3.0]), 1e-5, 5).unwrap();
        assert!(d.legal_actions().is_empty());
        assert_eq!(d.terminal(), Some(Outcome::WIN));

        let full = GameState::new(SymMatrix::from_upper_fn(5, |i, j| if i == j { i as f64 } else { 0.1 }).unwrap(), 1e-5, 30)
            .unwrap();
        assert_eq!(full.legal_actions().len(), 10);

        let s = state(&[&[1.0, 1e-6, 0.2], &[1e-6, 2.0, 0.0], &[0.2, 0.0, 3.0]], 10);
        let legal = s.legal_actions();
        assert_eq!(legal.len(), 1);
        assert_eq!((legal[0].i, legal[0].j, legal[0].flat), (0, 2, 1));
        assert_eq!(s.legal_mask(), vec![false, true, false]);
    }

    #[test]
    fn one_step_win() {
        let s = state(&[&[1.0, 0.5], &[0.5, 2.0]], 30);
        let t = s.step(PivotAction::new(0, 1, 2).unwrap()).unwrap();
        assert_eq!(t.outcome, Some(Outcome::WIN));
        assert_eq!(t.state.steps_taken, 1);
        assert!(t.state.step(PivotAction::new(0, 1, 2).unwrap()).is_err());
    }

    #[test]
    fn budget_boundary_loses() {
        let s = state(&[&[1.0, 0.5, 0.4], &[0.5, 2.0, 0.3], &[0.4, 0.3, 3.0]], 3);
        let mut s = s;
        s.steps_taken = 2;
        let t = s.step(PivotAction::new(0, 1, 3).unwrap()).unwrap();
        assert_eq!(t.outcome, Some(Outcome::LOSS));
        assert_eq!(t.outcome.unwrap().terminal_kind, TerminalKind::BudgetExhausted);
    }

    #[test]
    fn illegal_actions_rejected() {
        let s = state(&[&[1.0, 0.0, 0.2], &[0.0, 2.0, 0.1], &[0.2, 0.1, 3.0]], 10);
        assert!(matches!(
            s.step(PivotAction { i: 0, j: 1, flat: 0 }),
            Err(Error::IllegalAction { reason: "entry below tolerance", .. })
        ));
        assert!(matches!(s.step(PivotAction { i: 1, j: 1, flat: 0 }), Err(Error::IllegalAction { .. })));
        assert!(s.step(PivotAction { i: 1, j: 3, flat: 0 }).is_err());
    }

    #[test]
    fn encoding_examples() {
        let id = GameState::new(SymMatrix::<f64>::identity(3), 1e-5, 5).unwrap();
        assert_eq!(id.encode(), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let z = GameState::new(SymMatrix::<f64>::zeros(2), 1e-5, 5).unwrap();
        assert_eq!(z.encode(), vec![0.0; 4]);
        let s = state(&[&[1.0, -3.0], &[-3.0, 2.0]], 5);
        let scaled = GameState::new(s.matrix.scaled(8.0), 1e-5, 5).unwrap();
        assert_eq!(s.encode(), scaled.encode());
    }

    #[test]
    fn shaped_reward_reports_norm_drop() {
        let m = SymMatrix::<f64>::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.5, 2.0, 0.5], vec![0.0, 0.5, 3.0]]).unwrap();
        let cfg = GameConfig { reward: RewardMode::Shaped, ..Default::default() };
        let s = GameState::from_config(m, &cfg).unwrap();
        let t = s.step(PivotAction::new(0, 1, 3).unwrap()).unwrap();
        assert!((t.reward - 0.5).abs() < 1e-12);
        let plain = GameState::from_config(s.matrix.clone(), &GameConfig::default()).unwrap();
        assert_eq!(plain.step(PivotAction::new(0, 1, 3).unwrap()).unwrap().reward, 0.0);
        assert_eq!(plain.max_steps, 9);
    }
}
