//! History blocks `(W_{t−i}, A_{t−i}, …, W_t)` and the rolling window a
//! deployed policy keeps to recover its current censoring depth.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{Action, Observation};

/// A block of `depth` past (observation, action) pairs followed by the
/// current observation. The oldest observation is the uncensored anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryBlock {
    pub steps: Vec<(Observation, Action)>,
    pub current: Observation,
}

impl HistoryBlock {
    pub fn single(current: Observation) -> Self {
        HistoryBlock {
            steps: Vec::new(),
            current,
        }
    }

    pub fn depth(&self) -> usize {
        self.steps.len()
    }

    /// Oldest observation in the block.
    pub fn anchor(&self) -> &Observation {
        self.steps.first().map(|(w, _)| w).unwrap_or(&self.current)
    }

    /// Appends `(current, action)` and moves to `next`.
    pub fn extend(&self, action: Action, next: Observation) -> HistoryBlock {
        let mut steps = self.steps.clone();
        steps.push((self.current.clone(), action));
        HistoryBlock {
            steps,
            current: next,
        }
    }
}

/// Bounded window of the most recent observations and actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedWindow {
    past: VecDeque<(Observation, Action)>,
    current: Observation,
    cap: usize,
}

impl ObservedWindow {
    /// `cap` is the number of past steps retained; it must exceed the
    /// deepest censoring run the caller needs to resolve.
    pub fn new(first: Observation, cap: usize) -> Self {
        ObservedWindow {
            past: VecDeque::with_capacity(cap + 1),
            current: first,
            cap,
        }
    }

    pub fn current(&self) -> &Observation {
        &self.current
    }

    pub fn push(&mut self, action: Action, next: Observation) {
        let prev = std::mem::replace(&mut self.current, next);
        self.past.push_back((prev, action));
        while self.past.len() > self.cap {
            self.past.pop_front();
        }
    }

    /// Number of consecutive censored periods immediately preceding the
    /// current one. Saturates at `past_len() + 1` when the whole window is
    /// censored.
    pub fn censoring_depth(&self) -> usize {
        if self.current.delta_prev {
            return 0;
        }
        1 + self
            .past
            .iter()
            .rev()
            .take_while(|(w, _)| !w.delta_prev)
            .count()
    }

    pub fn past_len(&self) -> usize {
        self.past.len()
    }

    /// The trailing block of the given depth, if the window holds it.
    pub fn block(&self, depth: usize) -> Option<HistoryBlock> {
        if depth > self.past.len() {
            return None;
        }
        let start = self.past.len() - depth;
        Some(HistoryBlock {
            steps: self.past.iter().skip(start).cloned().collect(),
            current: self.current.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(y: f64, delta_prev: bool) -> Observation {
        Observation {
            x: vec![],
            y,
            z_prev: y,
            delta_prev,
        }
    }

    fn act() -> Action {
        Action { p: 4.0, o: 1.0 }
    }

    #[test]
    fn depth_counts_trailing_censoring() {
        let mut w = ObservedWindow::new(obs(0.0, true), 6);
        assert_eq!(w.censoring_depth(), 0);
        w.push(act(), obs(1.0, false));
        assert_eq!(w.censoring_depth(), 1);
        w.push(act(), obs(2.0, false));
        assert_eq!(w.censoring_depth(), 2);
        w.push(act(), obs(3.0, true));
        assert_eq!(w.censoring_depth(), 0);
        w.push(act(), obs(4.0, false));
        let b = w.block(1).unwrap();
        assert_eq!(b.depth(), 1);
        assert_eq!(b.anchor().y, 3.0);
        assert!(b.anchor().delta_prev);
        let e = b.extend(act(), obs(5.0, false));
        assert_eq!(e.depth(), 2);
        assert_eq!(e.current.y, 5.0);
        assert_eq!(e.steps[1].0.y, 4.0);
    }

    #[test]
    fn window_is_bounded() {
        let mut w = ObservedWindow::new(obs(0.0, true), 2);
        for i in 0..5 {
            w.push(act(), obs(i as f64, false));
        }
        assert!(w.block(3).is_none());
        assert_eq!(w.block(2).unwrap().steps.len(), 2);
        assert_eq!(w.censoring_depth(), 3);
    }
}
