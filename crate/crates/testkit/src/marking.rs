//! Token-count model of the step graph.
//!
//! Steps are addressed by index and carry an integer token count, so a
//! marking bug that puts two tokens on one step shows up as a count of 2
//! rather than being absorbed by a set.

use cotrain_core::dsl::{ActionKind, Scenario};
use cotrain_core::{ActionId, StepId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenModel {
    steps: Vec<StepId>,
    actions: Vec<Option<ActionId>>,
    collaborative: Vec<bool>,
    transitions: Vec<(Vec<usize>, Vec<usize>)>,
    pub tokens: Vec<u32>,
    pub done: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    NotEnabled(ActionId),
    /// Safeness violated: a step would carry two tokens.
    Unsafe(StepId),
}

impl TokenModel {
    pub fn new(scenario: &Scenario) -> Self {
        let steps: Vec<StepId> = scenario.graph.steps.keys().cloned().collect();
        let index = |s: &StepId| steps.iter().position(|x| x == s).expect("known step");
        let actions: Vec<Option<ActionId>> = steps
            .iter()
            .map(|s| scenario.graph.steps[s].action.clone())
            .collect();
        let collaborative = actions
            .iter()
            .map(|a| {
                a.as_ref()
                    .and_then(|a| scenario.action(a))
                    .is_some_and(|a| matches!(a.kind, ActionKind::Collaborative { .. }))
            })
            .collect();
        let transitions = scenario
            .graph
            .transitions
            .iter()
            .map(|t| {
                (
                    t.from.iter().map(index).collect(),
                    t.to.iter().map(index).collect(),
                )
            })
            .collect();
        let tokens = steps
            .iter()
            .map(|s| u32::from(scenario.graph.steps[s].initial))
            .collect();
        let done = vec![false; steps.len()];
        Self {
            steps,
            actions,
            collaborative,
            transitions,
            tokens,
            done,
        }
    }

    /// Actions offered now, sorted by id.
    pub fn enabled(&self) -> Vec<ActionId> {
        let mut out: Vec<ActionId> = (0..self.steps.len())
            .filter(|&i| self.tokens[i] == 1 && !self.done[i] && !self.collaborative[i])
            .filter_map(|i| self.actions[i].clone())
            .collect();
        out.sort();
        out
    }

    pub fn marked(&self) -> Vec<StepId> {
        (0..self.steps.len())
            .filter(|&i| self.tokens[i] > 0)
            .map(|i| self.steps[i].clone())
            .collect()
    }

    pub fn complete(&mut self, action: &ActionId) -> Result<(), ModelError> {
        let i = self
            .actions
            .iter()
            .position(|a| a.as_ref() == Some(action))
            .filter(|&i| self.tokens[i] == 1 && !self.done[i])
            .ok_or_else(|| ModelError::NotEnabled(action.clone()))?;
        self.done[i] = true;
        loop {
            let ready = self
                .transitions
                .iter()
                .position(|(from, _)| from.iter().all(|&s| self.tokens[s] == 1 && self.done[s]));
            let Some(t) = ready else { return Ok(()) };
            let (from, to) = self.transitions[t].clone();
            for s in from {
                self.tokens[s] -= 1;
                self.done[s] = false;
            }
            for s in to {
                self.tokens[s] += 1;
                if self.tokens[s] > 1 {
                    return Err(ModelError::Unsafe(self.steps[s].clone()));
                }
                if self.collaborative[s] {
                    self.done[s] = true;
                }
            }
        }
    }

    /// Clears a notification's done flag, as an expiry does.
    pub fn expire(&mut self, action: &ActionId) {
        if let Some(i) = self.actions.iter().position(|a| a.as_ref() == Some(action)) {
            self.done[i] = false;
        }
    }

    pub fn is_complete(&self) -> bool {
        let marked: Vec<usize> = (0..self.steps.len())
            .filter(|&i| self.tokens[i] > 0)
            .collect();
        !marked.is_empty() && marked.iter().all(|&i| self.actions[i].is_none())
    }
}
