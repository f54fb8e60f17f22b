//! Mixed-radix indexing of joint states and joint actions.
//!
//! Agent 0 is the most significant digit in both encodings.

use crate::error::{Error, Result};
use crate::mdp::ActionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointSpace {
    pub n_agents: usize,
    pub agent_states: usize,
    pub agent_actions: usize,
}

impl JointSpace {
    pub fn new(n_agents: usize, agent_states: usize, agent_actions: usize) -> Result<Self> {
        let space = Self {
            n_agents,
            agent_states,
            agent_actions,
        };
        let bits = (agent_states as f64).log2() * n_agents as f64;
        if bits >= 127.0 || space.checked_actions().is_none() {
            return Err(Error::JointSpaceTooLarge(format!(
                "{n_agents} agents with {agent_states} states and {agent_actions} actions each"
            )));
        }
        Ok(space)
    }

    fn checked_actions(&self) -> Option<usize> {
        (0..self.n_agents).try_fold(1usize, |acc, _| acc.checked_mul(self.agent_actions))
    }

    pub fn n_joint_actions(&self) -> usize {
        self.checked_actions().expect("checked at construction")
    }

    /// Joint state count when it fits in `usize`.
    pub fn n_joint_states(&self) -> Option<usize> {
        (0..self.n_agents).try_fold(1usize, |acc, _| acc.checked_mul(self.agent_states))
    }

    pub fn state_key(&self, states: &[usize]) -> u128 {
        states
            .iter()
            .fold(0u128, |acc, &s| acc * self.agent_states as u128 + s as u128)
    }

    pub fn decode_state(&self, mut key: u128) -> Vec<usize> {
        let mut out = vec![0; self.n_agents];
        for slot in out.iter_mut().rev() {
            *slot = (key % self.agent_states as u128) as usize;
            key /= self.agent_states as u128;
        }
        out
    }

    pub fn action_index(&self, actions: &[usize]) -> usize {
        actions.iter().fold(0, |acc, &a| acc * self.agent_actions + a)
    }

    pub fn decode_action(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.n_agents];
        for slot in out.iter_mut().rev() {
            *slot = index % self.agent_actions;
            index /= self.agent_actions;
        }
        out
    }

    /// A joint action is valid when every component is valid for its agent.
    pub fn joint_valid(&self, mask: &ActionMask, states: &[usize], actions: &[usize]) -> bool {
        states.iter().zip(actions).all(|(&s, &a)| mask.is_valid(s, a))
    }

    /// Validity flags of every joint action at `states`.
    pub fn joint_mask_row(&self, mask: &ActionMask, states: &[usize]) -> Vec<bool> {
        (0..self.n_joint_actions())
            .map(|j| self.joint_valid(mask, states, &self.decode_action(j)))
            .collect()
    }
}
