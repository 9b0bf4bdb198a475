//! Bounded FIFO experience storage with uniform mini-batch sampling.

use std::io::Write;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::nn::Matrix;

/// One experience tuple `(x, u, r, x', terminal)`.
///
/// `terminal` marks a genuine end state (failure or goal). Episodes cut by a
/// time limit are stored with `terminal = false` so their targets keep
/// bootstrapping.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// A sampled mini-batch in matrix form, one tuple per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    pub states: Matrix,
    pub controls: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub terminals: Vec<bool>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[Transition]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Precondition("empty batch".into()));
        }
        let states: Vec<&[f64]> = items.iter().map(|t| t.state.as_slice()).collect();
        let controls: Vec<&[f64]> = items.iter().map(|t| t.control.as_slice()).collect();
        let next: Vec<&[f64]> = items.iter().map(|t| t.next_state.as_slice()).collect();
        Ok(Self {
            states: Matrix::from_rows(&states)?,
            controls: Matrix::from_rows(&controls)?,
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: Matrix::from_rows(&next)?,
            terminals: items.iter().map(|t| t.terminal).collect(),
        })
    }

    pub fn transition(&self, i: usize) -> Transition {
        Transition {
            state: self.states.row(i).to_vec(),
            control: self.controls.row(i).to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states.row(i).to_vec(),
            terminal: self.terminals[i],
        }
    }
}

/// Ring buffer over flat per-field storage.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    control_dim: usize,
    states: Vec<f64>,
    controls: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    terminals: Vec<bool>,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 1_000_000;

    pub fn new(capacity: usize, state_dim: usize, control_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Precondition(
                "replay capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            state_dim,
            control_dim,
            states: Vec::new(),
            controls: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            terminals: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        check_dim("ReplayBuffer::push state", self.state_dim, t.state.len())?;
        check_dim(
            "ReplayBuffer::push control",
            self.control_dim,
            t.control.len(),
        )?;
        check_dim(
            "ReplayBuffer::push next_state",
            self.state_dim,
            t.next_state.len(),
        )?;
        if self.len() < self.capacity {
            self.states.extend_from_slice(&t.state);
            self.controls.extend_from_slice(&t.control);
            self.rewards.push(t.reward);
            self.next_states.extend_from_slice(&t.next_state);
            self.terminals.push(t.terminal);
        } else {
            let i = self.head;
            let (sd, cd) = (self.state_dim, self.control_dim);
            self.states[i * sd..(i + 1) * sd].copy_from_slice(&t.state);
            self.controls[i * cd..(i + 1) * cd].copy_from_slice(&t.control);
            self.rewards[i] = t.reward;
            self.next_states[i * sd..(i + 1) * sd].copy_from_slice(&t.next_state);
            self.terminals[i] = t.terminal;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        let n = self.len();
        let start = if n < self.capacity { 0 } else { self.head };
        (0..n).map(move |k| self.slot((start + k) % n))
    }

    fn slot(&self, i: usize) -> Transition {
        let (sd, cd) = (self.state_dim, self.control_dim);
        Transition {
            state: self.states[i * sd..(i + 1) * sd].to_vec(),
            control: self.controls[i * cd..(i + 1) * cd].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * sd..(i + 1) * sd].to_vec(),
            terminal: self.terminals[i],
        }
    }

    fn draw_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::Precondition(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        if batch_size == 0 {
            return Err(Error::Precondition("batch size must be at least 1".into()));
        }
        let n = self.len();
        Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect())
    }

    /// `batch_size` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<Transition>> {
        Ok(self
            .draw_indices(batch_size, rng)?
            .into_iter()
            .map(|i| self.slot(i))
            .collect())
    }

    /// Same draws as [`ReplayBuffer::sample`], gathered straight into matrices.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<TransitionBatch> {
        let idx = self.draw_indices(batch_size, rng)?;
        let (sd, cd) = (self.state_dim, self.control_dim);
        let mut states = Vec::with_capacity(batch_size * sd);
        let mut controls = Vec::with_capacity(batch_size * cd);
        let mut next_states = Vec::with_capacity(batch_size * sd);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut terminals = Vec::with_capacity(batch_size);
        for &i in &idx {
            states.extend_from_slice(&self.states[i * sd..(i + 1) * sd]);
            controls.extend_from_slice(&self.controls[i * cd..(i + 1) * cd]);
            next_states.extend_from_slice(&self.next_states[i * sd..(i + 1) * sd]);
            rewards.push(self.rewards[i]);
            terminals.push(self.terminals[i]);
        }
        Ok(TransitionBatch {
            states: Matrix::from_vec(batch_size, sd, states)?,
            controls: Matrix::from_vec(batch_size, cd, controls)?,
            rewards,
            next_states: Matrix::from_vec(batch_size, sd, next_states)?,
            terminals,
        })
    }

    /// One row per transition, oldest first: `x..., u..., r, x'..., terminal`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = Vec::new();
        header.extend((0..self.state_dim).map(|i| format!("x{i}")));
        header.extend((0..self.control_dim).map(|i| format!("u{i}")));
        header.push("r".into());
        header.extend((0..self.state_dim).map(|i| format!("x_next{i}")));
        header.push("terminal".into());
        writeln!(out, "{}", header.join(","))?;
        for t in self.iter() {
            let mut fields: Vec<String> = Vec::new();
            fields.extend(t.state.iter().map(f64::to_string));
            fields.extend(t.control.iter().map(f64::to_string));
            fields.push(t.reward.to_string());
            fields.extend(t.next_state.iter().map(f64::to_string));
            fields.push(u8::from(t.terminal).to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}
