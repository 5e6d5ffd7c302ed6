//! Cliff-walking grid. Start is the bottom-left cell, goal the bottom-right;
//! the bottom cells between them form a cliff that ends the episode with a
//! -100 reward. Every other move costs -1, walls block movement.

use super::{
    ActionId, EnvSnapshot, EnvSpec, Observation, PayloadReader, PayloadWriter, Result, StepOutcome,
};

const KIND: u8 = 2;
const STEP_CAP: u32 = 200;

pub const ACTION_UP: u8 = 0;
pub const ACTION_DOWN: u8 = 1;
pub const ACTION_LEFT: u8 = 2;
pub const ACTION_RIGHT: u8 = 3;

#[derive(Debug, Clone)]
pub struct GridCliff {
    rows: u32,
    cols: u32,
    row: u32,
    col: u32,
    steps: u32,
}

impl GridCliff {
    pub fn new(rows: u32, cols: u32) -> Self {
        GridCliff {
            rows,
            cols,
            row: rows - 1,
            col: 0,
            steps: 0,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec::GridCliff {
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn state_count(&self) -> u64 {
        u64::from(self.rows) * u64::from(self.cols)
    }

    fn is_cliff(&self, row: u32, col: u32) -> bool {
        row == self.rows - 1 && col > 0 && col < self.cols - 1
    }

    fn is_goal(&self, row: u32, col: u32) -> bool {
        row == self.rows - 1 && col == self.cols - 1
    }

    pub fn observation(&self) -> Observation {
        Observation(u64::from(self.row) * u64::from(self.cols) + u64::from(self.col))
    }

    pub fn is_terminal(&self) -> bool {
        self.is_cliff(self.row, self.col)
            || self.is_goal(self.row, self.col)
            || self.steps >= STEP_CAP
    }

    pub fn reset(&mut self) {
        self.row = self.rows - 1;
        self.col = 0;
        self.steps = 0;
    }

    pub fn step(&mut self, action: ActionId) -> StepOutcome {
        let (mut row, mut col) = (self.row, self.col);
        match action.0 {
            ACTION_UP => row = row.saturating_sub(1),
            ACTION_DOWN => row = (row + 1).min(self.rows - 1),
            ACTION_LEFT => col = col.saturating_sub(1),
            _ => col = (col + 1).min(self.cols - 1),
        }
        self.row = row;
        self.col = col;
        self.steps += 1;
        let fell = self.is_cliff(row, col);
        StepOutcome {
            observation: self.observation(),
            reward: if fell { -100.0 } else { -1.0 },
            terminal: self.is_terminal(),
            failure: fell,
        }
    }

    pub fn save_state(&self) -> EnvSnapshot {
        let mut w = PayloadWriter::new();
        w.u32(self.rows)
            .u32(self.cols)
            .u32(self.row)
            .u32(self.col)
            .u32(self.steps);
        EnvSnapshot::encode(KIND, &w.finish())
    }

    pub fn load_state(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        let mut r = PayloadReader::new(snapshot.payload(KIND)?);
        let rows = r.u32()?;
        let cols = r.u32()?;
        let row = r.u32()?;
        let col = r.u32()?;
        let steps = r.u32()?;
        r.finish()?;
        if rows != self.rows || cols != self.cols {
            return Err(crate::error::Error::SnapshotFormat(format!(
                "snapshot for grid_cliff({rows},{cols}) loaded into grid_cliff({},{})",
                self.rows, self.cols
            )));
        }
        self.row = row;
        self.col = col;
        self.steps = steps;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_into_the_cliff_fails_the_episode() {
        let mut env = GridCliff::new(4, 12);
        // Start is directly left of the cliff; moving right falls in.
        let out = env.step(ActionId(ACTION_RIGHT));
        assert_eq!(out.reward, -100.0);
        assert!(out.terminal);
        assert!(out.failure);
    }

    #[test]
    fn cell_above_cliff_drops_on_down() {
        let mut env = GridCliff::new(4, 12);
        env.step(ActionId(ACTION_UP));
        env.step(ActionId(ACTION_RIGHT));
        let out = env.step(ActionId(ACTION_DOWN));
        assert_eq!(out.reward, -100.0);
        assert!(out.failure);
    }

    #[test]
    fn optimal_path_costs_its_length() {
        // Up, 11 rights, down: 13 moves at -1 each, the goal pays nothing
        // extra.
        let mut env = GridCliff::new(4, 12);
        let mut total = 0.0;
        total += env.step(ActionId(ACTION_UP)).reward;
        for _ in 0..11 {
            total += env.step(ActionId(ACTION_RIGHT)).reward;
        }
        let last = env.step(ActionId(ACTION_DOWN));
        total += last.reward;
        assert!(last.terminal);
        assert!(!last.failure);
        assert_eq!(total, -13.0);
    }

    #[test]
    fn walls_block_movement() {
        let mut env = GridCliff::new(4, 12);
        let out = env.step(ActionId(ACTION_LEFT));
        assert_eq!(out.observation, Observation(3 * 12));
        assert_eq!(out.reward, -1.0);
    }
}
