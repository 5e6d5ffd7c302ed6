//! A corridor of states `0..=length`. The agent starts in the middle,
//! reaching `length` pays +1, reaching 0 pays -1 and counts as a failure.

use super::{
    ActionId, EnvSnapshot, EnvSpec, Observation, PayloadReader, PayloadWriter, Result, StepOutcome,
};

const KIND: u8 = 1;

#[derive(Debug, Clone)]
pub struct LineWorld {
    length: u32,
    pos: u32,
    steps: u32,
}

impl LineWorld {
    pub fn new(length: u32) -> Self {
        LineWorld {
            length,
            pos: length / 2,
            steps: 0,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec::LineWorld {
            length: self.length,
        }
    }

    fn step_cap(&self) -> u32 {
        4 * self.length
    }

    pub fn state_count(&self) -> u64 {
        u64::from(self.length) + 1
    }

    pub fn observation(&self) -> Observation {
        Observation(u64::from(self.pos))
    }

    pub fn is_terminal(&self) -> bool {
        self.pos == 0 || self.pos == self.length || self.steps >= self.step_cap()
    }

    pub fn reset(&mut self) {
        self.pos = self.length / 2;
        self.steps = 0;
    }

    pub fn step(&mut self, action: ActionId) -> StepOutcome {
        self.pos = match action.0 {
            0 => self.pos.saturating_sub(1),
            _ => (self.pos + 1).min(self.length),
        };
        self.steps += 1;
        let (reward, failure) = if self.pos == 0 {
            (-1.0, true)
        } else if self.pos == self.length {
            (1.0, false)
        } else {
            (0.0, false)
        };
        StepOutcome {
            observation: self.observation(),
            reward,
            terminal: self.is_terminal(),
            failure,
        }
    }

    pub fn save_state(&self) -> EnvSnapshot {
        let mut w = PayloadWriter::new();
        w.u32(self.length).u32(self.pos).u32(self.steps);
        EnvSnapshot::encode(KIND, &w.finish())
    }

    pub fn load_state(&mut self, snapshot: &EnvSnapshot) -> Result<()> {
        let mut r = PayloadReader::new(snapshot.payload(KIND)?);
        let length = r.u32()?;
        let pos = r.u32()?;
        let steps = r.u32()?;
        r.finish()?;
        if length != self.length {
            return Err(crate::error::Error::SnapshotFormat(format!(
                "snapshot for line_world({length}) loaded into line_world({})",
                self.length
            )));
        }
        self.pos = pos;
        self.steps = steps;
        Ok(())
    }
}
