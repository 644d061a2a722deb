use std::io::Write;

use crate::emotion::NUM_CLASSES;

pub type Posterior = [f64; NUM_CLASSES];

/// Per-frame class posteriors of one utterance, in frame order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbTrajectory {
    pub rows: Vec<Posterior>,
}

impl ProbTrajectory {
    pub fn new(rows: Vec<Posterior>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn argmax_sequence(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax(r)).collect()
    }

    pub fn as_vectors(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.to_vec()).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "frame_index,p_angry,p_calm,p_happy,p_sad")?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(w, "{i},{},{},{},{}", r[0], r[1], r[2], r[3])?;
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Number of positions where consecutive labels differ.
pub fn switch_count(labels: &[usize]) -> usize {
    labels.windows(2).filter(|w| w[0] != w[1]).count()
}
