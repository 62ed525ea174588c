use serde::{Deserialize, Serialize};

use super::{StimError, TaskKind};

/// Number of difficulty levels in a ladder.
pub const LEVELS: usize = 10;

/// Closed interval of the task's delta parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Ten disjoint delta bands, level 0 easiest (largest delta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyLadder {
    pub task: TaskKind,
    pub levels: Vec<Band>,
    pub per_level_count: u32,
}

impl DifficultyLadder {
    /// Default ladder for a task: color deltas over [5, 150] RGB units, line
    /// deltas over [2, 60] px and dot-count deltas over [1, 10].
    pub fn default_for(task: TaskKind) -> Self {
        let levels = match task {
            TaskKind::ColorRecognition => continuous_bands(5.0, 150.0, 0.5),
            TaskKind::LineJudgment => integer_bands(2, 60),
            TaskKind::DotsEstimation => integer_bands(1, 10),
        };
        Self { task, levels, per_level_count: 50 }
    }

    pub fn with_per_level_count(mut self, count: u32) -> Self {
        self.per_level_count = count;
        self
    }

    pub fn validate(&self) -> Result<(), StimError> {
        if self.levels.len() != LEVELS {
            return Err(StimError::Ladder(format!(
                "expected {LEVELS} bands, got {}",
                self.levels.len()
            )));
        }
        if self.per_level_count == 0 {
            return Err(StimError::Ladder("per_level_count must be positive".into()));
        }
        for (i, band) in self.levels.iter().enumerate() {
            if !(band.lo.is_finite() && band.hi.is_finite()) || band.lo <= 0.0 || band.lo > band.hi {
                return Err(StimError::Ladder(format!("band {i} is not a positive interval: {band:?}")));
            }
            if self.task.integral_delta() && band.lo.ceil() > band.hi.floor() {
                return Err(StimError::Ladder(format!("band {i} contains no integer delta")));
            }
            if i > 0 && self.levels[i].hi >= self.levels[i - 1].lo {
                return Err(StimError::Ladder(format!(
                    "bands {} and {i} overlap or are out of order",
                    i - 1
                )));
            }
        }
        Ok(())
    }

    pub fn band(&self, level: u8) -> Result<Band, StimError> {
        self.levels
            .get(level as usize)
            .copied()
            .ok_or(StimError::Level(level))
    }

    /// Upper bound of the easiest band.
    pub fn max_simplicity(&self) -> f64 {
        self.levels[0].hi
    }

    /// Lower bound of the hardest band.
    pub fn min_simplicity(&self) -> f64 {
        self.levels[LEVELS - 1].lo
    }

    /// Difficulty rescaled to [0, 1] over the ladder's range.
    pub fn normalized_difficulty(&self, difficulty: f64) -> f64 {
        let span = self.max_simplicity() - self.min_simplicity();
        if span <= 0.0 {
            return 0.0;
        }
        (difficulty / span).clamp(0.0, 1.0)
    }

    pub fn pool_size(&self) -> usize {
        LEVELS * self.per_level_count as usize
    }
}

/// Equal-width bands over [lo, hi]; every band except the easiest gives up
/// `gap` at its top so that neighbours are disjoint.
fn continuous_bands(lo: f64, hi: f64, gap: f64) -> Vec<Band> {
    let width = (hi - lo) / LEVELS as f64;
    (0..LEVELS)
        .map(|level| {
            let top = lo + (LEVELS - level) as f64 * width;
            let bottom = lo + (LEVELS - level - 1) as f64 * width;
            let top = if level == 0 { top } else { top - gap };
            Band { lo: bottom, hi: top }
        })
        .collect()
}

/// Integer bands partitioning lo..=hi; larger bands sit at the easy end.
fn integer_bands(lo: u32, hi: u32) -> Vec<Band> {
    let count = (hi - lo + 1) as usize;
    assert!(count >= LEVELS, "need at least one delta per level");
    let base = count / LEVELS;
    let extra = count % LEVELS;
    let mut top = hi;
    (0..LEVELS)
        .map(|level| {
            let size = (base + usize::from(level < extra)) as u32;
            let band = Band { lo: f64::from(top + 1 - size), hi: f64::from(top) };
            top -= size;
            band
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladders_are_valid_and_span_their_ranges() {
        for (task, lo, hi) in [
            (TaskKind::ColorRecognition, 5.0, 150.0),
            (TaskKind::LineJudgment, 2.0, 60.0),
            (TaskKind::DotsEstimation, 1.0, 10.0),
        ] {
            let ladder = DifficultyLadder::default_for(task);
            ladder.validate().unwrap();
            assert_eq!(ladder.max_simplicity(), hi);
            assert_eq!(ladder.min_simplicity(), lo);
            assert_eq!(ladder.pool_size(), 500);
        }
    }

    #[test]
    fn dots_ladder_has_one_count_per_level() {
        let ladder = DifficultyLadder::default_for(TaskKind::DotsEstimation);
        for (level, band) in ladder.levels.iter().enumerate() {
            assert_eq!(band.lo, (10 - level) as f64);
            assert_eq!(band.hi, (10 - level) as f64);
        }
    }

    #[test]
    fn overlapping_bands_are_rejected() {
        let mut ladder = DifficultyLadder::default_for(TaskKind::LineJudgment);
        ladder.levels[3].hi = ladder.levels[2].lo;
        assert!(matches!(ladder.validate(), Err(StimError::Ladder(_))));
    }

    #[test]
    fn normalized_difficulty_spans_unit_interval() {
        let ladder = DifficultyLadder::default_for(TaskKind::ColorRecognition);
        assert_eq!(ladder.normalized_difficulty(0.0), 0.0);
        assert_eq!(ladder.normalized_difficulty(145.0), 1.0);
    }
}
