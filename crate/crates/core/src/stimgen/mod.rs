//! Deterministic generation of the three visual discrimination stimuli.
//!
//! Each stimulus shows three labelled elements: `A` on the left, the reference
//! in the middle and `B` on the right. Exactly one of `A`/`B` matches the
//! reference; the other differs by a delta drawn from the requested difficulty
//! band. Generation is a pure function of `(task, seed, level, ladder)`.

mod font;
mod ladder;
mod render;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed};

pub use ladder::{Band, DifficultyLadder, LEVELS};
pub use render::{
    element_center_x, encode_png, CANVAS_HEIGHT, CANVAS_WIDTH, COLOR_SQUARE_CENTER_Y,
    DOT_BOX_BOTTOM, DOT_BOX_TOP, DOT_RADIUS, LINE_BOTTOM,
};

/// Reference length for the line task, in pixels.
pub const LINE_REFERENCE_LEN: u32 = 200;
/// Range of reference dot counts.
pub const DOT_REFERENCE_RANGE: (u32, u32) = (15, 30);
/// Rejection-sampling budget for dot placement, per box.
pub const DOT_PLACEMENT_RETRIES: u32 = 10_000;

const COLOR_DIRECTION_RETRIES: u32 = 2_000;
const MAX_LINE_LEN: u32 = LINE_BOTTOM - 20;

#[derive(Debug, Error)]
pub enum StimError {
    #[error("invalid stimulus parameters: {0}")]
    InvalidParams(String),
    #[error("invalid difficulty ladder: {0}")]
    Ladder(String),
    #[error("difficulty level {0} outside 0..=9")]
    Level(u8),
    #[error("simplicity {simplicity} exceeds ladder maximum {max}")]
    AboveLadder { simplicity: f64, max: f64 },
    #[error("ladder is for {ladder:?}, requested {requested:?}")]
    TaskMismatch { ladder: TaskKind, requested: TaskKind },
    #[error("dot placement exceeded {retries} retries (seed {seed})")]
    Placement { seed: u64, retries: u32 },
    #[error("no distractor color found in band [{lo}, {hi}] (seed {seed})")]
    ColorSampling { seed: u64, lo: f64, hi: f64 },
    #[error("failed to write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("png encoding failed: {0}")]
    Encode(String),
    #[error("manifest serialization failed: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LineJudgment,
    ColorRecognition,
    DotsEstimation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] =
        [TaskKind::LineJudgment, TaskKind::ColorRecognition, TaskKind::DotsEstimation];

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::LineJudgment => "line_judgment",
            TaskKind::ColorRecognition => "color_recognition",
            TaskKind::DotsEstimation => "dots_estimation",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.slug() == s)
    }

    /// Caption drawn beneath the reference element.
    pub fn reference_caption(self) -> &'static str {
        match self {
            TaskKind::LineJudgment => "REFERENCE LINE",
            TaskKind::ColorRecognition => "REFERENCE COLOR",
            TaskKind::DotsEstimation => "REFERENCE BOX",
        }
    }

    fn integral_delta(self) -> bool {
        !matches!(self, TaskKind::ColorRecognition)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Answer label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn other(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorParams {
    pub ref_rgb: [u8; 3],
    pub distractor_rgb: [u8; 3],
    pub delta_rgb: f64,
}

impl ColorParams {
    pub fn new(ref_rgb: [u8; 3], distractor_rgb: [u8; 3]) -> Result<Self, StimError> {
        let delta_rgb = rgb_distance(ref_rgb, distractor_rgb);
        if delta_rgb <= 0.0 {
            return Err(StimError::InvalidParams("distractor color equals reference".into()));
        }
        Ok(Self { ref_rgb, distractor_rgb, delta_rgb })
    }
}

/// Euclidean distance between two RGB triples.
pub fn rgb_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    let sq: i32 = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = i32::from(x) - i32::from(y);
            d * d
        })
        .sum();
    f64::from(sq).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineParams {
    pub ref_len_px: u32,
    pub distractor_len_px: u32,
    pub delta_len: u32,
}

impl LineParams {
    pub fn new(ref_len_px: u32, distractor_len_px: u32) -> Result<Self, StimError> {
        if ref_len_px == 0 || distractor_len_px == 0 {
            return Err(StimError::InvalidParams("line lengths must be positive".into()));
        }
        let delta_len = ref_len_px.abs_diff(distractor_len_px);
        if delta_len == 0 {
            return Err(StimError::InvalidParams("distractor line equals reference".into()));
        }
        Ok(Self { ref_len_px, distractor_len_px, delta_len })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotsParams {
    pub ref_count: u32,
    pub distractor_count: u32,
    pub delta_count: u32,
}

impl DotsParams {
    pub fn new(ref_count: u32, distractor_count: u32) -> Result<Self, StimError> {
        if ref_count == 0 || distractor_count == 0 {
            return Err(StimError::InvalidParams("dot counts must be positive".into()));
        }
        let delta_count = ref_count.abs_diff(distractor_count);
        if delta_count == 0 {
            return Err(StimError::InvalidParams("distractor count equals reference".into()));
        }
        Ok(Self { ref_count, distractor_count, delta_count })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StimulusParams {
    Color(ColorParams),
    Line(LineParams),
    Dots(DotsParams),
}

impl StimulusParams {
    pub fn task(&self) -> TaskKind {
        match self {
            StimulusParams::Color(_) => TaskKind::ColorRecognition,
            StimulusParams::Line(_) => TaskKind::LineJudgment,
            StimulusParams::Dots(_) => TaskKind::DotsEstimation,
        }
    }
}

/// The visual property shown by one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementValue {
    Rgb([u8; 3]),
    Length(u32),
    Count(u32),
}

impl StimulusParams {
    /// Values of the (A, reference, B) elements given the correct side.
    pub fn element_values(&self, correct: Label) -> [ElementValue; 3] {
        let (reference, distractor) = match self {
            StimulusParams::Color(p) => (ElementValue::Rgb(p.ref_rgb), ElementValue::Rgb(p.distractor_rgb)),
            StimulusParams::Line(p) => {
                (ElementValue::Length(p.ref_len_px), ElementValue::Length(p.distractor_len_px))
            }
            StimulusParams::Dots(p) => {
                (ElementValue::Count(p.ref_count), ElementValue::Count(p.distractor_count))
            }
        };
        match correct {
            Label::A => [reference, reference, distractor],
            Label::B => [distractor, reference, reference],
        }
    }
}

/// Raw visual delta of the parameters: the simplicity index.
pub fn simplicity_of(params: &StimulusParams) -> f64 {
    match params {
        StimulusParams::Color(p) => p.delta_rgb,
        StimulusParams::Line(p) => f64::from(p.delta_len),
        StimulusParams::Dots(p) => f64::from(p.delta_count),
    }
}

/// `max_simplicity - simplicity` on the ladder's scale.
pub fn difficulty_of(
    simplicity: f64,
    task: TaskKind,
    ladder: &DifficultyLadder,
) -> Result<f64, StimError> {
    if ladder.task != task {
        return Err(StimError::TaskMismatch { ladder: ladder.task, requested: task });
    }
    let max = ladder.max_simplicity();
    if simplicity > max {
        return Err(StimError::AboveLadder { simplicity, max });
    }
    Ok(max - simplicity)
}

/// A rendered stimulus with its generation parameters.
#[derive(Debug, Clone)]
pub struct Stimulus {
    pub id: String,
    pub task: TaskKind,
    pub seed: u64,
    pub level: u8,
    pub correct_label: Label,
    pub params: StimulusParams,
    pub simplicity: f64,
    pub difficulty: f64,
    pub difficulty_norm: f64,
    pub image: RgbImage,
}

/// One manifest line; the image is referenced by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub task: TaskKind,
    pub seed: u64,
    pub level: u8,
    pub correct_label: Label,
    pub params: StimulusParams,
    pub simplicity: f64,
    pub difficulty: f64,
    pub difficulty_norm: f64,
    pub image_path: String,
}

impl Stimulus {
    pub fn stable_id(task: TaskKind, level: u8, seed: u64) -> String {
        format!("{}-l{level}-{seed:016x}", task.slug())
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, StimError> {
        encode_png(&self.image)
    }

    pub fn manifest_row(&self, image_path: impl Into<String>) -> ManifestRow {
        ManifestRow {
            id: self.id.clone(),
            task: self.task,
            seed: self.seed,
            level: self.level,
            correct_label: self.correct_label,
            params: self.params.clone(),
            simplicity: self.simplicity,
            difficulty: self.difficulty,
            difficulty_norm: self.difficulty_norm,
            image_path: image_path.into(),
        }
    }
}

/// Generates one stimulus. Pure in its arguments.
pub fn generate(
    task: TaskKind,
    seed: u64,
    level: u8,
    ladder: &DifficultyLadder,
) -> Result<Stimulus, StimError> {
    if ladder.task != task {
        return Err(StimError::TaskMismatch { ladder: ladder.task, requested: task });
    }
    ladder.validate()?;
    let band = ladder.band(level)?;
    let mut rng = rng_from_seed(seed);
    let correct_label = if rng.random_bool(0.5) { Label::A } else { Label::B };

    let (params, dots) = match task {
        TaskKind::ColorRecognition => (sample_color(&mut rng, band, seed)?, None),
        TaskKind::LineJudgment => (sample_line(&mut rng, band)?, None),
        TaskKind::DotsEstimation => {
            let params = sample_dots(&mut rng, band)?;
            let counts = match &params {
                StimulusParams::Dots(p) => match correct_label {
                    Label::A => [p.ref_count, p.ref_count, p.distractor_count],
                    Label::B => [p.distractor_count, p.ref_count, p.ref_count],
                },
                _ => unreachable!(),
            };
            let mut layouts = Vec::with_capacity(3);
            for (i, &count) in counts.iter().enumerate() {
                layouts.push(render::place_dots(&mut rng, count, i, seed)?);
            }
            (params, Some(layouts))
        }
    };

    let simplicity = simplicity_of(&params);
    let difficulty = difficulty_of(simplicity, task, ladder)?;
    let image = render::render(task, &params.element_values(correct_label), dots.as_deref());

    Ok(Stimulus {
        id: Stimulus::stable_id(task, level, seed),
        task,
        seed,
        level,
        correct_label,
        params,
        simplicity,
        difficulty,
        difficulty_norm: ladder.normalized_difficulty(difficulty),
        image,
    })
}

fn sample_color(rng: &mut ChaCha8Rng, band: Band, seed: u64) -> Result<StimulusParams, StimError> {
    for _ in 0..64 {
        let reference: [u8; 3] = [rng.random(), rng.random(), rng.random()];
        for _ in 0..COLOR_DIRECTION_RETRIES {
            let target = rng.random_range(band.lo..=band.hi);
            let dir = unit_direction(rng);
            let mut distractor = [0u8; 3];
            let mut in_range = true;
            for k in 0..3 {
                let v = (f64::from(reference[k]) + target * dir[k]).round();
                if !(0.0..=255.0).contains(&v) {
                    in_range = false;
                    break;
                }
                distractor[k] = v as u8;
            }
            if !in_range {
                continue;
            }
            let delta = rgb_distance(reference, distractor);
            if delta > 0.0 && band.contains(delta) {
                return Ok(StimulusParams::Color(ColorParams::new(reference, distractor)?));
            }
        }
    }
    Err(StimError::ColorSampling { seed, lo: band.lo, hi: band.hi })
}

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-6 && norm <= 1.0 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

fn integer_delta(rng: &mut ChaCha8Rng, band: Band) -> u32 {
    let lo = band.lo.ceil() as u32;
    let hi = band.hi.floor() as u32;
    rng.random_range(lo..=hi)
}

fn sample_line(rng: &mut ChaCha8Rng, band: Band) -> Result<StimulusParams, StimError> {
    let delta = integer_delta(rng, band);
    let longer = rng.random_bool(0.5);
    let distractor = if longer || delta >= LINE_REFERENCE_LEN {
        LINE_REFERENCE_LEN + delta
    } else {
        LINE_REFERENCE_LEN - delta
    };
    if distractor > MAX_LINE_LEN {
        return Err(StimError::InvalidParams(format!(
            "line delta {delta} does not fit the canvas"
        )));
    }
    Ok(StimulusParams::Line(LineParams::new(LINE_REFERENCE_LEN, distractor)?))
}

fn sample_dots(rng: &mut ChaCha8Rng, band: Band) -> Result<StimulusParams, StimError> {
    let reference = rng.random_range(DOT_REFERENCE_RANGE.0..=DOT_REFERENCE_RANGE.1);
    let delta = integer_delta(rng, band);
    let more = rng.random_bool(0.5);
    let distractor = if more || delta >= reference { reference + delta } else { reference - delta };
    Ok(StimulusParams::Dots(DotsParams::new(reference, distractor)?))
}

/// Seed of the `index`-th stimulus at `level` in a pool built from `master_seed`.
pub fn pool_seed(master_seed: u64, task: TaskKind, level: u8, index: u32) -> u64 {
    derive_seed(
        master_seed,
        &["stimulus", task.slug(), &level.to_string(), &index.to_string()],
    )
}

/// Generates a full ladder pool, writing `images/<id>.png` and
/// `manifest.jsonl` under `out_dir`.
pub fn build_pool(
    task: TaskKind,
    ladder: &DifficultyLadder,
    master_seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>, StimError> {
    ladder.validate()?;
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|source| StimError::Io { path: image_dir.clone(), source })?;
    let mut rows = Vec::with_capacity(ladder.pool_size());
    for level in 0..LEVELS as u8 {
        for index in 0..ladder.per_level_count {
            let stimulus = generate(task, pool_seed(master_seed, task, level, index), level, ladder)?;
            let rel = format!("images/{}.png", stimulus.id);
            write_png(&stimulus, &out_dir.join(&rel))?;
            rows.push(stimulus.manifest_row(rel));
        }
    }
    write_manifest(&out_dir.join("manifest.jsonl"), &rows)?;
    Ok(rows)
}

pub fn write_png(stimulus: &Stimulus, path: &Path) -> Result<(), StimError> {
    let bytes = stimulus.png_bytes()?;
    fs::write(path, bytes).map_err(|source| StimError::Io { path: path.to_path_buf(), source })
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), StimError> {
    let io_err = |source| StimError::Io { path: path.to_path_buf(), source };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, StimError> {
    let text = fs::read_to_string(path).map_err(|source| StimError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(StimError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplicity_examples() {
        let c = ColorParams::new([0, 0, 0], [3, 4, 0]).unwrap();
        assert_eq!(simplicity_of(&StimulusParams::Color(c)), 5.0);
        let c = ColorParams::new([10, 20, 30], [110, 20, 30]).unwrap();
        assert_eq!(simplicity_of(&StimulusParams::Color(c)), 100.0);
        assert!(LineParams::new(200, 200).is_err());
        assert!(ColorParams::new([1, 2, 3], [1, 2, 3]).is_err());
        assert!(DotsParams::new(12, 12).is_err());
    }

    #[test]
    fn difficulty_examples() {
        let mut ladder = DifficultyLadder::default_for(TaskKind::LineJudgment);
        ladder.levels[0].hi = 150.0;
        assert_eq!(difficulty_of(150.0, TaskKind::LineJudgment, &ladder).unwrap(), 0.0);
        assert_eq!(difficulty_of(50.0, TaskKind::LineJudgment, &ladder).unwrap(), 100.0);
        assert!(matches!(
            difficulty_of(151.0, TaskKind::LineJudgment, &ladder),
            Err(StimError::AboveLadder { .. })
        ));
        assert!(matches!(
            difficulty_of(1.0, TaskKind::ColorRecognition, &ladder),
            Err(StimError::TaskMismatch { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        for task in TaskKind::ALL {
            let ladder = DifficultyLadder::default_for(task);
            let a = generate(task, 42, 0, &ladder).unwrap();
            let b = generate(task, 42, 0, &ladder).unwrap();
            assert_eq!(a.png_bytes().unwrap(), b.png_bytes().unwrap());
            assert_eq!(a.params, b.params);
            assert_eq!(a.correct_label, b.correct_label);
        }
    }

    #[test]
    fn delta_falls_inside_requested_band() {
        for task in TaskKind::ALL {
            let ladder = DifficultyLadder::default_for(task);
            for level in 0..10u8 {
                for seed in 0..5u64 {
                    let s = generate(task, seed * 31 + u64::from(level), level, &ladder).unwrap();
                    assert!(ladder.levels[level as usize].contains(s.simplicity), "{task} {level}");
                    assert_eq!(s.difficulty, ladder.max_simplicity() - s.simplicity);
                }
            }
        }
    }

    #[test]
    fn level_out_of_range_is_rejected() {
        let ladder = DifficultyLadder::default_for(TaskKind::DotsEstimation);
        assert!(matches!(generate(TaskKind::DotsEstimation, 1, 10, &ladder), Err(StimError::Level(10))));
    }

    #[test]
    fn pool_builds_one_row_per_stimulus() {
        let dir = tempfile::tempdir().unwrap();
        let ladder = DifficultyLadder::default_for(TaskKind::DotsEstimation).with_per_level_count(1);
        let rows = build_pool(TaskKind::DotsEstimation, &ladder, 7, dir.path()).unwrap();
        assert_eq!(rows.len(), 10);
        let first = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
        build_pool(TaskKind::DotsEstimation, &ladder, 7, dir.path()).unwrap();
        let second = std::fs::read(dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(first, second);
        assert_eq!(read_manifest(&dir.path().join("manifest.jsonl")).unwrap(), rows);
        for row in &rows {
            assert!(dir.path().join(&row.image_path).exists());
        }
    }
}
