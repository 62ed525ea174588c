//! Raster layout of the three-element stimulus canvas.

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::font::{draw_text_centered, text_height};
use super::{ElementValue, StimError, TaskKind, DOT_PLACEMENT_RETRIES};

pub const CANVAS_WIDTH: u32 = 768;
pub const CANVAS_HEIGHT: u32 = 512;

const LABEL_SCALE: u32 = 2;
const LABEL_GAP: u32 = 24;

const COLOR_SQUARE_SIZE: u32 = 160;
const COLOR_SQUARE_TOP: u32 = 120;
pub const COLOR_SQUARE_CENTER_Y: u32 = COLOR_SQUARE_TOP + COLOR_SQUARE_SIZE / 2;

const LINE_WIDTH: u32 = 8;
pub const LINE_BOTTOM: u32 = 400;

const DOT_BOX_SIZE: u32 = 200;
pub const DOT_BOX_TOP: u32 = 110;
pub const DOT_BOX_BOTTOM: u32 = DOT_BOX_TOP + DOT_BOX_SIZE;
const DOT_BOX_BORDER: u32 = 2;
pub const DOT_RADIUS: u32 = 6;
const DOT_MARGIN: u32 = 4;
const DOT_MIN_GAP: u32 = 3;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);

/// Horizontal center of element `index` (0 = A, 1 = reference, 2 = B).
pub fn element_center_x(index: usize) -> u32 {
    CANVAS_WIDTH / 6 + index as u32 * CANVAS_WIDTH / 3
}

fn captions(task: TaskKind) -> [&'static str; 3] {
    ["A", task.reference_caption(), "B"]
}

pub(super) fn render(
    task: TaskKind,
    values: &[ElementValue; 3],
    dots: Option<&[Vec<(u32, u32)>]>,
) -> RgbImage {
    let mut img = RgbImage::from_pixel(CANVAS_WIDTH, CANVAS_HEIGHT, WHITE);
    let label_top = match task {
        TaskKind::ColorRecognition => COLOR_SQUARE_TOP + COLOR_SQUARE_SIZE + LABEL_GAP,
        TaskKind::LineJudgment => LINE_BOTTOM + LABEL_GAP,
        TaskKind::DotsEstimation => DOT_BOX_BOTTOM + LABEL_GAP,
    };
    for (i, value) in values.iter().enumerate() {
        let cx = element_center_x(i);
        match *value {
            ElementValue::Rgb(rgb) => fill_rect(
                &mut img,
                cx - COLOR_SQUARE_SIZE / 2,
                COLOR_SQUARE_TOP,
                COLOR_SQUARE_SIZE,
                COLOR_SQUARE_SIZE,
                Rgb(rgb),
            ),
            ElementValue::Length(len) => {
                fill_rect(&mut img, cx - LINE_WIDTH / 2, LINE_BOTTOM - len, LINE_WIDTH, len, BLACK)
            }
            ElementValue::Count(_) => {
                draw_box(&mut img, cx);
                if let Some(layouts) = dots {
                    for &(x, y) in &layouts[i] {
                        fill_disk(&mut img, x, y, DOT_RADIUS);
                    }
                }
            }
        }
        draw_text_centered(&mut img, captions(task)[i], cx, label_top, LABEL_SCALE);
    }
    debug_assert!(label_top + text_height(LABEL_SCALE) < CANVAS_HEIGHT);
    img
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, color: Rgb<u8>) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            img.put_pixel(x, y, color);
        }
    }
}

fn box_left(cx: u32) -> u32 {
    cx - DOT_BOX_SIZE / 2
}

fn draw_box(img: &mut RgbImage, cx: u32) {
    let x0 = box_left(cx);
    let (y0, s, b) = (DOT_BOX_TOP, DOT_BOX_SIZE, DOT_BOX_BORDER);
    fill_rect(img, x0, y0, s, b, BLACK);
    fill_rect(img, x0, y0 + s - b, s, b, BLACK);
    fill_rect(img, x0, y0, b, s, BLACK);
    fill_rect(img, x0 + s - b, y0, b, s, BLACK);
}

fn fill_disk(img: &mut RgbImage, cx: u32, cy: u32, r: u32) {
    let r2 = (r * r) as i64;
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            let dx = x as i64 - cx as i64;
            let dy = y as i64 - cy as i64;
            if dx * dx + dy * dy <= r2 {
                img.put_pixel(x, y, BLACK);
            }
        }
    }
}

/// Non-overlapping dot centers for the box at element `index`.
pub(super) fn place_dots(
    rng: &mut ChaCha8Rng,
    count: u32,
    index: usize,
    seed: u64,
) -> Result<Vec<(u32, u32)>, StimError> {
    let inset = DOT_BOX_BORDER + DOT_MARGIN + DOT_RADIUS;
    let x_lo = box_left(element_center_x(index)) + inset;
    let x_hi = box_left(element_center_x(index)) + DOT_BOX_SIZE - 1 - inset;
    let y_lo = DOT_BOX_TOP + inset;
    let y_hi = DOT_BOX_BOTTOM - 1 - inset;
    let min_dist = (2 * DOT_RADIUS + DOT_MIN_GAP) as i64;

    let mut placed: Vec<(u32, u32)> = Vec::with_capacity(count as usize);
    let mut attempts = 0;
    while placed.len() < count as usize {
        if attempts >= DOT_PLACEMENT_RETRIES {
            return Err(StimError::Placement { seed, retries: DOT_PLACEMENT_RETRIES });
        }
        attempts += 1;
        let p = (rng.random_range(x_lo..=x_hi), rng.random_range(y_lo..=y_hi));
        let clear = placed.iter().all(|&(x, y)| {
            let dx = x as i64 - p.0 as i64;
            let dy = y as i64 - p.1 as i64;
            dx * dx + dy * dy >= min_dist * min_dist
        });
        if clear {
            placed.push(p);
        }
    }
    Ok(placed)
}

/// 8-bit RGB PNG encoding with fixed encoder settings.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, StimError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
        .map_err(|e| StimError::Encode(e.to_string()))?;
    Ok(out)
}
