//! Minimal 5x7 bitmap font covering the glyphs used in stimulus labels.

use image::{Rgb, RgbImage};

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

fn glyph(c: char) -> Option<[u8; 7]> {
    let rows = match c {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'N' => [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        ' ' => [0; 7],
        _ => return None,
    };
    Some(rows)
}

/// Pixel width of `text` at the given integer scale.
pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        return 0;
    }
    n * (GLYPH_W + 1) * scale - scale
}

/// Draws `text` horizontally centered on `center_x` with its top edge at `top`.
///
/// Panics on glyphs outside the label alphabet; labels are fixed text.
pub fn draw_text_centered(img: &mut RgbImage, text: &str, center_x: u32, top: u32, scale: u32) {
    let width = text_width(text, scale);
    let mut x0 = center_x.saturating_sub(width / 2);
    let black = Rgb([0, 0, 0]);
    for c in text.chars() {
        let rows = glyph(c).unwrap_or_else(|| panic!("no glyph for {c:?}"));
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - rx)) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let x = x0 + rx * scale + dx;
                        let y = top + ry as u32 * scale + dy;
                        if x < img.width() && y < img.height() {
                            img.put_pixel(x, y, black);
                        }
                    }
                }
            }
        }
        x0 += (GLYPH_W + 1) * scale;
    }
}

/// Height in pixels of a text line at `scale`.
pub fn text_height(scale: u32) -> u32 {
    GLYPH_H * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_accounts_for_spacing() {
        assert_eq!(text_width("A", 2), 10);
        assert_eq!(text_width("AB", 2), 22);
        assert_eq!(text_width("", 3), 0);
    }

    #[test]
    fn label_alphabet_is_covered() {
        for label in ["A", "B", "REFERENCE LINE", "REFERENCE COLOR", "REFERENCE BOX"] {
            assert!(label.chars().all(|c| glyph(c).is_some()), "{label}");
        }
    }
}
