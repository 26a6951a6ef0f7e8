//! k x k neighbourhoods with the center pixel removed.

use ndarray::Array2;

use crate::error::{NaideError, Result};
use crate::image::GrayImage;

/// Offset subtracted from every context entry so inputs center on zero.
pub const CONTEXT_OFFSET: f64 = 0.5;

/// The `k^2 - 1` neighbours of one pixel, row-major, center removed,
/// each shifted by `-0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    k: usize,
    values: Vec<f64>,
}

impl ContextVector {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn validate_k(k: usize) -> Result<()> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(NaideError::Config(format!(
            "context size must be odd and at least 3, got {k}"
        )));
    }
    Ok(())
}

pub fn context_width(k: usize) -> usize {
    k * k - 1
}

/// Symmetric (edge-inclusive) reflection: `-1 -> 0`, `-2 -> 1`, `n -> n-1`.
/// Repeats with period `2n` for windows wider than the image.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

/// Writes the context of `(row, col)` into `out` (length `k^2 - 1`).
/// Callers guarantee bounds and a valid `k`.
///
/// Near a border the mirror can land back on `(row, col)` itself; those
/// entries are written as 0 (mid-gray) so the context never sees the
/// center pixel.
pub(crate) fn fill_context(image: &GrayImage, row: usize, col: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), context_width(k));
    let half = (k / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let pixels = image.pixels();
    let mut idx = 0;
    for dr in -half..=half {
        let r = reflect(row as isize + dr, h);
        let base = r * w;
        for dc in -half..=half {
            if dr == 0 && dc == 0 {
                continue;
            }
            let c = reflect(col as isize + dc, w);
            out[idx] = if r == row && c == col {
                0.0
            } else {
                pixels[base + c] - CONTEXT_OFFSET
            };
            idx += 1;
        }
    }
}

pub fn extract_context(
    image: &GrayImage,
    row: usize,
    col: usize,
    k: usize,
) -> Result<ContextVector> {
    validate_k(k)?;
    if row >= image.height() || col >= image.width() {
        return Err(NaideError::Index {
            row,
            col,
            width: image.width(),
            height: image.height(),
        });
    }
    let mut values = vec![0.0; context_width(k)];
    fill_context(image, row, col, k, &mut values);
    Ok(ContextVector { k, values })
}

/// Context rows for the given flat (row-major) pixel indices.
pub fn context_batch(image: &GrayImage, pixel_indices: &[usize], k: usize) -> Result<Array2<f64>> {
    validate_k(k)?;
    let width = context_width(k);
    let mut batch = Array2::zeros((pixel_indices.len(), width));
    for (row_out, &flat) in batch.outer_iter_mut().zip(pixel_indices) {
        if flat >= image.len() {
            return Err(NaideError::Index {
                row: flat / image.width(),
                col: flat % image.width(),
                width: image.width(),
                height: image.height(),
            });
        }
        let mut row_out = row_out;
        let slice = row_out.as_slice_mut().expect("standard layout");
        fill_context(image, flat / image.width(), flat % image.width(), k, slice);
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn interior_context_drops_center() {
        let img = GrayImage::clean(3, 3, (1..=9).map(|v| v as f64 / 10.0).collect()).unwrap();
        let ctx = extract_context(&img, 1, 1, 3).unwrap();
        assert_close(ctx.values(), &[-0.4, -0.3, -0.2, -0.1, 0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn corner_context_uses_symmetric_padding() {
        // rows/cols -1 mirror onto 0; mirrored copies of the center are masked:
        //   (.1) (.1)  .2
        //   (.1) [.1]  .2
        //    .3   .3   .4
        let img = GrayImage::clean(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let ctx = extract_context(&img, 0, 0, 3).unwrap();
        assert_close(ctx.values(), &[0.0, 0.0, -0.3, 0.0, -0.3, -0.2, -0.2, -0.1]);
        let ctx = extract_context(&img, 1, 1, 3).unwrap();
        assert_close(ctx.values(), &[-0.4, -0.3, -0.3, -0.2, 0.0, -0.2, 0.0, 0.0]);
    }

    #[test]
    fn border_context_ignores_center_value() {
        let base = GrayImage::from_fn(4, 3, crate::image::ImageKind::Noisy, |r, c| {
            (r * 4 + c) as f64 * 0.07
        })
        .unwrap();
        for k in [3, 5, 9] {
            for flat in 0..base.len() {
                let mut px = base.pixels().to_vec();
                px[flat] = 7.5;
                let altered = GrayImage::noisy(4, 3, px).unwrap();
                let (r, c) = (flat / 4, flat % 4);
                assert_eq!(
                    extract_context(&base, r, c, k).unwrap(),
                    extract_context(&altered, r, c, k).unwrap()
                );
            }
        }
    }

    #[test]
    fn constant_half_image_gives_zero_context() {
        let img = GrayImage::clean(5, 4, vec![0.5; 20]).unwrap();
        for k in [3, 5, 7, 17] {
            for (r, c) in [(0, 0), (3, 4), (2, 1)] {
                let ctx = extract_context(&img, r, c, k).unwrap();
                assert_eq!(ctx.values().len(), k * k - 1);
                assert!(ctx.values().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn reflection_handles_wide_windows() {
        assert_eq!(reflect(-1, 3), 0);
        assert_eq!(reflect(-3, 3), 2);
        assert_eq!(reflect(3, 3), 2);
        assert_eq!(reflect(5, 3), 0);
        assert_eq!(reflect(6, 3), 0);
        assert_eq!(reflect(-4, 3), 2);
        assert_eq!(reflect(4, 1), 0);
    }

    #[test]
    fn errors() {
        let img = GrayImage::clean(3, 3, vec![0.0; 9]).unwrap();
        assert!(matches!(
            extract_context(&img, 3, 0, 3),
            Err(NaideError::Index { .. })
        ));
        assert!(matches!(
            extract_context(&img, 0, 0, 4),
            Err(NaideError::Config(_))
        ));
        assert!(matches!(
            extract_context(&img, 0, 0, 1),
            Err(NaideError::Config(_))
        ));
    }

    #[test]
    fn batch_matches_single_extraction() {
        let img = GrayImage::from_fn(6, 5, crate::image::ImageKind::Noisy, |r, c| {
            (r * 6 + c) as f64 * 0.03 - 0.1
        })
        .unwrap();
        let idx = [0, 7, 29, 12];
        let batch = context_batch(&img, &idx, 5).unwrap();
        for (row, &flat) in idx.iter().enumerate() {
            let single = extract_context(&img, flat / 6, flat % 6, 5).unwrap();
            assert_eq!(batch.row(row).to_vec(), single.values());
        }
    }
}
