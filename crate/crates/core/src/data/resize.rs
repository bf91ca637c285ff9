use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_target((h, w): (usize, usize)) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidShape(format!("resize target {h}x{w}")));
    }
    Ok(())
}

/// Source coordinate of destination index `i` under half-pixel-centre
/// alignment, clamped to the source range.
fn source_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let s = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear resize of an `[H, W, C]` image; output clamped to [0, 1].
pub fn resize_image(img: &Tensor, to: (usize, usize)) -> Result<Tensor> {
    check_target(to)?;
    let (h, w, c) = img.hwc()?;
    let (oh, ow) = to;
    let mut out = Tensor::zeros(&[oh, ow, c])?;
    let src = img.data();
    let dst = out.data_mut();
    let cols: Vec<_> = (0..ow).map(|j| source_coord(j, w, ow)).collect();
    for i in 0..oh {
        let (y0, y1, fy) = source_coord(i, h, oh);
        for (j, &(x0, x1, fx)) in cols.iter().enumerate() {
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * w + x) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                dst[(i * ow + j) * c + ch] = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Source index of destination index `i` for nearest-neighbour sampling:
/// `floor((i + 0.5) * src / dst)`.
fn nearest(i: usize, src: usize, dst: usize) -> usize {
    ((2 * i + 1) * src / (2 * dst)).min(src - 1)
}

/// Nearest-neighbour resize of an `[H, W]` mask.
pub fn resize_mask(mask: &Tensor, to: (usize, usize)) -> Result<Tensor> {
    check_target(to)?;
    let (h, w) = mask.hw()?;
    let (oh, ow) = to;
    let src = mask.data();
    let data = (0..oh)
        .flat_map(|i| {
            let y = nearest(i, h, oh);
            (0..ow).map(move |j| src[y * w + nearest(j, w, ow)])
        })
        .collect();
    Tensor::from_vec(&[oh, ow], data)
}
