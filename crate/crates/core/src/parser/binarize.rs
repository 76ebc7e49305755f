use crate::image::GlyphImage;

/// Otsu's threshold over the distinct intensities of `img`: the midpoint of
/// the split maximising between-class variance. Images with a single
/// intensity get 0.5.
pub fn otsu_threshold(img: &GlyphImage) -> f32 {
    let mut values: Vec<f32> = img.pixels().to_vec();
    values.sort_unstable_by(f32::total_cmp);
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for v in values {
        match levels.last_mut() {
            Some((lv, n)) if *lv == v as f64 => *n += 1.0,
            _ => levels.push((v as f64, 1.0)),
        }
    }
    if levels.len() < 2 {
        return 0.5;
    }
    let total: f64 = levels.iter().map(|l| l.1).sum();
    let sum: f64 = levels.iter().map(|l| l.0 * l.1).sum();
    let (mut w0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0.5f32);
    for k in 0..levels.len() - 1 {
        w0 += levels[k].1;
        s0 += levels[k].0 * levels[k].1;
        let w1 = total - w0;
        let (m0, m1) = (s0 / w0, (sum - s0) / w1);
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, (0.5 * (levels[k].0 + levels[k + 1].0)) as f32);
        }
    }
    best.1
}

/// Pixels at or above `threshold` (Otsu's when `None`) become ink (1.0),
/// the rest background.
pub fn binarize(img: &GlyphImage, threshold: Option<f32>) -> GlyphImage {
    let t = threshold.unwrap_or_else(|| otsu_threshold(img));
    img.map(|v| if v >= t { 1.0 } else { 0.0 })
}
