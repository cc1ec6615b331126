//! Map feature variability: the mean squared deviation of a pixel from the
//! other pixels in a square template centred on it.

use super::GridMap;
use crate::{Error, Result};

/// Trailing window used when normalising a variability history.
pub const DEFAULT_WINDOW_LEN: usize = 100;

/// `C_i = (1/n) Σ_j (m_i − m_j)²` over the non-centre valid cells `j` of the
/// `(2w+1)×(2w+1)` template around `center_cell`, clipped to the map.
pub fn feature_variability(map: &GridMap, center_cell: (usize, usize), template_half_width: usize) -> Result<f64> {
    let (row, col) = center_cell;
    if row >= map.n_rows() || col >= map.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "cell ({row}, {col}) is outside a {}x{} map",
            map.n_rows(),
            map.n_cols()
        )));
    }
    let center = map.valid(row, col).ok_or_else(|| {
        let p = map.cell_center(row, col);
        Error::NoData { x: p.x, y: p.y }
    })?;
    let w = template_half_width;
    let (r0, r1) = (row.saturating_sub(w), (row + w).min(map.n_rows() - 1));
    let (c0, c1) = (col.saturating_sub(w), (col + w).min(map.n_cols() - 1));

    let mut sum = 0.0;
    let mut n = 0usize;
    for r in r0..=r1 {
        let line = &map.values()[r * map.n_cols() + c0..=r * map.n_cols() + c1];
        for (k, &m) in line.iter().enumerate() {
            if (r, c0 + k) == (row, col) || map.is_nodata(m) {
                continue;
            }
            let d = center - m;
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "variability template contains no cells besides the centre".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Latest sample divided by the maximum of the trailing `window_len`
/// samples (including itself). An all-zero window normalises to 0.
pub fn normalize_variability(history: &[f64], window_len: usize) -> f64 {
    let Some(&current) = history.last() else {
        return 0.0;
    };
    let start = history.len().saturating_sub(window_len.max(1));
    let max = history[start..].iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 || current <= 0.0 {
        0.0
    } else {
        (current / max).clamp(0.0, 1.0)
    }
}
