//! Synthetic gravity-like maps: background, Gaussian bumps and a smooth
//! stationary random field.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{BumpParams, SyntheticMapParams};
use crate::geomap::GridMap;
use crate::Result;

fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_cells).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma_cells).powi(2)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// White noise smoothed by a separable Gaussian kernel, scaled to unit
/// standard deviation. Row-major, `rows × cols`.
fn smooth_noise(rows: usize, cols: usize, sigma_cells: f64, seed: u64) -> Vec<f64> {
    let k = gaussian_kernel(sigma_cells);
    let pad = k.len() / 2;
    let (pr, pc) = (rows + 2 * pad, cols + 2 * pad);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..pr * pc).map(|_| StandardNormal.sample(&mut rng)).collect();

    // Along columns first: pr × cols.
    let mut horiz = vec![0.0; pr * cols];
    for r in 0..pr {
        let row = &white[r * pc..(r + 1) * pc];
        for c in 0..cols {
            horiz[r * cols + c] = k.iter().zip(&row[c..c + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = k.iter().enumerate().map(|(i, w)| w * horiz[(r + i) * cols + c]).sum();
        }
    }
    let var: f64 = k.iter().map(|w| w * w).sum::<f64>().powi(2);
    let scale = 1.0 / var.sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

fn bump_value(b: &BumpParams, p: &Vector2<f64>) -> f64 {
    let d2 = (p - Vector2::from(b.center)).norm_squared();
    b.amplitude * (-0.5 * d2 / (b.width * b.width)).exp()
}

/// Background plus bumps plus seeded smooth noise, evaluated at cell centres.
pub fn gen_synthetic_map(params: &SyntheticMapParams) -> Result<GridMap> {
    let noise = if params.noise_scale > 0.0 {
        Some(smooth_noise(params.rows, params.cols, params.noise_length / params.cell_size, params.seed))
    } else {
        None
    };
    let mut i = 0usize;
    GridMap::from_fn(params.rows, params.cols, Vector2::from(params.origin), params.cell_size, |p| {
        let mut v = params.background + params.bumps.iter().map(|b| bump_value(b, &p)).sum::<f64>();
        if let Some(n) = &noise {
            v += params.noise_scale * n[i];
        }
        i += 1;
        v
    })
}

/// Strip of cells covering the segment `start → end` with `margin` meters on
/// every side.
pub fn strip_params(start: Vector2<f64>, end: Vector2<f64>, margin: f64, cell_size: f64) -> SyntheticMapParams {
    let lo = start.inf(&end) - Vector2::repeat(margin);
    let hi = start.sup(&end) + Vector2::repeat(margin);
    let cols = ((hi.x - lo.x) / cell_size).ceil().max(2.0) as usize;
    let rows = ((hi.y - lo.y) / cell_size).ceil().max(2.0) as usize;
    SyntheticMapParams {
        rows,
        cols,
        cell_size,
        origin: [lo.x, lo.y],
        background: 9.8,
        bumps: Vec::new(),
        noise_scale: 0.0,
        noise_length: 2000.0,
        seed: 0,
    }
}

/// Equirectangular projection about `(lat0, lon0)` to East-North meters.
pub fn equirectangular(lat_deg: f64, lon_deg: f64, lat0_deg: f64, lon0_deg: f64) -> Vector2<f64> {
    const EARTH_RADIUS: f64 = 6_371_000.0;
    let (lat, lon, lat0, lon0) = (lat_deg.to_radians(), lon_deg.to_radians(), lat0_deg.to_radians(), lon0_deg.to_radians());
    Vector2::new(EARTH_RADIUS * (lon - lon0) * lat0.cos(), EARTH_RADIUS * (lat - lat0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomap::feature_variability;

    fn base() -> SyntheticMapParams {
        SyntheticMapParams {
            rows: 40,
            cols: 60,
            cell_size: 100.0,
            origin: [0.0, 0.0],
            background: 9.8,
            bumps: Vec::new(),
            noise_scale: 0.0,
            noise_length: 1000.0,
            seed: 1,
        }
    }

    #[test]
    fn flat_params_give_constant_map() {
        let m = gen_synthetic_map(&base()).unwrap();
        assert!(m.values().iter().all(|&v| v == 9.8));
        assert_eq!(feature_variability(&m, (20, 30), 3).unwrap(), 0.0);
    }

    #[test]
    fn bump_peak_identity() {
        let mut s = base();
        s.bumps.push(BumpParams { center: [3050.0, 2050.0], amplitude: 5e-4, width: 800.0 });
        let m = gen_synthetic_map(&s).unwrap();
        let v = m.value_at(&Vector2::new(3050.0, 2050.0)).unwrap();
        assert!((v - (9.8 + 5e-4)).abs() < 1e-15);
    }

    #[test]
    fn smooth_noise_is_seeded_and_scaled() {
        let mut s = base();
        s.rows = 200;
        s.cols = 200;
        s.noise_scale = 1e-4;
        s.noise_length = 300.0;
        let a = gen_synthetic_map(&s).unwrap();
        assert_eq!(a, gen_synthetic_map(&s).unwrap());
        s.seed = 2;
        assert_ne!(a, gen_synthetic_map(&s).unwrap());
        let n = a.values().len() as f64;
        let mean = a.values().iter().sum::<f64>() / n;
        let sd = (a.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(sd > 0.5e-4 && sd < 1.5e-4, "sd = {sd}");
    }

    #[test]
    fn strip_covers_segment() {
        let s = strip_params(Vector2::new(0.0, 0.0), Vector2::new(10_000.0, 0.0), 2000.0, 100.0);
        let m = gen_synthetic_map(&s).unwrap();
        assert!(m.contains(&Vector2::new(0.0, 0.0)));
        assert!(m.contains(&Vector2::new(10_000.0, 1999.0)));
        assert_eq!(s.cols, 140);
    }

    #[test]
    fn projection_scale() {
        let p = equirectangular(-37.0, 145.001, -37.0, 145.0);
        assert!((p.x - 6_371_000.0 * 0.001f64.to_radians() * 37f64.to_radians().cos()).abs() < 1e-6);
        assert_eq!(equirectangular(1.0, 2.0, 1.0, 2.0), Vector2::zeros());
    }
}
