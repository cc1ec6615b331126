//! Gated candidate lookup.

use nalgebra::{Matrix2, Vector2};

use super::GridMap;
use crate::{Error, Result};

/// χ² quantile for 2 degrees of freedom at 99 %.
pub const DEFAULT_GAMMA: f64 = 9.21;
/// Residual gate in units of the field noise σ.
pub const DEFAULT_K_SIG: f64 = 3.0;
pub const DEFAULT_N_MAX: usize = 20;

/// Gated search region around a prior position: the γ-ellipse of the prior
/// covariance and its circumscribing axis-aligned rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchWindow {
    pub center: Vector2<f64>,
    pub half_extents: Vector2<f64>,
    pub gamma: f64,
    pub cov: Matrix2<f64>,
    cov_inv: Matrix2<f64>,
}

impl SearchWindow {
    /// Squared Mahalanobis distance of `z` from the window centre.
    pub fn mahalanobis2(&self, z: &Vector2<f64>) -> f64 {
        let d = z - self.center;
        (d.transpose() * self.cov_inv * d)[(0, 0)]
    }

    /// Inside the ellipsoidal gate.
    pub fn gates(&self, z: &Vector2<f64>) -> bool {
        self.mahalanobis2(z) <= self.gamma
    }

    pub fn in_rectangle(&self, z: &Vector2<f64>) -> bool {
        let d = z - self.center;
        d.x.abs() <= self.half_extents.x && d.y.abs() <= self.half_extents.y
    }
}

/// Rectangle circumscribing `{z : (z − μ)ᵀ Σ⁻¹ (z − μ) ≤ γ}`; half extents are
/// `sqrt(γ Σ_jj)`.
pub fn search_window(prior_mean: Vector2<f64>, prior_cov: Matrix2<f64>, gamma: f64) -> Result<SearchWindow> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if !prior_mean.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("prior mean must be finite".into()));
    }
    let sym_tol = 1e-9 * prior_cov.amax().max(f64::MIN_POSITIVE);
    if (prior_cov - prior_cov.transpose()).amax() > sym_tol || prior_cov.cholesky().is_none() {
        return Err(Error::Covariance(format!("prior covariance {prior_cov:?}")));
    }
    let cov = (prior_cov + prior_cov.transpose()) * 0.5;
    let cov_inv = cov
        .try_inverse()
        .ok_or_else(|| Error::Covariance("prior covariance is singular".into()))?;
    let half_extents = Vector2::new((gamma * cov[(0, 0)]).sqrt(), (gamma * cov[(1, 1)]).sqrt());
    Ok(SearchWindow { center: prior_mean, half_extents, gamma, cov, cov_inv })
}

/// One map cell compatible with a sensed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub location: Vector2<f64>,
    pub map_value: f64,
    /// `|map_value − s|`
    pub value_residual: f64,
    /// Local field gradient per meter, zero when undefined at the cell.
    pub gradient: Vector2<f64>,
    pub cell: (usize, usize),
}

/// Output of the map lookup function for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub measurement: f64,
    pub sigma: f64,
    pub prior_mean: Vector2<f64>,
    pub prior_cov: Matrix2<f64>,
    /// Cell size of the map the candidates were drawn from.
    pub cell_size: f64,
}

impl CandidateSet {
    /// A scan with no usable candidates.
    pub fn empty(measurement: f64, sigma: f64, prior_mean: Vector2<f64>, prior_cov: Matrix2<f64>) -> Self {
        Self { candidates: Vec::new(), measurement, sigma, prior_mean, prior_cov, cell_size: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = Vector2<f64>> + '_ {
        self.candidates.iter().map(|c| c.location)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupConfig {
    pub n_max: usize,
    pub k_sig: f64,
}

impl Default for LookupConfig {
    fn default() -> Self {
        Self { n_max: DEFAULT_N_MAX, k_sig: DEFAULT_K_SIG }
    }
}

/// Index range of cells whose centres lie in `[lo, hi]` along one axis, given
/// the coordinate of cell `i`'s centre is `first + i·step`.
fn center_range(lo: f64, hi: f64, first: f64, step: f64, n: usize) -> Option<(usize, usize)> {
    let a = ((lo - first) / step).ceil();
    let b = ((hi - first) / step).floor();
    let a = a.max(0.0);
    let b = b.min((n - 1) as f64);
    (a <= b).then_some((a as usize, b as usize))
}

/// Scan the cells whose centres fall in the window rectangle and pass the
/// ellipsoidal gate, keep those with `|m − s| ≤ k_sig·σ`, and return the
/// `n_max` best by residual.
///
/// Ordering is ascending residual, then distance to the window centre, then
/// row-major cell index.
pub fn lookup_candidates(
    map: &GridMap,
    s: f64,
    sigma: f64,
    window: &SearchWindow,
    config: &LookupConfig,
) -> Result<CandidateSet> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if config.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let cs = map.cell_size();
    let origin = map.origin();
    let lo = window.center - window.half_extents;
    let hi = window.center + window.half_extents;
    let cols = center_range(lo.x, hi.x, origin.x + 0.5 * cs, cs, map.n_cols());
    // Row index grows southwards: centre northing of row r is
    // origin.y + (n_rows − 0.5)·cs − r·cs.
    let top = origin.y + (map.n_rows() as f64 - 0.5) * cs;
    let rows = center_range(top - hi.y, top - lo.y, 0.0, cs, map.n_rows());
    let (Some((c0, c1)), Some((r0, r1))) = (cols, rows) else {
        return Err(Error::EmptyWindow);
    };

    let gate = config.k_sig * sigma;
    let mut keyed: Vec<(f64, f64, usize, Candidate)> = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let Some(m) = map.valid(r, c) else { continue };
            let residual = (m - s).abs();
            if residual > gate {
                continue;
            }
            let z = map.cell_center(r, c);
            if !window.in_rectangle(&z) || !window.gates(&z) {
                continue;
            }
            let cand = Candidate {
                location: z,
                map_value: m,
                value_residual: residual,
                gradient: map.cell_gradient(r, c).unwrap_or_else(Vector2::zeros),
                cell: (r, c),
            };
            keyed.push((residual, (z - window.center).norm_squared(), r * map.n_cols() + c, cand));
        }
    }
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.total_cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    keyed.truncate(config.n_max);

    Ok(CandidateSet {
        candidates: keyed.into_iter().map(|k| k.3).collect(),
        measurement: s,
        sigma,
        prior_mean: window.center,
        prior_cov: window.cov,
        cell_size: cs,
    })
}
