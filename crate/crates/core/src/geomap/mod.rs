//! Geo-referenced scalar maps.
//!
//! A [`GridMap`] is an immutable raster in the local planar frame. Around it
//! sit the gated candidate lookup (the map lookup function that turns one
//! sensed field value into a set of compatible locations) and the map
//! feature variability statistic used to weight position fixes.

mod ascii;
mod grid;
mod lookup;
mod variability;

pub use ascii::{load_grid, read_grid, write_grid, save_grid};
pub use grid::GridMap;
pub use lookup::{
    lookup_candidates, search_window, Candidate, CandidateSet, LookupConfig, SearchWindow,
    DEFAULT_GAMMA, DEFAULT_K_SIG, DEFAULT_N_MAX,
};
pub use variability::{feature_variability, normalize_variability, DEFAULT_WINDOW_LEN};
