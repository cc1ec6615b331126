use nalgebra::Vector2;

use crate::{Error, Result};

/// Scalar raster with square cells, stored row-major with the north row first.
///
/// `origin` is the lower-left (south-west) corner of the grid. Cell `(r, c)`
/// is centred at `origin + ((c + 0.5)·cell, (n_rows − r − 0.5)·cell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    n_rows: usize,
    n_cols: usize,
    origin: Vector2<f64>,
    cell_size: f64,
    values: Vec<f64>,
    nodata: f64,
}

impl GridMap {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        origin: Vector2<f64>,
        cell_size: f64,
        values: Vec<f64>,
        nodata: f64,
    ) -> Result<Self> {
        if n_rows < 2 || n_cols < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 2x2, got {n_rows}x{n_cols}"
            )));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidGrid(format!("cell size must be positive, got {cell_size}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|&v| v != nodata && !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at cell index {i}")));
        }
        Ok(Self { n_rows, n_cols, origin, cell_size, values, nodata })
    }

    /// Build a map by evaluating `f` at every cell centre.
    pub fn from_fn(
        n_rows: usize,
        n_cols: usize,
        origin: Vector2<f64>,
        cell_size: f64,
        mut f: impl FnMut(Vector2<f64>) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                let p = Vector2::new(
                    origin.x + (c as f64 + 0.5) * cell_size,
                    origin.y + (n_rows as f64 - r as f64 - 0.5) * cell_size,
                );
                values.push(f(p));
            }
        }
        Self::new(n_rows, n_cols, origin, cell_size, values, -9999.0)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Valid (non-nodata) value of a cell.
    pub fn valid(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (self.n_rows as f64 - row as f64 - 0.5) * self.cell_size,
        )
    }

    /// Lower-left and upper-right corners of the grid extent.
    pub fn bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let size = Vector2::new(self.n_cols as f64, self.n_rows as f64) * self.cell_size;
        (self.origin, self.origin + size)
    }

    pub fn contains(&self, pos: &Vector2<f64>) -> bool {
        let (lo, hi) = self.bounds();
        pos.x >= lo.x && pos.x <= hi.x && pos.y >= lo.y && pos.y <= hi.y
    }

    /// Cell whose area contains `pos` (cells on the upper/right edge own the
    /// boundary).
    pub fn cell_of(&self, pos: &Vector2<f64>) -> Option<(usize, usize)> {
        if !self.contains(pos) {
            return None;
        }
        let col = ((pos.x - self.origin.x) / self.cell_size).floor() as isize;
        let from_south = ((pos.y - self.origin.y) / self.cell_size).floor() as isize;
        let col = col.clamp(0, self.n_cols as isize - 1) as usize;
        let from_south = from_south.clamp(0, self.n_rows as isize - 1) as usize;
        Some((self.n_rows - 1 - from_south, col))
    }

    /// Continuous (row, col) index of `pos` in cell-centre units, clamped to
    /// the hull of cell centres.
    fn fractional_index(&self, pos: &Vector2<f64>) -> (f64, f64) {
        let u = (pos.x - self.origin.x) / self.cell_size - 0.5;
        let v = self.n_rows as f64 - 0.5 - (pos.y - self.origin.y) / self.cell_size;
        (
            v.clamp(0.0, (self.n_rows - 1) as f64),
            u.clamp(0.0, (self.n_cols - 1) as f64),
        )
    }

    /// Bilinear interpolation between cell centres. Between the outermost
    /// centres and the grid edge the field is held constant along the
    /// clamped axis.
    pub fn value_at(&self, pos: &Vector2<f64>) -> Result<f64> {
        if !self.contains(pos) {
            return Err(Error::OutOfBounds { x: pos.x, y: pos.y });
        }
        let (v, u) = self.fractional_index(pos);
        let r0 = (v.floor() as usize).min(self.n_rows - 2);
        let c0 = (u.floor() as usize).min(self.n_cols - 2);
        let fr = v - r0 as f64;
        let fc = u - c0 as f64;
        let corners = [
            self.get(r0, c0),
            self.get(r0, c0 + 1),
            self.get(r0 + 1, c0),
            self.get(r0 + 1, c0 + 1),
        ];
        if corners.iter().any(|&m| self.is_nodata(m)) {
            return Err(Error::NoData { x: pos.x, y: pos.y });
        }
        let top = (1.0 - fc) * corners[0] + fc * corners[1];
        let bottom = (1.0 - fc) * corners[2] + fc * corners[3];
        Ok((1.0 - fr) * top + fr * bottom)
    }

    /// Field gradient (∂/∂East, ∂/∂North) per meter at a cell, by central
    /// differences (one-sided on the border). `None` if a needed neighbour
    /// is nodata.
    pub fn cell_gradient(&self, row: usize, col: usize) -> Option<Vector2<f64>> {
        let (cl, cr) = (col.saturating_sub(1), (col + 1).min(self.n_cols - 1));
        let (rn, rs) = (row.saturating_sub(1), (row + 1).min(self.n_rows - 1));
        let east = (self.valid(row, cr)? - self.valid(row, cl)?) / ((cr - cl) as f64 * self.cell_size);
        let north = (self.valid(rn, col)? - self.valid(rs, col)?) / ((rs - rn) as f64 * self.cell_size);
        Some(Vector2::new(east, north))
    }

    /// Gradient of the cell containing `pos`.
    pub fn gradient_at(&self, pos: &Vector2<f64>) -> Result<Vector2<f64>> {
        let (r, c) = self.cell_of(pos).ok_or(Error::OutOfBounds { x: pos.x, y: pos.y })?;
        self.cell_gradient(r, c).ok_or(Error::NoData { x: pos.x, y: pos.y })
    }

    /// Minimum and maximum over valid cells.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .copied()
            .filter(|&v| !self.is_nodata(v))
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Root-mean-square gradient magnitude over all cells with a defined
    /// gradient.
    pub fn rms_gradient(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                if let Some(g) = self.cell_gradient(r, c) {
                    sum += g.norm_squared();
                    n += 1;
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}
