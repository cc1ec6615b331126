//! ESRI-style ASCII grid reader and writer.
//!
//! ```text
//! ncols        4
//! nrows        3
//! xllcorner    0.0
//! yllcorner    0.0
//! cellsize     250.0
//! nodata_value -9999
//! <nrows lines of ncols values, north row first>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector2;

use super::GridMap;
use crate::{Error, Result};

pub fn load_grid(path: impl AsRef<Path>) -> Result<GridMap> {
    let file = File::open(path)?;
    read_grid(BufReader::new(file))
}

pub fn save_grid(path: impl AsRef<Path>, map: &GridMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(&mut w, map)?;
    w.flush()?;
    Ok(())
}

#[derive(Default)]
struct Header {
    ncols: Option<(usize, usize)>,
    nrows: Option<(usize, usize)>,
    xll: Option<f64>,
    yll: Option<f64>,
    centered_x: bool,
    centered_y: bool,
    cellsize: Option<f64>,
    xcell: Option<f64>,
    ycell: Option<f64>,
    nodata: Option<f64>,
}

fn fmt_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format { line, msg: msg.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| fmt_err(line, format!("cannot parse '{tok}' as a number")))
}

pub fn read_grid(reader: impl BufRead) -> Result<GridMap> {
    let mut header = Header::default();
    let mut values: Vec<f64> = Vec::new();
    let mut in_data = false;
    let mut last_line = 0;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let first = toks.next().unwrap_or_default();
        if !in_data && first.parse::<f64>().is_err() {
            let key = first.to_ascii_lowercase();
            let val = toks
                .next()
                .ok_or_else(|| fmt_err(lineno, format!("header key '{first}' has no value")))?;
            if toks.next().is_some() {
                return Err(fmt_err(lineno, format!("trailing tokens after header key '{first}'")));
            }
            let count = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| fmt_err(lineno, format!("'{v}' is not a valid count")))
            };
            match key.as_str() {
                "ncols" => header.ncols = Some((count(val)?, lineno)),
                "nrows" => header.nrows = Some((count(val)?, lineno)),
                "xllcorner" => header.xll = Some(parse_f64(val, lineno)?),
                "yllcorner" => header.yll = Some(parse_f64(val, lineno)?),
                "xllcenter" => {
                    header.xll = Some(parse_f64(val, lineno)?);
                    header.centered_x = true;
                }
                "yllcenter" => {
                    header.yll = Some(parse_f64(val, lineno)?);
                    header.centered_y = true;
                }
                "cellsize" => header.cellsize = Some(parse_f64(val, lineno)?),
                "xcellsize" | "dx" => header.xcell = Some(parse_f64(val, lineno)?),
                "ycellsize" | "dy" => header.ycell = Some(parse_f64(val, lineno)?),
                "nodata_value" => header.nodata = Some(parse_f64(val, lineno)?),
                _ => return Err(fmt_err(lineno, format!("unknown header key '{first}'"))),
            }
            continue;
        }
        if !in_data {
            in_data = true;
            let (ncols, nrows) = match (header.ncols, header.nrows) {
                (Some(c), Some(r)) => (c, r),
                _ => return Err(fmt_err(lineno, "data before ncols/nrows header")),
            };
            for (n, l, name) in [(ncols.0, ncols.1, "ncols"), (nrows.0, nrows.1, "nrows")] {
                if n < 2 {
                    return Err(fmt_err(l, format!("{name} must be at least 2, got {n}")));
                }
            }
            values.reserve(ncols.0 * nrows.0);
        }
        for tok in trimmed.split_whitespace() {
            values.push(parse_f64(tok, lineno)?);
        }
    }

    let (ncols, nrows) = match (header.ncols, header.nrows) {
        (Some(c), Some(r)) => (c.0, r.0),
        _ => return Err(fmt_err(last_line, "missing ncols/nrows header")),
    };
    if !in_data {
        if let Some((n, l)) = [header.ncols.unwrap(), header.nrows.unwrap()].into_iter().find(|v| v.0 < 2) {
            return Err(fmt_err(l, format!("grid dimension must be at least 2, got {n}")));
        }
    }
    let cell = match (header.cellsize, header.xcell, header.ycell) {
        (Some(c), None, None) => c,
        (None, Some(x), Some(y)) if x == y => x,
        (None, Some(x), Some(y)) => {
            return Err(Error::UnsupportedGeometry(format!(
                "non-square cells ({x} x {y}) are not supported"
            )))
        }
        (Some(c), Some(x), _) | (Some(c), _, Some(x)) if c != x => {
            return Err(Error::UnsupportedGeometry(format!(
                "conflicting cell sizes {c} and {x}"
            )))
        }
        (Some(c), _, _) => c,
        _ => return Err(fmt_err(last_line, "missing cellsize header")),
    };
    let xll = header.xll.ok_or_else(|| fmt_err(last_line, "missing xllcorner header"))?;
    let yll = header.yll.ok_or_else(|| fmt_err(last_line, "missing yllcorner header"))?;
    let origin = Vector2::new(
        if header.centered_x { xll - 0.5 * cell } else { xll },
        if header.centered_y { yll - 0.5 * cell } else { yll },
    );
    if values.len() != nrows * ncols {
        return Err(fmt_err(
            last_line,
            format!("expected {} values, found {}", nrows * ncols, values.len()),
        ));
    }
    GridMap::new(nrows, ncols, origin, cell, values, header.nodata.unwrap_or(-9999.0))
}

/// Write `map` in the ASCII grid format. Values use Rust's shortest
/// round-trip representation, so reloading is bit-exact.
pub fn write_grid(mut w: impl Write, map: &GridMap) -> Result<()> {
    writeln!(w, "ncols {}", map.n_cols())?;
    writeln!(w, "nrows {}", map.n_rows())?;
    writeln!(w, "xllcorner {:?}", map.origin().x)?;
    writeln!(w, "yllcorner {:?}", map.origin().y)?;
    writeln!(w, "cellsize {:?}", map.cell_size())?;
    writeln!(w, "nodata_value {:?}", map.nodata())?;
    let mut line = String::new();
    for r in 0..map.n_rows() {
        line.clear();
        for c in 0..map.n_cols() {
            if c > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:?}", map.get(r, c)));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<GridMap> {
        read_grid(s.as_bytes())
    }

    #[test]
    fn parses_small_grid() {
        let m = parse(
            "ncols 2\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 5\nNODATA_value -9999\n1 2\n3 4\n",
        )
        .unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 2));
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.origin(), Vector2::new(10.0, 20.0));
        assert_eq!(m.cell_size(), 5.0);
    }

    #[test]
    fn zero_columns_is_a_format_error() {
        let err = parse("ncols 0\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }), "{err}");
    }

    #[test]
    fn bad_token_names_its_line() {
        let err = parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 x\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 7, .. }), "{err}");
    }

    #[test]
    fn value_count_mismatch() {
        let err = parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn non_square_cells_are_rejected() {
        let err = parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\nxcellsize 1\nycellsize 2\n1 2\n3 4\n")
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedGeometry(_)));
        let ok = parse("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ndx 2\ndy 2\n1 2\n3 4\n").unwrap();
        assert_eq!(ok.cell_size(), 2.0);
    }

    #[test]
    fn centre_registration_is_shifted_to_corner() {
        let m = parse("ncols 2\nnrows 2\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n1 2\n3 4\n").unwrap();
        assert_eq!(m.origin(), Vector2::new(0.0, 0.0));
    }

    #[test]
    fn write_then_read_is_exact() {
        let m = GridMap::from_fn(3, 4, Vector2::new(-1.5, 2.25), 0.1, |p| (p.x * 3.7).sin() + p.y / 3.0)
            .unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &m).unwrap();
        assert_eq!(read_grid(buf.as_slice()).unwrap(), m);
    }
}
