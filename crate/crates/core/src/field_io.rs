//! Field file format and CSV/gnuplot export.
//!
//! Binary layout: one ASCII header line
//! `MLFRAC-FIELD v1; n=..; m=..; points=..; extent=..; space=..`
//! followed by little-endian f64 pairs (re, im) in row-major lattice order,
//! component-major. CSV uses 17 significant digits for round-trip safety.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Space, SpectralGrid, StateField};

const MAGIC: &str = "MLFRAC-FIELD v1";

pub fn write_field(path: &Path, field: &StateField) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let grid = field.grid();
    let points = grid
        .points()
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let extent = grid
        .extent()
        .iter()
        .map(|l| format!("{l}"))
        .collect::<Vec<_>>()
        .join(",");
    let space = match field.space() {
        Space::Physical => "physical",
        Space::Frequency => "frequency",
    };
    writeln!(
        w,
        "{MAGIC}; n={}; m={}; points={points}; extent={extent}; space={space}",
        grid.dim(),
        field.components(),
    )?;
    for c in 0..field.components() {
        for v in field.component(c) {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<StateField> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let header = header.trim_end();
    let mut parts = header.split("; ");
    if parts.next() != Some(MAGIC) {
        return Err(Error::FieldFormat(format!(
            "bad magic in {}",
            path.display()
        )));
    }
    let mut n = None;
    let mut m = None;
    let mut points: Option<Vec<usize>> = None;
    let mut extent: Option<Vec<f64>> = None;
    let mut space = None;
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::FieldFormat(format!("malformed header field '{part}'")))?;
        match key {
            "n" => n = Some(parse_num::<usize>(value)?),
            "m" => m = Some(parse_num::<usize>(value)?),
            "points" => {
                points = Some(
                    value
                        .split(',')
                        .map(parse_num::<usize>)
                        .collect::<Result<_>>()?,
                )
            }
            "extent" => {
                extent = Some(
                    value
                        .split(',')
                        .map(parse_num::<f64>)
                        .collect::<Result<_>>()?,
                )
            }
            "space" => {
                space = Some(match value {
                    "physical" => Space::Physical,
                    "frequency" => Space::Frequency,
                    other => {
                        return Err(Error::FieldFormat(format!("unknown space '{other}'")))
                    }
                })
            }
            other => return Err(Error::FieldFormat(format!("unknown header key '{other}'"))),
        }
    }
    let (n, m, points, extent, space) = match (n, m, points, extent, space) {
        (Some(n), Some(m), Some(p), Some(e), Some(s)) => (n, m, p, e, s),
        _ => {
            return Err(Error::FieldFormat(format!(
                "incomplete header in {}",
                path.display()
            )))
        }
    };
    if points.len() != n || extent.len() != n {
        return Err(Error::FieldFormat(
            "points/extent length does not match n".into(),
        ));
    }
    let grid = SpectralGrid::new(&extent, &points)?;
    let len = grid.len();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = m * len * 16;
    if payload.len() != expected {
        return Err(Error::FieldFormat(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(m);
    let mut off = 0usize;
    for _ in 0..m {
        let mut comp = Vec::with_capacity(len);
        for _ in 0..len {
            let re = f64::from_le_bytes(payload[off..off + 8].try_into().unwrap());
            let im = f64::from_le_bytes(payload[off + 8..off + 16].try_into().unwrap());
            comp.push(Complex64::new(re, im));
            off += 16;
        }
        data.push(comp);
    }
    StateField::from_data(grid, space, data)
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| Error::FieldFormat(format!("cannot parse '{s}'")))
}

/// One row per lattice point: coordinates then re/im per component,
/// 17 significant digits.
pub fn write_csv(path: &Path, field: &StateField) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let grid = field.grid();
    let n = grid.dim();
    let coord_name = match field.space() {
        Space::Physical => "x",
        Space::Frequency => "xi",
    };
    let mut header: Vec<String> = (0..n).map(|a| format!("{coord_name}{a}")).collect();
    for c in 0..field.components() {
        header.push(format!("re{c}"));
        header.push(format!("im{c}"));
    }
    writeln!(w, "{}", header.join(","))?;
    let mut coord = [0.0f64; 3];
    for flat in 0..grid.len() {
        match field.space() {
            Space::Physical => grid.x_at(flat, &mut coord),
            Space::Frequency => grid.xi_at(flat, &mut coord),
        }
        let mut row: Vec<String> = coord[..n].iter().map(|v| format!("{v:.16e}")).collect();
        for c in 0..field.components() {
            let v = field.component(c)[flat];
            row.push(format!("{:.16e}", v.re));
            row.push(format!("{:.16e}", v.im));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Space-separated columns for gnuplot. 1D: full line; 2D: scanlines
/// separated by blank lines (splot format); 3D: the middle slice along the
/// last axis.
pub fn write_gnuplot_columns(path: &Path, field: &StateField) -> Result<()> {
    let phys = field.to_physical()?;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let grid = phys.grid();
    let pts = grid.points();
    let write_row = |w: &mut BufWriter<std::fs::File>, flat: usize, coord: &[f64]| -> Result<()> {
        let mut row: Vec<String> = coord.iter().map(|v| format!("{v:.16e}")).collect();
        for c in 0..phys.components() {
            let v = phys.component(c)[flat];
            row.push(format!("{:.16e}", v.re));
            row.push(format!("{:.16e}", v.im));
        }
        writeln!(w, "{}", row.join(" "))?;
        Ok(())
    };
    match grid.dim() {
        1 => {
            for i in 0..pts[0] {
                write_row(&mut w, i, &[grid.x(0, i)])?;
            }
        }
        2 => {
            for i in 0..pts[0] {
                for j in 0..pts[1] {
                    write_row(&mut w, i * pts[1] + j, &[grid.x(0, i), grid.x(1, j)])?;
                }
                writeln!(w)?;
            }
        }
        3 => {
            let kmid = pts[2] / 2;
            for i in 0..pts[0] {
                for j in 0..pts[1] {
                    let flat = (i * pts[1] + j) * pts[2] + kmid;
                    write_row(&mut w, flat, &[grid.x(0, i), grid.x(1, j)])?;
                }
                writeln!(w)?;
            }
        }
        _ => unreachable!(),
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = std::env::temp_dir().join("mlfrac-fieldio-test");
        std::fs::create_dir_all(&dir).unwrap();
        let g = SpectralGrid::new(&[3.5, 2.25], &[8, 4]).unwrap();
        let f = StateField::from_fn_physical(g, 2, |c, x| {
            Complex64::new(x[0] * 1.7 + c as f64, x[1] - 0.3)
        });
        let path = dir.join("roundtrip.field");
        write_field(&path, &f).unwrap();
        let g2 = read_field(&path).unwrap();
        assert_eq!(g2.components(), 2);
        assert_eq!(g2.space(), Space::Physical);
        assert_eq!(g2.grid(), f.grid());
        for c in 0..2 {
            assert_eq!(g2.component(c), f.component(c));
        }
        // writing again produces identical bytes
        let path2 = dir.join("roundtrip2.field");
        write_field(&path2, &g2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn header_errors_are_reported() {
        let dir = std::env::temp_dir().join("mlfrac-fieldio-test");
        std::fs::create_dir_all(&dir).unwrap();
        let bad = dir.join("bad.field");
        std::fs::write(&bad, b"NOT-A-FIELD v9; n=1\n").unwrap();
        assert!(matches!(read_field(&bad), Err(Error::FieldFormat(_))));

        let truncated = dir.join("trunc.field");
        std::fs::write(
            &truncated,
            b"MLFRAC-FIELD v1; n=1; m=1; points=4; extent=1; space=physical\n\x00\x00",
        )
        .unwrap();
        assert!(matches!(read_field(&truncated), Err(Error::FieldFormat(_))));
    }

    #[test]
    fn csv_has_17_significant_digits() {
        let dir = std::env::temp_dir().join("mlfrac-fieldio-test");
        std::fs::create_dir_all(&dir).unwrap();
        let g = SpectralGrid::new(&[1.0], &[4]).unwrap();
        let f = StateField::from_fn_physical(g, 1, |_, _| {
            Complex64::new(std::f64::consts::PI, 0.1)
        });
        let path = dir.join("out.csv");
        write_csv(&path, &f).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("3.1415926535897931e0"));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,re0,im0");
        // value round-trips exactly
        let first = lines.next().unwrap();
        let re: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(re, std::f64::consts::PI);
    }
}
