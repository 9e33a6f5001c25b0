//! Plain-text and binary greymap masks (PGM `P2`/`P5`) and CSV field dumps.

use std::io::{Read, Write};

use super::{GridDomain, GridFunction};
use crate::error::{Error, Result};

const INDEX_NAMES: [&str; 6] = ["i", "j", "k", "l", "m", "n"];

/// Writes every lattice node as `i,j[,k…],x1,x2[,x3…],value`.
pub fn write_csv(f: &GridFunction, mut w: impl Write) -> Result<()> {
    let d = f.domain();
    let n = d.dim();
    let mut header: Vec<String> = (0..n)
        .map(|j| INDEX_NAMES.get(j).map_or(format!("i{j}"), |s| s.to_string()))
        .collect();
    header.extend((1..=n).map(|j| format!("x{j}")));
    header.push("value".into());
    writeln!(w, "{}", header.join(","))?;

    let mut idx = vec![0; n];
    let mut x = vec![0.0; n];
    for (flat, v) in f.values().iter().enumerate() {
        d.unravel_into(flat, &mut idx);
        d.coords_into(flat, &mut x);
        let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        row.extend(x.iter().map(|c| format!("{c:.16e}")));
        row.push(format!("{v:.16e}"));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes the mask of a 2D domain: rows follow `x1`, columns follow `x2`,
/// 255 marks interior nodes and 0 exterior ones.
pub fn write_pgm_mask(domain: &GridDomain, binary: bool, w: impl Write) -> Result<()> {
    if domain.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: domain.dim(),
        });
    }
    let pixels: Vec<u8> = domain.mask().iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_pgm(domain.shape()[0], domain.shape()[1], &pixels, binary, w)
}

/// Writes a greyscale image of the `(x1, x2)` plane through the middle index
/// of every further axis, scaled linearly from the slice minimum to maximum.
pub fn write_pgm_slice(f: &GridFunction, w: impl Write) -> Result<()> {
    let d = f.domain();
    if d.dim() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: d.dim(),
        });
    }
    let (rows, cols) = (d.shape()[0], d.shape()[1]);
    let mut idx: Vec<usize> = d.shape().iter().map(|s| s / 2).collect();
    let mut slice = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            idx[0] = r;
            idx[1] = c;
            slice.push(f.value_at(&idx));
        }
    }
    let lo = slice.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels: Vec<u8> = slice
        .iter()
        .map(|&v| {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    write_pgm(rows, cols, &pixels, false, w)
}

fn write_pgm(rows: usize, cols: usize, pixels: &[u8], binary: bool, mut w: impl Write) -> Result<()> {
    if binary {
        write!(w, "P5\n{cols} {rows}\n255\n")?;
        w.write_all(pixels)?;
    } else {
        write!(w, "P2\n{cols} {rows}\n255\n")?;
        for row in pixels.chunks(cols) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

/// Reads a 2D mask from PGM (`P2` or `P5`); pixels above half of `maxval`
/// count as interior.
pub fn read_pgm_mask(mut r: impl Read, bounds: &[(f64, f64)]) -> Result<GridDomain> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos)?;
    let binary = match magic.as_str() {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::Format(format!("unsupported PGM magic `{other}`"))),
    };
    let cols = parse_usize(&next_token(&bytes, &mut pos)?)?;
    let rows = parse_usize(&next_token(&bytes, &mut pos)?)?;
    let maxval = parse_usize(&next_token(&bytes, &mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let count = rows * cols;
    let pixels: Vec<usize> = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| Error::Format("truncated P5 raster".into()))?;
        raster.iter().map(|&b| b as usize).collect()
    } else {
        (0..count)
            .map(|_| next_token(&bytes, &mut pos).and_then(|t| parse_usize(&t)))
            .collect::<Result<_>>()?
    };
    let mask = pixels.iter().map(|&p| 2 * p > maxval).collect();
    GridDomain::from_mask(bounds, &[rows, cols], mask)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("unexpected end of PGM data".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_usize(t: &str) -> Result<usize> {
    t.parse()
        .map_err(|_| Error::Format(format!("expected an integer, found `{t}`")))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    fn disk() -> GridDomain {
        GridDomain::make_mask(&[(-1.2, 1.2), (-1.0, 1.0)], &[13, 9], |x| {
            x[0] * x[0] + x[1] * x[1] < 1.0
        })
        .unwrap()
    }

    #[test]
    fn pgm_mask_roundtrip_both_encodings() {
        let d = disk();
        for binary in [false, true] {
            let mut buf = Vec::new();
            write_pgm_mask(&d, binary, &mut buf).unwrap();
            let back = read_pgm_mask(&buf[..], d.bounds()).unwrap();
            assert_eq!(back, d);
        }
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let text = "P2\n# a comment\n3 3\n255\n0 0 0\n0 255 0\n0 0 0\n";
        let d = read_pgm_mask(text.as_bytes(), &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(d.num_interior(), 1);
        assert!(read_pgm_mask("P3\n1 1\n255\n0".as_bytes(), &[(0.0, 1.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn csv_layout() {
        let d = Arc::new(GridDomain::make_box(&[(0.0, 1.0), (0.0, 2.0)], &[3, 3]).unwrap());
        let f = GridFunction::constant(&d, 0.5);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,j,x1,x2,value");
        assert_eq!(lines.len(), 10);
        assert_eq!(
            lines[5],
            "1,1,5.0000000000000000e-1,1.0000000000000000e0,5.0000000000000000e-1"
        );
    }

    #[test]
    fn slice_of_3d_function() {
        let d = Arc::new(
            GridDomain::make_box(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[5, 4, 3]).unwrap(),
        );
        let f = GridFunction::from_fn(&d, |x| x[0] + x[1]);
        let mut buf = Vec::new();
        write_pgm_slice(&f, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("P2\n4 5\n255\n"));
    }
}
