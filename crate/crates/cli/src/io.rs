//! File formats: CSV matrices (17-significant-digit round-trippable), the
//! per-iteration trace TSV, and ASCII PGM abundance maps.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;
use volfact::solver::ObservationMask;
use volfact::{ConvergenceTrace, DenseMatrix};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("row {0} has a different number of cells than row 0")]
    RaggedRows(usize),
    #[error("cell ({0}, {1}) is not a finite number")]
    UnparsableCell(usize, usize),
    #[error("every cell is missing")]
    AllMissing,
    #[error("file is empty")]
    Empty,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] volfact::Error),
}

/// 17 significant digits: enough to reproduce any finite f64 bit for bit.
fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads a rectangular comma-separated matrix. With `missing_as_nan`, cells
/// spelled `nan` become zeros with a zero mask weight; the returned mask is
/// all ones when nothing is missing.
pub fn read_matrix_csv(
    path: &Path,
    missing_as_nan: bool,
) -> Result<(DenseMatrix, Option<ObservationMask>), IoError> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut mask_rows: Vec<Vec<f64>> = Vec::new();
    let mut any_missing = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        let mut mask_row = Vec::new();
        for (j, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            if missing_as_nan && cell.eq_ignore_ascii_case("nan") {
                row.push(0.0);
                mask_row.push(0.0);
                any_missing = true;
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    row.push(v);
                    mask_row.push(1.0);
                }
                _ => return Err(IoError::UnparsableCell(i, j)),
            }
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(IoError::RaggedRows(i));
            }
        }
        rows.push(row);
        mask_rows.push(mask_row);
    }
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    let matrix = DenseMatrix::from_rows(&rows)?;
    let mask = if missing_as_nan {
        if mask_rows.iter().flatten().all(|&v| v == 0.0) {
            return Err(IoError::AllMissing);
        }
        let weights = DenseMatrix::from_rows(&mask_rows)?;
        let _ = any_missing;
        Some(ObservationMask::new(weights)?)
    } else {
        None
    };
    Ok((matrix, mask))
}

pub fn write_matrix_csv(matrix: &DenseMatrix, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    for i in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(i).iter().map(|&v| format_value(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a vector stored as a single CSV row or column.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>, IoError> {
    let (m, _) = read_matrix_csv(path, false)?;
    if m.rows() == 1 {
        Ok(m.row(0).to_vec())
    } else if m.cols() == 1 {
        Ok(m.col(0))
    } else {
        Err(IoError::ShapeMismatch(format!(
            "expected a vector, got a {}x{} matrix",
            m.rows(),
            m.cols()
        )))
    }
}

/// Writes the trace as TSV: `iter`, `elapsed_s`, `fit`, `reg`, `objective`
/// per outer iteration, one header line.
pub fn write_trace_tsv(trace: &ConvergenceTrace, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("iter\telapsed_s\tfit\treg\tobjective\n");
    for e in &trace.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.iter,
            format_value(e.elapsed_s),
            format_value(e.fit),
            format_value(e.reg),
            format_value(e.objective)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Renders one row of `H` as an ASCII PGM image of the given size. Pixels are
/// scaled by the row maximum (an all-zero row gives an all-black image).
pub fn write_abundance_pgm(
    h_row: &[f64],
    width: usize,
    height: usize,
    path: &Path,
) -> Result<(), IoError> {
    if width * height != h_row.len() {
        return Err(IoError::ShapeMismatch(format!(
            "{width}x{height} image needs {} values, row has {}",
            width * height,
            h_row.len()
        )));
    }
    let row_max = h_row.iter().cloned().fold(0.0, f64::max);
    let mut file = fs::File::create(path)?;
    writeln!(file, "P2")?;
    writeln!(file, "{width} {height}")?;
    writeln!(file, "255")?;
    for y in 0..height {
        let pixels: Vec<String> = (0..width)
            .map(|x| {
                let v = h_row[y * width + x];
                let level = if row_max > 0.0 {
                    (255.0 * v / row_max).round() as i64
                } else {
                    0
                };
                level.clamp(0, 255).to_string()
            })
            .collect();
        writeln!(file, "{}", pixels.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use volfact::rng::Stream;
    use volfact::TraceEntry;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("volfact-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_basics() {
        let p = tmp("basic.csv");
        fs::write(&p, "1,2\n3,4\n").unwrap();
        let (m, mask) = read_matrix_csv(&p, false).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(mask.is_none());

        fs::write(&p, "1,nan\n3,4\n").unwrap();
        let (m, mask) = read_matrix_csv(&p, true).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        let mask = mask.unwrap();
        assert_eq!(mask.weights.data(), &[1.0, 0.0, 1.0, 1.0]);

        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&p, false),
            Err(IoError::RaggedRows(1))
        ));

        fs::write(&p, "1,x\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&p, false),
            Err(IoError::UnparsableCell(0, 1))
        ));

        fs::write(&p, "nan,nan\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&p, true),
            Err(IoError::AllMissing)
        ));

        // nan without the flag is unparsable (entries must be finite)
        fs::write(&p, "nan,1\n").unwrap();
        assert!(matches!(
            read_matrix_csv(&p, false),
            Err(IoError::UnparsableCell(0, 0))
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let mut s = Stream::new(1, "csv", &[]);
        let m = DenseMatrix::from_fn(7, 5, |_, _| {
            let v = s.uniform_in(-1.0, 1.0);
            v * 10f64.powi((s.uniform_in(-30.0, 30.0)) as i32)
        });
        let p = tmp("roundtrip.csv");
        write_matrix_csv(&m, &p).unwrap();
        let (back, _) = read_matrix_csv(&p, false).unwrap();
        assert_eq!(m.data(), back.data());
    }

    #[test]
    fn trace_tsv_round_trip() {
        let mut trace = ConvergenceTrace::new();
        trace.push(TraceEntry {
            iter: 0,
            elapsed_s: 0.25,
            fit: 1.5,
            reg: -0.5,
            objective: 1.0,
            lambda: None,
            gamma: None,
            primal_residual: None,
        });
        let p = tmp("trace.tsv");
        write_trace_tsv(&trace, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter\telapsed_s\tfit\treg\tobjective"
        );
        let row: Vec<&str> = lines.next().unwrap().split('\t').collect();
        assert_eq!(row[0], "0");
        assert_eq!(row[2].parse::<f64>().unwrap(), 1.5);
        assert_eq!(row[3].parse::<f64>().unwrap(), -0.5);
        // objective column equals fit + reg
        assert_eq!(
            row[4].parse::<f64>().unwrap(),
            row[2].parse::<f64>().unwrap() + row[3].parse::<f64>().unwrap()
        );
        assert!(lines.next().is_none());
    }

    #[test]
    fn pgm_examples() {
        let p = tmp("map.pgm");
        write_abundance_pgm(&[0.0, 0.5, 1.0, 0.25], 2, 2, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "2 2");
        assert_eq!(lines[2], "255");
        assert_eq!(lines[3], "0 128");
        assert_eq!(lines[4], "255 64");

        write_abundance_pgm(&[0.7; 6], 3, 2, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.lines().skip(3).all(|l| l == "255 255 255"));

        write_abundance_pgm(&[0.0; 6], 3, 2, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.lines().skip(3).all(|l| l == "0 0 0"));

        assert!(matches!(
            write_abundance_pgm(&[0.0; 5], 3, 2, &p),
            Err(IoError::ShapeMismatch(_))
        ));
    }
}
