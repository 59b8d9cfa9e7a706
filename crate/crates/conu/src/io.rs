//! CSV formats.
//!
//! Ordinary data: header `f0,...,f{d-1},y` with 1-based class indices.
//! Complementary data: header `f0,...,f{d-1},cl` where `cl` is a
//! `;`-separated list of 1-based class indices (empty allowed).
//! Priors: `k,pi_k,pi_bar_k`. Training curves: `epoch,train_risk,test_acc`.
//! Results: `method,setting,seed,acc` and aggregated `method,setting,mean,std`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::{ClassPriors, ComplementaryDataset, OrdinaryDataset};
use crate::error::{Error, Result};
use crate::train::TrainReport;

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn feature_header(d: usize) -> String {
    (0..d).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",")
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    for line in file.lines() {
        lines.push(line?);
    }
    Ok(lines)
}

fn parse_feature_fields(path: &Path, line_no: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .enumerate()
        .map(|(j, raw)| {
            raw.trim().parse::<f64>().map_err(|_| {
                parse_error(path, line_no, format!("column f{j}: '{raw}' is not a number"))
            })
        })
        .collect()
}

pub fn write_ordinary_csv(path: &Path, ds: &OrdinaryDataset) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{},y", feature_header(ds.dim()))?;
    for (row, &y) in ds.features().rows().into_iter().zip(ds.labels()) {
        for v in row.iter() {
            write!(file, "{v},")?;
        }
        writeln!(file, "{}", y + 1)?;
    }
    file.flush()?;
    Ok(())
}

/// Reads labeled data. The class count is the largest label in the file
/// unless `class_count` overrides it.
pub fn read_ordinary_csv(path: &Path, class_count: Option<usize>) -> Result<OrdinaryDataset> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .ok_or_else(|| parse_error(path, 0, "file is empty"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[columns.len() - 1].trim() != "y" {
        return Err(parse_error(path, 1, "expected header 'f0,...,y'"));
    }
    let d = columns.len() - 1;
    for (j, col) in columns[..d].iter().enumerate() {
        if col.trim() != format!("f{j}") {
            return Err(parse_error(path, 1, format!("expected column 'f{j}', got '{col}'")));
        }
    }

    let n = lines.len() - 1;
    if n == 0 {
        return Err(parse_error(path, 1, "no data rows"));
    }
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut max_label = 0usize;
    for (i, line) in lines[1..].iter().enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected {} fields, got {}", d + 1, fields.len()),
            ));
        }
        let values = parse_feature_fields(path, line_no, &fields[..d])?;
        for (j, v) in values.into_iter().enumerate() {
            features[(i, j)] = v;
        }
        let raw = fields[d].trim();
        let y: usize = raw
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("label '{raw}' is not an integer")))?;
        if y == 0 {
            return Err(parse_error(path, line_no, "labels are 1-based; got 0"));
        }
        max_label = max_label.max(y);
        labels.push(y - 1);
    }
    let q = class_count.unwrap_or(max_label.max(2));
    if max_label > q {
        return Err(parse_error(
            path,
            0,
            format!("file contains label {max_label} but only {q} classes were declared"),
        ));
    }
    OrdinaryDataset::new(features, labels, q)
}

pub fn write_complementary_csv(path: &Path, cds: &ComplementaryDataset) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{},cl", feature_header(cds.dim()))?;
    for (row, bits) in cds
        .features()
        .rows()
        .into_iter()
        .zip(cds.comp_labels().rows())
    {
        for v in row.iter() {
            write!(file, "{v},")?;
        }
        let list: Vec<String> = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| (k + 1).to_string())
            .collect();
        writeln!(file, "{}", list.join(";"))?;
    }
    file.flush()?;
    Ok(())
}

/// Reads complementary-label data. The class count is the largest index in
/// the file unless `class_count` overrides it; pass it explicitly when a
/// class might never be flagged.
pub fn read_complementary_csv(
    path: &Path,
    class_count: Option<usize>,
) -> Result<ComplementaryDataset> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .ok_or_else(|| parse_error(path, 0, "file is empty"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[columns.len() - 1].trim() != "cl" {
        return Err(parse_error(path, 1, "expected header 'f0,...,cl'"));
    }
    let d = columns.len() - 1;
    for (j, col) in columns[..d].iter().enumerate() {
        if col.trim() != format!("f{j}") {
            return Err(parse_error(path, 1, format!("expected column 'f{j}', got '{col}'")));
        }
    }

    let n = lines.len() - 1;
    if n == 0 {
        return Err(parse_error(path, 1, "no data rows"));
    }
    let mut features = Array2::zeros((n, d));
    let mut flagged: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut max_index = 0usize;
    for (i, line) in lines[1..].iter().enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected {} fields, got {}", d + 1, fields.len()),
            ));
        }
        let values = parse_feature_fields(path, line_no, &fields[..d])?;
        for (j, v) in values.into_iter().enumerate() {
            features[(i, j)] = v;
        }
        let raw = fields[d].trim();
        let mut row = Vec::new();
        if !raw.is_empty() {
            for item in raw.split(';') {
                let k: usize = item.trim().parse().map_err(|_| {
                    parse_error(
                        path,
                        line_no,
                        format!("complementary index '{item}' is not an integer"),
                    )
                })?;
                if k == 0 {
                    return Err(parse_error(path, line_no, "complementary indices are 1-based; got 0"));
                }
                max_index = max_index.max(k);
                row.push(k - 1);
            }
        }
        flagged.push(row);
    }
    let q = class_count.unwrap_or(max_index.max(2));
    if max_index > q {
        return Err(parse_error(
            path,
            0,
            format!("file contains index {max_index} but only {q} classes were declared"),
        ));
    }
    let mut comp = Array2::from_elem((n, q), false);
    for (i, row) in flagged.iter().enumerate() {
        for &k in row {
            comp[(i, k)] = true;
        }
    }
    ComplementaryDataset::new(features, comp)
}

pub fn write_priors_csv(path: &Path, priors: &ClassPriors) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "k,pi_k,pi_bar_k")?;
    for (k, (&p, &pb)) in priors.pi().iter().zip(priors.pi_bar()).enumerate() {
        writeln!(file, "{},{p},{pb}", k + 1)?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_priors_csv(path: &Path) -> Result<ClassPriors> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .ok_or_else(|| parse_error(path, 0, "file is empty"))?;
    if header.trim() != "k,pi_k,pi_bar_k" {
        return Err(parse_error(path, 1, "expected header 'k,pi_k,pi_bar_k'"));
    }
    let mut pi = Vec::new();
    let mut pi_bar = Vec::new();
    for (i, line) in lines[1..].iter().enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_error(path, line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let k: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, "class index is not an integer"))?;
        if k != i + 1 {
            return Err(parse_error(path, line_no, format!("expected class {}, got {k}", i + 1)));
        }
        pi.push(fields[1].trim().parse::<f64>().map_err(|_| {
            parse_error(path, line_no, format!("pi_k '{}' is not a number", fields[1]))
        })?);
        pi_bar.push(fields[2].trim().parse::<f64>().map_err(|_| {
            parse_error(path, line_no, format!("pi_bar_k '{}' is not a number", fields[2]))
        })?);
    }
    ClassPriors::new(pi, pi_bar)
}

/// One row per epoch, epochs numbered from 1.
pub fn write_curves_csv(path: &Path, report: &TrainReport) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "epoch,train_risk,test_acc")?;
    for (i, &acc) in report.test_acc.iter().enumerate() {
        let risk = report
            .train_risk
            .get(i)
            .map(|r| r.to_string())
            .unwrap_or_default();
        writeln!(file, "{},{risk},{acc}", i + 1)?;
    }
    file.flush()?;
    Ok(())
}

/// Per-seed accuracy rows.
pub fn write_results_csv(path: &Path, rows: &[(String, String, u64, f64)]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "method,setting,seed,acc")?;
    for (method, setting, seed, acc) in rows {
        writeln!(file, "{method},{setting},{seed},{acc}")?;
    }
    file.flush()?;
    Ok(())
}

/// Aggregated accuracy rows.
pub fn write_summary_csv(path: &Path, rows: &[(String, String, f64, f64)]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "method,setting,mean,std")?;
    for (method, setting, mean, std) in rows {
        writeln!(file, "{method},{setting},{mean},{std}")?;
    }
    file.flush()?;
    Ok(())
}
