//! Plain-text file formats.
//!
//! Every reader skips blank lines, `#` comments and a leading header row. Writers emit the header.
//!
//! | file         | row            |
//! |--------------|----------------|
//! | dataset      | `x,y`          |
//! | predictor    | `x,value`      |
//! | labeling     | `x,label`      |
//! | distribution | `x,weight`     |
//! | loss         | `c,h,y,value`  |
//! | class        | `±1,±1,...` (one concept per row, no header) |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::domain::{Concept, ConceptClass, Example, Label, LabeledDataset, PointDistribution, RealPredictor};
use crate::error::{Error, Result};
use crate::loss::CornerLoss;

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { location: format!("{source}:{line}"), message: message.into() }
}

/// Data rows as (1-based line number, fields).
fn rows<R: Read>(reader: R) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    let mut seen_data = false;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<String> = t.split(',').map(|f| f.trim().to_string()).collect();
        let numeric = fields[0].parse::<f64>().is_ok();
        if !seen_data && !numeric {
            // header
            seen_data = true;
            continue;
        }
        seen_data = true;
        out.push((i + 1, fields));
    }
    Ok(out)
}

fn field<T: FromStr>(fields: &[String], i: usize, source: &str, line: usize) -> Result<T> {
    let raw = fields.get(i).ok_or_else(|| parse_err(source, line, format!("missing column {}", i + 1)))?;
    raw.parse().map_err(|_| parse_err(source, line, format!("cannot parse `{raw}`")))
}

fn arity(fields: &[String], want: usize, source: &str, line: usize) -> Result<()> {
    if fields.len() == want {
        Ok(())
    } else {
        Err(parse_err(source, line, format!("expected {want} columns, found {}", fields.len())))
    }
}

fn label(fields: &[String], i: usize, source: &str, line: usize) -> Result<Label> {
    let v: i8 = field(fields, i, source, line)?;
    Label::new(v).map_err(|e| parse_err(source, line, e.to_string()))
}

/// Points indexed 0..m with every index present once.
fn indexed<T>(entries: Vec<(usize, usize, T)>, source: &str) -> Result<Vec<T>> {
    let m = entries.len();
    let mut out: Vec<Option<T>> = (0..m).map(|_| None).collect();
    for (line, x, v) in entries {
        if x >= m {
            return Err(parse_err(source, line, format!("point {x} outside 0..{m}")));
        }
        if out[x].is_some() {
            return Err(parse_err(source, line, format!("point {x} listed twice")));
        }
        out[x] = Some(v);
    }
    Ok(out.into_iter().map(|v| v.expect("every index filled")).collect())
}

pub fn read_dataset<R: Read>(reader: R, source: &str) -> Result<LabeledDataset> {
    let mut pairs = Vec::new();
    for (line, f) in rows(reader)? {
        arity(&f, 2, source, line)?;
        pairs.push(Example::new(field(&f, 0, source, line)?, label(&f, 1, source, line)?));
    }
    Ok(LabeledDataset::new(pairs))
}

pub fn write_dataset<W: Write>(s: &LabeledDataset, mut w: W) -> Result<()> {
    writeln!(w, "x,y")?;
    for e in s.pairs() {
        writeln!(w, "{},{}", e.x, e.y.get())?;
    }
    Ok(())
}

pub fn read_predictor<R: Read>(reader: R, source: &str) -> Result<RealPredictor> {
    let mut entries = Vec::new();
    for (line, f) in rows(reader)? {
        arity(&f, 2, source, line)?;
        entries.push((line, field::<usize>(&f, 0, source, line)?, field::<f64>(&f, 1, source, line)?));
    }
    RealPredictor::new(indexed(entries, source)?)
}

pub fn write_predictor<W: Write>(h: &RealPredictor, mut w: W) -> Result<()> {
    writeln!(w, "x,value")?;
    for (x, v) in h.values().iter().enumerate() {
        writeln!(w, "{x},{v}")?;
    }
    Ok(())
}

/// A deterministic hypothesis or target, one ±1 label per point.
pub fn read_labeling<R: Read>(reader: R, source: &str) -> Result<Concept> {
    let mut entries = Vec::new();
    for (line, f) in rows(reader)? {
        arity(&f, 2, source, line)?;
        entries.push((line, field::<usize>(&f, 0, source, line)?, label(&f, 1, source, line)?));
    }
    Ok(Concept::new(indexed(entries, source)?))
}

/// Weights need not be normalized.
pub fn read_distribution<R: Read>(reader: R, source: &str) -> Result<PointDistribution> {
    let mut entries = Vec::new();
    for (line, f) in rows(reader)? {
        arity(&f, 2, source, line)?;
        let w: f64 = field(&f, 1, source, line)?;
        if !(w >= 0.0 && w.is_finite()) {
            return Err(parse_err(source, line, format!("weight {w} is not a finite nonnegative number")));
        }
        entries.push((line, field::<usize>(&f, 0, source, line)?, w));
    }
    PointDistribution::from_masses(indexed(entries, source)?)
}

pub fn write_distribution<W: Write>(d: &PointDistribution, mut w: W) -> Result<()> {
    writeln!(w, "x,weight")?;
    for (x, v) in d.weights().iter().enumerate() {
        writeln!(w, "{x},{v}")?;
    }
    Ok(())
}

pub fn read_class<R: Read>(reader: R, source: &str) -> Result<ConceptClass> {
    let mut concepts = Vec::new();
    for (line, f) in rows(reader)? {
        let labels = (0..f.len()).map(|i| label(&f, i, source, line)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = concepts.first().map(Concept::len) {
            if first != labels.len() {
                return Err(parse_err(source, line, format!("concept has {} labels, expected {first}", labels.len())));
            }
        }
        concepts.push(Concept::new(labels));
    }
    ConceptClass::new(concepts)
}

pub fn write_class<W: Write>(class: &ConceptClass, mut w: W) -> Result<()> {
    for c in class.iter() {
        let row: Vec<String> = c.labels().iter().map(|l| l.get().to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// All eight corners, each exactly once.
pub fn read_loss<R: Read>(reader: R, source: &str) -> Result<CornerLoss> {
    let mut corners = [None; 8];
    let mut last = 0;
    for (line, f) in rows(reader)? {
        arity(&f, 4, source, line)?;
        let (c, h, y) = (label(&f, 0, source, line)?, label(&f, 1, source, line)?, label(&f, 2, source, line)?);
        let i = (usize::from(c.is_pos()) << 2) | (usize::from(h.is_pos()) << 1) | usize::from(y.is_pos());
        if corners[i].is_some() {
            return Err(parse_err(source, line, "corner listed twice"));
        }
        corners[i] = Some(field::<f64>(&f, 3, source, line)?);
        last = line;
    }
    let mut out = [0.0; 8];
    for (i, v) in corners.iter().enumerate() {
        out[i] = v.ok_or_else(|| parse_err(source, last, format!("corner {i} missing")))?;
    }
    CornerLoss::new(out)
}

pub fn write_loss<W: Write>(f: &CornerLoss, mut w: W) -> Result<()> {
    writeln!(w, "c,h,y,value")?;
    for (i, v) in f.corners().iter().enumerate() {
        let s = |bit: usize| if (i >> bit) & 1 == 1 { 1 } else { -1 };
        writeln!(w, "{},{},{},{v}", s(2), s(1), s(0))?;
    }
    Ok(())
}

/// Opens `path` and hands it to a reader, naming the file in parse errors.
pub fn load<T>(path: &Path, read: impl FnOnce(File, &str) -> Result<T>) -> Result<T> {
    let file = File::open(path)?;
    read(file, &path.display().to_string())
}

/// Creates `path` (and its parent directory) and hands a buffered writer to `write`.
pub fn save(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}
