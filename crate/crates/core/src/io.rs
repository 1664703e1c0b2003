//! CSV and JSON formats for joints, sweep results, corpora and models.
//!
//! Writers emit floats in shortest round-trip form and rows in a fixed
//! order, so identical inputs give byte-identical files and every file
//! reads back to the value that produced it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::JointXYZ;
use crate::region::{RegionCurve, RegionPoint};
use crate::regularizer::{ExcessRow, SummaryRow};
use crate::textcat::{Corpus, Document, HierModel};

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn read_rows<T: DeserializeOwned, R: Read>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, header)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e| Error::Parse(format!("row {}: {e}", i + 2)))?);
    }
    Ok(out)
}

fn write_rows<T: Serialize, W: Write>(writer: W, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(header)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    Ok(File::create(path)?)
}

fn open(path: &Path) -> Result<File> {
    Ok(File::open(path)?)
}

const JOINT_HEADER: [&str; 4] = ["x", "y", "z", "p"];

#[derive(Serialize, Deserialize)]
struct JointRow {
    x: usize,
    y: usize,
    z: usize,
    p: f64,
}

/// Reads a `x,y,z,p` joint; alphabet sizes are one past the largest index
/// seen. Returns the normalized joint and the mass before normalization.
pub fn read_joint<R: Read>(reader: R) -> Result<(JointXYZ, f64)> {
    let rows: Vec<JointRow> = read_rows(reader, &JOINT_HEADER)?;
    if rows.is_empty() {
        return Err(Error::Parse("joint file has no rows".into()));
    }
    let dim = |f: fn(&JointRow) -> usize| rows.iter().map(f).max().unwrap_or(0) + 1;
    let (nx, ny, nz) = (dim(|r| r.x), dim(|r| r.y), dim(|r| r.z));
    let mut raw = vec![0.0; nx * ny * nz];
    let mut seen = vec![false; raw.len()];
    for r in &rows {
        let i = (r.x * ny + r.y) * nz + r.z;
        if seen[i] {
            return Err(Error::Parse(format!("duplicate cell ({},{},{})", r.x, r.y, r.z)));
        }
        seen[i] = true;
        raw[i] = r.p;
    }
    JointXYZ::with_mass((nx, ny, nz), raw)
}

pub fn load_joint(path: &Path) -> Result<(JointXYZ, f64)> {
    read_joint(open(path)?)
}

/// Writes every cell, zeros included, so the alphabet sizes survive.
pub fn write_joint<W: Write>(writer: W, joint: &JointXYZ) -> Result<()> {
    let (nx, ny, nz) = joint.dims();
    let rows = (0..nx).flat_map(|x| {
        (0..ny).flat_map(move |y| {
            (0..nz).map(move |z| JointRow {
                x,
                y,
                z,
                p: joint.p(x, y, z),
            })
        })
    });
    write_rows(writer, &JOINT_HEADER, rows)
}

pub fn save_joint(path: &Path, joint: &JointXYZ) -> Result<()> {
    write_joint(create(path)?, joint)
}

const REGION_HEADER: [&str; 6] = ["lambda", "rate", "relevance", "f", "iterations", "converged"];

#[derive(Serialize, Deserialize)]
struct RegionRow {
    lambda: f64,
    rate: f64,
    relevance: f64,
    f: f64,
    iterations: usize,
    converged: bool,
}

pub fn write_region<W: Write>(writer: W, points: &[RegionPoint]) -> Result<()> {
    let rows = points.iter().map(|p| RegionRow {
        lambda: p.lambda,
        rate: p.rate,
        relevance: p.relevance,
        f: p.f_value,
        iterations: p.iterations,
        converged: p.converged,
    });
    write_rows(writer, &REGION_HEADER, rows)
}

pub fn read_region<R: Read>(reader: R) -> Result<Vec<RegionPoint>> {
    let rows: Vec<RegionRow> = read_rows(reader, &REGION_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| RegionPoint {
            lambda: r.lambda,
            rate: r.rate,
            relevance: r.relevance,
            f_value: r.f,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect())
}

const HULL_HEADER: [&str; 2] = ["rate", "relevance"];

pub fn write_hull<W: Write>(writer: W, hull: &[(f64, f64)]) -> Result<()> {
    write_rows(writer, &HULL_HEADER, hull.iter().copied())
}

pub fn read_hull<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    read_rows(reader, &HULL_HEADER)
}

/// Writes `region.csv` and `hull.csv` into `dir`.
pub fn save_region_curve(dir: &Path, curve: &RegionCurve) -> Result<()> {
    write_region(create(&dir.join("region.csv"))?, &curve.points)?;
    write_hull(create(&dir.join("hull.csv"))?, &curve.hull)
}

const EXCESS_HEADER: [&str; 5] = ["n", "lambda", "trial", "rate", "excess"];

pub fn write_excess<W: Write>(writer: W, rows: &[ExcessRow]) -> Result<()> {
    write_rows(writer, &EXCESS_HEADER, rows)
}

pub fn read_excess<R: Read>(reader: R) -> Result<Vec<ExcessRow>> {
    read_rows(reader, &EXCESS_HEADER)
}

const SUMMARY_HEADER: [&str; 4] = ["n", "R_opt", "R_lim", "min_excess"];

pub fn write_summary<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    write_rows(writer, &SUMMARY_HEADER, rows)
}

pub fn read_summary<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    read_rows(reader, &SUMMARY_HEADER)
}

const LABELS_HEADER: [&str; 2] = ["doc_id", "class"];
const COUNTS_HEADER: [&str; 3] = ["doc_id", "word_id", "count"];
const HIERARCHY_HEADER: [&str; 2] = ["class", "topic"];

#[derive(Serialize, Deserialize)]
struct LabelRow {
    doc_id: usize,
    class: usize,
}

#[derive(Serialize, Deserialize)]
struct CountRow {
    doc_id: usize,
    word_id: usize,
    count: u32,
}

#[derive(Serialize, Deserialize)]
struct HierarchyRow {
    class: usize,
    topic: usize,
}

/// Writes `labels.csv`, `counts.csv` and `hierarchy.csv` into `dir`.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let docs = &corpus.documents;
    write_rows(
        create(&dir.join("labels.csv"))?,
        &LABELS_HEADER,
        docs.iter().map(|d| LabelRow { doc_id: d.id, class: d.class }),
    )?;
    write_rows(
        create(&dir.join("counts.csv"))?,
        &COUNTS_HEADER,
        docs.iter().flat_map(|d| {
            d.words.iter().map(move |&(word_id, count)| CountRow {
                doc_id: d.id,
                word_id,
                count,
            })
        }),
    )?;
    write_rows(
        create(&dir.join("hierarchy.csv"))?,
        &HIERARCHY_HEADER,
        corpus
            .hierarchy
            .iter()
            .enumerate()
            .map(|(class, &topic)| HierarchyRow { class, topic }),
    )
}

/// Reads a corpus directory. Documents keep the order of `labels.csv`; the
/// vocabulary is `vocab_size` if given, otherwise one past the largest word
/// id.
pub fn load_corpus(dir: &Path, vocab_size: Option<usize>) -> Result<Corpus> {
    let labels: Vec<LabelRow> = read_rows(open(&dir.join("labels.csv"))?, &LABELS_HEADER)?;
    let counts: Vec<CountRow> = read_rows(open(&dir.join("counts.csv"))?, &COUNTS_HEADER)?;
    let hier: Vec<HierarchyRow> = read_rows(open(&dir.join("hierarchy.csv"))?, &HIERARCHY_HEADER)?;

    let mut hierarchy = vec![usize::MAX; hier.len()];
    for r in &hier {
        match hierarchy.get_mut(r.class) {
            Some(slot) if *slot == usize::MAX => *slot = r.topic,
            _ => return Err(Error::Parse(format!("hierarchy class {} is duplicated or out of range", r.class))),
        }
    }

    let mut words: BTreeMap<usize, BTreeMap<usize, u32>> = BTreeMap::new();
    for c in &counts {
        if c.count == 0 {
            continue;
        }
        let slot = words.entry(c.doc_id).or_default().entry(c.word_id).or_insert(0);
        *slot = slot
            .checked_add(c.count)
            .ok_or_else(|| Error::Parse(format!("count overflow in document {}", c.doc_id)))?;
    }
    let mut ids = std::collections::BTreeSet::new();
    let mut documents = Vec::with_capacity(labels.len());
    for l in &labels {
        if !ids.insert(l.doc_id) {
            return Err(Error::Parse(format!("document {} labelled twice", l.doc_id)));
        }
        documents.push(Document {
            id: l.doc_id,
            words: words.remove(&l.doc_id).unwrap_or_default().into_iter().collect(),
            class: l.class,
        });
    }
    if let Some(id) = words.keys().next() {
        return Err(Error::Parse(format!("counts for unlabelled document {id}")));
    }
    let max_word = documents
        .iter()
        .flat_map(|d| d.words.iter().map(|&(w, _)| w + 1))
        .max()
        .unwrap_or(0);
    Corpus::new(vocab_size.unwrap_or(max_word.max(1)), documents, hierarchy)
}

pub fn write_json<T: Serialize, W: Write>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(create(path)?, value)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?)
}

pub fn save_model(path: &Path, model: &HierModel) -> Result<()> {
    save_json(path, model)
}

pub fn load_model(path: &Path) -> Result<HierModel> {
    load_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_reads_sparse_cells_and_reports_mass() {
        let csv = "x,y,z,p\n0,0,0,1\n1,1,0,3\n";
        let (j, mass) = read_joint(csv.as_bytes()).unwrap();
        assert_eq!(j.dims(), (2, 2, 1));
        assert_eq!(mass, 4.0);
        assert_eq!(j.p(1, 1, 0), 0.75);
        assert_eq!(j.p(0, 1, 0), 0.0);
    }

    #[test]
    fn joint_rejects_bad_input() {
        for bad in [
            "a,b,c,d\n0,0,0,1\n",
            "x,y,z,p\n0,0,0,abc\n",
            "x,y,z,p\n0,0,0,-1\n0,1,0,2\n",
            "x,y,z,p\n0,0,0,1\n0,0,0,1\n",
            "x,y,z,p\n",
            "x,y,z,p\n0,0,0,0\n",
        ] {
            assert!(read_joint(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn joint_round_trips_exactly() {
        let j = JointXYZ::from_fn((3, 2, 2), |x, y, z| 1.0 / (1 + x + 2 * y + 3 * z) as f64).unwrap();
        let mut buf = Vec::new();
        write_joint(&mut buf, &j).unwrap();
        let (back, mass) = read_joint(buf.as_slice()).unwrap();
        assert_eq!(back, j);
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn region_and_hull_round_trip() {
        let pts = vec![RegionPoint {
            lambda: 0.7,
            rate: 0.1 + 0.2,
            relevance: 1.0 / 3.0,
            f_value: -0.0,
            iterations: 12,
            converged: false,
        }];
        let mut buf = Vec::new();
        write_region(&mut buf, &pts).unwrap();
        assert!(buf.starts_with(b"lambda,rate,relevance,f,iterations,converged\n"));
        assert_eq!(read_region(buf.as_slice()).unwrap(), pts);
        let hull = vec![(0.0, 0.0), (0.5, 0.25)];
        let mut buf = Vec::new();
        write_hull(&mut buf, &hull).unwrap();
        assert_eq!(read_hull(buf.as_slice()).unwrap(), hull);
    }
}
