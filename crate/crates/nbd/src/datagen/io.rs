//! JSON-lines dataset files plus a sidecar manifest carrying the spec,
//! seed, record count, and a content hash of the data file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{LabeledPair, LabeledPairSet, LabeledPoint, LabeledPoints};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: serde_json::Value,
    pub seed: u64,
    pub records: usize,
    pub content_hash: String,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Write one JSON record per pair: `{"a": [...], "b": [...], "target": t}`.
pub fn write_pairs(path: &Path, set: &LabeledPairSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in &set.pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<LabeledPairSet> {
    let r = BufReader::new(File::open(path)?);
    let mut set: Option<LabeledPairSet> = None;
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: LabeledPair = serde_json::from_str(&line)?;
        set.get_or_insert_with(|| LabeledPairSet::new(p.a.len())).push(p);
    }
    let set = set.unwrap_or_default();
    set.validate()?;
    Ok(set)
}

/// Write one JSON record per point: `{"x": [...], "label": l}`.
pub fn write_points(path: &Path, data: &LabeledPoints) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in data.records() {
        serde_json::to_writer(&mut w, &p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points(path: &Path) -> Result<LabeledPoints> {
    let r = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<LabeledPoint>(&line)?);
    }
    LabeledPoints::from_records(&records)
}

/// Hash the data file and write `manifest.json` beside it.
pub fn write_manifest(
    data_path: &Path,
    manifest_path: &Path,
    spec: serde_json::Value,
    seed: u64,
    records: usize,
) -> Result<Manifest> {
    let manifest =
        Manifest { spec, seed, records, content_hash: sha256_hex(data_path)? };
    let mut w = BufWriter::new(File::create(manifest_path)?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[test]
    fn pair_roundtrip_is_bit_faithful() {
        let dir = std::env::temp_dir().join("nbd-io-test-pairs");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("pairs.jsonl");
        let mut set = LabeledPairSet::new(3);
        set.push(LabeledPair {
            a: vec![0.1, -2.5e-17, 3.0],
            b: vec![1.0 / 3.0, f64::MIN_POSITIVE, 9.9e300],
            target: std::f64::consts::PI,
        });
        write_pairs(&path, &set).unwrap();
        let back = read_pairs(&path).unwrap();
        assert_eq!(set, back);
        for (x, y) in set.pairs[0].b.iter().zip(&back.pairs[0].b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn manifest_hash_stable() {
        let dir = std::env::temp_dir().join("nbd-io-test-manifest");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("points.jsonl");
        let data = LabeledPoints {
            points: Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]),
            labels: vec![0, 1],
        };
        write_points(&path, &data).unwrap();
        let m1 = write_manifest(&path, &dir.join("manifest.json"), serde_json::json!({}), 7, 2)
            .unwrap();
        write_points(&path, &data).unwrap();
        let m2 = write_manifest(&path, &dir.join("manifest.json"), serde_json::json!({}), 7, 2)
            .unwrap();
        assert_eq!(m1.content_hash, m2.content_hash);
        let back = read_manifest(&dir.join("manifest.json")).unwrap();
        assert_eq!(back, m2);
        let points_back = read_points(&path).unwrap();
        assert_eq!(points_back, data);
    }
}
