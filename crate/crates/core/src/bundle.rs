//! Binary cache of the per-time-step graphs so repeated experiments skip
//! CSV parsing. A JSON sidecar records SHA-256 checksums of the raw inputs
//! and of the bundle itself; ingesting unchanged inputs is a cache hit.

use crate::dense::Dense;
use crate::elliptic::{self, Label, TimeStepGraph};
use crate::error::{Error, Result};
use crate::sparse::SparseSym;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"AMLBUND1";

pub const BUNDLE_FILE: &str = "graphs.bundle";
pub const SIDECAR_FILE: &str = "graphs.bundle.meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub input_sha256: String,
    pub bundle_sha256: String,
    pub n_graphs: usize,
}

#[derive(Clone, Debug)]
pub struct IngestOutcome {
    pub bundle_path: PathBuf,
    pub meta: BundleMeta,
    pub cache_hit: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_files(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn label_code(label: Label) -> u8 {
    match label {
        Label::Unknown => 0,
        Label::Licit => 1,
        Label::Illicit => 2,
    }
}

fn label_from_code(code: u8) -> Result<Label> {
    match code {
        0 => Ok(Label::Unknown),
        1 => Ok(Label::Licit),
        2 => Ok(Label::Illicit),
        other => Err(Error::Bundle(format!("unknown label code {other}"))),
    }
}

/// Serializes graphs to little-endian binary. Labels come from
/// `full_labels`; masking is a per-run transform, not a dataset property.
pub fn encode(graphs: &[TimeStepGraph<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(graphs.len() as u32).to_le_bytes());
    for g in graphs {
        let n = g.n_nodes();
        out.extend_from_slice(&g.step.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(g.features.cols() as u64).to_le_bytes());
        for &id in &g.node_index {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for &label in &g.full_labels {
            out.push(label_code(label));
        }
        for &v in g.features.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let (row_ptr, col_idx, values) = g.adjacency_norm.csr();
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for &p in row_ptr {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &c in col_idx {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for &v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Bundle(format!(
                "truncated bundle: wanted {len} bytes at offset {}",
                self.pos
            )));
        };
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn usize_vec(&mut self, count: usize) -> Result<Vec<usize>> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<TimeStepGraph<f64>>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Bundle("bad magic; not a graph bundle".into()));
    }
    let n_graphs = cur.u32()? as usize;
    let mut graphs = Vec::with_capacity(n_graphs);
    for _ in 0..n_graphs {
        let step = cur.u32()?;
        let n = cur.u64()? as usize;
        let cols = cur.u64()? as usize;
        let mut node_index = Vec::with_capacity(n);
        for _ in 0..n {
            node_index.push(cur.u64()?);
        }
        let labels = cur
            .take(n)?
            .iter()
            .map(|&c| label_from_code(c))
            .collect::<Result<Vec<_>>>()?;
        let features = Dense::from_vec(n, cols, cur.f64_vec(n * cols)?);
        let nnz = cur.u64()? as usize;
        let row_ptr = cur.usize_vec(n + 1)?;
        let col_idx = cur.usize_vec(nnz)?;
        let values = cur.f64_vec(nnz)?;
        let adjacency_norm = SparseSym::from_csr(n, row_ptr, col_idx, values)
            .map_err(|e| Error::Bundle(format!("step {step}: {e}")))?;
        graphs.push(TimeStepGraph {
            step,
            adjacency_norm,
            features,
            labels: labels.clone(),
            full_labels: labels,
            node_index,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Bundle(format!(
            "{} trailing bytes after the last graph",
            bytes.len() - cur.pos
        )));
    }
    Ok(graphs)
}

pub fn write_bundle(graphs: &[TimeStepGraph<f64>], path: &Path) -> Result<String> {
    let bytes = encode(graphs);
    let digest = sha256_hex(&bytes);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(digest)
}

pub fn read_bundle(path: &Path) -> Result<Vec<TimeStepGraph<f64>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Parses the raw CSV triple into per-step graphs and caches them under
/// `out_dir`. When the sidecar shows the same input checksum and the cached
/// bundle is intact, nothing is rebuilt.
pub fn ingest(
    features_path: &Path,
    edges_path: &Path,
    classes_path: &Path,
    out_dir: &Path,
) -> Result<IngestOutcome> {
    let input_sha256 = hash_files(&[features_path, edges_path, classes_path])?;
    let bundle_path = out_dir.join(BUNDLE_FILE);
    let sidecar_path = out_dir.join(SIDECAR_FILE);

    if let Ok(text) = std::fs::read_to_string(&sidecar_path) {
        if let Ok(meta) = serde_json::from_str::<BundleMeta>(&text) {
            if meta.input_sha256 == input_sha256 {
                if let Ok(bytes) = std::fs::read(&bundle_path) {
                    if sha256_hex(&bytes) == meta.bundle_sha256 {
                        return Ok(IngestOutcome {
                            bundle_path,
                            meta,
                            cache_hit: true,
                        });
                    }
                }
            }
        }
    }

    let raw = elliptic::load_dataset::<f64>(features_path, edges_path, classes_path)?;
    let graphs = elliptic::build_timestep_graphs(&raw)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let bundle_sha256 = write_bundle(&graphs, &bundle_path)?;
    let meta = BundleMeta {
        input_sha256,
        bundle_sha256,
        n_graphs: graphs.len(),
    };
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Bundle(format!("serializing sidecar: {e}")))?;
    std::fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(IngestOutcome {
        bundle_path,
        meta,
        cache_hit: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn fixture(name: &str) -> (PathBuf, PathBuf, PathBuf) {
        let base = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("../../fixtures")
            .join(name);
        (
            base.join("elliptic_txs_features.csv"),
            base.join("elliptic_txs_edgelist.csv"),
            base.join("elliptic_txs_classes.csv"),
        )
    }

    fn mini_graphs() -> Vec<TimeStepGraph<f64>> {
        let (f, e, c) = fixture("elliptic-mini");
        let raw = elliptic::load_dataset::<f64>(&f, &e, &c).unwrap();
        elliptic::build_timestep_graphs(&raw).unwrap()
    }

    #[test]
    fn encode_decode_round_trip() {
        let graphs = mini_graphs();
        let bytes = encode(&graphs);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.len(), graphs.len());
        for (a, b) in back.iter().zip(&graphs) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.node_index, b.node_index);
            assert_eq!(a.full_labels, b.full_labels);
            assert_eq!(a.features.data(), b.features.data());
            assert_eq!(a.adjacency_norm, b.adjacency_norm);
        }
    }

    #[test]
    fn corrupted_bundles_are_rejected() {
        let graphs = mini_graphs();
        let bytes = encode(&graphs);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(decode(&wrong_magic).is_err());
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn ingest_then_cache_hit() {
        let dir = tempfile::tempdir().unwrap();
        let (f, e, c) = fixture("elliptic-mini");
        let first = ingest(&f, &e, &c, dir.path()).unwrap();
        assert!(!first.cache_hit);
        assert_eq!(first.meta.n_graphs, 2, "mini fixture spans two steps");

        let second = ingest(&f, &e, &c, dir.path()).unwrap();
        assert!(second.cache_hit);
        assert_eq!(second.meta, first.meta);

        let graphs = read_bundle(&first.bundle_path).unwrap();
        assert_eq!(graphs.len(), 2);
        assert_eq!(graphs[0].step, 1);
        assert_eq!(graphs[1].step, 2);
    }

    #[test]
    fn stale_bundle_is_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let (f, e, c) = fixture("elliptic-mini");
        let first = ingest(&f, &e, &c, dir.path()).unwrap();
        std::fs::write(&first.bundle_path, b"garbage").unwrap();
        let second = ingest(&f, &e, &c, dir.path()).unwrap();
        assert!(!second.cache_hit, "corrupted bundle must be rebuilt");
        assert_eq!(second.meta.bundle_sha256, first.meta.bundle_sha256);
        assert!(read_bundle(&first.bundle_path).is_ok());
    }

    #[test]
    fn missing_input_is_io_error_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        let (_, e, c) = fixture("elliptic-mini");
        let err = ingest(&missing, &e, &c, dir.path()).unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.contains("nope.csv"), "{path}"),
            other => panic!("expected io error, got {other}"),
        }
    }
}
