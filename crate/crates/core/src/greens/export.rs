//! CSV/JSON export of dyadic blocks.

use std::path::Path;

use serde::ser::{SerializeSeq, Serializer};

use crate::error::Result;
use crate::greens::DyadicBlock;
use crate::linalg::Dyad;

/// Serializes a dyad as nested `[[[re, im]; 3]; 3]` rows.
pub fn ser_dyad<S: Serializer>(g: &Dyad, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(3))?;
    for i in 0..3 {
        let row: Vec<[f64; 2]> = (0..3).map(|j| [g[(i, j)].re, g[(i, j)].im]).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn dyad_json(g: &Dyad) -> serde_json::Value {
    ser_dyad(g, serde_json::value::Serializer).expect("dyad serializes")
}

/// Columns: `target, source, row, col, re, im`.
pub fn write_block_csv(block: &DyadicBlock, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["target", "source", "row", "col", "re", "im"])?;
    for t in 0..block.targets.len() {
        for s in 0..block.sources.len() {
            let g = block.get(t, s);
            for i in 0..3 {
                for j in 0..3 {
                    w.write_record(&[
                        t.to_string(),
                        s.to_string(),
                        i.to_string(),
                        j.to_string(),
                        format!("{:e}", g[(i, j)].re),
                        format!("{:e}", g[(i, j)].im),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Metadata sidecar: frequency, scene hash, self-term rule, solver details
/// and the point lists.
pub fn write_block_sidecar(block: &DyadicBlock, path: &Path) -> Result<()> {
    let pts = |v: &[crate::Vec3]| v.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>();
    let value = serde_json::json!({
        "meta": block.meta,
        "sources": pts(&block.sources),
        "targets": pts(&block.targets),
    });
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}
