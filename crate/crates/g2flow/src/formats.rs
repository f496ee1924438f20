//! Binary field snapshots and CSV diagnostics.
//!
//! Snapshot layout: magic "G2F1", then u32 degree, u32 k, u32 N, k little-
//! endian f64 periods, k bytes of 1-based axis ids, then the coefficients as
//! little-endian f64, site-major with the lexicographic multi-index order
//! within each site.

use anyhow::{bail, Context, Result};
use g2core::basis::{axes_of, COUNTS, MASKS};
use g2core::flow::FlowDiagnostics;
use g2core::lattice::{FormField, LatticeSpec};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"G2F1";

pub fn write_field(path: &Path, field: &FormField) -> Result<()> {
    let spec = &field.spec;
    let mut buf: Vec<u8> = Vec::with_capacity(16 + field.data().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(field.degree() as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.rank() as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.resolution() as u32).to_le_bytes());
    for p in spec.periods() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf.extend_from_slice(spec.active_axes());
    for v in field.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn read_field(path: &Path) -> Result<FormField> {
    let mut file =
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{}: not a G2F1 snapshot", path.display());
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let degree = u32::from_le_bytes(word) as usize;
    file.read_exact(&mut word)?;
    let k = u32::from_le_bytes(word) as usize;
    file.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    if degree > 7 || k > 3 {
        bail!("{}: corrupt header", path.display());
    }
    let mut periods = vec![0.0f64; k];
    let mut dword = [0u8; 8];
    for p in periods.iter_mut() {
        file.read_exact(&mut dword)?;
        *p = f64::from_le_bytes(dword);
    }
    let mut axes = vec![0u8; k];
    file.read_exact(&mut axes)?;
    let spec = LatticeSpec::new(&axes, n, &periods)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let mut field = FormField::zeros(&spec, degree);
    let want = spec.sites() * COUNTS[degree];
    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    if rest.len() != want * 8 {
        bail!(
            "{}: expected {} coefficients, found {} bytes",
            path.display(),
            want,
            rest.len()
        );
    }
    for (i, chunk) in rest.chunks_exact(8).enumerate() {
        field.data_mut()[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(field)
}

/// Column labels of the 35 cohomology periods, `p_123` through `p_567`.
pub fn period_labels() -> Vec<String> {
    (0..35)
        .map(|slot| {
            let digits: String = axes_of(MASKS[3][slot])
                .map(|k| char::from(b'1' + k as u8))
                .collect();
            format!("p_{digits}")
        })
        .collect()
}

pub fn write_diagnostics_csv(path: &Path, rows: &[FlowDiagnostics]) -> Result<()> {
    let mut out = String::new();
    out.push_str("t,V,tau2_l2,dsigma_l2,dt,min_metric_eig");
    for label in period_labels() {
        out.push(',');
        out.push_str(&label);
    }
    out.push('\n');
    for d in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            d.t, d.hitchin_v, d.tau2_l2, d.dsigma_l2, d.dt_used, d.min_metric_eig
        ));
        for p in &d.cohomology_periods {
            out.push(',');
            out.push_str(&format!("{p}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Write a matrix as CSV, one row per line.
pub fn write_matrix_csv(w: &mut dyn Write, m: &g2core::linalg::DMat) -> Result<()> {
    for i in 0..m.rows {
        let row: Vec<String> = (0..m.cols).map(|j| format!("{}", m.get(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use g2core::lattice::random_band_limited;

    #[test]
    fn snapshot_round_trip() {
        let spec = LatticeSpec::unit(&[2, 5], 8).unwrap();
        let field = random_band_limited(&spec, 3, 2, 7);
        let dir = std::env::temp_dir().join("g2f1_roundtrip_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.g2f");
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.spec, field.spec);
        assert_eq!(back.degree(), 3);
        assert_eq!(back.data(), field.data());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn period_labels_are_lexicographic() {
        let labels = period_labels();
        assert_eq!(labels[0], "p_123");
        assert_eq!(labels[1], "p_124");
        assert_eq!(labels[34], "p_567");
        assert_eq!(labels.len(), 35);
    }
}
