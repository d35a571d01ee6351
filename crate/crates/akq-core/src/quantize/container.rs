//! Versioned binary container for quantum spaces ("QSPACE01").
//!
//! Little-endian throughout, 8-byte magic, explicit version word. The toric
//! payload stores the generating geometry plus the section norms; the node
//! weight matrix is recomputed deterministically on load and checked against
//! the stored norms, so a stale or corrupted cache is detected instead of
//! silently reused. The spectral payload stores the eigensections in full
//! (the eigensolve is the expensive step worth caching).

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::polytope::DelzantPolytope;
use crate::geom::potential::SymplecticPotential;
use crate::quad::BoundaryMap;
use crate::quantize::spectral::SpectralQuantumSpace;
use crate::quantize::toric::ToricQuantumSpace;

pub const MAGIC: &[u8; 8] = b"QSPACE01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum QuantumSpaceRecord {
    Toric(ToricQuantumSpace),
    Spectral(SpectralQuantumSpace),
    Embedding(crate::embed::EmbeddingSnapshot),
}

#[derive(Serialize, Deserialize)]
struct ToricGeometryHeader {
    polytope: DelzantPolytope,
    poly: Vec<(u32, u32, f64)>,
    k: u32,
    order: usize,
    sin_squared: bool,
}

fn io_err(e: std::io::Error) -> Error {
    Error::ContainerError(format!("io: {e}"))
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

pub fn save(record: &QuantumSpaceRecord, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    write_u32(w, VERSION)?;
    match record {
        QuantumSpaceRecord::Toric(space) => {
            write_u32(w, 0)?;
            let header = ToricGeometryHeader {
                polytope: space.potential.polytope.clone(),
                poly: space
                    .potential
                    .poly
                    .iter()
                    .map(|(&(i, j), &c)| (i, j, c))
                    .collect(),
                k: space.k,
                order: space.quad.order,
                sin_squared: space.quad.map == BoundaryMap::SinSquared,
            };
            let blob = serde_json::to_vec(&header)
                .map_err(|e| Error::ContainerError(format!("geometry header: {e}")))?;
            write_u64(w, blob.len() as u64)?;
            w.write_all(&blob).map_err(io_err)?;
            write_u64(w, space.lattice.len() as u64)?;
            for lam in &space.lattice {
                w.write_all(&lam[0].to_le_bytes()).map_err(io_err)?;
                w.write_all(&lam[1].to_le_bytes()).map_err(io_err)?;
            }
            for v in &space.log_norms2 {
                write_f64(w, *v)?;
            }
        }
        QuantumSpaceRecord::Embedding(snap) => {
            write_u32(w, 2)?;
            let blob = serde_json::to_vec(snap)
                .map_err(|e| Error::ContainerError(format!("embedding snapshot: {e}")))?;
            write_u64(w, blob.len() as u64)?;
            w.write_all(&blob).map_err(io_err)?;
        }
        QuantumSpaceRecord::Spectral(space) => {
            write_u32(w, 1)?;
            write_u64(w, space.side as u64)?;
            write_u32(w, space.complex_dim as u32)?;
            write_u32(w, space.k)?;
            write_u64(w, space.dim() as u64)?;
            for v in &space.eigenvalues {
                write_f64(w, *v)?;
            }
            write_u64(w, space.sections.nrows() as u64)?;
            for v in space.sections.iter() {
                write_f64(w, v.re)?;
                write_f64(w, v.im)?;
            }
        }
    }
    Ok(())
}

pub fn load(r: &mut impl Read) -> Result<QuantumSpaceRecord> {
    let magic = read_exact::<8>(r)?;
    if &magic != MAGIC {
        return Err(Error::ContainerError(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::ContainerError(format!(
            "unsupported container version {version}"
        )));
    }
    match read_u32(r)? {
        0 => {
            let blob_len = read_u64(r)? as usize;
            let mut blob = vec![0u8; blob_len];
            r.read_exact(&mut blob).map_err(io_err)?;
            let header: ToricGeometryHeader = serde_json::from_slice(&blob)
                .map_err(|e| Error::ContainerError(format!("geometry header: {e}")))?;
            let count = read_u64(r)? as usize;
            let mut lattice = Vec::with_capacity(count);
            for _ in 0..count {
                let a = i64::from_le_bytes(read_exact::<8>(r)?);
                let b = i64::from_le_bytes(read_exact::<8>(r)?);
                lattice.push([a, b]);
            }
            let mut log_norms2 = Vec::with_capacity(count);
            for _ in 0..count {
                log_norms2.push(read_f64(r)?);
            }
            let poly = header
                .poly
                .iter()
                .map(|&(i, j, c)| ((i, j), c))
                .collect();
            let potential = SymplecticPotential::with_polynomial(header.polytope, poly);
            if !header.sin_squared {
                return Err(Error::ContainerError(
                    "toric payload must use the boundary-clustered rule".into(),
                ));
            }
            let rebuilt = ToricQuantumSpace::new(potential, header.k, header.order)?;
            if rebuilt.lattice != lattice {
                return Err(Error::ContainerError(
                    "cached lattice disagrees with the geometry header".into(),
                ));
            }
            for (a, b) in rebuilt.log_norms2.iter().zip(&log_norms2) {
                if (a - b).abs() > 1e-12 {
                    return Err(Error::ContainerError(format!(
                        "cached norms stale: {a} vs {b}"
                    )));
                }
            }
            Ok(QuantumSpaceRecord::Toric(rebuilt))
        }
        1 => {
            let side = read_u64(r)? as usize;
            let complex_dim = read_u32(r)? as usize;
            let k = read_u32(r)?;
            let dim = read_u64(r)? as usize;
            let mut eigenvalues = Vec::with_capacity(dim);
            for _ in 0..dim {
                eigenvalues.push(read_f64(r)?);
            }
            let sites = read_u64(r)? as usize;
            let mut sections = nalgebra::DMatrix::<Complex64>::zeros(sites, dim);
            for j in 0..dim {
                for i in 0..sites {
                    let re = read_f64(r)?;
                    let im = read_f64(r)?;
                    sections[(i, j)] = Complex64::new(re, im);
                }
            }
            Ok(QuantumSpaceRecord::Spectral(SpectralQuantumSpace {
                k,
                complex_dim,
                side,
                eigenvalues,
                sections,
            }))
        }
        2 => {
            let blob_len = read_u64(r)? as usize;
            let mut blob = vec![0u8; blob_len];
            r.read_exact(&mut blob).map_err(io_err)?;
            let snap: crate::embed::EmbeddingSnapshot = serde_json::from_slice(&blob)
                .map_err(|e| Error::ContainerError(format!("embedding snapshot: {e}")))?;
            Ok(QuantumSpaceRecord::Embedding(snap))
        }
        tag => Err(Error::ContainerError(format!("unknown backend tag {tag}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polytope::projective_line;

    #[test]
    fn toric_round_trip_reconstructs_the_space() {
        let pot = SymplecticPotential::guillemin(projective_line());
        let space = ToricQuantumSpace::new(pot, 6, 48).unwrap();
        let mut buf = Vec::new();
        save(&QuantumSpaceRecord::Toric(space.clone()), &mut buf).unwrap();
        let back = load(&mut buf.as_slice()).unwrap();
        match back {
            QuantumSpaceRecord::Toric(t) => {
                assert_eq!(t.lattice, space.lattice);
                assert_eq!(t.log_norms2, space.log_norms2);
            }
            _ => panic!("wrong backend tag"),
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let pot = SymplecticPotential::guillemin(projective_line());
        let space = ToricQuantumSpace::new(pot, 2, 32).unwrap();
        let mut buf = Vec::new();
        save(&QuantumSpaceRecord::Toric(space), &mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            load(&mut buf.as_slice()),
            Err(Error::ContainerError(_))
        ));
    }

    #[test]
    fn stale_norms_are_detected() {
        let pot = SymplecticPotential::guillemin(projective_line());
        let space = ToricQuantumSpace::new(pot, 3, 32).unwrap();
        let mut buf = Vec::new();
        save(&QuantumSpaceRecord::Toric(space), &mut buf).unwrap();
        // Flip a bit inside the stored norms (the tail of the file).
        let n = buf.len();
        buf[n - 4] ^= 0x40;
        assert!(matches!(
            load(&mut buf.as_slice()),
            Err(Error::ContainerError(_))
        ));
    }
}
