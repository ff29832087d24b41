//! CKSF1 field snapshots.
//!
//! One ASCII header line `CKSF1 <field_name> <nx> <ny> <time>\n` followed by
//! `nx * ny` little-endian `f64` values, row-major with x fastest. For face
//! arrays `nx`/`ny` are the array extents (`nx + 1` for `ux`, `ny + 1` for
//! `uy`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{MacVelocity, ScalarField};

pub const MAGIC: &str = "CKSF1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: String,
    pub nx: usize,
    pub ny: usize,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let header = format!(
            "{MAGIC} {} {} {} {:?}\n",
            self.field, self.nx, self.ny, self.time
        );
        let mut out = Vec::with_capacity(header.len() + 8 * self.values.len());
        out.extend_from_slice(header.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::BadSnapshot {
            path: path.to_path_buf(),
            reason,
        };
        let eol = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header =
            std::str::from_utf8(&bytes[..eol]).map_err(|_| bad("header is not ASCII".into()))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 5 || parts[0] != MAGIC {
            return Err(bad(format!("malformed header `{header}`")));
        }
        let field = parts[1].to_string();
        if field.is_empty() {
            return Err(bad("empty field name".into()));
        }
        let nx: usize = parts[2]
            .parse()
            .map_err(|_| bad(format!("bad nx `{}`", parts[2])))?;
        let ny: usize = parts[3]
            .parse()
            .map_err(|_| bad(format!("bad ny `{}`", parts[3])))?;
        let time: f64 = parts[4]
            .parse()
            .map_err(|_| bad(format!("bad time `{}`", parts[4])))?;
        let body = &bytes[eol + 1..];
        let expected = nx
            .checked_mul(ny)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| bad("shape overflows".into()))?;
        if body.len() != expected {
            return Err(bad(format!(
                "expected {expected} payload bytes for {nx}x{ny}, found {}",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            field,
            nx,
            ny,
            time,
            values,
        })
    }
}

pub fn save(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&snap.encode())?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path)?;
    Snapshot::decode(&bytes, path)
}

pub fn save_scalar(path: &Path, name: &str, f: &ScalarField, time: f64) -> Result<()> {
    save(
        path,
        &Snapshot {
            field: name.into(),
            nx: f.grid().nx(),
            ny: f.grid().ny(),
            time,
            values: f.values.clone(),
        },
    )
}

/// Writes `ux` and `uy` as two snapshots `<stem>_ux.cksf`, `<stem>_uy.cksf`.
pub fn save_velocity(dir: &Path, stem: &str, u: &MacVelocity, time: f64) -> Result<()> {
    let g = u.grid();
    save(
        &dir.join(format!("{stem}_ux.cksf")),
        &Snapshot {
            field: "ux".into(),
            nx: g.nx() + 1,
            ny: g.ny(),
            time,
            values: u.fx.clone(),
        },
    )?;
    save(
        &dir.join(format!("{stem}_uy.cksf")),
        &Snapshot {
            field: "uy".into(),
            nx: g.nx(),
            ny: g.ny() + 1,
            time,
            values: u.fy.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let s = Snapshot {
            field: "n".into(),
            nx: 2,
            ny: 1,
            time: 0.5,
            values: vec![1.0, -2.0],
        };
        let b = s.encode();
        assert!(b.starts_with(b"CKSF1 n 2 1 0.5\n"));
        assert_eq!(b.len(), 16 + 16);
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_malformed() {
        let p = Path::new("x.cksf");
        assert!(Snapshot::decode(b"CKSF2 n 1 1 0\n", p).is_err());
        assert!(Snapshot::decode(b"CKSF1 n 1 1\n", p).is_err());
        assert!(Snapshot::decode(b"no newline", p).is_err());
        let mut truncated = Snapshot {
            field: "c".into(),
            nx: 3,
            ny: 3,
            time: 0.0,
            values: vec![0.0; 9],
        }
        .encode();
        truncated.pop();
        let err = Snapshot::decode(&truncated, p).unwrap_err();
        assert!(matches!(err, Error::BadSnapshot { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            nx in 1usize..6,
            ny in 1usize..6,
            time in any::<f64>().prop_filter("finite", |t| t.is_finite()),
            seed in proptest::collection::vec(any::<u64>(), 36),
        ) {
            let values: Vec<f64> = seed.iter().take(nx * ny).map(|b| f64::from_bits(*b)).collect();
            let s = Snapshot { field: "m".into(), nx, ny, time, values };
            let back = Snapshot::decode(&s.encode(), Path::new("mem")).unwrap();
            prop_assert_eq!(back.time.to_bits(), s.time.to_bits());
            prop_assert_eq!(back.nx, nx);
            prop_assert_eq!(back.ny, ny);
            let a: Vec<u64> = back.values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = s.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
