//! `VPRD` descriptor files: precomputed whole-image descriptors for
//! techniques the harness does not compute itself.
//!
//! Layout, all integers little-endian, no padding:
//!
//! ```text
//! "VPRD" | version u16 = 1 | id_len u8 | technique_id
//!        | count u32 | dim u32
//!        | count x (name_len u16 | UTF-8 name)
//!        | count x dim f32, row-major
//! ```

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use crate::binio::{push_f32_row, LeReader};
use crate::error::{Error, Result};
use crate::types::DescriptorVector;

pub const DESCRIPTOR_MAGIC: [u8; 4] = *b"VPRD";
pub const DESCRIPTOR_VERSION: u16 = 1;
pub const MAX_TECHNIQUE_ID_LEN: usize = 64;

/// Serialized size of one descriptor: four bytes per element.
pub fn footprint_bytes(row: &DescriptorVector) -> usize {
    row.dim() * 4
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorFile {
    pub technique_id: String,
    pub names: Vec<String>,
    pub rows: Vec<DescriptorVector>,
}

impl DescriptorFile {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, DescriptorVector::dim)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Encodes the whole file in memory; nothing is returned unless every row
/// and name passes validation.
pub fn encode_descriptor_file(
    technique_id: &str,
    rows: &[DescriptorVector],
    names: &[String],
) -> Result<Vec<u8>> {
    if technique_id.len() > MAX_TECHNIQUE_ID_LEN {
        return Err(Error::InvalidDescriptor(format!(
            "technique id is {} bytes, limit {MAX_TECHNIQUE_ID_LEN}",
            technique_id.len()
        )));
    }
    if rows.len() != names.len() {
        return Err(Error::InvalidDescriptor(format!(
            "{} rows but {} names",
            rows.len(),
            names.len()
        )));
    }
    let dim = rows.first().map_or(0, DescriptorVector::dim);
    if dim == 0 {
        return Err(Error::InvalidDescriptor("no rows to write".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if name.len() > usize::from(u16::MAX) {
            return Err(Error::InvalidDescriptor(format!(
                "name too long: {} bytes",
                name.len()
            )));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidDescriptor(format!("duplicate name {name:?}")));
        }
    }
    let count =
        u32::try_from(rows.len()).map_err(|_| Error::InvalidDescriptor("too many rows".into()))?;
    let dim32 =
        u32::try_from(dim).map_err(|_| Error::InvalidDescriptor("dimension too large".into()))?;

    let mut out = Vec::with_capacity(16 + technique_id.len() + rows.len() * (dim * 4 + 16));
    out.extend_from_slice(&DESCRIPTOR_MAGIC);
    out.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    out.push(technique_id.len() as u8);
    out.extend_from_slice(technique_id.as_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    for name in names {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for (i, row) in rows.iter().enumerate() {
        push_f32_row(&mut out, i, row.values())?;
    }
    Ok(out)
}

/// Writes rows under the technique id the rows carry. The file is synced
/// to disk before returning.
pub fn write_descriptor_file(
    rows: &[DescriptorVector],
    names: &[String],
    path: &Path,
) -> Result<()> {
    let technique_id = rows.first().map(|r| r.technique_id()).unwrap_or_default();
    if rows.iter().any(|r| r.technique_id() != technique_id) {
        return Err(Error::InvalidDescriptor(
            "rows carry different technique ids".into(),
        ));
    }
    let bytes = encode_descriptor_file(technique_id, rows, names)?;
    let mut f =
        File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_descriptor_file(path: &Path) -> Result<DescriptorFile> {
    let len = fs::metadata(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?
        .len();
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut r = LeReader::new(BufReader::new(f));

    r.magic(DESCRIPTOR_MAGIC)?;
    let version = r.u16("version")?;
    if version != DESCRIPTOR_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let id_len = usize::from(r.u8("technique id length")?);
    if id_len > MAX_TECHNIQUE_ID_LEN {
        return Err(Error::MalformedFile(format!(
            "technique id length {id_len}"
        )));
    }
    let mut id = vec![0u8; id_len];
    r.exact(&mut id, "technique id")?;
    let technique_id = String::from_utf8(id)
        .map_err(|_| Error::MalformedFile("technique id is not UTF-8".into()))?;
    let count = r.u32("count")? as usize;
    let dim = r.u32("dim")? as usize;
    if dim == 0 && count > 0 {
        return Err(Error::MalformedFile("zero-dimension rows".into()));
    }

    // every manifest entry takes at least its two length bytes
    let remaining = len.saturating_sub(r.consumed());
    if (count as u64) * 2 > remaining {
        return Err(Error::TruncatedPayload(format!(
            "{count} names cannot fit in {remaining} bytes"
        )));
    }
    let mut names = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    for i in 0..count {
        let n = usize::from(r.u16("name length")?);
        let mut buf = vec![0u8; n];
        r.exact(&mut buf, "manifest")?;
        let name = String::from_utf8(buf)
            .map_err(|_| Error::MalformedFile(format!("name {i} is not UTF-8")))?;
        if !seen.insert(name.clone()) {
            return Err(Error::MalformedFile(format!("duplicate name {name:?}")));
        }
        names.push(name);
    }

    let expected = (count as u64) * (dim as u64) * 4;
    let remaining = len.saturating_sub(r.consumed());
    if remaining < expected {
        return Err(Error::TruncatedPayload(format!(
            "{remaining} payload bytes, expected {expected}"
        )));
    }
    if remaining > expected {
        return Err(Error::MalformedFile(format!(
            "{} trailing bytes after payload",
            remaining - expected
        )));
    }
    let rows = r
        .f32_rows(count, dim)?
        .into_iter()
        .map(|values| DescriptorVector::new(technique_id.clone(), values))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(DescriptorFile {
        technique_id,
        names,
        rows,
    })
}
