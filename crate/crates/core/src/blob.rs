//! `TCUT` binary blobs: a little-endian header with a field table followed by
//! flat per-field arrays.
//!
//! ```text
//! magic "TCUT" | version u32 | count u32 | field_count u32
//! per field: name_len u16 | name utf8 | dtype u8 | components u32 | rows u32
//! per field, in table order: rows * components values
//! ```
//! dtype 0 is `f32`, 1 is `u32`, 2 is bit-packed booleans (LSB first, padded to
//! a whole byte).

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"TCUT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("truncated blob")]
    Truncated,
    #[error("unknown dtype {0}")]
    Dtype(u8),
    #[error("missing field `{0}`")]
    Missing(String),
    #[error("field `{0}` has the wrong type or shape")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    F32(Vec<f32>),
    U32(Vec<u32>),
    Bits(Vec<bool>),
}

impl FieldData {
    fn dtype(&self) -> u8 {
        match self {
            FieldData::F32(_) => 0,
            FieldData::U32(_) => 1,
            FieldData::Bits(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            FieldData::F32(v) => v.len(),
            FieldData::U32(v) => v.len(),
            FieldData::Bits(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub name: String,
    pub components: u32,
    pub data: FieldData,
}

impl Field {
    pub fn rows(&self) -> u32 {
        (self.data.len() / self.components.max(1) as usize) as u32
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Blob {
    pub count: u32,
    pub fields: Vec<Field>,
}

impl Blob {
    pub fn new(count: usize) -> Self {
        Self { count: count as u32, fields: Vec::new() }
    }

    pub fn push_f32(&mut self, name: &str, components: u32, data: Vec<f32>) -> &mut Self {
        self.fields.push(Field { name: name.into(), components, data: FieldData::F32(data) });
        self
    }

    pub fn push_u32(&mut self, name: &str, components: u32, data: Vec<u32>) -> &mut Self {
        self.fields.push(Field { name: name.into(), components, data: FieldData::U32(data) });
        self
    }

    pub fn push_bits(&mut self, name: &str, data: Vec<bool>) -> &mut Self {
        self.fields.push(Field { name: name.into(), components: 1, data: FieldData::Bits(data) });
        self
    }

    pub fn field(&self, name: &str) -> Result<&Field, BlobError> {
        self.fields.iter().find(|f| f.name == name).ok_or_else(|| BlobError::Missing(name.into()))
    }

    pub fn f32s(&self, name: &str) -> Result<&[f32], BlobError> {
        match &self.field(name)?.data {
            FieldData::F32(v) => Ok(v),
            _ => Err(BlobError::Shape(name.into())),
        }
    }

    pub fn u32s(&self, name: &str) -> Result<&[u32], BlobError> {
        match &self.field(name)?.data {
            FieldData::U32(v) => Ok(v),
            _ => Err(BlobError::Shape(name.into())),
        }
    }

    pub fn bits(&self, name: &str) -> Result<&[bool], BlobError> {
        match &self.field(name)?.data {
            FieldData::Bits(v) => Ok(v),
            _ => Err(BlobError::Shape(name.into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for f in &self.fields {
            out.extend_from_slice(&(f.name.len() as u16).to_le_bytes());
            out.extend_from_slice(f.name.as_bytes());
            out.push(f.data.dtype());
            out.extend_from_slice(&f.components.to_le_bytes());
            out.extend_from_slice(&f.rows().to_le_bytes());
        }
        for f in &self.fields {
            match &f.data {
                FieldData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                FieldData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                FieldData::Bits(v) => out.extend(pack_bits(v)),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BlobError> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(BlobError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(BlobError::Version(version));
        }
        let count = r.u32()?;
        let nfields = r.u32()? as usize;
        let mut table = Vec::with_capacity(nfields.min(1024));
        for _ in 0..nfields {
            let len = r.u16()? as usize;
            let name = String::from_utf8_lossy(r.take(len)?).into_owned();
            let dtype = r.take(1)?[0];
            let components = r.u32()?;
            let rows = r.u32()?;
            table.push((name, dtype, components, rows));
        }
        let mut fields = Vec::with_capacity(table.len());
        for (name, dtype, components, rows) in table {
            let n = components as usize * rows as usize;
            let data = match dtype {
                0 => FieldData::F32(r.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => FieldData::U32(r.take(4 * n)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => FieldData::Bits(unpack_bits(r.take(n.div_ceil(8))?, n)),
                d => return Err(BlobError::Dtype(d)),
            };
            fields.push(Field { name, components, data });
        }
        if r.pos != bytes.len() {
            return Err(BlobError::Truncated);
        }
        Ok(Self { count, fields })
    }

    pub fn write(&self, path: &Path) -> Result<(), BlobError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, BlobError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BlobError> {
        let end = self.pos.checked_add(n).ok_or(BlobError::Truncated)?;
        if end > self.buf.len() {
            return Err(BlobError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, BlobError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, BlobError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
