//! Binary tensor container shared by weight files and tensor files.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic    8 bytes   "CGVQMWT1" (weights) or "CGVQMTV1" (tensors)
//! version  u32       1
//! count    u32       number of records
//! record*  name_len u16, name (UTF-8), ndim u8, dims u64 x ndim,
//!          payload f32 x product(dims), row-major
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::VideoTensor;

pub const WEIGHT_MAGIC: [u8; 8] = *b"CGVQMWT1";
pub const TENSOR_MAGIC: [u8; 8] = *b"CGVQMTV1";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    Weights,
    Tensors,
}

impl ContainerKind {
    pub fn magic(self) -> [u8; 8] {
        match self {
            ContainerKind::Weights => WEIGHT_MAGIC,
            ContainerKind::Tensors => TENSOR_MAGIC,
        }
    }
}

/// A named N-dimensional `f32` array.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::format(format!(
                "record `{name}`: {} values for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { name, dims, data })
    }

    pub fn from_tensor(name: impl Into<String>, tensor: &VideoTensor) -> Self {
        Self {
            name: name.into(),
            dims: tensor.shape().to_vec(),
            data: tensor.data().to_vec(),
        }
    }

    /// Interprets a 4-D record as a [`VideoTensor`].
    pub fn to_tensor(&self) -> Result<VideoTensor> {
        match self.dims.as_slice() {
            &[c, f, h, w] => VideoTensor::new([c, f, h, w], self.data.clone())
                .map_err(|e| Error::format(format!("record `{}`: {e}", self.name))),
            other => Err(Error::format(format!(
                "record `{}` has {} dimensions, expected 4",
                self.name,
                other.len()
            ))),
        }
    }

    pub fn into_tensor(self) -> Result<VideoTensor> {
        match self.dims.as_slice() {
            &[c, f, h, w] => VideoTensor::new([c, f, h, w], self.data)
                .map_err(|e| Error::format(format!("record `{}`: {e}", self.name))),
            other => Err(Error::format(format!(
                "record `{}` has {} dimensions, expected 4",
                self.name,
                other.len()
            ))),
        }
    }
}

fn check_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::format("empty record name"));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::format(format!("record name too long: {}...", &name[..32])));
        }
        if !seen.insert(name) {
            return Err(Error::format(format!("duplicate record `{name}`")));
        }
    }
    Ok(())
}

pub fn write_container<W: Write>(mut w: W, kind: ContainerKind, records: &[NamedArray]) -> Result<()> {
    check_names(records.iter().map(|r| r.name.as_str()))?;
    w.write_all(&kind.magic())?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    let count = u32::try_from(records.len()).map_err(|_| Error::format("too many records"))?;
    w.write_all(&count.to_le_bytes())?;
    let mut buf = Vec::new();
    for r in records {
        if r.data.len() != r.dims.iter().product::<usize>() {
            return Err(Error::format(format!("record `{}` payload does not match dims", r.name)));
        }
        let ndim = u8::try_from(r.dims.len()).map_err(|_| Error::format("too many dimensions"))?;
        w.write_all(&(r.name.len() as u16).to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        w.write_all(&[ndim])?;
        for &d in &r.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        buf.clear();
        buf.reserve(r.data.len() * 4);
        for v in &r.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_container<R: Read>(mut r: R, kind: ContainerKind) -> Result<Vec<NamedArray>> {
    let mut magic = [0u8; 8];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if magic != kind.magic() {
        return Err(Error::format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(&kind.magic())
        )));
    }
    let mut word = [0u8; 4];
    read_exact_or(&mut r, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != CONTAINER_VERSION {
        return Err(Error::format(format!("unsupported container version {version}")));
    }
    read_exact_or(&mut r, &mut word, "record count")?;
    let count = u32::from_le_bytes(word) as usize;

    let mut records = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let mut len = [0u8; 2];
        read_exact_or(&mut r, &mut len, &format!("name length of record {i}"))?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut r, &mut name, &format!("name of record {i}"))?;
        let name = String::from_utf8(name).map_err(|_| Error::format(format!("record {i}: name is not UTF-8")))?;
        let mut ndim = [0u8; 1];
        read_exact_or(&mut r, &mut ndim, &format!("rank of `{name}`"))?;
        let mut dims = Vec::with_capacity(ndim[0] as usize);
        let mut total: usize = 1;
        for _ in 0..ndim[0] {
            let mut d = [0u8; 8];
            read_exact_or(&mut r, &mut d, &format!("dims of `{name}`"))?;
            let d = usize::try_from(u64::from_le_bytes(d)).map_err(|_| Error::format(format!("`{name}`: dimension overflow")))?;
            total = total
                .checked_mul(d)
                .filter(|t| *t <= (1 << 34))
                .ok_or_else(|| Error::format(format!("`{name}`: payload too large")))?;
            dims.push(d);
        }
        let mut payload = vec![0u8; total * 4];
        read_exact_or(&mut r, &mut payload, &format!("payload of `{name}`"))?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        records.push(NamedArray { name, dims, data });
    }
    check_names(records.iter().map(|r| r.name.as_str()))?;
    Ok(records)
}

pub fn write_container_file(path: impl AsRef<Path>, kind: ContainerKind, records: &[NamedArray]) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_container(BufWriter::new(file), kind, records)
}

pub fn read_container_file(path: impl AsRef<Path>, kind: ContainerKind) -> Result<Vec<NamedArray>> {
    let file = File::open(path.as_ref())?;
    read_container(BufReader::new(file), kind)
}

/// Writes named 4-D tensors as a tensor container.
pub fn write_tensors(path: impl AsRef<Path>, tensors: &[(&str, &VideoTensor)]) -> Result<()> {
    let records: Vec<NamedArray> = tensors.iter().map(|(n, t)| NamedArray::from_tensor(*n, t)).collect();
    write_container_file(path, ContainerKind::Tensors, &records)
}

/// Reads every record of a tensor container as a 4-D tensor.
pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, VideoTensor)>> {
    read_container_file(path, ContainerKind::Tensors)?
        .into_iter()
        .map(|r| {
            let name = r.name.clone();
            r.into_tensor().map(|t| (name, t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NamedArray> {
        vec![
            NamedArray::new("a", vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, f32::MIN_POSITIVE, 7.0]).unwrap(),
            NamedArray::new("scalar", vec![], vec![4.0]).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let mut bytes = Vec::new();
        write_container(&mut bytes, ContainerKind::Tensors, &sample()).unwrap();
        let back = read_container(bytes.as_slice(), ContainerKind::Tensors).unwrap();
        assert_eq!(back, sample());
        let mut again = Vec::new();
        write_container(&mut again, ContainerKind::Tensors, &back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn header_layout() {
        let mut bytes = Vec::new();
        write_container(&mut bytes, ContainerKind::Weights, &sample()[..1]).unwrap();
        assert_eq!(&bytes[..8], b"CGVQMWT1");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..18], &1u16.to_le_bytes());
        assert_eq!(bytes[18], b'a');
        assert_eq!(bytes[19], 2);
        assert_eq!(bytes.len(), 20 + 16 + 24);
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let mut bytes = Vec::new();
        write_container(&mut bytes, ContainerKind::Tensors, &sample()).unwrap();
        assert!(read_container(bytes.as_slice(), ContainerKind::Weights).is_err());
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let err = read_container(bytes.as_slice(), ContainerKind::Tensors).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
    }

    #[test]
    fn rejects_truncation() {
        let mut bytes = Vec::new();
        write_container(&mut bytes, ContainerKind::Tensors, &sample()).unwrap();
        bytes.truncate(bytes.len() - 3);
        let err = read_container(bytes.as_slice(), ContainerKind::Tensors).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn rejects_empty_and_duplicate_names() {
        let empty = vec![NamedArray::new("", vec![1], vec![0.0]).unwrap()];
        assert!(write_container(Vec::new(), ContainerKind::Tensors, &empty).is_err());
        let dup = vec![
            NamedArray::new("x", vec![1], vec![0.0]).unwrap(),
            NamedArray::new("x", vec![1], vec![1.0]).unwrap(),
        ];
        assert!(write_container(Vec::new(), ContainerKind::Tensors, &dup).is_err());
    }
}
