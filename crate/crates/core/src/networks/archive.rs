//! Binary weight archive.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ECWT" | version: u32 | count: u32 |
//!   count × ( name_len: u16 | name: UTF-8 | rank: u8 | dims: rank × u32 | values: f32 × Π dims )
//! ```
//!
//! Conv weights are rank 4, biases and spectral `u` vectors rank 1. Entries
//! are written in name order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::NetworkInstance;
use crate::error::{Error, Result};
use crate::tensor::{SpectralState, Tensor};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"ECWT";
pub const ARCHIVE_VERSION: u32 = 1;

const SPECTRAL_SUFFIX: &str = ".weight_u";

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl ArchiveEntry {
    fn from_tensor(name: &str, t: &Tensor) -> Self {
        let dims = if name.ends_with(".weight") {
            t.dims().to_vec()
        } else {
            vec![t.len()]
        };
        ArchiveEntry {
            name: name.to_string(),
            dims,
            data: t.data().to_vec(),
        }
    }

    fn into_tensor(self) -> Result<Tensor> {
        let dims = match self.dims.as_slice() {
            [n] => [*n, 1, 1, 1],
            [a, b, c, d] => [*a, *b, *c, *d],
            other => return Err(Error::Format(format!("tensor '{}' has unsupported rank {}", self.name, other.len()))),
        };
        Tensor::new(dims, self.data)
    }
}

pub fn write_archive(entries: &[ArchiveEntry], out: &mut impl Write) -> io::Result<()> {
    out.write_all(&ARCHIVE_MAGIC)?;
    out.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
    out.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        let name = e.name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "tensor name too long"))?;
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name)?;
        let rank = u8::try_from(e.dims.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "rank too large"))?;
        out.write_all(&[rank])?;
        for &d in &e.dims {
            let d = u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension too large"))?;
            out.write_all(&d.to_le_bytes())?;
        }
        for &v in &e.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated archive while reading {what}")),
        _ => Error::Format(format!("read failure while reading {what}: {e}")),
    })
}

fn read_u32(input: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_archive(input: &mut impl Read) -> Result<Vec<ArchiveEntry>> {
    let mut magic = [0u8; 4];
    read_exact(input, &mut magic, "magic")?;
    if magic != ARCHIVE_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"ECWT\"")));
    }
    let version = read_u32(input, "version")?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Format(format!("unsupported archive version {version}")));
    }
    let count = read_u32(input, "tensor count")?;
    let mut entries = Vec::with_capacity(count.min(4096) as usize);
    for i in 0..count {
        let mut len = [0u8; 2];
        read_exact(input, &mut len, "name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(input, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| Error::Format(format!("tensor {i} has a non-UTF-8 name")))?;
        let mut rank = [0u8; 1];
        read_exact(input, &mut rank, "rank")?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            dims.push(read_u32(input, "dims")? as usize);
        }
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("tensor '{name}' is too large")))?;
        let mut raw = vec![0u8; numel.checked_mul(4).ok_or_else(|| Error::Format(format!("tensor '{name}' is too large")))?];
        read_exact(input, &mut raw, &format!("values of '{name}'"))?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        entries.push(ArchiveEntry { name, dims, data });
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after the last tensor".into()));
    }
    Ok(entries)
}

fn network_entries(net: &NetworkInstance) -> Vec<ArchiveEntry> {
    let mut entries: Vec<ArchiveEntry> = net.params().iter().map(|(n, t)| ArchiveEntry::from_tensor(n, t)).collect();
    for (prefix, state) in net.spectral_states() {
        entries.push(ArchiveEntry {
            name: format!("{prefix}{SPECTRAL_SUFFIX}"),
            dims: vec![state.u().len()],
            data: state.u().to_vec(),
        });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    entries
}

pub fn save_weights(net: &NetworkInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_archive(&network_entries(net), &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn inspect_archive(path: impl AsRef<Path>) -> Result<Vec<ArchiveEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_archive(&mut BufReader::new(file))
}

/// Replaces every parameter and spectral state of `net` from `entries`.
///
/// Names and shapes must match the network exactly; on any mismatch the
/// network is left untouched.
pub fn load_entries(net: &mut NetworkInstance, entries: Vec<ArchiveEntry>) -> Result<()> {
    let expected = network_entries(net);
    let mut by_name: BTreeMap<String, ArchiveEntry> = BTreeMap::new();
    for e in entries {
        if by_name.contains_key(&e.name) {
            return Err(Error::WeightMismatch(format!("archive contains '{}' twice", e.name)));
        }
        by_name.insert(e.name.clone(), e);
    }
    let mut params = BTreeMap::new();
    let mut spectral = BTreeMap::new();
    for want in &expected {
        let got = by_name
            .remove(&want.name)
            .ok_or_else(|| Error::WeightMismatch(format!("archive is missing tensor '{}'", want.name)))?;
        if got.dims != want.dims {
            return Err(Error::WeightMismatch(format!(
                "tensor '{}' has shape {:?} in the archive but {:?} in {}",
                want.name,
                got.dims,
                want.dims,
                net.kind()
            )));
        }
        match want.name.strip_suffix(SPECTRAL_SUFFIX) {
            Some(prefix) => {
                let iters = net.spectral_state(prefix).map_or(1, |s| s.iterations_per_step);
                spectral.insert(prefix.to_string(), SpectralState::from_vec(got.data, iters)?);
            }
            None => {
                params.insert(want.name.clone(), got.into_tensor()?);
            }
        }
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(Error::WeightMismatch(format!("archive has unexpected tensor '{extra}' for {}", net.kind())));
    }
    net.replace_state(params, spectral);
    Ok(())
}

pub fn load_weights(net: &mut NetworkInstance, path: impl AsRef<Path>) -> Result<()> {
    let entries = inspect_archive(path)?;
    load_entries(net, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{build_discriminator, build_generator, DiscriminatorKind, GeneratorKind};

    fn archive_bytes(entries: &[ArchiveEntry]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_archive(entries, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let bytes = archive_bytes(&[ArchiveEntry {
            name: "a.bias".into(),
            dims: vec![2],
            data: vec![1.0, -2.5],
        }]);
        let mut expected = b"ECWT".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&6u16.to_le_bytes());
        expected.extend_from_slice(b"a.bias");
        expected.push(1);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn round_trip_gives_identical_forward() {
        let d = build_discriminator(DiscriminatorKind::Edge, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d1.ecwt");
        save_weights(&d, &path).unwrap();
        let mut fresh = build_discriminator(DiscriminatorKind::Edge, 99);
        load_weights(&mut fresh, &path).unwrap();
        let x = Tensor::from_fn([1, 2, 64, 64], |_, c, y, x| ((c + 2 * y + 3 * x) % 11) as f32 / 11.0);
        assert_eq!(d.forward(&x).unwrap().data(), fresh.forward(&x).unwrap().data());
        for name in d.parameter_names() {
            assert_eq!(d.param(name), fresh.param(name));
        }
    }

    #[test]
    fn missing_tensor_is_named() {
        let d = build_discriminator(DiscriminatorKind::Edge, 0);
        let mut entries = network_entries(&d);
        entries.retain(|e| e.name != "conv3.bias");
        let mut target = build_discriminator(DiscriminatorKind::Edge, 1);
        let err = load_entries(&mut target, entries).unwrap_err();
        assert!(matches!(err, Error::WeightMismatch(_)));
        assert!(err.to_string().contains("conv3.bias"), "{err}");
    }

    #[test]
    fn transposed_shape_is_rejected() {
        let d = build_discriminator(DiscriminatorKind::Edge, 0);
        let mut entries = network_entries(&d);
        let e = entries.iter_mut().find(|e| e.name == "conv2.weight").unwrap();
        e.dims.swap(0, 1);
        let mut target = build_discriminator(DiscriminatorKind::Edge, 1);
        let before = target.param("conv1.weight").cloned();
        let err = load_entries(&mut target, entries).unwrap_err();
        assert!(err.to_string().contains("conv2.weight"), "{err}");
        assert_eq!(target.param("conv1.weight").cloned(), before);
    }

    #[test]
    fn wrong_network_is_rejected() {
        let d1 = build_discriminator(DiscriminatorKind::Edge, 0);
        let mut d2 = build_discriminator(DiscriminatorKind::Inpaint, 0);
        assert!(matches!(load_entries(&mut d2, network_entries(&d1)), Err(Error::WeightMismatch(_))));
        let g2 = build_generator(GeneratorKind::Inpaint, 0);
        let mut g1 = build_generator(GeneratorKind::Edge, 0);
        assert!(load_entries(&mut g1, network_entries(&g2)).is_err());
    }

    #[test]
    fn truncation_is_a_format_error() {
        let d = build_discriminator(DiscriminatorKind::Edge, 0);
        let bytes = archive_bytes(&network_entries(&d));
        for cut in [2, 10, 40, bytes.len() - 1] {
            let err = read_archive(&mut &bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "cut {cut}: {err}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_archive(&mut bad.as_slice()), Err(Error::Format(_))));
    }
}
