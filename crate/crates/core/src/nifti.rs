//! Minimal NIfTI-1 reader and writer.
//!
//! Handles single-file (`n+1`) and header/image pair (`ni1`) volumes,
//! either byte order, and transparent gzip. Orientation fields are parsed
//! and kept on the header but play no part in metric computation.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, NiftiError};
use crate::volume::{Geometry, VoxelGrid};

pub const HEADER_SIZE: usize = 348;
pub const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
pub const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// Supported voxel encodings, by NIfTI datatype code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DataType {
    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(DataType::U8),
            4 => Some(DataType::I16),
            8 => Some(DataType::I32),
            16 => Some(DataType::F32),
            64 => Some(DataType::F64),
            _ => None,
        }
    }

    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
            DataType::F64 => 64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::I32 | DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }
}

/// The parsed subset of a NIfTI-1 header.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub endianness: Endianness,
    pub magic: [u8; 4],
    pub dim: [i16; 8],
    pub datatype: DataType,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
}

impl NiftiHeader {
    pub fn dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.pixdim[1].abs() as f64,
            self.pixdim[2].abs() as f64,
            self.pixdim[3].abs() as f64,
        ]
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            dims: self.dims(),
            spacing: self.spacing(),
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims().iter().product()
    }

    fn has_scaling(&self) -> bool {
        self.scl_slope != 0.0
            && self.scl_slope.is_finite()
            && self.scl_inter.is_finite()
            && (self.scl_slope != 1.0 || self.scl_inter != 0.0)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    endianness: Endianness,
}

impl Cursor<'_> {
    fn array<const N: usize>(&self, at: usize) -> [u8; N] {
        self.bytes[at..at + N].try_into().unwrap()
    }

    fn i16(&self, at: usize) -> i16 {
        match self.endianness {
            Endianness::Little => i16::from_le_bytes(self.array(at)),
            Endianness::Big => i16::from_be_bytes(self.array(at)),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endianness {
            Endianness::Little => f32::from_le_bytes(self.array(at)),
            Endianness::Big => f32::from_be_bytes(self.array(at)),
        }
    }
}

/// Parses the first [`HEADER_SIZE`] bytes of a volume.
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader, NiftiError> {
    if bytes.len() < HEADER_SIZE {
        return Err(NiftiError::Truncated {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    let raw: [u8; 4] = bytes[0..4].try_into().unwrap();
    let endianness = if i32::from_le_bytes(raw) == HEADER_SIZE as i32 {
        Endianness::Little
    } else if i32::from_be_bytes(raw) == HEADER_SIZE as i32 {
        Endianness::Big
    } else {
        return Err(NiftiError::NotNifti(i32::from_le_bytes(raw)));
    };
    let c = Cursor { bytes, endianness };

    let magic: [u8; 4] = c.array(344);
    if &magic != MAGIC_SINGLE && &magic != MAGIC_PAIR {
        return Err(NiftiError::BadMagic(magic));
    }

    let mut dim = [0i16; 8];
    for (n, d) in dim.iter_mut().enumerate() {
        *d = c.i16(40 + 2 * n);
    }
    match dim[0] {
        3 => {}
        4 if dim[4] == 1 => {}
        4 => return Err(NiftiError::MultiFrame(dim[4])),
        other => return Err(NiftiError::BadDimensionality(other)),
    }
    for axis in 1..=3 {
        if dim[axis] < 1 {
            return Err(NiftiError::InvalidDim { axis, value: dim[axis] });
        }
    }

    let code = c.i16(70);
    let datatype = DataType::from_code(code).ok_or(NiftiError::UnsupportedDatatype(code))?;

    let mut pixdim = [0f32; 8];
    for (n, p) in pixdim.iter_mut().enumerate() {
        *p = c.f32(76 + 4 * n);
    }
    let spacing = [pixdim[1], pixdim[2], pixdim[3]];
    if spacing.iter().any(|s| !s.is_finite() || *s == 0.0) {
        return Err(NiftiError::InvalidSpacing(spacing));
    }

    let vox_offset = c.f32(108);
    if !vox_offset.is_finite() || vox_offset < 0.0 {
        return Err(NiftiError::BadOffset(vox_offset));
    }

    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (n, v) in row.iter_mut().enumerate() {
            *v = c.f32(280 + 16 * r + 4 * n);
        }
    }

    Ok(NiftiHeader {
        endianness,
        magic,
        dim,
        datatype,
        bitpix: c.i16(72),
        pixdim,
        vox_offset,
        scl_slope: c.f32(112),
        scl_inter: c.f32(116),
        qform_code: c.i16(252),
        sform_code: c.i16(254),
        quatern: [c.f32(256), c.f32(260), c.f32(264)],
        qoffset: [c.f32(268), c.f32(272), c.f32(276)],
        srow,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NiftiError + '_ {
    move |source| NiftiError::Io {
        path: path.to_owned(),
        source,
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC
}

/// Reads a whole file, inflating it if it starts with the gzip magic.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, NiftiError> {
    let raw = std::fs::read(path).map_err(io_err(path))?;
    if !is_gzip(&raw) {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io_err(path))?;
    Ok(out)
}

/// Reads only the header, without decoding the payload.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader, NiftiError> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut head = Vec::with_capacity(HEADER_SIZE);
    (&mut file).take(2).read_to_end(&mut head).map_err(io_err(path))?;
    let reader: Box<dyn Read> = if is_gzip(&head) {
        let rest = std::io::Cursor::new(head).chain(file);
        Box::new(GzDecoder::new(rest))
    } else {
        Box::new(std::io::Cursor::new(head).chain(file))
    };
    let mut bytes = Vec::with_capacity(HEADER_SIZE);
    reader
        .take(HEADER_SIZE as u64)
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    parse_header(&bytes)
}

/// Image file paired with a `ni1` header: `x.hdr` -> `x.img`, `x.hdr.gz` -> `x.img.gz`
/// (falling back to an uncompressed `x.img`).
fn paired_image_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".hdr.gz") {
        let gz = PathBuf::from(format!("{stem}.img.gz"));
        if gz.exists() {
            return gz;
        }
        return PathBuf::from(format!("{stem}.img"));
    }
    path.with_extension("img")
}

fn decode(header: &NiftiHeader, payload: &[u8]) -> Vec<f64> {
    let n = header.voxel_count();
    let size = header.datatype.size();
    let little = header.endianness == Endianness::Little;
    let mut values = Vec::with_capacity(n);
    for chunk in payload[..n * size].chunks_exact(size) {
        let v = match header.datatype {
            DataType::U8 => chunk[0] as f64,
            DataType::I16 => {
                let b = chunk.try_into().unwrap();
                (if little {
                    i16::from_le_bytes(b)
                } else {
                    i16::from_be_bytes(b)
                }) as f64
            }
            DataType::I32 => {
                let b = chunk.try_into().unwrap();
                (if little {
                    i32::from_le_bytes(b)
                } else {
                    i32::from_be_bytes(b)
                }) as f64
            }
            DataType::F32 => {
                let b = chunk.try_into().unwrap();
                (if little {
                    f32::from_le_bytes(b)
                } else {
                    f32::from_be_bytes(b)
                }) as f64
            }
            DataType::F64 => {
                let b = chunk.try_into().unwrap();
                if little {
                    f64::from_le_bytes(b)
                } else {
                    f64::from_be_bytes(b)
                }
            }
        };
        values.push(v);
    }
    if header.has_scaling() {
        let (m, b) = (header.scl_slope as f64, header.scl_inter as f64);
        values.iter_mut().for_each(|v| *v = *v * m + b);
    }
    values
}

/// Loads a NIfTI-1 volume. The grid kind is inferred from the values.
pub fn load_nifti(path: impl AsRef<Path>) -> Result<VoxelGrid, Error> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    let header = parse_header(&bytes)?;
    let expected = header.voxel_count() * header.datatype.size();

    let values = if &header.magic == MAGIC_SINGLE {
        let offset = (header.vox_offset as usize).max(HEADER_SIZE);
        let available = bytes.len().saturating_sub(offset);
        if available < expected {
            return Err(NiftiError::Truncated {
                expected,
                found: available,
            }
            .into());
        }
        decode(&header, &bytes[offset..])
    } else {
        let img_path = paired_image_path(path);
        let img = read_maybe_gz(&img_path)?;
        let offset = header.vox_offset as usize;
        let available = img.len().saturating_sub(offset);
        if available < expected {
            return Err(NiftiError::Truncated {
                expected,
                found: available,
            }
            .into());
        }
        decode(&header, &img[offset..])
    };

    let geometry = Geometry::new(header.dims(), header.spacing())?;
    VoxelGrid::with_inferred_kind(geometry, values)
}

fn encode(values: &[f64], datatype: DataType, out: &mut Vec<u8>) -> Result<(), Error> {
    let bad = |v: f64| Error::InvalidGrid(format!("value {v} not representable as {datatype:?}"));
    for &v in values {
        match datatype {
            DataType::U8 => {
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(bad(v));
                }
                out.push(v as u8);
            }
            DataType::I16 => {
                if v.fract() != 0.0 || v < i16::MIN as f64 || v > i16::MAX as f64 {
                    return Err(bad(v));
                }
                out.extend_from_slice(&(v as i16).to_le_bytes());
            }
            DataType::I32 => {
                if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                    return Err(bad(v));
                }
                out.extend_from_slice(&(v as i32).to_le_bytes());
            }
            DataType::F32 => {
                let f = v as f32;
                if f as f64 != v {
                    return Err(bad(v));
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
            DataType::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    Ok(())
}

/// Serializes a grid as a little-endian single-file NIfTI-1 volume.
pub fn encode_nifti(grid: &VoxelGrid, datatype: DataType) -> Result<Vec<u8>, Error> {
    let mut h = vec![0u8; HEADER_SIZE + 4];
    let put_i16 = |h: &mut Vec<u8>, at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let [x, y, z] = grid.dims();
    for (n, d) in [3, x, y, z, 1, 1, 1, 1].into_iter().enumerate() {
        let d = i16::try_from(d).map_err(|_| Error::InvalidGrid(format!("dimension {d} exceeds NIfTI-1 range")))?;
        put_i16(&mut h, 40 + 2 * n, d);
    }
    put_i16(&mut h, 70, datatype.code());
    put_i16(&mut h, 72, (datatype.size() * 8) as i16);
    let sp = grid.spacing();
    for (n, p) in [1.0, sp[0], sp[1], sp[2], 1.0, 1.0, 1.0, 1.0].into_iter().enumerate() {
        put_f32(&mut h, 76 + 4 * n, p as f32);
    }
    put_f32(&mut h, 108, (HEADER_SIZE + 4) as f32);
    put_f32(&mut h, 112, 1.0);
    h[123] = 2; // xyzt_units: mm
    put_i16(&mut h, 254, 1);
    for r in 0..3 {
        put_f32(&mut h, 280 + 16 * r + 4 * r, sp[r] as f32);
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE);

    h.reserve(grid.values().len() * datatype.size());
    encode(grid.values(), datatype, &mut h)?;
    Ok(h)
}

/// Writes a grid to `path`; gzip-compressed when the name ends in `.gz`.
pub fn write_nifti(path: impl AsRef<Path>, grid: &VoxelGrid, datatype: DataType) -> Result<(), Error> {
    let path = path.as_ref();
    let bytes = encode_nifti(grid, datatype)?;
    let file = File::create(path).map_err(io_err(path))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(&bytes).and_then(|_| enc.finish().map(drop))
    } else {
        let mut file = file;
        file.write_all(&bytes)
    };
    res.map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::GridKind;

    fn minimal(dim0: i16, datatype: i16, payload: &[u8]) -> Vec<u8> {
        let mut h = vec![0u8; 352];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        for (n, d) in [dim0, 4, 4, 4, 1, 1, 1, 1].iter().enumerate() {
            h[40 + 2 * n..42 + 2 * n].copy_from_slice(&d.to_le_bytes());
        }
        h[70..72].copy_from_slice(&datatype.to_le_bytes());
        for (n, p) in [1.0f32, 1.0, 1.0, 3.0, 1.0, 0.0, 0.0, 0.0].iter().enumerate() {
            h[76 + 4 * n..80 + 4 * n].copy_from_slice(&p.to_le_bytes());
        }
        h[108..112].copy_from_slice(&352f32.to_le_bytes());
        h[344..348].copy_from_slice(MAGIC_SINGLE);
        h.extend_from_slice(payload);
        h
    }

    fn load_bytes(bytes: &[u8]) -> Result<VoxelGrid, Error> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.nii");
        std::fs::write(&p, bytes).unwrap();
        load_nifti(&p)
    }

    #[test]
    fn minimal_uint8_volume() {
        let mut payload = vec![0u8; 64];
        payload[5] = 1;
        let g = load_bytes(&minimal(3, 2, &payload)).unwrap();
        assert_eq!(g.dims(), [4, 4, 4]);
        assert_eq!(g.spacing(), [1.0, 1.0, 3.0]);
        assert_eq!(g.kind(), GridKind::Binary);
        assert_eq!(g.values()[5], 1.0);
    }

    #[test]
    fn single_frame_4d_accepted() {
        let g = load_bytes(&minimal(4, 2, &[0u8; 64])).unwrap();
        assert_eq!(g.dims(), [4, 4, 4]);
    }

    #[test]
    fn distinct_diagnostics() {
        let mut bad_magic = minimal(3, 2, &[0u8; 64]);
        bad_magic[344..348].copy_from_slice(b"abcd");
        assert!(matches!(
            load_bytes(&bad_magic),
            Err(Error::Nifti(NiftiError::BadMagic(_)))
        ));
        assert!(matches!(
            load_bytes(&minimal(3, 32, &[0u8; 64])),
            Err(Error::Nifti(NiftiError::UnsupportedDatatype(32)))
        ));
        assert!(matches!(
            load_bytes(&minimal(2, 2, &[0u8; 64])),
            Err(Error::Nifti(NiftiError::BadDimensionality(2)))
        ));
        assert!(matches!(
            load_bytes(&minimal(3, 2, &[0u8; 63])),
            Err(Error::Nifti(NiftiError::Truncated {
                expected: 64,
                found: 63
            }))
        ));
        assert!(matches!(
            load_bytes(&[0u8; 10]),
            Err(Error::Nifti(NiftiError::Truncated { .. }))
        ));
    }

    #[test]
    fn big_endian_header() {
        let mut h = vec![0u8; 352];
        h[0..4].copy_from_slice(&348i32.to_be_bytes());
        for (n, d) in [3i16, 2, 1, 1, 1, 1, 1, 1].iter().enumerate() {
            h[40 + 2 * n..42 + 2 * n].copy_from_slice(&d.to_be_bytes());
        }
        h[70..72].copy_from_slice(&4i16.to_be_bytes());
        for (n, p) in [1.0f32, 0.5, 2.0, 1.5, 0.0, 0.0, 0.0, 0.0].iter().enumerate() {
            h[76 + 4 * n..80 + 4 * n].copy_from_slice(&p.to_be_bytes());
        }
        h[108..112].copy_from_slice(&352f32.to_be_bytes());
        h[344..348].copy_from_slice(MAGIC_SINGLE);
        h.extend_from_slice(&(-7i16).to_be_bytes());
        h.extend_from_slice(&300i16.to_be_bytes());
        let g = load_bytes(&h).unwrap();
        assert_eq!(g.spacing(), [0.5, 2.0, 1.5]);
        assert_eq!(g.values(), &[-7.0, 300.0]);
    }

    #[test]
    fn gzip_is_transparent() {
        let geom = Geometry::new([3, 2, 2], [1.0, 1.0, 2.5]).unwrap();
        let values: Vec<f64> = (0..12).map(|v| v as f64 / 11.0).collect();
        let grid = VoxelGrid::with_inferred_kind(geom, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.nii.gz");
        write_nifti(&p, &grid, DataType::F64).unwrap();
        assert_eq!(&std::fs::read(&p).unwrap()[..2], &GZIP_MAGIC);
        let back = load_nifti(&p).unwrap();
        assert_eq!(back, grid);
        let h = read_header(&p).unwrap();
        assert_eq!(h.dims(), [3, 2, 2]);
        assert_eq!(h.datatype, DataType::F64);
    }

    #[test]
    fn header_image_pair() {
        let dir = tempfile::tempdir().unwrap();
        let mut h = minimal(3, 2, &[]);
        h.truncate(HEADER_SIZE);
        h[344..348].copy_from_slice(MAGIC_PAIR);
        h[108..112].copy_from_slice(&0f32.to_le_bytes());
        std::fs::write(dir.path().join("a.hdr"), &h).unwrap();
        let mut img = vec![0u8; 64];
        img[63] = 1;
        std::fs::write(dir.path().join("a.img"), &img).unwrap();
        let g = load_nifti(dir.path().join("a.hdr")).unwrap();
        assert_eq!(g.values()[63], 1.0);
    }

    #[test]
    fn scaling_applied() {
        let mut bytes = minimal(3, 2, &[255u8; 64]);
        bytes[112..116].copy_from_slice(&(1.0f32 / 255.0).to_le_bytes());
        let g = load_bytes(&bytes).unwrap();
        assert!((g.values()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn writer_rejects_unrepresentable_values() {
        let geom = Geometry::new([1, 1, 1], [1.0; 3]).unwrap();
        let grid = VoxelGrid::with_inferred_kind(geom, vec![0.5]).unwrap();
        assert!(encode_nifti(&grid, DataType::U8).is_err());
        assert!(encode_nifti(&grid, DataType::F32).is_ok());
    }
}
