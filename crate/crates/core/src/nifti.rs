//! NIfTI-1 single-file (`.nii`, `.nii.gz`) reading and writing.
//!
//! The reader accepts either byte order, the datatypes uint8, int16, int32,
//! float32 and float64, and applies `scl_slope`/`scl_inter` when the slope is
//! non-zero. The writer is canonical: little-endian, float32 for scalar
//! images and int16 for label maps, sform only, voxel data at offset 352.

use std::fs::File;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Vector3};
use ndarray::Array4;

use crate::affine::AffineMatrix;
use crate::error::{Error, Result};
use crate::image::{Image, ImageKind, VoxelData};

pub const HEADER_SIZE: usize = 348;
pub const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";
pub const MAGIC_TWO_FILE: &[u8; 4] = b"ni1\0";
/// Header plus the 4-byte extension flag.
pub const CANONICAL_VOX_OFFSET: usize = 352;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(i16)]
pub enum Datatype {
    Uint8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => Datatype::Uint8,
            4 => Datatype::Int16,
            8 => Datatype::Int32,
            16 => Datatype::Float32,
            64 => Datatype::Float64,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn code(self) -> i16 {
        self as i16
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern_b: f32,
    pub quatern_c: f32,
    pub quatern_d: f32,
    pub qoffset_x: f32,
    pub qoffset_y: f32,
    pub qoffset_z: f32,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            datatype: Datatype::Float32.code(),
            bitpix: 32,
            pixdim: [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vox_offset: CANONICAL_VOX_OFFSET as f32,
            scl_slope: 0.0,
            scl_inter: 0.0,
            xyzt_units: 0,
            qform_code: 0,
            sform_code: 0,
            quatern_b: 0.0,
            quatern_c: 0.0,
            quatern_d: 0.0,
            qoffset_x: 0.0,
            qoffset_y: 0.0,
            qoffset_z: 0.0,
            srow_x: [0.0; 4],
            srow_y: [0.0; 4],
            srow_z: [0.0; 4],
            magic: *MAGIC_SINGLE_FILE,
        }
    }
}

fn parse_fields<B: ByteOrder>(b: &[u8]) -> NiftiHeader {
    let i16_at = |o: usize| B::read_i16(&b[o..o + 2]);
    let f32_at = |o: usize| B::read_f32(&b[o..o + 4]);
    let f32x4 = |o: usize| [f32_at(o), f32_at(o + 4), f32_at(o + 8), f32_at(o + 12)];
    let mut dim = [0i16; 8];
    let mut pixdim = [0f32; 8];
    for i in 0..8 {
        dim[i] = i16_at(40 + 2 * i);
        pixdim[i] = f32_at(76 + 4 * i);
    }
    NiftiHeader {
        sizeof_hdr: B::read_i32(&b[0..4]),
        dim,
        datatype: i16_at(70),
        bitpix: i16_at(72),
        pixdim,
        vox_offset: f32_at(108),
        scl_slope: f32_at(112),
        scl_inter: f32_at(116),
        xyzt_units: b[123],
        qform_code: i16_at(252),
        sform_code: i16_at(254),
        quatern_b: f32_at(256),
        quatern_c: f32_at(260),
        quatern_d: f32_at(264),
        qoffset_x: f32_at(268),
        qoffset_y: f32_at(272),
        qoffset_z: f32_at(276),
        srow_x: f32x4(280),
        srow_y: f32x4(296),
        srow_z: f32x4(312),
        magic: [b[344], b[345], b[346], b[347]],
    }
}

impl NiftiHeader {
    /// Parses a 348-byte header, detecting the byte order from `sizeof_hdr`.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Endianness)> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::TruncatedFile {
                expected: HEADER_SIZE,
                found: bytes.len(),
            });
        }
        let (header, endian) = if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            (parse_fields::<LittleEndian>(bytes), Endianness::Little)
        } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            (parse_fields::<BigEndian>(bytes), Endianness::Big)
        } else {
            return Err(Error::InvalidHeader(format!(
                "sizeof_hdr is {}",
                LittleEndian::read_i32(&bytes[0..4])
            )));
        };
        if &header.magic == MAGIC_TWO_FILE {
            return Err(Error::TwoFileNifti);
        }
        if &header.magic != MAGIC_SINGLE_FILE {
            return Err(Error::BadMagic(header.magic));
        }
        Ok((header, endian))
    }

    /// Canonical little-endian encoding; fields not modelled are zero.
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        type B = LittleEndian;
        let mut b = [0u8; HEADER_SIZE];
        B::write_i32(&mut b[0..4], self.sizeof_hdr);
        b[38] = b'r';
        for i in 0..8 {
            B::write_i16(&mut b[40 + 2 * i..42 + 2 * i], self.dim[i]);
            B::write_f32(&mut b[76 + 4 * i..80 + 4 * i], self.pixdim[i]);
        }
        B::write_i16(&mut b[70..72], self.datatype);
        B::write_i16(&mut b[72..74], self.bitpix);
        B::write_f32(&mut b[108..112], self.vox_offset);
        B::write_f32(&mut b[112..116], self.scl_slope);
        B::write_f32(&mut b[116..120], self.scl_inter);
        b[123] = self.xyzt_units;
        B::write_i16(&mut b[252..254], self.qform_code);
        B::write_i16(&mut b[254..256], self.sform_code);
        let floats = [
            (256, self.quatern_b),
            (260, self.quatern_c),
            (264, self.quatern_d),
            (268, self.qoffset_x),
            (272, self.qoffset_y),
            (276, self.qoffset_z),
        ];
        for (o, v) in floats {
            B::write_f32(&mut b[o..o + 4], v);
        }
        for (row, base) in [(&self.srow_x, 280), (&self.srow_y, 296), (&self.srow_z, 312)] {
            for (i, v) in row.iter().enumerate() {
                B::write_f32(&mut b[base + 4 * i..base + 4 * i + 4], *v);
            }
        }
        b[344..348].copy_from_slice(&self.magic);
        b
    }

    /// `(C, X, Y, Z)` with the fourth NIfTI dimension mapped to channels.
    pub fn shape4(&self) -> Result<[usize; 4]> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::InvalidHeader(format!("dim[0] = {ndim}")));
        }
        if ndim > 4 {
            return Err(Error::UnsupportedDimensionality(ndim));
        }
        let mut sizes = [1usize; 4];
        for i in 0..ndim as usize {
            let d = self.dim[i + 1];
            if d < 1 {
                return Err(Error::InvalidHeader(format!("dim[{}] = {d}", i + 1)));
            }
            sizes[i] = d as usize;
        }
        Ok([sizes[3], sizes[0], sizes[1], sizes[2]])
    }

    pub fn data_type(&self) -> Result<Datatype> {
        Datatype::from_code(self.datatype)
    }
}

/// Voxel-to-world affine from header fields: sform when `sform_code > 0`,
/// else the qform quaternion when `qform_code > 0`, else `diag(pixdim)`.
pub fn affine_from_header(h: &NiftiHeader) -> Result<AffineMatrix> {
    let f = |v: f32| v as f64;
    if h.sform_code > 0 {
        return AffineMatrix::from_rows([
            h.srow_x.map(f),
            h.srow_y.map(f),
            h.srow_z.map(f),
            [0.0, 0.0, 0.0, 1.0],
        ]);
    }
    let (dx, dy, dz) = (f(h.pixdim[1]), f(h.pixdim[2]), f(h.pixdim[3]));
    if h.qform_code > 0 {
        let (b, c, d) = (f(h.quatern_b), f(h.quatern_c), f(h.quatern_d));
        let sum = b * b + c * c + d * d;
        if sum > 1.0 + 1e-6 {
            return Err(Error::InvalidQuaternion(sum));
        }
        let a = (1.0 - sum).max(0.0).sqrt();
        let r = Matrix3::new(
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        );
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = Matrix3::from_diagonal(&Vector3::new(dx, dy, qfac * dz));
        let offset = Vector3::new(f(h.qoffset_x), f(h.qoffset_y), f(h.qoffset_z));
        return AffineMatrix::from_parts(r * scale, offset);
    }
    AffineMatrix::diagonal(dx, dy, dz)
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let wrap = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut raw)).map_err(wrap)?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(Cursor::new(raw)).read_to_end(&mut out).map_err(wrap)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads only the header (decompressing just enough of a gzipped file).
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let path = path.as_ref();
    let wrap = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::open(path).map_err(wrap)?;
    let mut prefix = [0u8; 2];
    let n = file.read(&mut prefix).map_err(wrap)?;
    let file = File::open(path).map_err(wrap)?;
    let mut reader: Box<dyn Read> = if n == 2 && prefix == GZIP_MAGIC {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut buf = Vec::with_capacity(HEADER_SIZE);
    reader
        .by_ref()
        .take(HEADER_SIZE as u64)
        .read_to_end(&mut buf)
        .map_err(wrap)?;
    Ok(NiftiHeader::from_bytes(&buf)?.0)
}

/// Parses a complete NIfTI file held in memory (optionally gzipped).
pub fn decode(bytes: &[u8], kind: ImageKind) -> Result<Image> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out)?;
        return decode_raw(&out, kind);
    }
    decode_raw(bytes, kind)
}

fn decode_raw(bytes: &[u8], kind: ImageKind) -> Result<Image> {
    let (header, endian) = NiftiHeader::from_bytes(bytes)?;
    let shape = header.shape4()?;
    let datatype = header.data_type()?;
    let affine = affine_from_header(&header)?;
    let offset = header.vox_offset as usize;
    if offset < HEADER_SIZE {
        return Err(Error::InvalidHeader(format!("vox_offset {}", header.vox_offset)));
    }
    let count: usize = shape.iter().product();
    let expected = offset + count * datatype.bytes();
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let raw = &bytes[offset..expected];
    let values = match endian {
        Endianness::Little => decode_values::<LittleEndian>(raw, datatype, count),
        Endianness::Big => decode_values::<BigEndian>(raw, datatype, count),
    };
    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    let scaled = slope != 0.0 && slope.is_finite();

    let [c, x, y, z] = shape;
    let mut out = Array4::<f64>::zeros((c, x, y, z));
    // File order is x fastest, then y, z, and the fourth dimension.
    let mut it = values.into_iter();
    for ci in 0..c {
        for zi in 0..z {
            for yi in 0..y {
                for xi in 0..x {
                    let v = it.next().expect("value count checked above");
                    out[[ci, xi, yi, zi]] = if scaled { v * slope + inter } else { v };
                }
            }
        }
    }
    let data = match kind {
        ImageKind::Scalar => VoxelData::Scalar(out.mapv(|v| v as f32)),
        ImageKind::Label => {
            if let Some(bad) = out
                .iter()
                .find(|v| !(v.fract() == 0.0 && **v >= 0.0 && **v <= u16::MAX as f64))
            {
                return Err(Error::KindMismatch(*bad));
            }
            VoxelData::Label(out.mapv(|v| v as u16))
        }
    };
    Ok(Image::from_data(data, affine))
}

fn decode_values<B: ByteOrder>(raw: &[u8], datatype: Datatype, count: usize) -> Vec<f64> {
    let n = datatype.bytes();
    let chunks = raw.chunks_exact(n).take(count);
    match datatype {
        Datatype::Uint8 => chunks.map(|c| c[0] as f64).collect(),
        Datatype::Int16 => chunks.map(|c| B::read_i16(c) as f64).collect(),
        Datatype::Int32 => chunks.map(|c| B::read_i32(c) as f64).collect(),
        Datatype::Float32 => chunks.map(|c| B::read_f32(c) as f64).collect(),
        Datatype::Float64 => chunks.map(B::read_f64).collect(),
    }
}

/// Reads a `.nii` or `.nii.gz` file into a loaded [`Image`].
pub fn read_image(path: impl AsRef<Path>, kind: ImageKind) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let mut image = decode(&bytes, kind)?;
    image = Image::with_path(image, path);
    Ok(image)
}

/// Intensity summary computed while streaming the voxel data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeStats {
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Header plus min, max and mean of the scaled voxel values, read in chunks
/// so the volume is never held in memory.
pub fn scan_statistics(path: impl AsRef<Path>) -> Result<(NiftiHeader, VolumeStats)> {
    let path = path.as_ref();
    let wrap = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::open(path).map_err(wrap)?;
    let mut prefix = [0u8; 2];
    let n = file.read(&mut prefix).map_err(wrap)?;
    let file = std::io::BufReader::new(File::open(path).map_err(wrap)?);
    let mut reader: Box<dyn Read> = if n == 2 && prefix == GZIP_MAGIC {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut head = Vec::with_capacity(HEADER_SIZE);
    reader.by_ref().take(HEADER_SIZE as u64).read_to_end(&mut head).map_err(wrap)?;
    let (header, endian) = NiftiHeader::from_bytes(&head)?;
    let shape = header.shape4()?;
    let datatype = header.data_type()?;
    let offset = header.vox_offset as usize;
    if offset < HEADER_SIZE {
        return Err(Error::InvalidHeader(format!("vox_offset {}", header.vox_offset)));
    }
    std::io::copy(&mut reader.by_ref().take((offset - HEADER_SIZE) as u64), &mut std::io::sink()).map_err(wrap)?;

    let count = shape.iter().product::<usize>() as u64;
    let size = datatype.bytes();
    let total = count * size as u64;
    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    let scaled = slope != 0.0 && slope.is_finite();
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut buf = vec![0u8; (1 << 20) / size * size];
    let mut done = 0u64;
    while done < total {
        let want = buf.len().min((total - done) as usize);
        let chunk = &mut buf[..want];
        reader.read_exact(chunk).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::TruncatedFile {
                    expected: offset + total as usize,
                    found: offset + done as usize,
                }
            } else {
                wrap(e)
            }
        })?;
        let values = match endian {
            Endianness::Little => decode_values::<LittleEndian>(chunk, datatype, want / size),
            Endianness::Big => decode_values::<BigEndian>(chunk, datatype, want / size),
        };
        for v in values {
            let v = if scaled { v * slope + inter } else { v };
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        done += want as u64;
    }
    let mean = if count > 0 { sum / count as f64 } else { f64::NAN };
    Ok((header, VolumeStats { count, min, max, mean }))
}

/// Canonical header for an image (sform only, float32 or int16 data).
pub fn header_for(image: &Image) -> Result<NiftiHeader> {
    let [c, x, y, z] = image.shape()?;
    let dims = [x, y, z, c];
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidHeader(format!("dimension too large for NIfTI-1: {dims:?}")));
    }
    let datatype = match image.kind() {
        ImageKind::Scalar => Datatype::Float32,
        ImageKind::Label => Datatype::Int16,
    };
    let affine = image.affine();
    let spacing = affine.spacing();
    let m = affine.matrix();
    let row = |r: usize| [m[(r, 0)] as f32, m[(r, 1)] as f32, m[(r, 2)] as f32, m[(r, 3)] as f32];
    Ok(NiftiHeader {
        dim: [
            if c > 1 { 4 } else { 3 },
            x as i16,
            y as i16,
            z as i16,
            c as i16,
            1,
            1,
            1,
        ],
        datatype: datatype.code(),
        bitpix: (datatype.bytes() * 8) as i16,
        pixdim: [1.0, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 0.0, 0.0, 0.0, 0.0],
        xyzt_units: 2, // millimetres
        sform_code: 1,
        qform_code: 0,
        srow_x: row(0),
        srow_y: row(1),
        srow_z: row(2),
        ..NiftiHeader::default()
    })
}

/// Encodes an image as uncompressed canonical NIfTI-1 bytes.
pub fn encode(image: &Image) -> Result<Vec<u8>> {
    let header = header_for(image)?;
    let data = image.data()?;
    let [c, x, y, z] = data.shape();
    let elem = header.data_type()?.bytes();
    let mut out = Vec::with_capacity(CANONICAL_VOX_OFFSET + c * x * y * z * elem);
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&[0u8; 4]); // no extensions
    match data {
        VoxelData::Scalar(a) => {
            let mut buf = [0u8; 4];
            for ci in 0..c {
                for zi in 0..z {
                    for yi in 0..y {
                        for xi in 0..x {
                            LittleEndian::write_f32(&mut buf, a[[ci, xi, yi, zi]]);
                            out.extend_from_slice(&buf);
                        }
                    }
                }
            }
        }
        VoxelData::Label(a) => {
            if let Some(&bad) = a.iter().find(|&&v| v > i16::MAX as u16) {
                return Err(Error::LabelRange(bad));
            }
            let mut buf = [0u8; 2];
            for ci in 0..c {
                for zi in 0..z {
                    for yi in 0..y {
                        for xi in 0..x {
                            LittleEndian::write_i16(&mut buf, a[[ci, xi, yi, zi]] as i16);
                            out.extend_from_slice(&buf);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Writes an image; a path ending in `.gz` is gzip-compressed.
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(image)?;
    let wrap = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::create(path).map_err(wrap)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(wrap)?;
        file.write_all(&enc.finish().map_err(wrap)?).map_err(wrap)?;
    } else {
        file.write_all(&bytes).map_err(wrap)?;
    }
    Ok(())
}
