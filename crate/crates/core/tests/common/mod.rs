//! Test fixtures. The NIfTI packer here writes header fields at their byte
//! offsets directly and shares no code with the library writer.
#![allow(dead_code)]

use ndarray::Array4;
use voxaug::{AffineMatrix, Image, Subject};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dt {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl Dt {
    pub const ALL: [Dt; 5] = [Dt::U8, Dt::I16, Dt::I32, Dt::F32, Dt::F64];

    pub fn code(self) -> i16 {
        match self {
            Dt::U8 => 2,
            Dt::I16 => 4,
            Dt::I32 => 8,
            Dt::F32 => 16,
            Dt::F64 => 64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dt::U8 => 1,
            Dt::I16 => 2,
            Dt::I32 | Dt::F32 => 4,
            Dt::F64 => 8,
        }
    }
}

pub struct Fixture {
    /// x, y, z, channels
    pub dims: [usize; 4],
    pub datatype: Dt,
    /// Stored values in file order (x fastest).
    pub values: Vec<f64>,
    /// First three rows of the sform.
    pub srow: [[f32; 4]; 3],
    pub slope: f32,
    pub inter: f32,
    pub big_endian: bool,
    pub vox_offset: usize,
}

impl Fixture {
    pub fn new(dims: [usize; 4], datatype: Dt, values: Vec<f64>) -> Self {
        Fixture {
            dims,
            datatype,
            values,
            srow: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            slope: 0.0,
            inter: 0.0,
            big_endian: false,
            vox_offset: 352,
        }
    }

    fn put<const N: usize>(buf: &mut [u8], at: usize, le: [u8; N], be: [u8; N], big: bool) {
        buf[at..at + N].copy_from_slice(if big { &be } else { &le });
    }

    pub fn header(&self) -> Vec<u8> {
        let big = self.big_endian;
        let mut h = vec![0u8; self.vox_offset];
        let i16_at = |h: &mut Vec<u8>, at: usize, v: i16| Self::put(h, at, v.to_le_bytes(), v.to_be_bytes(), big);
        let f32_at = |h: &mut Vec<u8>, at: usize, v: f32| Self::put(h, at, v.to_le_bytes(), v.to_be_bytes(), big);
        Self::put(&mut h, 0, 348i32.to_le_bytes(), 348i32.to_be_bytes(), big);
        let ndim = if self.dims[3] > 1 { 4 } else { 3 };
        i16_at(&mut h, 40, ndim);
        for (k, d) in self.dims.iter().enumerate() {
            i16_at(&mut h, 42 + 2 * k, *d as i16);
        }
        i16_at(&mut h, 70, self.datatype.code());
        i16_at(&mut h, 72, (self.datatype.size() * 8) as i16);
        for k in 0..8 {
            f32_at(&mut h, 76 + 4 * k, 1.0);
        }
        f32_at(&mut h, 108, self.vox_offset as f32);
        f32_at(&mut h, 112, self.slope);
        f32_at(&mut h, 116, self.inter);
        h[123] = 2;
        i16_at(&mut h, 254, 1);
        for (r, row) in self.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                f32_at(&mut h, 280 + 16 * r + 4 * c, *v);
            }
        }
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    pub fn bytes(&self) -> Vec<u8> {
        let mut out = self.header();
        let big = self.big_endian;
        for &v in &self.values {
            match self.datatype {
                Dt::U8 => out.push(v as u8),
                Dt::I16 => out.extend(if big { (v as i16).to_be_bytes() } else { (v as i16).to_le_bytes() }),
                Dt::I32 => out.extend(if big { (v as i32).to_be_bytes() } else { (v as i32).to_le_bytes() }),
                Dt::F32 => out.extend(if big { (v as f32).to_be_bytes() } else { (v as f32).to_le_bytes() }),
                Dt::F64 => out.extend(if big { v.to_be_bytes() } else { v.to_le_bytes() }),
            }
        }
        out
    }

    pub fn gz_bytes(&self) -> Vec<u8> {
        use std::io::Write;
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&self.bytes()).unwrap();
        enc.finish().unwrap()
    }

    /// Value at `[c, x, y, z]` after scaling, computed from the stored list.
    pub fn expected(&self, c: usize, x: usize, y: usize, z: usize) -> f64 {
        let [nx, ny, nz, _] = self.dims;
        let v = self.values[((c * nz + z) * ny + y) * nx + x];
        if self.slope != 0.0 {
            v * self.slope as f64 + self.inter as f64
        } else {
            v
        }
    }
}

/// Isotropic Gaussian blob centred in the volume.
pub fn blob(shape: [usize; 3], width: f64) -> Array4<f32> {
    let c = shape.map(|n| (n as f64 - 1.0) / 2.0);
    Array4::from_shape_fn((1, shape[0], shape[1], shape[2]), |(_, i, j, k)| {
        let d2 = (i as f64 - c[0]).powi(2) + (j as f64 - c[1]).powi(2) + (k as f64 - c[2]).powi(2);
        (100.0 * (-d2 / (2.0 * width * width)).exp()) as f32
    })
}

/// Deterministic pseudo-random voxels from a simple LCG, independent of the
/// library RNG.
pub fn lcg_volume(shape: [usize; 4], seed: u64) -> Array4<f32> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Array4::from_shape_simple_fn((shape[0], shape[1], shape[2], shape[3]), || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 40) as f32) / (1u64 << 24) as f32
    })
}

pub fn subject_with(name: &str, data: Array4<f32>) -> Subject {
    Subject::new().with_image(name, Image::scalar(data, AffineMatrix::identity()))
}

pub fn scalar(image: &Image) -> &Array4<f32> {
    match image.data().unwrap() {
        voxaug::VoxelData::Scalar(a) => a,
        _ => panic!("expected scalar data"),
    }
}

pub fn label(image: &Image) -> &Array4<u16> {
    match image.data().unwrap() {
        voxaug::VoxelData::Label(a) => a,
        _ => panic!("expected label data"),
    }
}
