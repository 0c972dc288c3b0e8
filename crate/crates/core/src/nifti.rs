//! NIfTI-1 reading and writing.
//!
//! Single-file (`n+1`) and header/image pair (`ni1`) layouts are read in
//! either byte order, optionally gzip-compressed. Writing always produces a
//! little-endian single file, compressed when the path ends in `.gz`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Affine, BinaryMask, CtVolume, Grid, ProbabilityVolume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag.
const SINGLE_FILE_OFFSET: usize = 352;

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

/// On-disk voxel types understood by the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            64 => Ok(Datatype::Float64),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Datatype::Uint8 => "uint8",
            Datatype::Int16 => "int16",
            Datatype::Float32 => "float32",
            Datatype::Float64 => "float64",
        }
    }
}

/// The header fields the pipeline consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub affine: Affine,
    pub datatype: Datatype,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
    pub big_endian: bool,
    pub single_file: bool,
}

struct Fields<'a> {
    bytes: &'a [u8],
    big: bool,
}

impl Fields<'_> {
    fn i16(&self, at: usize) -> i16 {
        let b = &self.bytes[at..at + 2];
        if self.big {
            BigEndian::read_i16(b)
        } else {
            LittleEndian::read_i16(b)
        }
    }

    fn i32(&self, at: usize) -> i32 {
        let b = &self.bytes[at..at + 4];
        if self.big {
            BigEndian::read_i32(b)
        } else {
            LittleEndian::read_i32(b)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        let b = &self.bytes[at..at + 4];
        if self.big {
            BigEndian::read_f32(b)
        } else {
            LittleEndian::read_f32(b)
        }
    }
}

fn header_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::NiftiHeader {
        field,
        reason: reason.into(),
    }
}

/// Parse the 348-byte header at the start of `bytes`.
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(header_err(
            "sizeof_hdr",
            format!("file holds {} bytes, header needs {HEADER_SIZE}", bytes.len()),
        ));
    }
    let plausible = |big: bool| {
        let f = Fields { bytes, big };
        (1..=7).contains(&f.i16(40))
    };
    let big = if plausible(false) {
        false
    } else if plausible(true) {
        true
    } else {
        return Err(header_err("dim[0]", "not in 1..=7 in either byte order"));
    };
    let f = Fields { bytes, big };

    let sizeof_hdr = f.i32(0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(header_err("sizeof_hdr", format!("expected 348, found {sizeof_hdr}")));
    }
    let magic = &bytes[344..348];
    let single_file = if magic == MAGIC_SINGLE {
        true
    } else if magic == MAGIC_PAIR {
        false
    } else {
        return Err(header_err("magic", format!("unrecognised bytes {magic:?}")));
    };

    let rank = f.i16(40) as usize;
    let mut dims = [1usize; 3];
    for (a, d) in dims.iter_mut().enumerate().take(rank.min(3)) {
        let v = f.i16(42 + 2 * a);
        if v <= 0 {
            return Err(header_err("dim", format!("dim[{}] = {v} must be positive", a + 1)));
        }
        *d = v as usize;
    }
    for a in 3..rank {
        let v = f.i16(42 + 2 * a);
        if v > 1 {
            return Err(header_err(
                "dim",
                format!("dim[{}] = {v}: only single-frame 3D volumes are supported", a + 1),
            ));
        }
    }

    let datatype = Datatype::from_code(f.i16(70))?;
    let bitpix = f.i16(72);
    if bitpix != 0 && bitpix as usize != datatype.size() * 8 {
        return Err(header_err(
            "bitpix",
            format!("{bitpix} disagrees with datatype {}", datatype.name()),
        ));
    }

    let qfac = if f.f32(76) < 0.0 { -1.0 } else { 1.0 };
    let mut spacing = [0.0f64; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let v = f.f32(80 + 4 * a) as f64;
        if !(v.is_finite() && v != 0.0) {
            return Err(header_err("pixdim", format!("pixdim[{}] = {v}", a + 1)));
        }
        *s = v.abs();
    }

    let vox_offset = f.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= 0.0) {
        return Err(header_err("vox_offset", format!("{vox_offset}")));
    }
    let vox_offset = vox_offset as usize;
    if single_file && vox_offset < HEADER_SIZE {
        return Err(header_err("vox_offset", format!("{vox_offset} lies inside the header")));
    }

    let mut scl_slope = f.f32(112);
    let scl_inter = f.f32(116);
    if !scl_slope.is_finite() || scl_slope == 0.0 {
        scl_slope = 1.0;
    }
    if !scl_inter.is_finite() {
        return Err(header_err("scl_inter", "non-finite"));
    }

    let qform_code = f.i16(252);
    let sform_code = f.i16(254);
    let affine = if sform_code > 0 {
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().enumerate().take(3) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        m[3][3] = 1.0;
        m
    } else if qform_code > 0 {
        let q = [f.f32(256), f.f32(260), f.f32(264)].map(|v| v as f64);
        let offset = [f.f32(268), f.f32(272), f.f32(276)].map(|v| v as f64);
        quaternion_affine(q, offset, spacing, qfac)
    } else {
        let mut m = [[0.0; 4]; 4];
        for a in 0..3 {
            m[a][a] = spacing[a];
        }
        m[3][3] = 1.0;
        m
    };
    if affine.iter().flatten().any(|v| !v.is_finite()) {
        return Err(header_err("srow", "affine has non-finite entries"));
    }

    Ok(NiftiHeader {
        dims,
        spacing,
        affine,
        datatype,
        scl_slope,
        scl_inter,
        vox_offset,
        big_endian: big,
        single_file,
    })
}

fn quaternion_affine(q: [f64; 3], offset: [f64; 3], spacing: [f64; 3], qfac: f64) -> Affine {
    let [b, c, d] = q;
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let r = [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ];
    let scale = [spacing[0], spacing[1], spacing[2] * qfac];
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j] * scale[j];
        }
        m[i][3] = offset[i];
    }
    m[3][3] = 1.0;
    m
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn paired_image_path(header_path: &Path) -> PathBuf {
    let s = header_path.to_string_lossy();
    if let Some(stem) = s.strip_suffix(".hdr.gz") {
        PathBuf::from(format!("{stem}.img.gz"))
    } else if let Some(stem) = s.strip_suffix(".hdr") {
        PathBuf::from(format!("{stem}.img"))
    } else {
        header_path.with_extension("img")
    }
}

/// Decode the scaled voxel payload (`raw * slope + inter`) into f32.
fn decode_payload(header: &NiftiHeader, payload: &[u8]) -> Result<Vec<f32>> {
    let n: usize = header.dims.iter().product();
    let size = header.datatype.size();
    let expected = n * size;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let payload = &payload[..expected];
    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    let scale = |raw: f64| (raw * slope + inter) as f32;
    let big = header.big_endian;
    let values: Vec<f32> = match header.datatype {
        Datatype::Uint8 => payload.iter().map(|&b| scale(b as f64)).collect(),
        Datatype::Int16 => payload
            .chunks_exact(2)
            .map(|c| {
                let v = if big { BigEndian::read_i16(c) } else { LittleEndian::read_i16(c) };
                scale(v as f64)
            })
            .collect(),
        Datatype::Float32 => payload
            .chunks_exact(4)
            .map(|c| {
                let v = if big { BigEndian::read_f32(c) } else { LittleEndian::read_f32(c) };
                if slope == 1.0 && inter == 0.0 {
                    v
                } else {
                    scale(v as f64)
                }
            })
            .collect(),
        Datatype::Float64 => payload
            .chunks_exact(8)
            .map(|c| {
                let v = if big { BigEndian::read_f64(c) } else { LittleEndian::read_f64(c) };
                scale(v)
            })
            .collect(),
    };
    Ok(values)
}

/// Decode an in-memory single-file NIfTI image (already decompressed).
pub fn decode_nifti(bytes: &[u8]) -> Result<CtVolume> {
    let header = parse_header(bytes)?;
    if !header.single_file {
        return Err(header_err("magic", "`ni1` headers need their paired .img file"));
    }
    let payload = bytes.get(header.vox_offset..).unwrap_or(&[]);
    let voxels = decode_payload(&header, payload)?;
    let grid = Grid::with_affine(header.dims, header.spacing, header.affine)?;
    CtVolume::new(grid, voxels)
}

/// Read a NIfTI-1 volume as HU.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<CtVolume> {
    let path = path.as_ref();
    let bytes = read_file_bytes(path)?;
    let header = parse_header(&bytes)?;
    let voxels = if header.single_file {
        decode_payload(&header, bytes.get(header.vox_offset..).unwrap_or(&[]))?
    } else {
        let img = read_file_bytes(&paired_image_path(path))?;
        decode_payload(&header, img.get(header.vox_offset..).unwrap_or(&[]))?
    };
    let grid = Grid::with_affine(header.dims, header.spacing, header.affine)?;
    CtVolume::new(grid, voxels)
}

/// Read a mask: every nonzero voxel is inside.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let vol = read_nifti(path)?;
    let bits = vol.voxels().iter().map(|&v| v != 0.0).collect();
    BinaryMask::new(vol.grid().clone(), bits)
}

/// Read a probability map; values must already lie in `[0, 1]`.
pub fn read_probability(path: impl AsRef<Path>) -> Result<ProbabilityVolume> {
    let vol = read_nifti(path)?;
    let grid = vol.grid().clone();
    ProbabilityVolume::new(grid, vol.into_voxels())
}

/// Anything that can be written as a NIfTI volume.
pub trait NiftiPayload {
    fn grid(&self) -> &Grid;
    fn natural_datatype(&self) -> Datatype;
    fn value(&self, index: usize) -> f32;
}

impl NiftiPayload for CtVolume {
    fn grid(&self) -> &Grid {
        CtVolume::grid(self)
    }
    fn natural_datatype(&self) -> Datatype {
        Datatype::Float32
    }
    fn value(&self, index: usize) -> f32 {
        self.voxels()[index]
    }
}

impl NiftiPayload for ProbabilityVolume {
    fn grid(&self) -> &Grid {
        ProbabilityVolume::grid(self)
    }
    fn natural_datatype(&self) -> Datatype {
        Datatype::Float32
    }
    fn value(&self, index: usize) -> f32 {
        self.values()[index]
    }
}

impl NiftiPayload for BinaryMask {
    fn grid(&self) -> &Grid {
        BinaryMask::grid(self)
    }
    fn natural_datatype(&self) -> Datatype {
        Datatype::Uint8
    }
    fn value(&self, index: usize) -> f32 {
        if self.bits()[index] {
            1.0
        } else {
            0.0
        }
    }
}

/// Serialise to an uncompressed little-endian single-file image.
///
/// Integer datatypes are written with unit slope, so every voxel must be an
/// exactly representable integer.
pub fn encode_nifti<V: NiftiPayload + ?Sized>(vol: &V, dtype: Datatype) -> Result<Vec<u8>> {
    let grid = vol.grid();
    let n = grid.len();
    let mut h = vec![0u8; SINGLE_FILE_OFFSET];
    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';
    let dim: [i16; 8] = [
        3,
        dim_i16(grid.dims[0])?,
        dim_i16(grid.dims[1])?,
        dim_i16(grid.dims[2])?,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * i..42 + 2 * i], *d);
    }
    LittleEndian::write_i16(&mut h[70..72], dtype.code());
    LittleEndian::write_i16(&mut h[72..74], (dtype.size() * 8) as i16);
    let pixdim = [1.0, grid.spacing[0], grid.spacing[1], grid.spacing[2], 1.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * i..80 + 4 * i], *p as f32);
    }
    LittleEndian::write_f32(&mut h[108..112], SINGLE_FILE_OFFSET as f32);
    LittleEndian::write_f32(&mut h[112..116], 1.0);
    LittleEndian::write_f32(&mut h[116..120], 0.0);
    // xyzt_units: millimetres
    h[123] = 2;
    LittleEndian::write_i16(&mut h[252..254], 0);
    LittleEndian::write_i16(&mut h[254..256], 1);
    for r in 0..3 {
        for c in 0..4 {
            let at = 280 + 16 * r + 4 * c;
            LittleEndian::write_f32(&mut h[at..at + 4], grid.affine[r][c] as f32);
        }
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE);

    let mut out = h;
    out.reserve(n * dtype.size());
    for i in 0..n {
        let v = vol.value(i);
        match dtype {
            Datatype::Uint8 => {
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(not_representable(v, i, dtype));
                }
                out.push(v as u8);
            }
            Datatype::Int16 => {
                if v.fract() != 0.0 || !(-32768.0..=32767.0).contains(&v) {
                    return Err(not_representable(v, i, dtype));
                }
                let mut b = [0u8; 2];
                LittleEndian::write_i16(&mut b, v as i16);
                out.extend_from_slice(&b);
            }
            Datatype::Float32 => {
                let mut b = [0u8; 4];
                LittleEndian::write_f32(&mut b, v);
                out.extend_from_slice(&b);
            }
            Datatype::Float64 => {
                let mut b = [0u8; 8];
                LittleEndian::write_f64(&mut b, v as f64);
                out.extend_from_slice(&b);
            }
        }
    }
    Ok(out)
}

fn dim_i16(d: usize) -> Result<i16> {
    i16::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} exceeds NIfTI-1 limit")))
}

fn not_representable(value: f32, index: usize, dtype: Datatype) -> Error {
    Error::NotRepresentable {
        value,
        index,
        dtype: dtype.name(),
    }
}

/// Write using the payload's natural datatype (float32 for intensities and
/// probabilities, uint8 for masks).
pub fn write_nifti<V: NiftiPayload + ?Sized>(vol: &V, path: impl AsRef<Path>) -> Result<()> {
    write_nifti_as(vol, vol.natural_datatype(), path)
}

pub fn write_nifti_as<V: NiftiPayload + ?Sized>(
    vol: &V,
    dtype: Datatype,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(vol, dtype)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let gz = path.to_string_lossy().ends_with(".gz");
    let res = if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
        enc.write_all(&bytes)
            .and_then(|_| enc.finish())
            .and_then(|mut w| w.flush())
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(&bytes).and_then(|_| w.flush())
    };
    res.map_err(|e| Error::io(path, e))
}
