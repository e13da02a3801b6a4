//! Minimal MATLAB level-5 MAT-file reader: numeric, non-complex matrices
//! only, including zlib-compressed elements.

use std::io::Read;

use flate2::read::ZlibDecoder;

use crate::error::{Error, Result};

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

const HEADER_LEN: usize = 128;
const COMPLEX_FLAG: u32 = 0x0800;

/// A named numeric array, column-major as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MatArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    big_endian: bool,
}

fn short(what: &str) -> Error {
    Error::Format(format!("MAT file truncated in {what}"))
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let b: [u8; 4] = self
            .buf
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| short("tag"))?
            .try_into()
            .expect("four bytes");
        self.pos += 4;
        Ok(if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        })
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    /// Reads one data element, returning its type and payload.
    fn element(&mut self) -> Result<(u32, &'a [u8])> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            // small element: size and type packed into one word
            let (ty, len) = (first & 0xffff, (first >> 16) as usize);
            if len > 4 {
                return Err(Error::Format("MAT small element longer than 4 bytes".into()));
            }
            let payload = self.buf.get(self.pos..self.pos + len).ok_or_else(|| short("element"))?;
            self.pos += 4;
            return Ok((ty, payload));
        }
        let len = self.u32()? as usize;
        let payload = self.buf.get(self.pos..self.pos + len).ok_or_else(|| short("element"))?;
        self.pos += len;
        if first != MI_COMPRESSED {
            self.pos += (8 - len % 8) % 8;
        }
        Ok((first, payload))
    }
}

fn numbers(ty: u32, bytes: &[u8], big_endian: bool) -> Result<Vec<f64>> {
    macro_rules! conv {
        ($t:ty, $n:expr) => {
            bytes
                .chunks_exact($n)
                .map(|c| {
                    let a: [u8; $n] = c.try_into().expect("chunk size");
                    (if big_endian { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
                })
                .collect()
        };
    }
    Ok(match ty {
        MI_INT8 => bytes.iter().map(|&b| b as i8 as f64).collect(),
        MI_UINT8 => bytes.iter().map(|&b| b as f64).collect(),
        MI_INT16 => conv!(i16, 2),
        MI_UINT16 => conv!(u16, 2),
        MI_INT32 => conv!(i32, 4),
        MI_UINT32 => conv!(u32, 4),
        MI_SINGLE => conv!(f32, 4),
        MI_DOUBLE => conv!(f64, 8),
        MI_INT64 => conv!(i64, 8),
        MI_UINT64 => conv!(u64, 8),
        other => return Err(Error::Format(format!("unsupported MAT data type {other}"))),
    })
}

fn parse_matrix(payload: &[u8], big_endian: bool) -> Result<Option<MatArray>> {
    let mut c = Cursor {
        buf: payload,
        pos: 0,
        big_endian,
    };
    let (_, flags) = c.element()?;
    let flags = numbers(MI_UINT32, flags, big_endian)?;
    let word = *flags.first().ok_or_else(|| short("array flags"))? as u32;
    let class = word & 0xff;
    // classes 6..=15 are double, single and the integer types
    if !(6..=15).contains(&class) || word & COMPLEX_FLAG != 0 {
        return Ok(None);
    }
    let (dty, dims) = c.element()?;
    let dims: Vec<usize> = numbers(dty, dims, big_endian)?.into_iter().map(|d| d as usize).collect();
    let (_, name) = c.element()?;
    let name = String::from_utf8_lossy(name).into_owned();
    let (rty, real) = c.element()?;
    let data = numbers(rty, real, big_endian)?;
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::Format(format!("MAT variable `{name}` size does not match its dimensions")));
    }
    Ok(Some(MatArray { name, dims, data }))
}

fn collect(buf: &[u8], big_endian: bool, out: &mut Vec<MatArray>) -> Result<()> {
    let mut c = Cursor {
        buf,
        pos: 0,
        big_endian,
    };
    while !c.done() {
        let (ty, payload) = c.element()?;
        match ty {
            MI_COMPRESSED => {
                let mut inner = Vec::new();
                ZlibDecoder::new(payload)
                    .read_to_end(&mut inner)
                    .map_err(|e| Error::Format(format!("MAT zlib stream: {e}")))?;
                collect(&inner, big_endian, out)?;
            }
            MI_MATRIX => {
                if let Some(a) = parse_matrix(payload, big_endian)? {
                    out.push(a);
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Parses all numeric variables in a level-5 MAT file image.
pub fn parse_mat(bytes: &[u8]) -> Result<Vec<MatArray>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("MAT file shorter than its header".into()));
    }
    let big_endian = match &bytes[126..128] {
        b"IM" => false,
        b"MI" => true,
        _ => return Err(Error::Format("not a level-5 MAT file".into())),
    };
    let mut out = Vec::new();
    collect(&bytes[HEADER_LEN..], big_endian, &mut out)?;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use flate2::write::ZlibEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn tag(out: &mut Vec<u8>, ty: u32, payload: &[u8]) {
        out.extend(ty.to_le_bytes());
        out.extend((payload.len() as u32).to_le_bytes());
        out.extend(payload);
        out.resize(out.len() + (8 - payload.len() % 8) % 8, 0);
    }

    /// Builds a little-endian MAT file holding one double row vector.
    pub(crate) fn write_mat(name: &str, values: &[f64], compress: bool) -> Vec<u8> {
        let mut m = Vec::new();
        tag(&mut m, MI_UINT32, &[6u8, 0, 0, 0, 0, 0, 0, 0]);
        let dims: Vec<u8> = [1i32, values.len() as i32].iter().flat_map(|d| d.to_le_bytes()).collect();
        tag(&mut m, MI_INT32, &dims);
        tag(&mut m, MI_INT8, name.as_bytes());
        let data: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        tag(&mut m, MI_DOUBLE, &data);
        let mut elem = Vec::new();
        tag(&mut elem, MI_MATRIX, &m);

        let mut file = vec![b' '; HEADER_LEN];
        file[..10].copy_from_slice(b"MATLAB 5.0");
        file[124..126].copy_from_slice(&0x0100u16.to_le_bytes());
        file[126..128].copy_from_slice(b"IM");
        if compress {
            let mut z = ZlibEncoder::new(Vec::new(), Compression::default());
            z.write_all(&elem).unwrap();
            let z = z.finish().unwrap();
            file.extend(MI_COMPRESSED.to_le_bytes());
            file.extend((z.len() as u32).to_le_bytes());
            file.extend(z);
        } else {
            file.extend(elem);
        }
        file
    }

    #[test]
    fn plain_and_compressed() {
        let v = [1.5, -2.0, 3.25, 40.0, 0.0];
        for compress in [false, true] {
            let arrays = parse_mat(&write_mat("dmos", &v, compress)).unwrap();
            assert_eq!(arrays.len(), 1);
            assert_eq!(arrays[0].name, "dmos");
            assert_eq!(arrays[0].dims, vec![1, 5]);
            assert_eq!(arrays[0].data, v);
        }
    }

    #[test]
    fn small_element_name() {
        // a 3-character name uses the packed small-element form
        let mut m = Vec::new();
        tag(&mut m, MI_UINT32, &[6u8, 0, 0, 0, 0, 0, 0, 0]);
        tag(&mut m, MI_INT32, &[1, 0, 0, 0, 1, 0, 0, 0]);
        m.extend(((3u32 << 16) | MI_INT8).to_le_bytes());
        m.extend(b"abc\0");
        tag(&mut m, MI_DOUBLE, &7.0f64.to_le_bytes());
        let mut file = vec![0u8; HEADER_LEN];
        file[126..128].copy_from_slice(b"IM");
        tag(&mut file, MI_MATRIX, &m);
        let a = parse_mat(&file).unwrap();
        assert_eq!(a[0].name, "abc");
        assert_eq!(a[0].data, vec![7.0]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_mat(b"hello").is_err());
        let mut f = write_mat("x", &[1.0], false);
        f.truncate(f.len() - 4);
        assert!(parse_mat(&f).is_err());
    }
}
