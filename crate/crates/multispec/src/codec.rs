//! Little-endian primitives shared by the binary formats.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

pub fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> io::Result<()> {
    for &x in v {
        w.write_f32::<LE>(x)?;
    }
    Ok(())
}

pub fn read_f32s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f32>> {
    let mut v = vec![0.0f32; n];
    r.read_f32_into::<LE>(&mut v)?;
    Ok(v)
}

pub fn write_u32s<W: Write>(w: &mut W, v: &[u32]) -> io::Result<()> {
    for &x in v {
        w.write_u32::<LE>(x)?;
    }
    Ok(())
}

pub fn read_u32s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<u32>> {
    let mut v = vec![0u32; n];
    r.read_u32_into::<LE>(&mut v)?;
    Ok(v)
}

/// Reads and checks a 4-byte magic plus a u16 version.
pub fn read_header<R: Read>(r: &mut R, magic: &[u8; 4], version: u16) -> Result<(), String> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(|e| e.to_string())?;
    if &m != magic {
        return Err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        ));
    }
    let v = r.read_u16::<LE>().map_err(|e| e.to_string())?;
    if v != version {
        return Err(format!("unsupported version {v}, expected {version}"));
    }
    Ok(())
}

pub fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], version: u16) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_u16::<LE>(version)
}
