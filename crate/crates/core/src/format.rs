//! `.ssr` sparse representation files.
//!
//! All integers little-endian:
//!
//! ```text
//! magic      4 bytes  "SSR1"
//! version    u16      1
//! width      u32      N_x
//! height     u32      N_y
//! bit_depth  u8       l
//! block_size u16      N_b
//! levels     u8       wavelet levels
//! dict_len   u32      length of the dictionary config text
//! dict       dict_len bytes, UTF-8 (DictionaryConfig::to_text)
//! blocks     u32      Q
//! records    u32      number of non-empty blocks
//! per record: q u32, k u32, then k times (x u16, y u16, c f64)
//! ```
//!
//! Records appear in increasing `q`; blocks without atoms are omitted.

use std::path::Path;

use crate::dictionary::DictionaryConfig;
use crate::image::{AtomPair, AtomicDecomposition, BlockGrid};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SSR1";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseImageFile {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub block_size: usize,
    pub levels: usize,
    pub dictionary: DictionaryConfig,
    pub block_count: usize,
    /// One entry per block, empty blocks included.
    pub blocks: Vec<AtomicDecomposition>,
}

impl SparseImageFile {
    pub fn total_atoms(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn grid(&self) -> Result<BlockGrid> {
        BlockGrid::new(self.width, self.height, self.block_size)
    }

    /// Structural checks shared by the encoder and decoder.
    pub fn validate(&self) -> Result<()> {
        if self.dictionary.block_size != self.block_size {
            return Err(Error::format(format!(
                "header block size {} disagrees with dictionary config {}",
                self.block_size, self.dictionary.block_size
            )));
        }
        let grid = self.grid()?;
        if grid.block_count() != self.block_count || self.blocks.len() != self.block_count {
            return Err(Error::format(format!(
                "expected {} blocks, header says {} and {} are present",
                grid.block_count(),
                self.block_count,
                self.blocks.len()
            )));
        }
        if self.block_size > u16::MAX as usize || self.levels > u8::MAX as usize {
            return Err(Error::format("block size or level count out of range"));
        }
        for (q, b) in self.blocks.iter().enumerate() {
            if b.block != q {
                return Err(Error::format(format!("block {q} carries index {}", b.block)));
            }
            b.validate(self.block_size)?;
            if b.atoms.iter().any(|p| p.x > u16::MAX as usize || p.y > u16::MAX as usize) {
                return Err(Error::format(format!("block {q} has an atom index above 65535")));
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let dict = self.dictionary.to_text();
        let mut out = Vec::with_capacity(64 + dict.len() + self.total_atoms() * 12);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.push(self.bit_depth);
        out.extend_from_slice(&(self.block_size as u16).to_le_bytes());
        out.push(self.levels as u8);
        out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(&(self.block_count as u32).to_le_bytes());
        let nonempty: Vec<&AtomicDecomposition> = self.blocks.iter().filter(|b| !b.is_empty()).collect();
        out.extend_from_slice(&(nonempty.len() as u32).to_le_bytes());
        for b in nonempty {
            out.extend_from_slice(&(b.block as u32).to_le_bytes());
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            for (p, c) in b.atoms.iter().zip(&b.coefficients) {
                out.extend_from_slice(&(p.x as u16).to_le_bytes());
                out.extend_from_slice(&(p.y as u16).to_le_bytes());
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("not an SSR file"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported SSR version {version}")));
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let bit_depth = r.u8()?;
        let block_size = r.u16()? as usize;
        let levels = r.u8()? as usize;
        let dict_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(dict_len)?)
            .map_err(|_| Error::format("dictionary config is not UTF-8"))?;
        let dictionary = DictionaryConfig::from_text(text)?;
        let block_count = r.u32()? as usize;
        let records = r.u32()? as usize;
        if records > block_count {
            return Err(Error::format(format!("{records} records for {block_count} blocks")));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::format(format!("bit depth {bit_depth} out of range")));
        }
        let mut blocks: Vec<AtomicDecomposition> = (0..block_count).map(AtomicDecomposition::new).collect();
        let mut last: Option<usize> = None;
        for _ in 0..records {
            let q = r.u32()? as usize;
            if q >= block_count || last.is_some_and(|l| q <= l) {
                return Err(Error::format(format!("record for block {q} out of order or range")));
            }
            last = Some(q);
            let k = r.u32()? as usize;
            if k == 0 || k > block_size * block_size {
                return Err(Error::format(format!("block {q} claims {k} atoms")));
            }
            if r.remaining() < k * 12 {
                return Err(Error::format("truncated record"));
            }
            for _ in 0..k {
                let x = r.u16()? as usize;
                let y = r.u16()? as usize;
                let c = r.f64()?;
                blocks[q].push(AtomPair::new(x, y), c);
            }
        }
        if r.remaining() != 0 {
            return Err(Error::format(format!("{} trailing bytes", r.remaining())));
        }
        let file = Self {
            width,
            height,
            bit_depth,
            block_size,
            levels,
            dictionary,
            block_count,
            blocks,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseImageFile {
        let mut blocks: Vec<AtomicDecomposition> = (0..4).map(AtomicDecomposition::new).collect();
        blocks[1].push(AtomPair::new(3, 40), -2.5);
        blocks[1].push(AtomPair::new(0, 0), 100.0);
        blocks[3].push(AtomPair::new(65, 1), 1e-3);
        SparseImageFile {
            width: 16,
            height: 12,
            bit_depth: 8,
            block_size: 8,
            levels: 2,
            dictionary: DictionaryConfig::with_block_size(8),
            block_count: 4,
            blocks,
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let bytes = f.encode().unwrap();
        assert_eq!(SparseImageFile::decode(&bytes).unwrap(), f);
        assert_eq!(&bytes[..4], b"SSR1");
    }

    #[test]
    fn rejects_damage() {
        let bytes = sample().encode().unwrap();
        assert!(SparseImageFile::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(SparseImageFile::decode(&extra).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(SparseImageFile::decode(&bad_magic).is_err());
        let mut bad_version = bytes;
        bad_version[4] = 9;
        assert!(SparseImageFile::decode(&bad_version).is_err());
    }

    #[test]
    fn geometry_checked() {
        let mut f = sample();
        f.block_count = 5;
        assert!(f.encode().is_err());
        let mut g = sample();
        g.dictionary.block_size = 16;
        assert!(g.encode().is_err());
    }
}
