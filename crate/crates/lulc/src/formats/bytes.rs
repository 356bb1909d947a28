use crate::error::FormatError;

/// Cursor over a byte slice whose short reads become `Truncated` errors.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(FormatError::Truncated {
            what: self.what,
            needed: self.pos.saturating_add(n),
            available: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let rest = &self.bytes[self.pos..];
        let found = &rest[..rest.len().min(4)];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        self.pos += 4;
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, FormatError> {
        let len = n.checked_mul(4).ok_or_else(|| FormatError::malformed(self.what, "length overflow"))?;
        Ok(self.take(len)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        let len = n.checked_mul(8).ok_or_else(|| FormatError::malformed(self.what, "length overflow"))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    /// A `u32`-length-prefixed JSON block.
    pub fn json<T: serde::de::DeserializeOwned>(&mut self) -> Result<T, FormatError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        serde_json::from_slice(raw).map_err(|e| FormatError::malformed(self.what, e.to_string()))
    }

    pub fn at_tag(&self, tag: &[u8]) -> bool {
        self.bytes[self.pos..].starts_with(tag)
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        if self.is_done() {
            Ok(())
        } else {
            Err(FormatError::malformed(self.what, format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

pub(crate) fn put_json<T: serde::Serialize>(out: &mut Vec<u8>, value: &T) {
    let raw = serde_json::to_vec(value).expect("header types serialize");
    out.extend_from_slice(&(raw.len() as u32).to_le_bytes());
    out.extend_from_slice(&raw);
}
