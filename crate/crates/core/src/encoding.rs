//! Canonical length-prefixed byte encoding.
//!
//! Every message is a sequence of fields; each field is a 4-byte big-endian
//! length followed by that many bytes. Composite values nest by encoding the
//! inner sequence into a single field. All hashing and signing inputs go
//! through this encoding so that field boundaries are never ambiguous.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("input truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("{0} trailing bytes after the last field")]
    TrailingBytes(usize),
    #[error("field has length {got}, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("unknown tag {0:#04x}")]
    BadTag(u8),
    #[error("field is not valid UTF-8")]
    BadUtf8,
    #[error("invalid value: {0}")]
    Invalid(&'static str),
}

/// Builds a canonical field sequence.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.field(&[v])
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    /// Encodes `inner` as one nested field.
    pub fn nested(&mut self, inner: impl FnOnce(&mut Encoder)) -> &mut Self {
        let mut enc = Encoder::new();
        inner(&mut enc);
        self.field(&enc.buf)
    }

    /// Encodes a list as one nested field: a count followed by one nested field per item.
    pub fn list<T>(&mut self, items: &[T], mut each: impl FnMut(&mut Encoder, &T)) -> &mut Self {
        self.nested(|enc| {
            enc.u32(items.len() as u32);
            for item in items {
                enc.nested(|e| each(e, item));
            }
        })
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }
}

/// Reads a canonical field sequence.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    rest: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { rest: bytes }
    }

    pub fn field(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.rest.len() < 4 {
            return Err(DecodeError::Truncated {
                needed: 4 - self.rest.len(),
            });
        }
        let (len, rest) = self.rest.split_at(4);
        let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
        if rest.len() < len {
            return Err(DecodeError::Truncated {
                needed: len - rest.len(),
            });
        }
        let (field, rest) = rest.split_at(len);
        self.rest = rest;
        Ok(field)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let f = self.field()?;
        f.try_into().map_err(|_| DecodeError::BadLength {
            expected: N,
            got: f.len(),
        })
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.fixed()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.fixed()?))
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::Invalid("boolean must be 0 or 1")),
        }
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let f = self.field()?;
        String::from_utf8(f.to_vec()).map_err(|_| DecodeError::BadUtf8)
    }

    /// Decodes a nested field with `inner`, which must consume it completely.
    pub fn nested<T>(
        &mut self,
        inner: impl FnOnce(&mut Decoder<'a>) -> Result<T, DecodeError>,
    ) -> Result<T, DecodeError> {
        let mut dec = Decoder::new(self.field()?);
        let value = inner(&mut dec)?;
        dec.finish()?;
        Ok(value)
    }

    pub fn list<T>(
        &mut self,
        mut each: impl FnMut(&mut Decoder<'a>) -> Result<T, DecodeError>,
    ) -> Result<Vec<T>, DecodeError> {
        self.nested(|dec| {
            let count = dec.u32()? as usize;
            // Each item costs at least four bytes, which bounds a hostile count.
            if count > dec.rest.len() / 4 {
                return Err(DecodeError::Invalid("list count exceeds remaining input"));
            }
            let mut items = Vec::with_capacity(count);
            for _ in 0..count {
                items.push(dec.nested(&mut each)?);
            }
            Ok(items)
        })
    }

    pub fn is_empty(&self) -> bool {
        self.rest.is_empty()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes(self.rest.len()))
        }
    }
}

/// Types with a canonical encoding.
pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_layout_is_big_endian_length_prefixed() {
        let mut enc = Encoder::new();
        enc.field(b"ab").u8(7);
        assert_eq!(enc.finish(), vec![0, 0, 0, 2, b'a', b'b', 0, 0, 0, 1, 7]);
    }

    #[test]
    fn concatenation_ambiguity_is_resolved() {
        let mut a = Encoder::new();
        a.field(b"ab").field(b"c");
        let mut b = Encoder::new();
        b.field(b"a").field(b"bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn nested_lists_round_trip() {
        let mut enc = Encoder::new();
        enc.list(&[1u64, 2, 3], |e, v| {
            e.u64(*v);
        });
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes);
        let items = dec.list(|d| d.u64()).unwrap();
        dec.finish().unwrap();
        assert_eq!(items, vec![1, 2, 3]);
    }

    #[test]
    fn truncated_and_trailing_input_rejected() {
        let mut dec = Decoder::new(&[0, 0, 0, 5, 1]);
        assert_eq!(dec.field(), Err(DecodeError::Truncated { needed: 4 }));
        let dec = Decoder::new(&[1]);
        assert_eq!(dec.finish(), Err(DecodeError::TrailingBytes(1)));
    }

    #[test]
    fn hostile_list_count_rejected() {
        let mut enc = Encoder::new();
        enc.nested(|e| {
            e.u32(u32::MAX);
        });
        let bytes = enc.finish();
        assert!(Decoder::new(&bytes).list(|d| d.u8()).is_err());
    }
}
