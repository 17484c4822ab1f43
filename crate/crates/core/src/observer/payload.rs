//! Observation payloads and their JSON wire form.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::F;

#[derive(Debug, Error)]
pub enum PayloadError {
    #[error("png encoding failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decoding failed: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Row-major palette indices.
    Image { height: usize, width: usize, data: Vec<u8> },
    Vector(Vec<F>),
    Scalars(BTreeMap<String, F>),
}

/// 8-bit grayscale PNG whose sample values are the palette indices.
pub fn encode_png(height: usize, width: usize, data: &[u8]) -> Result<Vec<u8>, PayloadError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(data)?;
    }
    Ok(out)
}

/// Inverse of [`encode_png`]: `(height, width, data)`.
pub fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), PayloadError> {
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| PayloadError::Malformed("image too large".into()))?];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(PayloadError::Malformed("expected 8-bit grayscale".into()));
    }
    buf.truncate(info.buffer_size());
    Ok((info.height as usize, info.width as usize, buf))
}

impl Payload {
    pub fn to_json(&self) -> Result<Value, PayloadError> {
        Ok(match self {
            Payload::Image { height, width, data } => json!({
                "shape": [height, width],
                "encoding": "png-base64",
                "data": BASE64.encode(encode_png(*height, *width, data)?),
            }),
            Payload::Vector(v) => json!(v),
            Payload::Scalars(m) => json!(m),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, PayloadError> {
        let bad = |what: &str| PayloadError::Malformed(what.to_string());
        match v {
            Value::Array(items) => items
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| bad("non-numeric vector entry")))
                .collect::<Result<_, _>>()
                .map(Payload::Vector),
            Value::Object(o) if o.get("encoding").and_then(Value::as_str) == Some("png-base64") => {
                let data = o.get("data").and_then(Value::as_str).ok_or_else(|| bad("image without data"))?;
                let (height, width, data) = decode_png(&BASE64.decode(data)?)?;
                Ok(Payload::Image { height, width, data })
            }
            Value::Object(o) => o
                .iter()
                .map(|(k, x)| x.as_f64().map(|f| (k.clone(), f)).ok_or_else(|| bad("non-numeric scalar")))
                .collect::<Result<_, _>>()
                .map(Payload::Scalars),
            _ => Err(bad("unsupported payload")),
        }
    }
}

/// Named payloads in handler registration order. Equality ignores order.
#[derive(Clone, Debug, Default)]
pub struct ObservationBundle {
    entries: Vec<(String, Payload)>,
}

impl PartialEq for ObservationBundle {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|(n, p)| other.get(n) == Some(p))
    }
}

impl ObservationBundle {
    /// Adds or replaces an entry.
    pub fn insert(&mut self, name: String, payload: Payload) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = payload,
            None => self.entries.push((name, payload)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Payload> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Payload)> {
        self.entries.iter().map(|(n, p)| (n.as_str(), p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<Value, PayloadError> {
        let mut m = Map::new();
        for (n, p) in &self.entries {
            m.insert(n.clone(), p.to_json()?);
        }
        Ok(Value::Object(m))
    }

    /// Parses the wire form. Entry order follows the JSON object's key order.
    pub fn from_json(v: &Value) -> Result<Self, PayloadError> {
        let o = v.as_object().ok_or_else(|| PayloadError::Malformed("bundle must be an object".into()))?;
        let mut b = Self::default();
        for (k, x) in o {
            b.insert(k.clone(), Payload::from_json(x)?);
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_preserves_indices() {
        let data: Vec<u8> = (0..6 * 4).map(|i| (i % 8) as u8).collect();
        let png = encode_png(6, 4, &data).unwrap();
        assert_eq!(decode_png(&png).unwrap(), (6, 4, data));
    }

    #[test]
    fn bundle_json_roundtrip() {
        let mut b = ObservationBundle::default();
        b.insert("bev".into(), Payload::Image { height: 2, width: 2, data: vec![0, 1, 2, 3] });
        b.insert("lidar".into(), Payload::Vector(vec![0.1, 1.0 / 3.0, 30.0]));
        b.insert("stats".into(), Payload::Scalars(BTreeMap::from([("n".to_string(), 7.0)])));
        let v = b.to_json().unwrap();
        assert_eq!(v["bev"]["shape"], json!([2, 2]));
        assert_eq!(v["bev"]["encoding"], "png-base64");
        let text = serde_json::to_string(&v).unwrap();
        let back = ObservationBundle::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.get("lidar"), b.get("lidar"));
        assert_eq!(back.get("bev"), b.get("bev"));
        assert_eq!(back.get("stats"), b.get("stats"));
    }
}
