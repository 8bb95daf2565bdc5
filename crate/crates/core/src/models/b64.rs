//! Base64 encoding of little-endian f64 arrays for model files.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

pub fn encode(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode(s: &str) -> Result<Vec<f64>, String> {
    let bytes = STANDARD.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() % 8 != 0 {
        return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub mod vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let s = String::deserialize(d)?;
        super::decode(&s).map_err(D::Error::custom)
    }
}

/// Row-major matrix stored as `{rows, cols, data}`.
pub mod matrix {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Packed {
        rows: usize,
        cols: usize,
        data: String,
    }

    pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let cols = m.first().map_or(0, Vec::len);
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        Packed {
            rows: m.len(),
            cols,
            data: super::encode(&flat),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let p = Packed::deserialize(d)?;
        let flat = super::decode(&p.data).map_err(D::Error::custom)?;
        if flat.len() != p.rows * p.cols {
            return Err(D::Error::custom("matrix data does not match its shape"));
        }
        if p.cols == 0 {
            return Ok(vec![Vec::new(); p.rows]);
        }
        Ok(flat.chunks(p.cols).map(<[f64]>::to_vec).collect())
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn round_trip_is_bit_exact() {
        let v = vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI];
        let back = super::decode(&super::encode(&v)).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(super::decode("AAA=").is_err());
    }
}
