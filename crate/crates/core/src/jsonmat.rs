//! JSON matrix format: nested row arrays of `[re, im]` pairs.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn from_json(rows: &JsonMatrix) -> Result<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::Config(format!(
            "ragged matrix: row of length {} where {m} expected",
            bad.len()
        )));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| c64(rows[i][j][0], rows[i][j][1])))
}

/// For `#[serde(with = "fqw_core::jsonmat::serde_cmatrix")]`.
pub mod serde_cmatrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let rows = JsonMatrix::deserialize(d)?;
        from_json(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = CMatrix::from_fn(2, 3, |i, j| c64(i as f64, -(j as f64) * 0.5));
        let j = to_json(&m);
        assert_eq!(j[1][2], [1.0, -1.0]);
        assert_eq!(from_json(&j).unwrap(), m);
        assert!(from_json(&vec![vec![[0.0, 0.0]], vec![]]).is_err());
    }
}
