//! JSON encoding: complex numbers as `[re, im]`, matrices as row-major
//! nested arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{CMatrix, C64};

pub type RawMatrix = Vec<Vec<Vec<f64>>>;

pub fn encode(m: &CMatrix) -> RawMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| vec![m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn encode_all(ms: &[CMatrix]) -> Vec<RawMatrix> {
    ms.iter().map(encode).collect()
}

pub fn decode(raw: &RawMatrix, location: &str) -> Result<CMatrix> {
    let rows = raw.len();
    if rows == 0 {
        return Err(Error::Parse {
            location: location.into(),
            message: "empty matrix".into(),
        });
    }
    let cols = raw[0].len();
    let mut m = CMatrix::zeros(rows, cols);
    for (i, row) in raw.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Parse {
                location: format!("{location}[{i}]"),
                message: format!("ragged row: {} entries, expected {cols}", row.len()),
            });
        }
        for (j, z) in row.iter().enumerate() {
            match z.as_slice() {
                [re, im] if re.is_finite() && im.is_finite() => m[(i, j)] = C64::new(*re, *im),
                _ => {
                    return Err(Error::Parse {
                        location: format!("{location}[{i}][{j}]"),
                        message: format!("expected a finite [re, im] pair, found {z:?}"),
                    })
                }
            }
        }
    }
    Ok(m)
}

pub fn decode_all(raw: &[RawMatrix], location: &str) -> Result<Vec<CMatrix>> {
    raw.iter()
        .enumerate()
        .map(|(k, m)| decode(m, &format!("{location}[{k}]")))
        .collect()
}

/// A finite-dimensional algebra: either block data or an explicit basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAlgebra {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<RawMatrix>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModule {
    pub base: RawAlgebra,
    pub dim_h: usize,
    pub generators: Vec<RawMatrix>,
}

/// A linear map given on a spanning set of its domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMap {
    pub domain: Vec<RawMatrix>,
    pub images: Vec<RawMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOracle {
    pub module: RawModule,
    pub left_action: RawMap,
    /// `T_g: K_M → K` for each generator `g` of `E`, with `F = E ⊙ M`.
    pub embedding: Vec<RawMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "E")]
    pub e: RawModule,
    #[serde(rename = "F")]
    pub f: RawModule,
    pub theta: RawMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<RawOracle>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unit_vectors: Vec<RawMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qons_family: Option<Vec<RawMatrix>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn from_str(text: &str) -> Result<RawInstance> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}
