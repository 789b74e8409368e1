use std::path::Path;

use anyhow::{bail, Context, Result};
use besovmap::besov::{BesovParams, CoefficientField};
use besovmap::forward::{ForwardProblem, Observation, ObservationData, RepeatedData};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// On-disk coefficient field, also the format written by `sample-prior`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub s: f64,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub coeffs: Vec<f64>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

/// A coefficient field given either as a bare array (taken in the configured
/// prior) or as `{"s", "d", "N", "coeffs"}`, which must agree with it.
fn field_from_value(value: Value, params: &BesovParams, what: &str) -> Result<CoefficientField> {
    let field = if value.is_array() {
        let coeffs: Vec<f64> = serde_json::from_value(value).with_context(|| format!("{what}: expected numbers"))?;
        CoefficientField::new(*params, coeffs)?
    } else {
        let given: FieldFile = serde_json::from_value(value).with_context(|| format!("{what}: bad field"))?;
        if given.s != params.s || given.d != params.d || given.n != params.n {
            bail!(
                "{what}: field has (s, d, N) = ({}, {}, {}) but the config has ({}, {}, {})",
                given.s,
                given.d,
                given.n,
                params.s,
                params.d,
                params.n
            );
        }
        CoefficientField::new(*params, given.coeffs)?
    };
    Ok(field)
}

pub fn read_field(path: &Path, params: &BesovParams) -> Result<CoefficientField> {
    field_from_value(read_json(path)?, params, &path.display().to_string())
}

pub fn read_fields(path: &Path, params: &BesovParams) -> Result<Vec<CoefficientField>> {
    let Value::Array(items) = read_json::<Value>(path)? else {
        bail!("{}: expected a list of coefficient fields", path.display());
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| field_from_value(v, params, &format!("{}[{i}]", path.display())))
        .collect()
}

/// Reads `{"y": [...], "n": k}` or `{"ys": [[...], ...]}`.
pub fn read_observation<'a>(path: &Path, problem: &'a ForwardProblem) -> Result<Observation<'a>> {
    let value: Value = read_json(path)?;
    let obs = if value.get("ys").is_some() {
        let data: RepeatedData = serde_json::from_value(value).with_context(|| format!("{}", path.display()))?;
        Observation::from_repeated_data(problem, &data)?
    } else {
        let data: ObservationData = serde_json::from_value(value).with_context(|| format!("{}", path.display()))?;
        Observation::from_data(problem, &data)?
    };
    Ok(obs)
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("invalid {what} value `{}`", s.trim()))
        })
        .collect()
}
