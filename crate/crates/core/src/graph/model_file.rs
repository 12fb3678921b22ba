//! JSON model files:
//! `{name, input_shape, layers: [{id, kind, kernel, stride, padding, out_channels, inputs}]}`.

use std::path::Path;

use super::{validate, Graph};
use crate::error::{read_file, schema_error, Error, GraphErrors};

pub fn parse_model(text: &str) -> Result<Graph, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Graph, Error> {
    let path = path.as_ref();
    let text = read_file(path)?;
    parse_model(&text).map_err(|e| schema_error(path, e))
}

/// Reads a model file and validates the graph; structural violations are
/// reported as schema errors against the file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Graph, Error> {
    let path = path.as_ref();
    let graph = read_model(path)?;
    validate(&graph).map_err(|errs| schema_error(path, GraphErrors(errs)))?;
    Ok(graph)
}

pub fn model_to_json(graph: &Graph) -> String {
    let mut s = serde_json::to_string_pretty(graph).expect("graph serializes");
    s.push('\n');
    s
}

pub fn write_model(graph: &Graph, path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(graph)).map_err(|e| Error::io(path, e))
}
