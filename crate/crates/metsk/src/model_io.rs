//! Text model files.
//!
//! ```text
//! METSK-MODEL v1
//! <name> <ndims> <dims...>
//! <values, space separated, 17 significant digits>
//! ...
//! ```

use std::fs;
use std::path::Path;

use metsk_core::numerics::Tensor;
use metsk_core::stgcn::ModelParams;

use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "METSK-MODEL v1";

/// 17 significant digits; parses back to the same bits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn model_to_string(model: &ModelParams) -> String {
    let mut out = String::from(MODEL_HEADER);
    out.push('\n');
    for (name, t) in model.named_tensors() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        out.push_str(&format!("{name} {} {}\n", t.ndim(), dims.join(" ")));
        let values: Vec<String> = t.data().iter().map(|&v| format_f64(v)).collect();
        out.push_str(&values.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a model file's text; `path` only labels errors.
pub fn model_from_str(text: &str, path: &Path) -> Result<ModelParams> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MODEL_HEADER)) => {}
        _ => return Err(Error::parse(path, 1, format!("expected header `{MODEL_HEADER}`"))),
    }
    let mut named = Vec::new();
    while let Some((n, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let name = parts.next().unwrap_or_default().to_string();
        let ndims: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, n, "expected `<name> <ndims> <dims...>`"))?;
        let dims = parts
            .map(|s| s.parse::<usize>().map_err(|_| Error::parse(path, n, format!("bad dimension `{s}`"))))
            .collect::<Result<Vec<usize>>>()?;
        if dims.len() != ndims {
            return Err(Error::parse(path, n, format!("{ndims} dimensions declared, {} given", dims.len())));
        }
        let (vn, values) = lines.next().ok_or_else(|| Error::parse(path, n + 1, format!("missing values of `{name}`")))?;
        let data = values
            .split(' ')
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(path, vn, format!("bad value `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let t = Tensor::new(&dims, data).map_err(|e| Error::parse(path, vn, e.to_string()))?;
        named.push((name, t));
    }
    ModelParams::from_named(named).map_err(|e| Error::invalid(path, e.to_string()))
}

pub fn save_model(path: &Path, model: &ModelParams) -> Result<()> {
    fs::write(path, model_to_string(model)).map_err(Error::io(path))
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    model_from_str(&text, path)
}
