//! Minimal dense-tensor reverse-mode differentiation, MLPs, and AdamW.
//!
//! Everything trains in f64; checkpoints quantize to f32 on disk. Training
//! is bit-deterministic for a fixed seed since all computation is
//! single-threaded with a portable RNG.

pub mod adamw;
pub mod check;
pub mod graph;
pub mod mlp;
pub mod tensor;

pub use adamw::{optimizer_step, AdamConfig, AdamState};
pub use check::{fd_check_params, rel_error, FdReport, FD_EPS, FD_REL_TOL};
pub use graph::{Graph, Var};
pub use mlp::{mlp_forward, mlp_forward_values, Activation, MlpSpec, ParamSet};
pub use tensor::Tensor;

use crate::error::Result;
use crate::io::{read_f32_le, write_f32_le, Manifest};
use std::path::Path;

/// Write a `ParamSet` as a manifest plus f32 LE blob. The manifest documents
/// every parameter's name, shape, and float offset into the blob.
pub fn write_params(dir: &Path, name: &str, params: &ParamSet, extra: &Manifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut m = Manifest::new();
    for (k, v) in extra.entries() {
        m.set(k, v);
    }
    m.set("param_count", params.len());
    let mut blob = Vec::with_capacity(params.total_values());
    let mut offset = 0usize;
    for id in params.ids() {
        let t = params.value(id);
        let shape = t
            .shape()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("x");
        m.set(&format!("param_{id}_name"), params.name(id));
        m.set(&format!("param_{id}_shape"), shape);
        m.set(&format!("param_{id}_offset_floats"), offset);
        blob.extend_from_slice(t.data());
        offset += t.len();
    }
    m.set("blob_total_floats", blob.len());
    m.write(&dir.join(format!("{name}.manifest")))?;
    write_f32_le(&dir.join(format!("{name}.params")), &blob)?;
    Ok(())
}

/// Read a parameter blob back. Returns the manifest for the caller to pull
/// its extra keys out of.
pub fn read_params(dir: &Path, name: &str) -> Result<(ParamSet, Manifest)> {
    let m = Manifest::read(&dir.join(format!("{name}.manifest")))?;
    let blob = read_f32_le(&dir.join(format!("{name}.params")))?;
    let count: usize = m.parse_value("param_count")?;
    let mut params = ParamSet::new();
    for id in 0..count {
        let pname = m.require(&format!("param_{id}_name"))?.to_string();
        let shape: Vec<usize> = m
            .require(&format!("param_{id}_shape"))?
            .split('x')
            .map(|tok| tok.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| crate::error::Error::data("bad shape in param manifest"))?;
        let offset: usize = m.parse_value(&format!("param_{id}_offset_floats"))?;
        let len: usize = shape.iter().product();
        let data = blob
            .get(offset..offset + len)
            .ok_or_else(|| crate::error::Error::data("param blob too short"))?
            .to_vec();
        params.insert(&pname, Tensor::from_vec(&shape, data)?);
    }
    Ok((params, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn param_blob_round_trip() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(4);
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh).unwrap();
        params.add_mlp("enc", &spec, &mut rng);
        let dir = std::env::temp_dir().join("lamlab_param_roundtrip");
        let mut extra = Manifest::new();
        extra.set("kind", "test");
        write_params(&dir, "ck", &params, &extra).unwrap();
        let (back, m) = read_params(&dir, "ck").unwrap();
        assert_eq!(m.get("kind"), Some("test"));
        assert_eq!(back.len(), params.len());
        for id in back.ids() {
            assert_eq!(back.name(id), params.name(id));
            assert_eq!(back.value(id).shape(), params.value(id).shape());
            // f32 round trip
            for (a, b) in back.value(id).data().iter().zip(params.value(id).data()) {
                assert!((a - b).abs() <= (*b as f32).abs() as f64 * 1e-6 + 1e-9);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
