//! SPCK checkpoint files.
//!
//! Layout: `SPCK`, version byte, u32 length + UTF-8 model spec text, then one
//! entry per tensor until end of file: u32 name length + name, u8 rank, u32
//! dims, little-endian f32 payload. Each trainable parameter is followed by
//! its two Adadelta accumulators (`<name>:sq_grad`, `<name>:sq_update`).

use std::path::Path;

use super::{Model, ModelError, ModelGraph};
use crate::fsutil::write_atomic;
use crate::nn::{ParamRole, Tensor};

const MAGIC: &[u8; 4] = b"SPCK";
const VERSION: u8 = 1;

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(t.shape().len() as u8);
    for d in t.shape() {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let spec = model.graph.to_spec_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(spec.as_bytes());
    for p in model.network.params().iter() {
        put_tensor(&mut out, &p.name, &p.value);
        if p.role == ParamRole::Trainable {
            put_tensor(&mut out, &format!("{}:sq_grad", p.name), &p.sq_grad);
            put_tensor(&mut out, &format!("{}:sq_update", p.name), &p.sq_update);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn tensor(&mut self) -> Result<(String, Tensor), ModelError> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| ModelError::Format("entry name is not UTF-8".into()))?
            .to_string();
        let rank = self.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| ModelError::Format("huge tensor".into()))?)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| ModelError::Format(format!("{name}: {e}")))?;
        Ok((name, t))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::Format("missing SPCK magic".into()));
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let len = r.u32()? as usize;
    let spec = std::str::from_utf8(r.take(len)?).map_err(|_| ModelError::Format("spec is not UTF-8".into()))?;
    let graph = ModelGraph::parse_spec_text(spec).map_err(|e| ModelError::Format(format!("embedded spec: {e}")))?;
    let mut model = Model::new(graph, 0)?;
    let store = model.network.params_mut();
    for i in 0..store.len() {
        let want = store.get(i).name.clone();
        let trainable = store.get(i).role == ParamRole::Trainable;
        let mut expect = |suffix: &str| -> Result<Tensor, ModelError> {
            let full = format!("{want}{suffix}");
            if r.done() {
                return Err(ModelError::Format(format!("missing entry {full}")));
            }
            let (name, t) = r.tensor()?;
            if name != full {
                return Err(ModelError::Format(format!("expected entry {full}, found {name}")));
            }
            Ok(t)
        };
        let value = expect("")?;
        let acc = if trainable { Some((expect(":sq_grad")?, expect(":sq_update")?)) } else { None };
        let shape_err = |e| ModelError::Format(format!("spec/parameter mismatch: {e}"));
        store.set(i, value).map_err(shape_err)?;
        if let Some((g, u)) = acc {
            let p = store.get_mut(i);
            if g.shape() != p.value.shape() || u.shape() != p.value.shape() {
                return Err(ModelError::Format(format!("accumulator shape mismatch for {want}")));
            }
            p.sq_grad = g;
            p.sq_update = u;
        }
    }
    if !r.done() {
        return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), ModelError> {
    write_atomic(path, &encode_checkpoint(model))
        .map_err(|source| ModelError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Model, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVariant;
    use crate::models::build_lenet;

    fn tiny() -> Model {
        let mut g = build_lenet(3, FeatureVariant::V1).narrowed(8);
        g.input_shape = vec![111, 8, 1];
        Model::new(g, 5).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = tiny();
        let bytes = encode_checkpoint(&m);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.graph, m.graph);
        assert_eq!(back.network.params(), m.network.params());
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let bytes = encode_checkpoint(&tiny());
        for bad in [&bytes[..3], &bytes[..bytes.len() - 1], &b"XPCK\x01"[..]] {
            assert!(matches!(decode_checkpoint(bad), Err(ModelError::Format(_))));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_checkpoint(&extra), Err(ModelError::Format(_))));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(decode_checkpoint(&v2), Err(ModelError::Format(_))));
    }

    #[test]
    fn spec_parameter_mismatch_is_detected() {
        let m = tiny();
        let mut other = m.graph.clone();
        other.layers[0] = crate::nn::LayerSpec::Conv2d { filters: 2, kh: 5, kw: 5 };
        let mut bytes = encode_checkpoint(&m);
        let old = m.graph.to_spec_text();
        let new = other.to_spec_text();
        assert_eq!(old.len(), new.len());
        let at = bytes.windows(old.len()).position(|w| w == old.as_bytes()).unwrap();
        bytes[at..at + new.len()].copy_from_slice(new.as_bytes());
        assert!(matches!(decode_checkpoint(&bytes), Err(ModelError::Format(_))));
    }
}
