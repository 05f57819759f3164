//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "RNLF"
//! version      u32      1
//! flags        u32      bit 0: optimizer state present
//! model kind   u32      opaque to this module, interpreted by the model
//! net count    u32
//! per network:
//!   layer count u32
//!   per layer:  inputs u32, outputs u32, activation u32 (0 none, 1 relu, 2 sigmoid)
//! per network, per layer: weights (outputs x inputs, row-major) f32, then bias f32
//! if flag bit 0, per network: step u64, first moments f32, second moments f32
//!   (moments in the same order as the parameters)
//! metadata len u32, followed by that many bytes of UTF-8 (JSON by convention)
//! ```

use std::path::Path;

use super::adam::AdamState;
use super::layer::{Activation, DenseLayer, LayerParams};
use super::mlp::Mlp;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RNLF";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_ADAM: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: u32,
    pub networks: Vec<Mlp<f32>>,
    pub metadata: String,
}

pub fn encode(kind: u32, networks: &[&Mlp<f32>], with_adam: bool, metadata: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, if with_adam { FLAG_ADAM } else { 0 });
    put_u32(&mut out, kind);
    put_u32(&mut out, networks.len() as u32);
    for net in networks {
        put_u32(&mut out, net.layers().len() as u32);
        for l in net.layers() {
            put_u32(&mut out, l.inputs() as u32);
            put_u32(&mut out, l.outputs() as u32);
            put_u32(&mut out, l.activation.tag());
        }
    }
    for net in networks {
        for l in net.layers() {
            put_params(&mut out, &l.params);
        }
    }
    if with_adam {
        for net in networks {
            let st = net.adam_state();
            out.extend_from_slice(&st.step.to_le_bytes());
            st.first.iter().for_each(|p| put_params(&mut out, p));
            st.second.iter().for_each(|p| put_params(&mut out, p));
        }
    }
    put_u32(&mut out, metadata.len() as u32);
    out.extend_from_slice(metadata.as_bytes());
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.err("bad magic, not a checkpoint"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.err(format!("unsupported format version {version}")));
    }
    let flags = r.u32()?;
    let kind = r.u32()?;
    let n_nets = r.u32()? as usize;
    if n_nets > 64 {
        return Err(r.err("implausible network count"));
    }
    let mut shapes = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(r.err("implausible layer count"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (i, o, tag) = (r.u32()? as usize, r.u32()? as usize, r.u32()?);
            let act = Activation::from_tag(tag).ok_or_else(|| r.err(format!("unknown activation tag {tag}")))?;
            layers.push((i, o, act));
        }
        shapes.push(layers);
    }
    let mut networks = Vec::with_capacity(n_nets);
    for shape in &shapes {
        let mut layers = Vec::with_capacity(shape.len());
        for &(i, o, act) in shape {
            let p = r.params(i, o)?;
            let layer = DenseLayer::from_parts(i, o, p.weights, p.bias, act).map_err(|e| r.err(e.to_string()))?;
            layers.push(layer);
        }
        networks.push(Mlp::new(layers).map_err(|e| r.err(e.to_string()))?);
    }
    if flags & FLAG_ADAM != 0 {
        for (net, shape) in networks.iter_mut().zip(&shapes) {
            let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
            let mut first = Vec::new();
            for &(i, o, _) in shape {
                first.push(r.params(i, o)?);
            }
            let mut second = Vec::new();
            for &(i, o, _) in shape {
                second.push(r.params(i, o)?);
            }
            net.set_adam_state(AdamState { step, first, second })?;
        }
    }
    let meta_len = r.u32()? as usize;
    let metadata = String::from_utf8(r.take(meta_len)?.to_vec()).map_err(|_| r.err("metadata is not UTF-8"))?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after metadata"));
    }
    Ok(Checkpoint {
        kind,
        networks,
        metadata,
    })
}

pub fn save(path: &Path, kind: u32, networks: &[&Mlp<f32>], with_adam: bool, metadata: &str) -> Result<()> {
    let bytes = encode(kind, networks, with_adam, metadata);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_params(out: &mut Vec<u8>, p: &LayerParams<f32>) {
    for v in p.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, format!("{} (byte offset {})", msg.into(), self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| self.err("size overflow"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn params(&mut self, inputs: usize, outputs: usize) -> Result<LayerParams<f32>> {
        let weights = self.f32s(inputs.checked_mul(outputs).ok_or_else(|| self.err("size overflow"))?)?;
        let bias = self.f32s(outputs)?;
        Ok(LayerParams { weights, bias })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, AdamConfig, MlpGrads};

    fn nets() -> (Mlp<f32>, Mlp<f32>) {
        let mut a: Mlp<f32> = init_params(&[4, 8, 2], &[Activation::Relu, Activation::Sigmoid], 1).unwrap();
        let b: Mlp<f32> = init_params(&[3, 5], &[Activation::None], 2).unwrap();
        let mut g = MlpGrads::zeros_like(&a);
        g.layers[0].weights[3] = 0.5;
        a.adam_step(&g, 1e-3, &AdamConfig::default()).unwrap();
        (a, b)
    }

    #[test]
    fn round_trip_with_optimizer_state() {
        let (a, b) = nets();
        let bytes = encode(0x0102, &[&a, &b], true, "{\"k\":1}");
        let ck = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(ck.kind, 0x0102);
        assert_eq!(ck.networks, vec![a, b]);
        assert_eq!(ck.metadata, "{\"k\":1}");
    }

    #[test]
    fn header_layout_is_fixed() {
        let (a, _) = nets();
        let bytes = encode(7, &[&a], false, "");
        assert_eq!(&bytes[0..4], b"RNLF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 0);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 2);
        // layer table: 4->8 relu, 8->2 sigmoid
        let table: Vec<u32> = bytes[24..48]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(table, vec![4, 8, 1, 8, 2, 2]);
        let first_weight = f32::from_le_bytes(bytes[48..52].try_into().unwrap());
        assert_eq!(first_weight, a.layers()[0].params.weights[0]);
        let payload = 4 * (4 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(bytes.len(), 48 + payload + 4);
        // without the optimizer flag the moments are not restored
        let ck = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(ck.networks[0].adam_state().step, 0);
    }

    #[test]
    fn truncated_and_corrupt_files_are_parse_errors() {
        let (a, _) = nets();
        let bytes = encode(0, &[&a], true, "");
        for cut in [3, 20, 60, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut], Path::new("x")), Err(Error::Parse { .. })));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, Path::new("x")), Err(Error::Parse { .. })));
        let mut bad_tag = bytes;
        bad_tag[32] = 9;
        assert!(matches!(decode(&bad_tag, Path::new("x")), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load(Path::new("/nonexistent/ck.rnlf")), Err(Error::Io { .. })));
    }
}
