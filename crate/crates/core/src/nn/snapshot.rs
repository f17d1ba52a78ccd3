//! Binary snapshot of network parameters and optimizer state.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    "VGSNAP"            6 bytes
//! version  u16                 currently 1
//! n_nets   u32
//! per net:
//!   n_layers u32
//!   hidden   u8 code, f64 slope
//!   output   u8 code, f64 slope
//!   per layer: out u32, in u32, weight f64[out*in], bias f64[out]
//!   has_opt  u8
//!   if has_opt:
//!     kind u8 (0 sgd, 1 adam), lr f64, beta1 f64, beta2 f64, eps f64, step u64
//!     if adam: m then v, one block per parameter tensor, shapes as above
//! checksum u64                 FNV-1a over every preceding byte
//! ```
//!
//! Activation codes: 0 identity, 1 tanh, 2 relu, 3 leaky relu, 4 sigmoid.

use super::mlp::{Activation, Layer, NetParams};
use super::optim::{OptConfig, OptKind, OptState};
use crate::error::{Error, Result};
use crate::ndtape::Tensor;

const MAGIC: &[u8; 6] = b"VGSNAP";
const VERSION: u16 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, t: &Tensor) {
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptSnapshot("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptSnapshot("size overflow".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape.to_vec(), data)
    }
}

fn write_net(w: &mut Writer, net: &NetParams, opt: Option<&OptState>) {
    w.u32(net.layers.len() as u32);
    for act in [net.hidden, net.output] {
        let (code, slope) = act.code();
        w.u8(code);
        w.f64(slope);
    }
    for l in &net.layers {
        let s = l.weight.shape();
        w.u32(s[0] as u32);
        w.u32(s[1] as u32);
        w.floats(&l.weight);
        w.floats(&l.bias);
    }
    match opt {
        None => w.u8(0),
        Some(st) => {
            w.u8(1);
            w.u8(match st.config.kind {
                OptKind::Sgd => 0,
                OptKind::Adam => 1,
            });
            w.f64(st.config.lr);
            w.f64(st.config.beta1);
            w.f64(st.config.beta2);
            w.f64(st.config.eps);
            w.u64(st.step);
            if st.config.kind == OptKind::Adam {
                for t in st.m.iter().chain(&st.v) {
                    w.floats(t);
                }
            }
        }
    }
}

fn read_net(r: &mut Reader) -> Result<(NetParams, Option<OptState>)> {
    let n_layers = r.u32()? as usize;
    let mut acts = [Activation::Identity; 2];
    for a in &mut acts {
        let code = r.u8()?;
        let slope = r.f64()?;
        *a = Activation::from_code(code, slope)
            .ok_or_else(|| Error::CorruptSnapshot(format!("unknown activation code {code}")))?;
    }
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let out = r.u32()? as usize;
        let inp = r.u32()? as usize;
        let weight = r.tensor(&[out, inp])?;
        let bias = r.tensor(&[out])?;
        layers.push(Layer { weight, bias });
    }
    let net = NetParams::from_layers(layers, acts[0], acts[1])
        .map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
    let opt = match r.u8()? {
        0 => None,
        1 => {
            let kind = match r.u8()? {
                0 => OptKind::Sgd,
                1 => OptKind::Adam,
                k => return Err(Error::CorruptSnapshot(format!("unknown optimizer kind {k}"))),
            };
            let config = OptConfig {
                kind,
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            };
            let step = r.u64()?;
            let (mut m, mut v) = (Vec::new(), Vec::new());
            if kind == OptKind::Adam {
                let shapes: Vec<Vec<usize>> = net.tensors().iter().map(|t| t.shape().to_vec()).collect();
                for s in &shapes {
                    m.push(r.tensor(s)?);
                }
                for s in &shapes {
                    v.push(r.tensor(s)?);
                }
            }
            Some(OptState { config, m, v, step })
        }
        f => return Err(Error::CorruptSnapshot(format!("bad optimizer flag {f}"))),
    };
    Ok((net, opt))
}

/// Encodes any number of networks, each with optional optimizer state.
pub fn encode_nets(nets: &[(&NetParams, Option<&OptState>)]) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u32(nets.len() as u32);
    for (net, opt) in nets {
        write_net(&mut w, net, *opt);
    }
    let sum = fnv1a(&w.0);
    w.u64(sum);
    w.0
}

pub fn decode_nets(blob: &[u8]) -> Result<Vec<(NetParams, Option<OptState>)>> {
    if blob.len() < MAGIC.len() + 2 + 4 + 8 {
        return Err(Error::CorruptSnapshot("too short".into()));
    }
    let (body, tail) = blob.split_at(blob.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if fnv1a(body) != stored {
        return Err(Error::CorruptSnapshot("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptSnapshot("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::CorruptSnapshot(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        out.push(read_net(&mut r)?);
    }
    if r.pos != body.len() {
        return Err(Error::CorruptSnapshot("trailing bytes".into()));
    }
    Ok(out)
}

pub fn snapshot(params: &NetParams, state: &OptState) -> Vec<u8> {
    encode_nets(&[(params, Some(state))])
}

pub fn restore(blob: &[u8]) -> Result<(NetParams, OptState)> {
    let mut nets = decode_nets(blob)?;
    if nets.len() != 1 {
        return Err(Error::CorruptSnapshot(format!("expected one network, found {}", nets.len())));
    }
    let (net, opt) = nets.remove(0);
    let opt = opt.ok_or_else(|| Error::CorruptSnapshot("missing optimizer state".into()))?;
    Ok((net, opt))
}
