//! Binary environment snapshots.
//!
//! Layout (little endian): magic `MSSRENV\0`, `u16` version, `u32` turn,
//! `u32` binding count, then per binding its name, value and optional
//! provenance. Strings are `u32` length + UTF-8 bytes; floats are raw bits,
//! so restores are bit-exact.

use std::collections::BTreeMap;

use crate::geometry::{Mat4, Vec3};
use crate::perception::{CandidateStage, DirectionCandidateSet};

use super::exec::{Environment, Provenance};
use super::value::{Handle, HandleKind, Value};
use super::DslError;

const MAGIC: &[u8; 8] = b"MSSRENV\0";
const VERSION: u16 = 1;
const MAX_DEPTH: usize = 64;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u16(&mut self, x: u16) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection fits in u32"));
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn vec3(&mut self, v: &Vec3) {
        v.iter().for_each(|c| self.f64(*c));
    }

    fn value(&mut self, v: &Value) {
        match v {
            Value::Number(x) => {
                self.u8(0);
                self.f64(*x);
            }
            Value::Str(s) => {
                self.u8(1);
                self.str(s);
            }
            Value::Bool(b) => {
                self.u8(2);
                self.u8(*b as u8);
            }
            Value::Vec3(v) => {
                self.u8(3);
                self.vec3(v);
            }
            Value::Matrix(m) => {
                self.u8(4);
                m.iter().for_each(|c| self.f64(*c));
            }
            Value::Label(s) => {
                self.u8(5);
                self.str(s);
            }
            Value::Descriptors(d) => {
                self.u8(6);
                self.len(d.len());
                for (k, x) in d {
                    self.str(k);
                    self.f64(*x);
                }
            }
            Value::Candidates(c) => {
                self.u8(7);
                self.vec3(&c.anchor_point);
                self.vec3(&c.up);
                self.u8(match c.stage {
                    CandidateStage::Coarse => 0,
                    CandidateStage::Fine => 1,
                });
                self.len(c.vectors.len());
                c.vectors.iter().for_each(|v| self.vec3(v));
                self.len(c.labels.len());
                c.labels.iter().for_each(|l| self.str(l));
            }
            Value::Handle(h) => {
                self.u8(8);
                self.u8(match h.kind {
                    HandleKind::Reconstruction => 0,
                    HandleKind::Frame => 1,
                });
                self.u32(h.id);
            }
            Value::Absent => self.u8(9),
            Value::List(items) => {
                self.u8(10);
                self.len(items.len());
                items.iter().for_each(|v| self.value(v));
            }
        }
    }
}

pub fn snapshot(env: &Environment) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u32(env.turn);
    w.len(env.bindings.len());
    for (name, value) in &env.bindings {
        w.str(name);
        w.value(value);
        match env.origins.get(name) {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                w.str(&p.module);
                w.str(&p.op);
                w.len(p.args.len());
                p.args.iter().for_each(|a| w.str(a));
                w.u32(p.turn);
            }
        }
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> DslError {
    DslError::CorruptSnapshot(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DslError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DslError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DslError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }
    fn u32(&mut self) -> Result<u32, DslError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
    /// A count, sanity-checked against the bytes left so corrupt input
    /// cannot request huge allocations.
    fn len(&mut self, min_item: usize) -> Result<usize, DslError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.bytes.len() - self.pos {
            return Err(corrupt("length exceeds remaining bytes"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, DslError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes"))))
    }
    fn str(&mut self) -> Result<String, DslError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid UTF-8"))
    }
    fn vec3(&mut self) -> Result<Vec3, DslError> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    fn value(&mut self, depth: usize) -> Result<Value, DslError> {
        if depth > MAX_DEPTH {
            return Err(corrupt("nesting too deep"));
        }
        Ok(match self.u8()? {
            0 => Value::Number(self.f64()?),
            1 => Value::Str(self.str()?),
            2 => match self.u8()? {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                b => return Err(corrupt(format!("bad boolean byte {b}"))),
            },
            3 => Value::Vec3(self.vec3()?),
            4 => {
                let mut m = Mat4::zeros();
                for c in m.iter_mut() {
                    *c = self.f64()?;
                }
                Value::Matrix(m)
            }
            5 => Value::Label(self.str()?),
            6 => {
                let n = self.len(12)?;
                let mut d = BTreeMap::new();
                for _ in 0..n {
                    let k = self.str()?;
                    d.insert(k, self.f64()?);
                }
                if d.len() != n {
                    return Err(corrupt("duplicate descriptor name"));
                }
                Value::Descriptors(d)
            }
            7 => {
                let anchor_point = self.vec3()?;
                let up = self.vec3()?;
                let stage = match self.u8()? {
                    0 => CandidateStage::Coarse,
                    1 => CandidateStage::Fine,
                    b => return Err(corrupt(format!("bad stage byte {b}"))),
                };
                let n = self.len(24)?;
                let vectors = (0..n).map(|_| self.vec3()).collect::<Result<_, _>>()?;
                let m = self.len(4)?;
                let labels = (0..m).map(|_| self.str()).collect::<Result<_, _>>()?;
                Value::Candidates(DirectionCandidateSet { anchor_point, up, vectors, stage, labels })
            }
            8 => {
                let kind = match self.u8()? {
                    0 => HandleKind::Reconstruction,
                    1 => HandleKind::Frame,
                    b => return Err(corrupt(format!("bad handle kind {b}"))),
                };
                Value::Handle(Handle { kind, id: self.u32()? })
            }
            9 => Value::Absent,
            10 => {
                let n = self.len(1)?;
                Value::List((0..n).map(|_| self.value(depth + 1)).collect::<Result<_, _>>()?)
            }
            t => return Err(corrupt(format!("unknown value tag {t}"))),
        })
    }
}

pub fn restore(bytes: &[u8]) -> Result<Environment, DslError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| corrupt("missing header"))? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let mut env = Environment { turn: r.u32()?, ..Default::default() };
    let n = r.len(6)?;
    for _ in 0..n {
        let name = r.str()?;
        let value = r.value(0)?;
        let origin = match r.u8()? {
            0 => None,
            1 => {
                let module = r.str()?;
                let op = r.str()?;
                let k = r.len(4)?;
                let args = (0..k).map(|_| r.str()).collect::<Result<_, _>>()?;
                Some(Provenance { module, op, args, turn: r.u32()? })
            }
            b => return Err(corrupt(format!("bad provenance flag {b}"))),
        };
        if env.bindings.contains_key(&name) {
            return Err(corrupt(format!("duplicate binding '{name}'")));
        }
        env.bind(name, value, origin);
    }
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(env)
}
