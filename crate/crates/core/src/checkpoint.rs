//! Checkpoint bundles: a small versioned container of named, typed arrays.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SPKPRUNE"
//! version    u32      currently 1
//! count      u32      number of arrays
//! count times:
//!   name_len u16, name (UTF-8)
//!   dtype    u8       1 = u8, 2 = u64, 3 = f64
//!   rank     u8
//!   dims     rank x u64
//!   payload  product(dims) elements
//! checksum   u32      CRC-32 of every preceding byte
//! ```
//!
//! A network checkpoint stores `settings` (the run settings as TOML text),
//! `config_hash`, `weights` (`[n_exc, n_input]`, one row per neuron),
//! `removed`, `theta`, `labels` (255 = unassigned), `shared_levels` and
//! `flags` (`[hard_pruned, has_last_critical]`) with `last_critical`.
//! Preprocessed datasets use the same container with `images`
//! (`[n, 28, 28]`) and `labels` (`[n]`).

use std::fs;
use std::path::Path;

use crate::encoding::{LabeledImage, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::network::{Network, SynapseMatrix};
use crate::pipeline::{NeuronLabels, RunSettings};

pub const MAGIC: [u8; 8] = *b"SPKPRUNE";
pub const FORMAT_VERSION: u32 = 1;
const UNASSIGNED: u8 = u8::MAX;
const WHAT: &str = "checkpoint bundle";

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    U8(Vec<u8>),
    U64(Vec<u64>),
    F64(Vec<f64>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::U8(v) => v.len(),
            ArrayData::U64(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            ArrayData::U8(_) => 1,
            ArrayData::U64(_) => 2,
            ArrayData::F64(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub arrays: Vec<Array>,
}

fn corrupt(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        what: WHAT,
        offset: offset as u64,
        reason: reason.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt(self.pos, "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
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
}

impl Bundle {
    pub fn push(&mut self, name: &str, dims: &[u64], data: ArrayData) {
        self.arrays.push(Array {
            name: name.to_owned(),
            dims: dims.to_vec(),
            data,
        });
    }

    pub fn get(&self, name: &str) -> Result<&Array> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| corrupt(0, format!("missing array `{name}`")))
    }

    pub fn u8s(&self, name: &str) -> Result<&[u8]> {
        match &self.get(name)?.data {
            ArrayData::U8(v) => Ok(v),
            _ => Err(corrupt(0, format!("array `{name}` is not u8"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match &self.get(name)?.data {
            ArrayData::U64(v) => Ok(v),
            _ => Err(corrupt(0, format!("array `{name}` is not u64"))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        match &self.get(name)?.data {
            ArrayData::F64(v) => Ok(v),
            _ => Err(corrupt(0, format!("array `{name}` is not f64"))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.push(a.data.dtype());
            out.push(a.dims.len() as u8);
            for d in &a.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            match &a.data {
                ArrayData::U8(v) => out.extend_from_slice(v),
                ArrayData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 {
            return Err(corrupt(bytes.len(), "truncated"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if body[..MAGIC.len()] != MAGIC {
            return Err(corrupt(0, "bad magic"));
        }
        if crc32fast::hash(body) != stored {
            return Err(corrupt(body.len(), "checksum mismatch"));
        }
        let mut r = Reader { bytes: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(8, format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut bundle = Bundle::default();
        for _ in 0..count {
            let len = usize::from(r.u16()?);
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| corrupt(at, "array name is not UTF-8"))?
                .to_owned();
            let at = r.pos;
            let dtype = r.u8()?;
            let rank = r.u8()?;
            let dims = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
                .filter(|&n| n <= body.len())
                .ok_or_else(|| corrupt(at, format!("array `{name}` has impossible dimensions")))?;
            let data = match dtype {
                1 => ArrayData::U8(r.take(n)?.to_vec()),
                2 => ArrayData::U64(
                    r.take(n * 8)?
                        .chunks_exact(8)
                        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                3 => ArrayData::F64(
                    r.take(n * 8)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                d => return Err(corrupt(at, format!("unknown dtype {d}"))),
            };
            debug_assert_eq!(data.len(), n);
            bundle.arrays.push(Array { name, dims, data });
        }
        if r.pos != body.len() {
            return Err(corrupt(r.pos, "trailing bytes"));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Stable 64-bit FNV-1a digest of the settings text.
pub fn config_hash(settings_toml: &str) -> u64 {
    settings_toml.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A trained network together with the settings that produced it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub settings: RunSettings,
    pub synapses: SynapseMatrix,
    pub theta: Vec<f64>,
    pub labels: Option<NeuronLabels>,
}

impl Checkpoint {
    pub fn from_network(settings: &RunSettings, net: &Network, labels: Option<&NeuronLabels>) -> Self {
        Self {
            settings: settings.clone(),
            synapses: net.synapses.clone(),
            theta: net.thetas(),
            labels: labels.cloned(),
        }
    }

    pub fn settings_toml(&self) -> Result<String> {
        toml::to_string(&self.settings).map_err(|e| Error::Config {
            field: "settings".into(),
            reason: e.to_string(),
        })
    }

    /// Rebuilds the network at rest with the stored weights and thresholds.
    pub fn to_network(&self) -> Result<Network> {
        let mut net = Network::with_synapses(self.settings.network, self.synapses.clone())?;
        net.set_thetas(&self.theta)?;
        Ok(net)
    }

    pub fn to_bundle(&self) -> Result<Bundle> {
        let s = &self.synapses;
        let (n_input, n_exc) = (s.n_input() as u64, s.n_exc() as u64);
        let text = self.settings_toml()?;
        let mut b = Bundle::default();
        b.push("config_hash", &[1], ArrayData::U64(vec![config_hash(&text)]));
        b.push("settings", &[text.len() as u64], ArrayData::U8(text.into_bytes()));
        b.push("weights", &[n_exc, n_input], ArrayData::F64(s.weights().to_vec()));
        b.push(
            "removed",
            &[n_exc, n_input],
            ArrayData::U8(s.removed().iter().map(|&r| u8::from(r)).collect()),
        );
        b.push("theta", &[self.theta.len() as u64], ArrayData::F64(self.theta.clone()));
        if let Some(labels) = &self.labels {
            let l: Vec<u8> = labels.0.iter().map(|l| l.unwrap_or(UNASSIGNED)).collect();
            b.push("labels", &[l.len() as u64], ArrayData::U8(l));
        }
        let levels = s.shared_levels().map(<[f64]>::to_vec).unwrap_or_default();
        b.push("shared_levels", &[levels.len() as u64], ArrayData::F64(levels));
        b.push(
            "flags",
            &[2],
            ArrayData::U8(vec![u8::from(s.is_hard_pruned()), u8::from(s.last_critical().is_some())]),
        );
        b.push(
            "last_critical",
            &[1],
            ArrayData::U64(vec![s.last_critical().unwrap_or(0) as u64]),
        );
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let text = std::str::from_utf8(b.u8s("settings")?).map_err(|_| corrupt(0, "settings are not UTF-8"))?;
        if b.u64s("config_hash")? != [config_hash(text)] {
            return Err(corrupt(0, "config hash does not match the stored settings"));
        }
        let settings: RunSettings = toml::from_str(text).map_err(|e| corrupt(0, format!("settings: {e}")))?;
        let topo = settings.network.topology;
        let n = topo.n_input * topo.n_exc;

        let weights = b.f64s("weights")?.to_vec();
        let removed: Vec<bool> = b.u8s("removed")?.iter().map(|&r| r != 0).collect();
        let theta = b.f64s("theta")?.to_vec();
        if weights.len() != n || removed.len() != n || theta.len() != topo.n_exc {
            return Err(corrupt(0, "array sizes disagree with the stored topology"));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::NegativeWeight(w));
        }
        let labels = match b.get("labels") {
            Ok(_) => {
                let l = b.u8s("labels")?;
                if l.len() != topo.n_exc {
                    return Err(corrupt(0, "label count disagrees with the topology"));
                }
                Some(NeuronLabels(
                    l.iter().map(|&c| (c != UNASSIGNED).then_some(c)).collect(),
                ))
            }
            Err(_) => None,
        };
        let levels = b.f64s("shared_levels")?;
        let flags = b.u8s("flags")?;
        if flags.len() != 2 {
            return Err(corrupt(0, "flags must hold two entries"));
        }
        let last = b.u64s("last_critical")?.first().copied().unwrap_or(0) as usize;
        let synapses = SynapseMatrix::restore(
            topo.n_input,
            topo.n_exc,
            weights,
            removed,
            (!levels.is_empty()).then(|| levels.to_vec()),
            flags[0] != 0,
            (flags[1] != 0).then_some(last),
        );
        Ok(Self {
            settings,
            synapses,
            theta,
            labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }
}

pub fn dataset_bundle(images: &[LabeledImage]) -> Bundle {
    let mut b = Bundle::default();
    let side = IMAGE_SIDE as u64;
    b.push(
        "images",
        &[images.len() as u64, side, side],
        ArrayData::U8(images.iter().flat_map(|im| im.pixels.iter().copied()).collect()),
    );
    b.push(
        "labels",
        &[images.len() as u64],
        ArrayData::U8(images.iter().map(|im| im.label).collect()),
    );
    b
}

pub fn dataset_from_bundle(b: &Bundle) -> Result<Vec<LabeledImage>> {
    let pixels = b.u8s("images")?;
    let labels = b.u8s("labels")?;
    if pixels.len() != labels.len() * IMAGE_PIXELS {
        return Err(corrupt(0, "image and label counts disagree"));
    }
    pixels
        .chunks_exact(IMAGE_PIXELS)
        .zip(labels)
        .map(|(px, &l)| LabeledImage::new(px, l))
        .collect()
}
