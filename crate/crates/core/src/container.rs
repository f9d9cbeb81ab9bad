//! `ASLN1` binary container for processes, batches and encoder weights.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     5 bytes  "ASLN1"
//! n_s, n_f, n_x, seed          4 x u64
//! nonlinearity tag, source tag 2 x u8
//! section count                u32
//! per section: tag [u8; 4], rows u64, cols u64, rows*cols f64 (row-major)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encoders::{IcaEncoder, PcaEncoder};
use crate::error::{AslnError, Result};
use crate::generative::{GenerativeProcess, Nonlinearity, SampleBatch, SourceDistribution};
use crate::spectral::{Matrix, Vector};

pub const MAGIC: &[u8; 5] = b"ASLN1";

pub const MIXING: [u8; 4] = *b"MIXA";
pub const OFFSET: [u8; 4] = *b"OFFA";
pub const READOUT: [u8; 4] = *b"MIXB";
pub const SOURCES: [u8; 4] = *b"SRCS";
pub const BASIS: [u8; 4] = *b"BASF";
pub const INPUTS: [u8; 4] = *b"INPX";
pub const INPUT_MEAN: [u8; 4] = *b"XMEA";
pub const PCA_WEIGHTS: [u8; 4] = *b"WPCA";
pub const ICA_WEIGHTS: [u8; 4] = *b"WICA";

/// Refuse sections larger than this many entries when reading.
const MAX_ENTRIES: u64 = 1 << 34;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub n_s: u64,
    pub n_f: u64,
    pub n_x: u64,
    pub seed: u64,
    pub nonlinearity: Nonlinearity,
    pub source_dist: SourceDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub tag: [u8; 4],
    pub data: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    pub sections: Vec<Section>,
}

fn row(v: &Vector) -> Matrix {
    v.clone().insert_axis(ndarray::Axis(0))
}

impl Container {
    /// Header plus `MIXA`, `OFFA`, `MIXB`.
    pub fn from_process(p: &GenerativeProcess) -> Self {
        Self {
            header: Header {
                n_s: p.n_s as u64,
                n_f: p.n_f as u64,
                n_x: p.n_x as u64,
                seed: p.seed,
                nonlinearity: p.nonlinearity,
                source_dist: p.source_dist,
            },
            sections: vec![
                Section {
                    tag: MIXING,
                    data: p.mixing.clone(),
                },
                Section {
                    tag: OFFSET,
                    data: row(&p.offset),
                },
                Section {
                    tag: READOUT,
                    data: p.readout.clone(),
                },
            ],
        }
    }

    /// Appends `SRCS`, `BASF`, `XMEA` and, when `with_inputs`, `INPX`.
    pub fn push_batch(&mut self, p: &GenerativeProcess, batch: &SampleBatch, with_inputs: bool) {
        self.push(SOURCES, batch.sources.clone());
        self.push(BASIS, batch.basis(p));
        if with_inputs {
            self.push(INPUTS, batch.inputs(p));
        }
        self.push(INPUT_MEAN, row(&batch.input_mean));
    }

    pub fn push_encoders(&mut self, pca: Option<&PcaEncoder>, ica: Option<&IcaEncoder>) {
        if let Some(pca) = pca {
            self.push(PCA_WEIGHTS, pca.w_pca.clone());
        }
        if let Some(ica) = ica {
            self.push(ICA_WEIGHTS, ica.w_ica.clone());
        }
    }

    pub fn push(&mut self, tag: [u8; 4], data: Matrix) {
        self.sections.push(Section { tag, data });
    }

    pub fn section(&self, tag: [u8; 4]) -> Option<&Matrix> {
        self.sections.iter().find(|s| s.tag == tag).map(|s| &s.data)
    }

    /// Rebuilds the process from its three parameter sections.
    pub fn process(&self) -> Result<GenerativeProcess> {
        let get = |tag: [u8; 4]| {
            self.section(tag).cloned().ok_or_else(|| {
                AslnError::Format(format!("missing section {}", String::from_utf8_lossy(&tag)))
            })
        };
        let offset = get(OFFSET)?;
        if offset.nrows() != 1 {
            return Err(AslnError::Format("offset section must be a single row".into()));
        }
        let mut p = GenerativeProcess::from_parts(
            get(MIXING)?,
            offset.row(0).to_owned(),
            get(READOUT)?,
            self.header.nonlinearity,
            self.header.source_dist,
        )?;
        if (p.n_s as u64, p.n_f as u64, p.n_x as u64)
            != (self.header.n_s, self.header.n_f, self.header.n_x)
        {
            return Err(AslnError::Format("header dimensions disagree with sections".into()));
        }
        p.seed = self.header.seed;
        Ok(p)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        for v in [h.n_s, h.n_f, h.n_x, h.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[h.nonlinearity.tag(), h.source_dist.tag()])?;
        let count = u32::try_from(self.sections.len())
            .map_err(|_| AslnError::Format("too many sections".into()))?;
        w.write_all(&count.to_le_bytes())?;
        for s in &self.sections {
            w.write_all(&s.tag)?;
            w.write_all(&(s.data.nrows() as u64).to_le_bytes())?;
            w.write_all(&(s.data.ncols() as u64).to_le_bytes())?;
            for v in s.data.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(AslnError::Format("bad magic".into()));
        }
        let n_s = read_u64(r)?;
        let n_f = read_u64(r)?;
        let n_x = read_u64(r)?;
        let seed = read_u64(r)?;
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags)?;
        let nonlinearity = Nonlinearity::from_tag(tags[0])
            .ok_or_else(|| AslnError::Format(format!("unknown nonlinearity tag {}", tags[0])))?;
        let source_dist = SourceDistribution::from_tag(tags[1])
            .ok_or_else(|| AslnError::Format(format!("unknown source tag {}", tags[1])))?;
        let mut count = [0u8; 4];
        r.read_exact(&mut count)?;
        let count = u32::from_le_bytes(count);
        let mut sections = Vec::new();
        for _ in 0..count {
            let mut tag = [0u8; 4];
            r.read_exact(&mut tag)?;
            let rows = read_u64(r)?;
            let cols = read_u64(r)?;
            let n = rows
                .checked_mul(cols)
                .filter(|&n| n <= MAX_ENTRIES)
                .ok_or_else(|| AslnError::Format(format!("section of {rows}x{cols}")))?;
            let mut bytes = vec![0u8; n as usize * 8];
            r.read_exact(&mut bytes)?;
            let values = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let data = Matrix::from_shape_vec((rows as usize, cols as usize), values)
                .map_err(|e| AslnError::Format(e.to_string()))?;
            sections.push(Section { tag, data });
        }
        Ok(Self {
            header: Header {
                n_s,
                n_f,
                n_x,
                seed,
                nonlinearity,
                source_dist,
            },
            sections,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
