//! Workload files: JSON lines, or a compact little-endian binary form.
//! Both start with the same header and carry the same records.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Correlation, Workload, WorkloadHeader, WorkloadRecord};
use crate::bitmap::{FilterBitmap, Run};
use crate::dataset::{DistanceMetric, Neighbor};
use crate::error::{Error, Result};

pub(crate) const VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"FVSWKLD\0";
const FORMAT_TAG: &str = "fvs-workload";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadFormat {
    JsonLines,
    Binary,
}

impl WorkloadFormat {
    /// `.bin` means binary; anything else is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => WorkloadFormat::Binary,
            _ => WorkloadFormat::JsonLines,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    #[serde(flatten)]
    header: WorkloadHeader,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    query_id: u32,
    selectivity: f64,
    correlation: Correlation,
    seed: u64,
    universe: usize,
    bitmap: Vec<(u32, u32)>,
    truth: BTreeMap<usize, Vec<(u32, f32)>>,
}

impl From<&WorkloadRecord> for RecordLine {
    fn from(r: &WorkloadRecord) -> Self {
        Self {
            query_id: r.query_id,
            selectivity: r.selectivity,
            correlation: r.correlation,
            seed: r.seed,
            universe: r.bitmap.universe(),
            bitmap: r.bitmap.to_runs().iter().map(|x| (x.start, x.len)).collect(),
            truth: r
                .truth
                .iter()
                .map(|(&k, v)| (k, v.iter().map(|n| (n.rowid, n.score)).collect()))
                .collect(),
        }
    }
}

impl RecordLine {
    fn into_record(self) -> Result<WorkloadRecord> {
        let runs: Vec<Run> = self
            .bitmap
            .into_iter()
            .map(|(start, len)| Run { start, len })
            .collect();
        Ok(WorkloadRecord {
            query_id: self.query_id,
            selectivity: self.selectivity,
            correlation: self.correlation,
            seed: self.seed,
            bitmap: FilterBitmap::from_runs(self.universe, &runs)?,
            truth: self
                .truth
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(|(r, s)| Neighbor::new(r, s)).collect()))
                .collect(),
        })
    }
}

pub fn write_workload(w: &Workload, path: impl AsRef<Path>, format: WorkloadFormat) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    match format {
        WorkloadFormat::JsonLines => {
            let head = HeaderLine {
                format: FORMAT_TAG.into(),
                header: w.header.clone(),
            };
            serde_json::to_writer(&mut out, &head)?;
            out.write_all(b"\n")?;
            for r in &w.records {
                serde_json::to_writer(&mut out, &RecordLine::from(r))?;
                out.write_all(b"\n")?;
            }
        }
        WorkloadFormat::Binary => out.write_all(&to_binary(w)?)?,
    }
    out.flush()?;
    Ok(())
}

/// Detects the format from the leading bytes.
pub fn read_workload(path: impl AsRef<Path>) -> Result<Workload> {
    let mut f = BufReader::new(std::fs::File::open(path)?);
    let head = f.fill_buf()?;
    if head.starts_with(MAGIC) {
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        return from_binary(&buf);
    }
    let mut lines = f.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty workload file".into()))??;
    let head: HeaderLine = serde_json::from_str(&first)?;
    if head.format != FORMAT_TAG {
        return Err(Error::Malformed(format!("not a workload file: {:?}", head.format)));
    }
    check_version(head.header.version)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RecordLine = serde_json::from_str(&line)?;
        records.push(r.into_record()?);
    }
    Ok(Workload {
        header: head.header,
        records,
    })
}

fn check_version(v: u32) -> Result<()> {
    if v != VERSION {
        return Err(Error::Malformed(format!("unsupported workload version {v}")));
    }
    Ok(())
}

fn to_binary(w: &Workload) -> Result<Vec<u8>> {
    let mut o = Vec::new();
    o.extend_from_slice(MAGIC);
    o.extend_from_slice(&VERSION.to_le_bytes());
    let hash = hex::decode(&w.header.dataset_hash).map_err(|e| Error::Malformed(e.to_string()))?;
    o.extend_from_slice(&(hash.len() as u32).to_le_bytes());
    o.extend_from_slice(&hash);
    o.extend_from_slice(&(w.header.n as u64).to_le_bytes());
    o.extend_from_slice(&(w.header.dim as u32).to_le_bytes());
    o.push(match w.header.metric {
        DistanceMetric::L2Squared => 0,
        DistanceMetric::InnerProduct => 1,
    });
    o.extend_from_slice(&w.header.tau.to_le_bytes());
    o.extend_from_slice(&(w.header.ks.len() as u32).to_le_bytes());
    for &k in &w.header.ks {
        o.extend_from_slice(&(k as u32).to_le_bytes());
    }
    o.extend_from_slice(&(w.header.queries.len() as u32).to_le_bytes());
    for q in &w.header.queries {
        for x in q {
            o.extend_from_slice(&x.to_le_bytes());
        }
    }
    o.extend_from_slice(&(w.records.len() as u64).to_le_bytes());
    for r in &w.records {
        o.extend_from_slice(&r.query_id.to_le_bytes());
        o.extend_from_slice(&r.selectivity.to_le_bytes());
        o.push(r.correlation.code());
        o.extend_from_slice(&r.seed.to_le_bytes());
        let runs = r.bitmap.to_runs();
        o.extend_from_slice(&(runs.len() as u32).to_le_bytes());
        for x in runs {
            o.extend_from_slice(&x.start.to_le_bytes());
            o.extend_from_slice(&x.len.to_le_bytes());
        }
        o.extend_from_slice(&(r.truth.len() as u32).to_le_bytes());
        for (&k, v) in &r.truth {
            o.extend_from_slice(&(k as u32).to_le_bytes());
            o.extend_from_slice(&(v.len() as u32).to_le_bytes());
            for n in v {
                o.extend_from_slice(&n.rowid.to_le_bytes());
                o.extend_from_slice(&n.score.to_le_bytes());
            }
        }
    }
    Ok(o)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Malformed("truncated workload file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

fn from_binary(buf: &[u8]) -> Result<Workload> {
    let mut r = Reader { buf, pos: MAGIC.len() };
    check_version(r.u32()?)?;
    let hlen = r.u32()? as usize;
    let dataset_hash = hex::encode(r.take(hlen)?);
    let n = r.u64()? as usize;
    let dim = r.u32()? as usize;
    let metric = match r.u8()? {
        0 => DistanceMetric::L2Squared,
        1 => DistanceMetric::InnerProduct,
        m => return Err(Error::Malformed(format!("metric code {m}"))),
    };
    let tau = r.f64()?;
    let ks = (0..r.u32()?)
        .map(|_| r.u32().map(|k| k as usize))
        .collect::<Result<Vec<_>>>()?;
    let nq = r.u32()? as usize;
    let mut queries = Vec::with_capacity(nq);
    for _ in 0..nq {
        queries.push((0..dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?);
    }
    let nrec = r.u64()? as usize;
    let mut records = Vec::with_capacity(nrec.min(1 << 20));
    for _ in 0..nrec {
        let query_id = r.u32()?;
        let selectivity = r.f64()?;
        let correlation = Correlation::from_code(r.u8()?).map_err(|e| Error::Malformed(e.to_string()))?;
        let seed = r.u64()?;
        let nruns = r.u32()?;
        let runs = (0..nruns)
            .map(|_| Ok(Run {
                start: r.u32()?,
                len: r.u32()?,
            }))
            .collect::<Result<Vec<_>>>()?;
        let mut truth = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.u32()? as usize;
            let len = r.u32()?;
            let v = (0..len)
                .map(|_| Ok(Neighbor::new(r.u32()?, r.f32()?)))
                .collect::<Result<Vec<_>>>()?;
            truth.insert(k, v);
        }
        records.push(WorkloadRecord {
            query_id,
            selectivity,
            correlation,
            seed,
            bitmap: FilterBitmap::from_runs(n, &runs)?,
            truth,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Malformed("trailing bytes in workload file".into()));
    }
    Ok(Workload {
        header: WorkloadHeader {
            version: VERSION,
            dataset_hash,
            n,
            dim,
            metric,
            ks,
            tau,
            queries,
        },
        records,
    })
}
