//! Snapshot and measurement archives: a JSON manifest plus a binary file of
//! little-endian `f64` records, each `n` values long. Manifest offsets are in
//! bytes from the start of the binary file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bathy::observer::ObserverSnapshot;
use bathy::{Field, MeasurementStream, ModelKind, ModelSpec, ObserverParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SNAPSHOT_FORMAT: &str = "bathy-snapshots";
pub const STREAM_FORMAT: &str = "bathy-stream";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub spacing: f64,
    pub eta_records: [u64; 5],
    pub eta_tilde: u64,
    pub q_x: u64,
    pub truth_q_x: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub mu: f64,
    pub n: usize,
    pub dt: f64,
    pub cadence: usize,
    pub lambda: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub zeta_c: f64,
    pub t_end: f64,
    pub data_file: String,
    /// Offset of the true bottom, when the run was coupled to a known truth.
    pub truth_bottom: Option<u64>,
    pub snapshots: Vec<SnapshotEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub mu: f64,
    pub n: usize,
    pub dt: f64,
    pub start: f64,
    pub spacing: f64,
    pub records: usize,
    pub data_file: String,
    pub bottom: u64,
    /// Offset of the first `eta` record; the rest follow contiguously.
    pub first_record: u64,
}

/// Appends `f64` records to a binary file and hands back their offsets.
pub struct RecordWriter {
    path: PathBuf,
    out: BufWriter<File>,
    offset: u64,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file), offset: 0 })
    }

    pub fn write(&mut self, values: &[f64]) -> Result<u64> {
        let at = self.offset;
        for v in values {
            self.out.write_all(&v.to_le_bytes()).map_err(|e| CliError::io(&self.path, e))?;
        }
        self.offset += 8 * values.len() as u64;
        Ok(at)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

struct RecordReader {
    path: PathBuf,
    bytes: Vec<u8>,
    n: usize,
}

impl RecordReader {
    fn open(path: PathBuf, n: usize) -> Result<Self> {
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { path, bytes, n })
    }

    fn read(&self, offset: u64) -> Result<Field<f64>> {
        let start = usize::try_from(offset).map_err(|_| CliError::archive(&self.path, "offset out of range"))?;
        let end = start
            .checked_add(8 * self.n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::archive(&self.path, format!("record at {offset} runs past the end of the file")))?;
        let values = self.bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Field::new(values)?)
    }
}

fn read_manifest<M: for<'de> Deserialize<'de>>(path: &Path) -> Result<M> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::archive(path, e.to_string()))
}

fn write_manifest<M: Serialize>(path: &Path, manifest: &M) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn check_header(path: &Path, format: &str, expected: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(CliError::archive(path, format!("format `{format}`, expected `{expected}`")));
    }
    if version != VERSION {
        return Err(CliError::archive(path, format!("unsupported version {version}")));
    }
    Ok(())
}

fn data_path(manifest: &Path, data_file: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(data_file)
}

fn model_of(path: &Path, name: &str, mu: f64) -> Result<ModelSpec<f64>> {
    let kind: ModelKind = name.parse().map_err(|e: bathy::Error| CliError::archive(path, e.to_string()))?;
    ModelSpec::new(kind, mu).map_err(|e| CliError::archive(path, e.to_string()))
}

/// Run metadata stored next to the snapshots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotRunInfo {
    pub model: ModelSpec<f64>,
    pub dt: f64,
    pub cadence: usize,
    pub params: ObserverParams<f64>,
    pub epsilon: f64,
    pub zeta_c: f64,
    pub t_end: f64,
}

/// Writes `<stem>.json` and `<stem>.bin` in `dir`; returns the manifest path.
pub fn write_snapshots(
    dir: &Path,
    stem: &str,
    info: &SnapshotRunInfo,
    snapshots: &[ObserverSnapshot<f64>],
    truth_bottom: Option<&Field<f64>>,
) -> Result<PathBuf> {
    let n = snapshots.first().map(|s| s.q_x.len()).or(truth_bottom.map(Field::len)).unwrap_or(0);
    let data_file = format!("{stem}.bin");
    let mut w = RecordWriter::create(&dir.join(&data_file))?;
    let truth = truth_bottom.map(|z| w.write(z.values())).transpose()?;
    let mut entries = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let mut eta_records = [0u64; 5];
        for (slot, rec) in eta_records.iter_mut().zip(&s.eta_records) {
            *slot = w.write(rec.values())?;
        }
        entries.push(SnapshotEntry {
            time: s.time,
            spacing: s.spacing,
            eta_records,
            eta_tilde: w.write(s.eta_tilde.values())?,
            q_x: w.write(s.q_x.values())?,
            truth_q_x: s.truth_q_x.as_ref().map(|f| w.write(f.values())).transpose()?,
        });
    }
    w.finish()?;
    let manifest = SnapshotManifest {
        format: SNAPSHOT_FORMAT.into(),
        version: VERSION,
        model: info.model.kind().name().into(),
        mu: info.model.mu(),
        n,
        dt: info.dt,
        cadence: info.cadence,
        lambda: info.params.lambda,
        nu: info.params.nu,
        epsilon: info.epsilon,
        zeta_c: info.zeta_c,
        t_end: info.t_end,
        data_file,
        truth_bottom: truth,
        snapshots: entries,
    };
    let path = dir.join(format!("{stem}.json"));
    write_manifest(&path, &manifest)?;
    Ok(path)
}

#[derive(Clone, Debug)]
pub struct SnapshotArchive {
    pub manifest: SnapshotManifest,
    pub model: ModelSpec<f64>,
    pub snapshots: Vec<ObserverSnapshot<f64>>,
    pub truth_bottom: Option<Field<f64>>,
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotArchive> {
    let manifest: SnapshotManifest = read_manifest(path)?;
    check_header(path, &manifest.format, SNAPSHOT_FORMAT, manifest.version)?;
    let model = model_of(path, &manifest.model, manifest.mu)?;
    let reader = RecordReader::open(data_path(path, &manifest.data_file), manifest.n)?;
    let truth_bottom = manifest.truth_bottom.map(|o| reader.read(o)).transpose()?;
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for e in &manifest.snapshots {
        let eta_records = [
            reader.read(e.eta_records[0])?,
            reader.read(e.eta_records[1])?,
            reader.read(e.eta_records[2])?,
            reader.read(e.eta_records[3])?,
            reader.read(e.eta_records[4])?,
        ];
        snapshots.push(ObserverSnapshot {
            time: e.time,
            eta_records,
            spacing: e.spacing,
            eta_tilde: reader.read(e.eta_tilde)?,
            q_x: reader.read(e.q_x)?,
            truth_q_x: e.truth_q_x.map(|o| reader.read(o)).transpose()?,
        });
    }
    Ok(SnapshotArchive { manifest, model, snapshots, truth_bottom })
}

/// Streams surface records to `<stem>.bin` as they are produced.
pub struct StreamWriter {
    dir: PathBuf,
    stem: String,
    writer: RecordWriter,
    manifest: StreamManifest,
}

impl StreamWriter {
    pub fn create(dir: &Path, stem: &str, model: &ModelSpec<f64>, dt: f64, start: f64, spacing: f64, bottom: &Field<f64>) -> Result<Self> {
        let data_file = format!("{stem}.bin");
        let mut writer = RecordWriter::create(&dir.join(&data_file))?;
        let bottom_at = writer.write(bottom.values())?;
        let manifest = StreamManifest {
            format: STREAM_FORMAT.into(),
            version: VERSION,
            model: model.kind().name().into(),
            mu: model.mu(),
            n: bottom.len(),
            dt,
            start,
            spacing,
            records: 0,
            data_file,
            bottom: bottom_at,
            first_record: writer.offset,
        };
        Ok(Self { dir: dir.to_path_buf(), stem: stem.into(), writer, manifest })
    }

    pub fn push(&mut self, eta: &Field<f64>) -> Result<()> {
        self.writer.write(eta.values())?;
        self.manifest.records += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf> {
        self.writer.finish()?;
        let path = self.dir.join(format!("{}.json", self.stem));
        write_manifest(&path, &self.manifest)?;
        Ok(path)
    }
}

#[derive(Clone, Debug)]
pub struct StreamArchive {
    pub manifest: StreamManifest,
    pub model: ModelSpec<f64>,
    pub stream: MeasurementStream<f64>,
    pub bottom: Field<f64>,
}

pub fn read_stream(path: &Path) -> Result<StreamArchive> {
    let manifest: StreamManifest = read_manifest(path)?;
    check_header(path, &manifest.format, STREAM_FORMAT, manifest.version)?;
    let model = model_of(path, &manifest.model, manifest.mu)?;
    let reader = RecordReader::open(data_path(path, &manifest.data_file), manifest.n)?;
    let bottom = reader.read(manifest.bottom)?;
    let records = (0..manifest.records as u64)
        .map(|i| reader.read(manifest.first_record + i * 8 * manifest.n as u64))
        .collect::<Result<Vec<_>>>()?;
    let stream = MeasurementStream::new(manifest.start, manifest.spacing, records)
        .map_err(|e| CliError::archive(path, e.to_string()))?;
    Ok(StreamArchive { manifest, model, stream, bottom })
}
