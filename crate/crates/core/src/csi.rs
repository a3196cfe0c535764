//! CSI instances, labeled datasets, stratified fold plans, and the CSIT
//! binary dataset format.
//!
//! One instance holds m complex channel measurements over n subcarriers and
//! c antenna pairs, stored as a real tensor of shape `[2m, n, c]` with
//! real/imaginary parts interleaved along axis 0: row `2i` is Re of
//! measurement `i`, row `2i+1` is Im. A 2x1 kernel with stride 2x1 over
//! axis 0 therefore spans exactly the (Re, Im) pair of one
//! sample-subcarrier cell and never mixes neighbouring measurements.
//!
//! # CSIT file format (little-endian)
//!
//! ```text
//! bytes 0..4    magic "CSIT" (43 53 49 54)
//! bytes 4..8    u32 version = 1
//! bytes 8..24   u32 num_instances, u32 m, u32 n, u32 c
//! bytes 24..28  u32 num_classes
//! then          num_classes x (u16 byte_len, UTF-8 label name)
//! then          u32 meta_count, meta_count x (u16-len UTF-8 key, u16-len UTF-8 value)
//! then per instance: u32 label, 2*m*n*c f32 values in row-major [2m, n, c] order
//! ```
//!
//! Values are stored as f32; in-memory compute is f64. A dataset whose
//! plane values are exactly representable in f32 round-trips field-for-field;
//! `write(read(stream))` reproduces any valid stream byte-for-byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::Tensor;

pub const CSIT_MAGIC: [u8; 4] = *b"CSIT";
pub const CSIT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CsiError {
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("heterogeneous instance shapes: {0}")]
    HeterogeneousShapes(String),
    #[error("bad magic bytes (not a CSIT stream)")]
    BadMagic,
    #[error("unsupported CSIT version {0}")]
    VersionUnsupported(u32),
    #[error("truncated CSIT stream")]
    TruncatedStream,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("class {class} has {count} instances, need at least {k} for {k} folds")]
    TooFewInstances {
        class: usize,
        count: usize,
        k: usize,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CsiError>;

/// One labeled context instance: planes of shape `[2m, n, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiInstance {
    planes: Tensor,
    label: usize,
    m: usize,
    n: usize,
    c: usize,
}

impl CsiInstance {
    /// Wrap an interleaved plane tensor. The shape must be `[2m, n, c]`.
    pub fn new(planes: Tensor, label: usize) -> Result<Self> {
        let shape = planes.shape();
        if shape.len() != 3 || shape[0] % 2 != 0 {
            return Err(CsiError::InvariantViolation(format!(
                "instance planes must have shape [2m, n, c], got {:?}",
                shape
            )));
        }
        let (m, n, c) = (shape[0] / 2, shape[1], shape[2]);
        Ok(CsiInstance {
            planes,
            label,
            m,
            n,
            c,
        })
    }

    /// Build from a complex field: `f(sample, subcarrier, antenna) -> (re, im)`.
    pub fn from_complex_fn(
        m: usize,
        n: usize,
        c: usize,
        label: usize,
        mut f: impl FnMut(usize, usize, usize) -> (f64, f64),
    ) -> Self {
        let mut planes = Tensor::zeros(&[2 * m, n, c]);
        for i in 0..m {
            for j in 0..n {
                for a in 0..c {
                    let (re, im) = f(i, j, a);
                    planes.set(&[2 * i, j, a], re);
                    planes.set(&[2 * i + 1, j, a], im);
                }
            }
        }
        CsiInstance {
            planes,
            label,
            m,
            n,
            c,
        }
    }

    pub fn planes(&self) -> &Tensor {
        &self.planes
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn with_label(&self, label: usize) -> CsiInstance {
        CsiInstance {
            label,
            ..self.clone()
        }
    }

    /// Replace planes, keeping the label. The new tensor must have the same shape.
    pub fn with_planes(&self, planes: Tensor) -> Result<CsiInstance> {
        if planes.shape() != self.planes.shape() {
            return Err(CsiError::HeterogeneousShapes(format!(
                "replacement planes {:?} vs {:?}",
                planes.shape(),
                self.planes.shape()
            )));
        }
        CsiInstance::new(planes, self.label)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// Complex value at (sample, subcarrier, antenna) as an (re, im) pair.
    pub fn complex_at(
        &self,
        sample: usize,
        subcarrier: usize,
        antenna: usize,
    ) -> Result<(f64, f64)> {
        if sample >= self.m || subcarrier >= self.n || antenna >= self.c {
            return Err(CsiError::IndexOutOfRange(format!(
                "({}, {}, {}) in instance of shape m={}, n={}, c={}",
                sample, subcarrier, antenna, self.m, self.n, self.c
            )));
        }
        Ok((
            self.planes.at(&[2 * sample, subcarrier, antenna]),
            self.planes.at(&[2 * sample + 1, subcarrier, antenna]),
        ))
    }
}

/// Ordered collection of homogeneous instances plus label vocabulary and
/// free-form provenance metadata. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiDataset {
    instances: Vec<CsiInstance>,
    label_names: Vec<String>,
    meta: BTreeMap<String, String>,
}

impl CsiDataset {
    pub fn new(
        instances: Vec<CsiInstance>,
        label_names: Vec<String>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| CsiError::InvariantViolation("dataset must be non-empty".into()))?;
        let (m, n, c) = (first.m, first.n, first.c);
        for (i, inst) in instances.iter().enumerate() {
            if (inst.m, inst.n, inst.c) != (m, n, c) {
                return Err(CsiError::HeterogeneousShapes(format!(
                    "instance {} has (m,n,c)=({},{},{}), expected ({},{},{})",
                    i, inst.m, inst.n, inst.c, m, n, c
                )));
            }
            if inst.label >= label_names.len() {
                return Err(CsiError::InvariantViolation(format!(
                    "instance {} label {} outside vocabulary of {}",
                    i,
                    inst.label,
                    label_names.len()
                )));
            }
        }
        Ok(CsiDataset {
            instances,
            label_names,
            meta,
        })
    }

    pub fn instances(&self) -> &[CsiInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn m(&self) -> usize {
        self.instances[0].m
    }

    pub fn n(&self) -> usize {
        self.instances[0].n
    }

    pub fn c(&self) -> usize {
        self.instances[0].c
    }

    /// Input shape seen by a network: `(2m, n, c)`.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        (2 * self.m(), self.n(), self.c())
    }

    /// New dataset with the same vocabulary/meta and a subset of instances.
    pub fn select(&self, indices: &[usize]) -> Result<CsiDataset> {
        let instances = indices
            .iter()
            .map(|&i| {
                self.instances
                    .get(i)
                    .cloned()
                    .ok_or_else(|| CsiError::IndexOutOfRange(format!("instance {}", i)))
            })
            .collect::<Result<Vec<_>>>()?;
        CsiDataset::new(instances, self.label_names.clone(), self.meta.clone())
    }

    /// Split into (train, test) taking the first `train_per_class` instances
    /// of every class in dataset order.
    pub fn split_per_class(&self, train_per_class: usize) -> Result<(CsiDataset, CsiDataset)> {
        let mut taken = vec![0usize; self.num_classes()];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, inst) in self.instances.iter().enumerate() {
            if taken[inst.label] < train_per_class {
                taken[inst.label] += 1;
                train.push(i);
            } else {
                test.push(i);
            }
        }
        if train.is_empty() || test.is_empty() {
            return Err(CsiError::InvariantViolation(format!(
                "split {} per class leaves an empty side ({} train / {} test)",
                train_per_class,
                train.len(),
                test.len()
            )));
        }
        Ok((self.select(&train)?, self.select(&test)?))
    }
}

/// Assignment of every instance to exactly one of k folds.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Instance indices of fold `f`.
    pub fn fold_indices(&self, f: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == f)
            .map(|(i, _)| i)
            .collect()
    }

    /// (train, test) indices for fold `f`: test is fold f, train is the rest.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &a) in self.assignment.iter().enumerate() {
            if a == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Stratified, seed-deterministic k-fold assignment. Within every class the
/// (shuffled) instances are dealt round-robin, so per-class counts across
/// folds differ by at most 1.
pub fn make_folds(ds: &CsiDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(CsiError::InvariantViolation(format!(
            "k must be >= 2, got {}",
            k
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, inst) in ds.instances().iter().enumerate() {
        by_class[inst.label()].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(CsiError::TooFewInstances {
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut assignment = vec![0usize; ds.len()];
    for (class, members) in by_class.iter().enumerate() {
        let mut order = members.clone();
        Rng::substream(seed, &[0x666f_6c64, class as u64]).shuffle(&mut order);
        for (pos, &idx) in order.iter().enumerate() {
            assignment[idx] = pos % k;
        }
    }
    Ok(FoldPlan { k, assignment })
}

// --- CSIT serialization -----------------------------------------------------

struct Counter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> Write for Counter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.written += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn write_str16<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    if bytes.len() > u16::MAX as usize {
        return Err(CsiError::InvariantViolation(format!(
            "string of {} bytes exceeds u16 length prefix",
            bytes.len()
        )));
    }
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

/// Serialize a dataset to the CSIT format. Returns the byte count written.
pub fn write_dataset<W: Write>(ds: &CsiDataset, sink: W) -> Result<u64> {
    let mut w = Counter {
        inner: sink,
        written: 0,
    };
    w.write_all(&CSIT_MAGIC)?;
    w.write_all(&CSIT_VERSION.to_le_bytes())?;
    for v in [
        ds.len() as u32,
        ds.m() as u32,
        ds.n() as u32,
        ds.c() as u32,
        ds.num_classes() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for name in ds.label_names() {
        write_str16(&mut w, name)?;
    }
    w.write_all(&(ds.meta().len() as u32).to_le_bytes())?;
    for (key, value) in ds.meta() {
        write_str16(&mut w, key)?;
        write_str16(&mut w, value)?;
    }
    let mut buf = Vec::with_capacity(ds.instances[0].planes().size() * 4);
    for inst in ds.instances() {
        w.write_all(&(inst.label() as u32).to_le_bytes())?;
        buf.clear();
        for &v in inst.planes().data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(w.written)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            CsiError::TruncatedStream
        } else {
            CsiError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str16<R: Read>(r: &mut R) -> Result<String> {
    let mut b = [0u8; 2];
    read_exact_or_truncated(r, &mut b)?;
    let len = u16::from_le_bytes(b) as usize;
    let mut bytes = vec![0u8; len];
    read_exact_or_truncated(r, &mut bytes)?;
    String::from_utf8(bytes)
        .map_err(|_| CsiError::InvariantViolation("label/meta string is not UTF-8".into()))
}

/// Parse a CSIT stream back into a dataset, validating all invariants.
pub fn read_dataset<R: Read>(mut source: R) -> Result<CsiDataset> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut source, &mut magic)?;
    if magic != CSIT_MAGIC {
        return Err(CsiError::BadMagic);
    }
    let version = read_u32(&mut source)?;
    if version != CSIT_VERSION {
        return Err(CsiError::VersionUnsupported(version));
    }
    let num_instances = read_u32(&mut source)? as usize;
    let m = read_u32(&mut source)? as usize;
    let n = read_u32(&mut source)? as usize;
    let c = read_u32(&mut source)? as usize;
    let num_classes = read_u32(&mut source)? as usize;
    if num_instances == 0 || m == 0 || n == 0 || c == 0 {
        return Err(CsiError::InvariantViolation(format!(
            "degenerate header: instances={}, m={}, n={}, c={}",
            num_instances, m, n, c
        )));
    }
    let mut label_names = Vec::with_capacity(num_classes.min(1 << 16));
    for _ in 0..num_classes {
        label_names.push(read_str16(&mut source)?);
    }
    let meta_count = read_u32(&mut source)? as usize;
    let mut meta = BTreeMap::new();
    for _ in 0..meta_count {
        let key = read_str16(&mut source)?;
        let value = read_str16(&mut source)?;
        meta.insert(key, value);
    }
    let plane_len = 2 * m * n * c;
    let mut instances = Vec::with_capacity(num_instances.min(1 << 20));
    let mut raw = vec![0u8; plane_len * 4];
    for _ in 0..num_instances {
        let label = read_u32(&mut source)? as usize;
        read_exact_or_truncated(&mut source, &mut raw)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|ch| f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]) as f64)
            .collect();
        let planes = Tensor::from_vec(&[2 * m, n, c], data)
            .map_err(|e| CsiError::InvariantViolation(e.to_string()))?;
        instances.push(CsiInstance::new(planes, label)?);
    }
    CsiDataset::new(instances, label_names, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> CsiDataset {
        let mut meta = BTreeMap::new();
        meta.insert("source".into(), "unit-test".into());
        let instances = (0..4)
            .map(|k| {
                CsiInstance::from_complex_fn(1, 2, 1, k % 2, |i, j, a| {
                    ((i + j + a + k) as f64, (k as f64) * 0.5)
                })
            })
            .collect();
        CsiDataset::new(instances, vec!["left".into(), "right".into()], meta).unwrap()
    }

    #[test]
    fn complex_at_reads_interleaved_rows() {
        let inst = CsiInstance::from_complex_fn(2, 2, 1, 0, |i, j, _| {
            if (i, j) == (0, 0) {
                (3.0, 4.0)
            } else {
                (1.0, 0.0)
            }
        });
        assert_eq!(inst.complex_at(0, 0, 0).unwrap(), (3.0, 4.0));
        assert_eq!(inst.complex_at(1, 1, 0).unwrap(), (1.0, 0.0));
        assert!(matches!(
            inst.complex_at(2, 0, 0),
            Err(CsiError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn header_leads_with_magic() {
        let ds = tiny_dataset();
        let mut bytes = Vec::new();
        write_dataset(&ds, &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"CSIT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn round_trip_identity() {
        let ds = tiny_dataset();
        let mut bytes = Vec::new();
        let count = write_dataset(&ds, &mut bytes).unwrap();
        assert_eq!(count as usize, bytes.len());
        let back = read_dataset(bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
        // Byte-level: write(read(stream)) reproduces the stream.
        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let ds = tiny_dataset();
        let mut bytes = Vec::new();
        write_dataset(&ds, &mut bytes).unwrap();

        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        assert!(matches!(
            read_dataset(corrupted.as_slice()),
            Err(CsiError::BadMagic)
        ));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            read_dataset(truncated),
            Err(CsiError::TruncatedStream)
        ));

        let mut wrong_version = bytes.clone();
        wrong_version[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            read_dataset(wrong_version.as_slice()),
            Err(CsiError::VersionUnsupported(7))
        ));
    }

    #[test]
    fn heterogeneous_shapes_rejected() {
        let a = CsiInstance::from_complex_fn(1, 30, 1, 0, |_, _, _| (0.0, 0.0));
        let b = CsiInstance::from_complex_fn(1, 52, 1, 0, |_, _, _| (0.0, 0.0));
        let err = CsiDataset::new(vec![a, b], vec!["x".into()], BTreeMap::new());
        assert!(matches!(err, Err(CsiError::HeterogeneousShapes(_))));
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let instances: Vec<CsiInstance> = (0..10)
            .map(|k| CsiInstance::from_complex_fn(1, 2, 1, 0, move |_, _, _| (k as f64, 0.0)))
            .collect();
        let ds = CsiDataset::new(instances, vec!["only".into()], BTreeMap::new()).unwrap();
        let plan = make_folds(&ds, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(plan.fold_indices(f).len(), 2);
        }
        assert_eq!(plan, make_folds(&ds, 5, 3).unwrap());
        assert_ne!(plan, make_folds(&ds, 5, 4).unwrap());
    }

    #[test]
    fn too_few_instances() {
        let instances: Vec<CsiInstance> = (0..3)
            .map(|_| CsiInstance::from_complex_fn(1, 2, 1, 0, |_, _, _| (1.0, 0.0)))
            .collect();
        let ds = CsiDataset::new(instances, vec!["only".into()], BTreeMap::new()).unwrap();
        assert!(matches!(
            make_folds(&ds, 5, 0),
            Err(CsiError::TooFewInstances { .. })
        ));
    }

    #[test]
    fn split_per_class_takes_leading_instances() {
        let ds = tiny_dataset();
        let (train, test) = ds.split_per_class(1).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(test.len(), 2);
        assert_eq!(train.num_classes(), 2);
    }
}
