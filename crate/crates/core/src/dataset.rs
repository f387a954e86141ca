//! Finite datasets: the empirical mixture the oracle is computed over.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"FSDS";
const BINARY_VERSION: u8 = 1;

/// Read-only access to a set of D-dimensional points.
pub trait PointSet: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn row(&self, i: usize) -> &[f64];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for i in 0..self.len() {
            for (acc, v) in m.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
    Binary,
}

impl DataFormat {
    /// `.csv` selects CSV, anything else the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>,
    n: usize,
    d: usize,
    labels: Option<Vec<u32>>,
    num_classes: usize,
    name: String,
    rms_norm: f64,
}

impl Dataset {
    /// `points` is row-major `n x d`.
    pub fn new(points: Vec<f64>, d: usize, labels: Option<Vec<u32>>, name: impl Into<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dataset dimension must be at least 1"));
        }
        if points.is_empty() || !points.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "dataset needs a non-empty n x {d} matrix, got {} values",
                points.len()
            )));
        }
        let n = points.len() / d;
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        let num_classes = match &labels {
            None => 0,
            Some(l) => {
                check_dim(n, l.len(), "labels")?;
                let k = l.iter().copied().max().map_or(0, |m| m as usize + 1);
                let mut seen = vec![false; k];
                l.iter().for_each(|&y| seen[y as usize] = true);
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::invalid(format!(
                        "class ids must be contiguous from 0; class {missing} is empty"
                    )));
                }
                k
            }
        };
        let sq: f64 = points.iter().map(|v| v * v).sum();
        Ok(Dataset {
            rms_norm: (sq / n as f64).sqrt(),
            points,
            n,
            d,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    /// `n` i.i.d. standard-normal points in `d` dimensions.
    pub fn gen_gaussian(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("gaussian dataset needs n >= 1 and d >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        Dataset::new(points, d, None, format!("gaussian-n{n}-d{d}-s{seed}"))
    }

    /// Isotropic Gaussian clusters, one class per center (rows of `centers`).
    pub fn gen_mixture(centers: &[Vec<f64>], spread: f64, n_per_class: usize, seed: u64) -> Result<Self> {
        let d = centers.first().map_or(0, Vec::len);
        if centers.is_empty() || d == 0 {
            return Err(Error::invalid("mixture needs at least one non-empty center"));
        }
        if centers.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("mixture centers must share one dimension"));
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mixture centers must be finite"));
        }
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::invalid(format!("spread must be positive, got {spread}")));
        }
        if n_per_class == 0 {
            return Err(Error::invalid("n_per_class must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(centers.len() * n_per_class * d);
        let mut labels = Vec::with_capacity(centers.len() * n_per_class);
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..n_per_class {
                for &ci in c {
                    let z: f64 = rng.sample(StandardNormal);
                    points.push(ci + spread * z);
                }
                labels.push(k as u32);
            }
        }
        Dataset::new(
            points,
            d,
            Some(labels),
            format!("mixture-k{}-d{d}-s{seed}", centers.len()),
        )
    }

    /// `k` centers evenly spaced on a circle of the given radius in the plane.
    pub fn ring_centers(k: usize, radius: f64) -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect()
    }

    /// Per-coordinate standardization with the population (1/N) variance.
    /// Zero-variance coordinates map to 0.
    pub fn normalize(&self) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::invalid("normalize needs at least 2 points"));
        }
        let mean = self.mean();
        let mut var = vec![0.0; self.d];
        for i in 0..self.n {
            for (k, v) in self.row(i).iter().enumerate() {
                var[k] += (v - mean[k]).powi(2);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| {
                let sd = (v / self.n as f64).sqrt();
                if sd > 0.0 { 1.0 / sd } else { 0.0 }
            })
            .collect();
        let points = self
            .points
            .chunks_exact(self.d)
            .flat_map(|r| r.iter().enumerate().map(|(k, v)| (v - mean[k]) * scale[k]))
            .collect();
        Dataset::new(points, self.d, self.labels.clone(), self.name.clone())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rms_norm(&self) -> f64 {
        self.rms_norm
    }

    /// Closest row by Euclidean distance; ties go to the lowest index.
    pub fn nearest_neighbor(&self, x: &[f64]) -> Result<(usize, f64)> {
        check_dim(self.d, x.len(), "nearest_neighbor query")?;
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.points.chunks_exact(self.d).enumerate() {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        Ok((best.0, best.1.sqrt()))
    }

    /// Nearest-neighbor distance divided by the dataset RMS norm.
    pub fn memorization_distance(&self, x: &[f64]) -> Result<f64> {
        let (_, dist) = self.nearest_neighbor(x)?;
        Ok(dist / self.rms_norm)
    }

    pub fn class_subset(&self, class: u32) -> Result<ClassView<'_>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("class_subset requires a labeled dataset"))?;
        if class as usize >= self.num_classes {
            return Err(Error::invalid(format!(
                "class {class} out of range (dataset has {} classes)",
                self.num_classes
            )));
        }
        let indices = (0..self.n).filter(|&i| labels[i] == class).collect();
        Ok(ClassView {
            parent: self,
            class,
            indices,
        })
    }

    /// All class views in class order; empty for unlabeled data.
    pub fn class_views(&self) -> Vec<ClassView<'_>> {
        (0..self.num_classes as u32)
            .map(|y| self.class_subset(y).expect("class id in range"))
            .collect()
    }

    pub fn save(&self, path: &Path, format: DataFormat) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res = match format {
            DataFormat::Csv => self.write_csv(&mut w),
            DataFormat::Binary => self.write_binary(&mut w),
        };
        res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, format: DataFormat) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_string();
        match format {
            DataFormat::Csv => Self::read_csv(reader, path, name),
            DataFormat::Binary => Self::read_binary(reader, path, name),
        }
    }

    fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut header: Vec<String> = (0..self.d).map(|k| format!("dim_{k}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.n {
            let mut fields: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            if let Some(y) = self.label(i) {
                fields.push(y.to_string());
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    fn read_csv<R: Read>(reader: R, path: &Path, name: String) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::format(path, format!("unreadable header: {e}")))?
            .clone();
        let has_labels = header.iter().next_back() == Some("label");
        let d = header.len() - usize::from(has_labels);
        if d == 0 {
            return Err(Error::format(path, "header declares no dim_ columns"));
        }
        for (k, h) in header.iter().take(d).enumerate() {
            if h != format!("dim_{k}") {
                return Err(Error::format(
                    path,
                    format!("header column {k}: expected dim_{k}, found {h:?}"),
                ));
            }
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(path, format!("row {r}: {e}")))?;
            if rec.len() != header.len() {
                return Err(Error::format(
                    path,
                    format!("row {r}: expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            for (c, field) in rec.iter().take(d).enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::format(path, format!("row {r}, column {c}: cannot parse {field:?}"))
                })?;
                if !v.is_finite() {
                    return Err(Error::format(path, format!("row {r}, column {c}: non-finite value")));
                }
                points.push(v);
            }
            if has_labels {
                let field = &rec[d];
                let y: u32 = field.trim().parse().map_err(|_| {
                    Error::format(path, format!("row {r}, column {d}: bad label {field:?}"))
                })?;
                labels.push(y);
            }
        }
        if points.is_empty() {
            return Err(Error::format(path, "no data rows"));
        }
        Dataset::new(points, d, has_labels.then_some(labels), name)
            .map_err(|e| Error::format(path, e.to_string()))
    }

    fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&[BINARY_VERSION])?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.d as u64).to_le_bytes())?;
        w.write_all(&[u8::from(self.labels.is_some())])?;
        for v in &self.points {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Some(labels) = &self.labels {
            for y in labels {
                w.write_all(&y.to_le_bytes())?;
            }
        }
        Ok(())
    }

    fn read_binary<R: Read>(mut reader: R, path: &Path, name: String) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut cur = ByteCursor::new(&bytes, path);
        if cur.take(4)? != BINARY_MAGIC {
            return Err(Error::format(path, "bad magic (expected FSDS)"));
        }
        let version = cur.take(1)?[0];
        if version != BINARY_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n = cur.u64()? as usize;
        let d = cur.u64()? as usize;
        let has_labels = match cur.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::format(path, format!("bad label flag {other}"))),
        };
        if n == 0 || d == 0 {
            return Err(Error::format(path, format!("empty shape {n} x {d}")));
        }
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .and_then(|b| b.checked_add(if has_labels { n * 4 } else { 0 }))
            .ok_or_else(|| Error::format(path, "shape overflows"))?;
        if cur.remaining() != expected {
            return Err(Error::format(
                path,
                format!("payload is {} bytes, header implies {expected}", cur.remaining()),
            ));
        }
        let mut points = Vec::with_capacity(n * d);
        for idx in 0..n * d {
            let v = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    format!("row {}, column {}: non-finite value", idx / d, idx % d),
                ));
            }
            points.push(v);
        }
        let labels = if has_labels {
            Some(
                (0..n)
                    .map(|_| cur.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Dataset::new(points, d, labels, name).map_err(|e| Error::format(path, e.to_string()))
    }
}

impl PointSet for Dataset {
    fn len(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
}

/// Rows of a labeled dataset belonging to one class.
#[derive(Debug, Clone)]
pub struct ClassView<'a> {
    parent: &'a Dataset,
    class: u32,
    indices: Vec<usize>,
}

impl ClassView<'_> {
    pub fn class(&self) -> u32 {
        self.class
    }

    /// Row indices into the parent dataset.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Copies the selected rows into a standalone dataset.
    pub fn to_dataset(&self) -> Dataset {
        let points = self.indices.iter().flat_map(|&i| self.parent.row(i).iter().copied()).collect();
        Dataset::new(points, self.parent.d, None, format!("{}-class{}", self.parent.name, self.class))
            .expect("subset of a valid dataset")
    }
}

impl PointSet for ClassView<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn dim(&self) -> usize {
        self.parent.d
    }

    fn row(&self, i: usize) -> &[f64] {
        self.parent.row(self.indices[i])
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        ByteCursor { bytes, pos: 0, path }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.remaining() < k {
            return Err(Error::format(
                self.path,
                format!("truncated at byte {} (needed {k} more)", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
