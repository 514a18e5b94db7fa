//! Domain types: the training set, bit-packed subset masks, recorded model
//! outputs, and fitted datamodels. All indices are 0-based.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// A labeled training set with stable indices `0..d-1`.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Row-major feature matrix, one row per example.
    pub features: Array2<f64>,
    /// Class index per example, each `< num_classes`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl TrainingSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidParam("num_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidParam(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(TrainingSet { features, labels, num_classes })
    }

    /// Number of training examples (the datamodel dimension d).
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}

/// One evaluation target: a feature vector, its label, and (when the target
/// is itself a training example) its training-set index, which drives the
/// exclusion rule during campaigns.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub features: Array1<f64>,
    pub label: usize,
    pub train_index: Option<usize>,
}

pub(crate) fn packed_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// A subset of `0..d-1` as a bit vector. Bit j lives at byte j/8, position
/// j%8; pad bits in the last byte are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetMask {
    bytes: Vec<u8>,
    d: usize,
    cardinality: usize,
}

impl SubsetMask {
    pub fn empty(d: usize) -> Self {
        SubsetMask { bytes: vec![0u8; packed_len(d)], d, cardinality: 0 }
    }

    /// Characteristic vector of `subset` within `0..d-1`.
    pub fn from_indices(subset: &[usize], d: usize) -> Result<Self> {
        let mut m = SubsetMask::empty(d);
        for &j in subset {
            if j >= d {
                return Err(Error::InvalidParam(format!("index {j} out of range for d={d}")));
            }
            if !m.get(j) {
                m.set(j);
            }
        }
        Ok(m)
    }

    pub(crate) fn from_bytes_unchecked(bytes: Vec<u8>, d: usize) -> Self {
        debug_assert_eq!(bytes.len(), packed_len(d));
        let cardinality = bytes.iter().map(|b| b.count_ones() as usize).sum();
        SubsetMask { bytes, d, cardinality }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn get(&self, j: usize) -> bool {
        debug_assert!(j < self.d);
        self.bytes[j / 8] & (1 << (j % 8)) != 0
    }

    pub fn set(&mut self, j: usize) {
        debug_assert!(j < self.d);
        let byte = &mut self.bytes[j / 8];
        if *byte & (1 << (j % 8)) == 0 {
            *byte |= 1 << (j % 8);
            self.cardinality += 1;
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Member indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cardinality);
        for (byte_idx, &b) in self.bytes.iter().enumerate() {
            let mut bits = b;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                out.push(byte_idx * 8 + tz);
                bits &= bits - 1;
            }
        }
        out
    }

    /// Dense 0/1 vector.
    pub fn to_dense(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.d);
        for j in self.indices() {
            v[j] = 1.0;
        }
        v
    }

    /// theta . mask (sum of vec over member indices).
    pub fn dot(&self, vec: &[f64]) -> f64 {
        debug_assert_eq!(vec.len(), self.d);
        self.indices().iter().map(|&j| vec[j]).sum()
    }
}

/// m x d bit-packed subset-membership matrix with sampling provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMatrix {
    /// Row-major packed rows, each padded to a byte boundary.
    bytes: Vec<u8>,
    pub m: usize,
    pub d: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl MaskMatrix {
    pub fn zeros(m: usize, d: usize, alpha: f64, seed: u64) -> Self {
        MaskMatrix { bytes: vec![0u8; m * packed_len(d)], m, d, alpha, seed }
    }

    pub fn from_rows(rows: &[SubsetMask], alpha: f64, seed: u64) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.d);
        if rows.iter().any(|r| r.d != d) {
            return Err(Error::Shape("mask rows of differing width".into()));
        }
        let mut mm = MaskMatrix::zeros(rows.len(), d, alpha, seed);
        let stride = packed_len(d);
        for (i, r) in rows.iter().enumerate() {
            mm.bytes[i * stride..(i + 1) * stride].copy_from_slice(r.as_bytes());
        }
        Ok(mm)
    }

    pub fn row_stride(&self) -> usize {
        packed_len(self.d)
    }

    pub fn row_bytes(&self, i: usize) -> &[u8] {
        let s = self.row_stride();
        &self.bytes[i * s..(i + 1) * s]
    }

    pub(crate) fn row_bytes_mut(&mut self, i: usize) -> &mut [u8] {
        let s = self.row_stride();
        &mut self.bytes[i * s..(i + 1) * s]
    }

    pub(crate) fn raw_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub(crate) fn raw_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row_bytes(i)[j / 8] & (1 << (j % 8)) != 0
    }

    pub fn row(&self, i: usize) -> SubsetMask {
        SubsetMask::from_bytes_unchecked(self.row_bytes(i).to_vec(), self.d)
    }

    pub fn row_cardinality(&self, i: usize) -> usize {
        self.row_bytes(i).iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Member indices of row i (ascending).
    pub fn row_indices(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (byte_idx, &b) in self.row_bytes(i).iter().enumerate() {
            let mut bits = b;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                out.push(byte_idx * 8 + tz);
                bits &= bits - 1;
            }
        }
        out
    }

    /// Per-column inclusion counts.
    pub fn column_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.d];
        for i in 0..self.m {
            for j in self.row_indices(i) {
                counts[j] += 1;
            }
        }
        counts
    }

    /// Dense f64 copy of the selected rows (one mask column per training
    /// example), used by solvers that want BLAS-3 row blocks.
    pub fn dense_block(&self, rows: std::ops::Range<usize>) -> Array2<f64> {
        let mut out = Array2::zeros((rows.len(), self.d));
        for (bi, i) in rows.enumerate() {
            for j in self.row_indices(i) {
                out[(bi, j)] = 1.0;
            }
        }
        out
    }

    /// Copy of a contiguous row range.
    pub fn slice_rows(&self, rows: std::ops::Range<usize>) -> MaskMatrix {
        let stride = self.row_stride();
        MaskMatrix {
            bytes: self.bytes[rows.start * stride..rows.end * stride].to_vec(),
            m: rows.len(),
            d: self.d,
            alpha: self.alpha,
            seed: self.seed,
        }
    }

    /// Gram matrix accumulation in co-occurrence form: `gram[a][b] = #{i :
    /// a,b both in row i}` for a <= b, plus per-column counts and m. Uses a
    /// column-major bit transpose and word-wise popcounts.
    pub fn cooccurrence_gram(&self) -> CooccurrenceGram {
        let words = self.m.div_ceil(64);
        let mut cols = vec![0u64; self.d * words];
        for i in 0..self.m {
            let (w, b) = (i / 64, i % 64);
            for j in self.row_indices(i) {
                cols[j * words + w] |= 1u64 << b;
            }
        }
        let counts: Vec<u64> =
            (0..self.d).map(|j| cols[j * words..(j + 1) * words].iter().map(|w| w.count_ones() as u64).sum()).collect();
        CooccurrenceGram { cols, counts, words, d: self.d, m: self.m }
    }
}

/// Column-major bitset view of a MaskMatrix for popcount-based Gram products.
pub struct CooccurrenceGram {
    cols: Vec<u64>,
    pub counts: Vec<u64>,
    words: usize,
    pub d: usize,
    pub m: usize,
}

impl CooccurrenceGram {
    /// #{i : a and b both members of row i}.
    pub fn pair_count(&self, a: usize, b: usize) -> u64 {
        let ca = &self.cols[a * self.words..(a + 1) * self.words];
        let cb = &self.cols[b * self.words..(b + 1) * self.words];
        ca.iter().zip(cb).map(|(x, y)| (x & y).count_ones() as u64).sum()
    }
}

/// Identifier of the scalar recorded per (model, target).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFn {
    /// correct-class logit minus highest incorrect logit
    Margin,
    /// 1 iff margin > 0 (ties count as misclassification)
    Correctness,
    /// softmax probability of the correct class
    Confidence,
    /// -log(confidence)
    Xent,
}

impl OutputFn {
    pub const ALL: [OutputFn; 4] = [OutputFn::Margin, OutputFn::Correctness, OutputFn::Confidence, OutputFn::Xent];

    pub fn id(self) -> u32 {
        match self {
            OutputFn::Margin => 0,
            OutputFn::Correctness => 1,
            OutputFn::Confidence => 2,
            OutputFn::Xent => 3,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Some(match id {
            0 => OutputFn::Margin,
            1 => OutputFn::Correctness,
            2 => OutputFn::Confidence,
            3 => OutputFn::Xent,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputFn::Margin => "margin",
            OutputFn::Correctness => "correctness",
            OutputFn::Confidence => "confidence",
            OutputFn::Xent => "xent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "margin" => OutputFn::Margin,
            "correctness" => OutputFn::Correctness,
            "confidence" => OutputFn::Confidence,
            "xent" => OutputFn::Xent,
            _ => return None,
        })
    }
}

/// m x n recorded outputs f(x_j; S_i) with an exclusion channel marking
/// (i, j) pairs where target j is a training example contained in S_i.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    /// Row-major values, f32 precision (the on-disk precision).
    pub values: Vec<f32>,
    /// Row-major packed exclusion bits, each row padded to a byte boundary.
    excluded: Vec<u8>,
    pub m: usize,
    pub n: usize,
    pub output_fn: OutputFn,
    pub trainer_id: String,
}

impl OutputMatrix {
    pub fn zeros(m: usize, n: usize, output_fn: OutputFn, trainer_id: impl Into<String>) -> Self {
        OutputMatrix {
            values: vec![0.0; m * n],
            excluded: vec![0u8; m * packed_len(n)],
            m,
            n,
            output_fn,
            trainer_id: trainer_id.into(),
        }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        f64::from(self.values[i * self.n + j])
    }

    pub fn set_value(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v as f32;
    }

    pub fn is_excluded(&self, i: usize, j: usize) -> bool {
        let stride = packed_len(self.n);
        self.excluded[i * stride + j / 8] & (1 << (j % 8)) != 0
    }

    pub fn set_excluded(&mut self, i: usize, j: usize) {
        let stride = packed_len(self.n);
        self.excluded[i * stride + j / 8] |= 1 << (j % 8);
    }

    pub(crate) fn excluded_bytes(&self) -> &[u8] {
        &self.excluded
    }

    pub(crate) fn excluded_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.excluded
    }

    pub(crate) fn values_row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.values[i * self.n..(i + 1) * self.n]
    }

    pub(crate) fn excluded_row_mut(&mut self, i: usize) -> &mut [u8] {
        let stride = packed_len(self.n);
        &mut self.excluded[i * stride..(i + 1) * stride]
    }

    /// Copy of a contiguous row range.
    pub fn slice_rows(&self, rows: std::ops::Range<usize>) -> OutputMatrix {
        let stride = packed_len(self.n);
        OutputMatrix {
            values: self.values[rows.start * self.n..rows.end * self.n].to_vec(),
            excluded: self.excluded[rows.start * stride..rows.end * stride].to_vec(),
            m: rows.len(),
            n: self.n,
            output_fn: self.output_fn,
            trainer_id: self.trainer_id.clone(),
        }
    }

    /// Column j as f64, paired with its exclusion flags.
    pub fn column(&self, j: usize) -> (Vec<f64>, Vec<bool>) {
        let mut vals = Vec::with_capacity(self.m);
        let mut excl = Vec::with_capacity(self.m);
        for i in 0..self.m {
            vals.push(self.value(i, j));
            excl.push(self.is_excluded(i, j));
        }
        (vals, excl)
    }

    /// Validates the correctness-channel invariant (values exactly 0 or 1).
    pub fn validate(&self) -> Result<()> {
        if self.output_fn == OutputFn::Correctness {
            for (k, &v) in self.values.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidParam(format!(
                        "correctness output at flat index {k} is {v}, not in {{0,1}}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A fitted linear datamodel for one target: prediction is theta . mask + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Datamodel {
    pub theta: Array1<f64>,
    pub bias: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub target_id: u64,
    pub output_fn: OutputFn,
    pub trainer_id: String,
}

impl Datamodel {
    pub fn d(&self) -> usize {
        self.theta.len()
    }

    pub fn predict(&self, mask: &SubsetMask) -> f64 {
        self.bias + mask.dot(self.theta.as_slice().expect("contiguous theta"))
    }

    /// Count of nonzero weights.
    pub fn sparsity(&self) -> usize {
        self.theta.iter().filter(|&&t| t != 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn characteristic_vector_definition() {
        let m = SubsetMask::from_indices(&[0, 2], 4).unwrap();
        assert_eq!(m.to_dense().to_vec(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.cardinality(), 2);
    }

    #[test]
    fn characteristic_vector_empty_and_full() {
        let e = SubsetMask::from_indices(&[], 3).unwrap();
        assert_eq!(e.to_dense().to_vec(), vec![0.0; 3]);
        assert_eq!(e.cardinality(), 0);

        let f = SubsetMask::from_indices(&[0, 1, 2, 3, 4], 5).unwrap();
        assert_eq!(f.cardinality(), 5);
        assert!(f.to_dense().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn characteristic_vector_out_of_range() {
        assert!(SubsetMask::from_indices(&[4], 4).is_err());
    }

    #[test]
    fn mask_row_padding() {
        // 9 bits pack into 2 bytes with 7 zero pad bits
        let m = SubsetMask::from_indices(&[8], 9).unwrap();
        assert_eq!(m.as_bytes().len(), 2);
        assert_eq!(m.as_bytes()[1], 0b0000_0001);
    }

    #[test]
    fn cooccurrence_counts() {
        let rows = vec![
            SubsetMask::from_indices(&[0, 1], 3).unwrap(),
            SubsetMask::from_indices(&[1, 2], 3).unwrap(),
            SubsetMask::from_indices(&[0, 1], 3).unwrap(),
        ];
        let mm = MaskMatrix::from_rows(&rows, 0.5, 0).unwrap();
        let g = mm.cooccurrence_gram();
        assert_eq!(g.counts, vec![2, 3, 1]);
        assert_eq!(g.pair_count(0, 1), 2);
        assert_eq!(g.pair_count(0, 2), 0);
        assert_eq!(g.pair_count(1, 2), 1);
        assert_eq!(g.pair_count(1, 1), 3);
    }

    #[test]
    fn correctness_channel_validated() {
        let mut o = OutputMatrix::zeros(1, 2, OutputFn::Correctness, "t");
        o.set_value(0, 0, 1.0);
        assert!(o.validate().is_ok());
        o.set_value(0, 1, 0.5);
        assert!(o.validate().is_err());
    }

    #[test]
    fn datamodel_prediction_is_affine() {
        let dm = Datamodel {
            theta: Array1::from(vec![0.5, -0.25, 0.0]),
            bias: 1.0,
            alpha: 0.5,
            lambda: 0.0,
            target_id: 0,
            output_fn: OutputFn::Margin,
            trainer_id: "t".into(),
        };
        let m = SubsetMask::from_indices(&[0, 1], 3).unwrap();
        assert!((dm.predict(&m) - 1.25).abs() < 1e-12);
        assert_eq!(dm.sparsity(), 2);
    }
}
