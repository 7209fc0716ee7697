//! Representational geometry: rank correlation, dissimilarity matrices and
//! second-order similarity between them.
//!
//! The reference geometry of a stimulus sample is built with
//! `1 - spearman(u, v)` between embedding vectors. Hypothesis geometries are
//! binary: an isolated group is maximally dissimilar to everything else.
//! Two geometries are compared by Spearman correlation of their upper
//! triangles. Because hypothesis triangles hold only two distinct values,
//! ranks are always tie-averaged.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CorrelationError, Error, Result};

/// Fractional ranks (1-based). Tied values share the mean of the ranks they
/// span.
///
/// Inputs must be finite; callers check this.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn check_finite(values: &[f64]) -> Result<(), CorrelationError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CorrelationError::NonFinite)
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation of two equally long rank vectors with non-zero
/// variance, clamped to [-1, 1].
fn pearson_of_ranks(rx: &[f64], ry: &[f64]) -> f64 {
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(ry) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation with average ranks for ties.
///
/// Constant inputs are an error rather than a silent zero.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(CorrelationError::TooShort(x.len()));
    }
    check_finite(x)?;
    check_finite(y)?;
    if is_constant(x) {
        return Err(CorrelationError::Constant { which: "first" });
    }
    if is_constant(y) {
        return Err(CorrelationError::Constant { which: "second" });
    }
    Ok(pearson_of_ranks(&average_ranks(x), &average_ranks(y)))
}

/// A symmetric dissimilarity matrix with a zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RdmRepr", into = "RdmRepr")]
pub struct Rdm {
    n: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RdmRepr {
    n: usize,
    values: Vec<f64>,
}

impl TryFrom<RdmRepr> for Rdm {
    type Error = Error;

    fn try_from(repr: RdmRepr) -> Result<Self> {
        Rdm::from_row_major(repr.n, repr.values)
    }
}

impl From<Rdm> for RdmRepr {
    fn from(rdm: Rdm) -> Self {
        RdmRepr {
            n: rdm.n,
            values: rdm.values,
        }
    }
}

impl Rdm {
    fn zeros(n: usize) -> Self {
        Rdm {
            n,
            values: vec![0.0; n * n],
        }
    }

    fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        self.values[i * self.n + j] = value;
        self.values[j * self.n + i] = value;
    }

    /// Builds a matrix from row-major values, checking shape, symmetry and
    /// the zero diagonal.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: values.len(),
            });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry ({i}, {i}) is not zero"
                )));
            }
            for j in (i + 1)..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !a.is_finite() || a != b {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i}, {j}) and ({j}, {i}) are not equal finite values"
                    )));
                }
            }
        }
        Ok(Rdm { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.values
    }

    /// Entries above the diagonal, row by row. Length `n(n-1)/2`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            out.extend_from_slice(&self.row(i)[i + 1..]);
        }
        out
    }

    /// Reorders items: entry (i, j) of the result is entry
    /// (perm[i], perm[j]) of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: perm.len(),
            });
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
        }
        let mut out = Rdm::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.values[i * self.n + j] = self.get(perm[i], perm[j]);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`Rdm::upper_triangle`].
pub fn upper_triangle(rdm: &Rdm) -> Vec<f64> {
    rdm.upper_triangle()
}

/// `1 - spearman(v_i, v_j)` for every pair of vectors.
pub fn reference_rdm<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Rdm> {
    if vectors.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "reference geometry needs at least 2 vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].as_ref().len();
    for v in vectors {
        let found = v.as_ref().len();
        if found != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found,
            });
        }
    }
    if dim < 2 {
        return Err(Error::InvalidInput(format!(
            "vectors must have dimension >= 2, got {dim}"
        )));
    }

    // Ranks depend only on each vector, so compute them once. A bad vector
    // is reported against the first pair it participates in.
    let mut ranks = Vec::with_capacity(vectors.len());
    for (idx, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        let fault = if check_finite(v).is_err() {
            Some(CorrelationError::NonFinite)
        } else if is_constant(v) {
            Some(CorrelationError::Constant {
                which: if idx == 0 { "first" } else { "second" },
            })
        } else {
            None
        };
        if let Some(source) = fault {
            let (i, j) = if idx == 0 { (0, 1) } else { (0, idx) };
            return Err(Error::ReferencePair { i, j, source });
        }
        ranks.push(average_ranks(v));
    }

    let n = vectors.len();
    let mut rdm = Rdm::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            rdm.set_pair(i, j, 1.0 - pearson_of_ranks(&ranks[i], &ranks[j]));
        }
    }
    Ok(rdm)
}

/// Role of one position in a drawn sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Group1,
    Group2,
    Concept,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Group1 => "group1",
            Role::Group2 => "group2",
            Role::Concept => "concept",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which group a hypothesis geometry sets apart from the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupRole {
    Group1,
    Group2,
}

impl From<GroupRole> for Role {
    fn from(g: GroupRole) -> Role {
        match g {
            GroupRole::Group1 => Role::Group1,
            GroupRole::Group2 => Role::Group2,
        }
    }
}

/// The two competing hypotheses.
///
/// `Hyp1`: group 1 goes with the concept, group 2 is isolated.
/// `Hyp2`: group 2 goes with the concept, group 1 is isolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Hyp1,
    Hyp2,
}

impl Hypothesis {
    pub fn isolated(self) -> GroupRole {
        match self {
            Hypothesis::Hyp1 => GroupRole::Group2,
            Hypothesis::Hyp2 => GroupRole::Group1,
        }
    }
}

/// Role labels over the positions of a sample; every role appears at least
/// once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleLabeling(Vec<Role>);

impl RoleLabeling {
    pub fn new(labels: Vec<Role>) -> Result<Self> {
        for role in [Role::Group1, Role::Group2, Role::Concept] {
            if !labels.contains(&role) {
                return Err(Error::MissingRole(role.as_str()));
            }
        }
        Ok(RoleLabeling(labels))
    }

    /// `n1` group-1 positions, then `n2` group-2, then `n3` concept.
    pub fn blocks(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        let mut labels = Vec::with_capacity(n1 + n2 + n3);
        labels.extend(std::iter::repeat_n(Role::Group1, n1));
        labels.extend(std::iter::repeat_n(Role::Group2, n2));
        labels.extend(std::iter::repeat_n(Role::Concept, n3));
        RoleLabeling::new(labels)
    }

    pub fn labels(&self) -> &[Role] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Binary geometry: entry (i, j) is 1 when exactly one of the two positions
/// carries the isolated label, 0 otherwise.
pub fn hypothesis_rdm(labeling: &RoleLabeling, isolated: GroupRole) -> Rdm {
    let isolated = Role::from(isolated);
    let labels = labeling.labels();
    let n = labels.len();
    let mut rdm = Rdm::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if (labels[i] == isolated) != (labels[j] == isolated) {
                rdm.set_pair(i, j, 1.0);
            }
        }
    }
    rdm
}

/// Second-order similarity: Spearman correlation of the two upper triangles.
pub fn rsa_similarity(reference: &Rdm, hypothesis: &Rdm) -> Result<f64> {
    if reference.n() != hypothesis.n() {
        return Err(Error::DimensionMismatch {
            expected: reference.n(),
            found: hypothesis.n(),
        });
    }
    Ok(spearman(
        &reference.upper_triangle(),
        &hypothesis.upper_triangle(),
    )?)
}
