//! Tabular data, party partitioning, and quantile binning.
//!
//! A [`DataMatrix`] is column-major: one `Vec<f64>` per named feature plus an
//! optional binary label. Vertical splits hand each party a subset of the
//! columns over the full population; horizontal splits hand each party a
//! contiguous block of rows with every column.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    label: Option<Vec<f64>>,
    row_ids: Vec<u64>,
}

impl DataMatrix {
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        label: Option<Vec<f64>>,
        row_ids: Vec<u64>,
    ) -> Result<Self> {
        if feature_names.len() != columns.len() {
            return Err(Error::LengthMismatch {
                expected: feature_names.len(),
                actual: columns.len(),
            });
        }
        let n_rows = row_ids.len();
        let mut seen = HashSet::with_capacity(feature_names.len());
        for (name, col) in feature_names.iter().zip(&columns) {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate feature name {name:?}"
                )));
            }
            if col.len() != n_rows {
                return Err(Error::LengthMismatch {
                    expected: n_rows,
                    actual: col.len(),
                });
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row,
                    column: name.clone(),
                });
            }
        }
        if let Some(label) = &label {
            if label.len() != n_rows {
                return Err(Error::LengthMismatch {
                    expected: n_rows,
                    actual: label.len(),
                });
            }
            if let Some((row, &value)) = label
                .iter()
                .enumerate()
                .find(|(_, &y)| y != 0.0 && y != 1.0)
            {
                return Err(Error::InvalidLabel { row, value });
            }
        }
        let mut ids = HashSet::with_capacity(n_rows);
        if !row_ids.iter().all(|id| ids.insert(*id)) {
            return Err(Error::InvalidData("row ids are not unique".into()));
        }
        Ok(DataMatrix {
            feature_names,
            columns,
            label,
            row_ids,
        })
    }

    /// Builds a matrix with row ids `0..n`.
    pub fn from_columns(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        label: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = columns
            .first()
            .map(Vec::len)
            .or_else(|| label.as_ref().map(Vec::len))
            .unwrap_or(0);
        Self::new(feature_names, columns, label, (0..n as u64).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn label(&self) -> Option<&[f64]> {
        self.label.as_deref()
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    /// Copy of this matrix restricted to the given columns, in the given order.
    pub fn select_features(&self, names: &[String], keep_label: bool) -> Result<DataMatrix> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let idx = self
                .feature_index(name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?;
            columns.push(self.columns[idx].clone());
        }
        DataMatrix::new(
            names.to_vec(),
            columns,
            if keep_label { self.label.clone() } else { None },
            self.row_ids.clone(),
        )
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> DataMatrix {
        DataMatrix {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            label: self.label.as_ref().map(|l| l[start..end].to_vec()),
            row_ids: self.row_ids[start..end].to_vec(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if self.label.is_some() {
            header.push(label_column);
        }
        let io = |e| Error::io(path, e);
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for row in 0..self.n_rows() {
            let mut cells: Vec<String> = self
                .columns
                .iter()
                .map(|c| format!("{:?}", c[row]))
                .collect();
            if let Some(label) = &self.label {
                cells.push(format!("{}", label[row] as u8));
            }
            writeln!(out, "{}", cells.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Parses a headed CSV file. Row ids are assigned `0..n_rows` in file order.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_owned()))?,
        ),
        None => None,
    };

    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::Csv(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: headers[col].clone(),
                value: cell.to_owned(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: headers[col].clone(),
                });
            }
            raw[col].push(value);
        }
    }

    let mut names = Vec::with_capacity(headers.len());
    let mut columns = Vec::with_capacity(headers.len());
    let mut label = None;
    for (idx, (name, col)) in headers.into_iter().zip(raw).enumerate() {
        if Some(idx) == label_idx {
            label = Some(col);
        } else {
            names.push(name);
            columns.push(col);
        }
    }
    let n_rows = columns
        .first()
        .map(Vec::len)
        .or_else(|| label.as_ref().map(Vec::len))
        .unwrap_or(0);
    DataMatrix::new(names, columns, label, (0..n_rows as u64).collect())
}

/// Who a participant is in a collaboration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Vertical label holder.
    Active,
    /// Vertical feature-only holder.
    Passive,
    /// Horizontal client.
    Peer,
    /// Aggregator. Never holds data or a private key.
    Server,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Active => "active",
            Role::Passive => "passive",
            Role::Peer => "peer",
            Role::Server => "server",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartyShard {
    pub party_id: usize,
    pub role: Role,
    pub data: DataMatrix,
}

impl PartyShard {
    pub fn peer(party_id: usize, data: DataMatrix) -> Self {
        PartyShard {
            party_id,
            role: Role::Peer,
            data,
        }
    }

    pub fn owned_feature_names(&self) -> &[String] {
        self.data.feature_names()
    }
}

/// Splits columns among parties. Every feature must be assigned to exactly
/// one party; only `active_party` keeps the label. Shards come back ordered by
/// party id, each keeping the original relative column order.
pub fn split_vertical(
    data: &DataMatrix,
    assignment: &BTreeMap<usize, Vec<String>>,
    active_party: usize,
) -> Result<Vec<PartyShard>> {
    if data.label().is_none() {
        return Err(Error::InvalidPartition(
            "vertical split needs a labelled matrix".into(),
        ));
    }
    if !assignment.contains_key(&active_party) {
        return Err(Error::InvalidPartition(format!(
            "active party {active_party} is not in the assignment"
        )));
    }
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (&party, names) in assignment {
        for name in names {
            if data.feature_index(name).is_none() {
                return Err(Error::UnknownColumn(name.clone()));
            }
            if let Some(prev) = owner.insert(name, party) {
                return Err(Error::InvalidPartition(format!(
                    "feature {name:?} assigned to both party {prev} and party {party}"
                )));
            }
        }
    }
    if let Some(missing) = data
        .feature_names()
        .iter()
        .find(|n| !owner.contains_key(n.as_str()))
    {
        return Err(Error::InvalidPartition(format!(
            "feature {missing:?} is not assigned"
        )));
    }

    assignment
        .keys()
        .map(|&party| {
            let names: Vec<String> = data
                .feature_names()
                .iter()
                .filter(|n| owner[n.as_str()] == party)
                .cloned()
                .collect();
            let active = party == active_party;
            Ok(PartyShard {
                party_id: party,
                role: if active { Role::Active } else { Role::Passive },
                data: data.select_features(&names, active)?,
            })
        })
        .collect()
}

/// Column-joins vertical shards in the order given. The label is taken from
/// the active shard.
pub fn join_vertical(shards: &[PartyShard]) -> Result<DataMatrix> {
    let first = shards
        .first()
        .ok_or_else(|| Error::InvalidPartition("no shards".into()))?;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut label = None;
    for shard in shards {
        if shard.data.row_ids() != first.data.row_ids() {
            return Err(Error::InvalidPartition(format!(
                "party {} row ids differ from party {}",
                shard.party_id, first.party_id
            )));
        }
        names.extend_from_slice(shard.data.feature_names());
        columns.extend_from_slice(shard.data.columns());
        if shard.role == Role::Active {
            label = shard.data.label().map(<[f64]>::to_vec);
        }
    }
    DataMatrix::new(names, columns, label, first.data.row_ids().to_vec())
}

/// Contiguous row blocks of `floor(n / n_parties)`, remainder on the last shard.
pub fn split_horizontal(data: &DataMatrix, n_parties: usize) -> Result<Vec<PartyShard>> {
    if n_parties < 2 {
        return Err(Error::InvalidPartition(format!(
            "horizontal split needs at least 2 parties, got {n_parties}"
        )));
    }
    if n_parties > data.n_rows() {
        return Err(Error::InvalidPartition(format!(
            "{n_parties} parties but only {} rows",
            data.n_rows()
        )));
    }
    let block = data.n_rows() / n_parties;
    Ok((0..n_parties)
        .map(|p| {
            let start = p * block;
            let end = if p + 1 == n_parties {
                data.n_rows()
            } else {
                start + block
            };
            PartyShard::peer(p, data.slice_rows(start, end))
        })
        .collect())
}

/// Row-concatenates horizontal shards in the order given.
pub fn join_horizontal(shards: &[PartyShard]) -> Result<DataMatrix> {
    let first = shards
        .first()
        .ok_or_else(|| Error::InvalidPartition("no shards".into()))?;
    let names = first.data.feature_names().to_vec();
    let mut columns = vec![Vec::new(); names.len()];
    let mut label: Option<Vec<f64>> = first.data.label().map(|_| Vec::new());
    let mut row_ids = Vec::new();
    for shard in shards {
        if shard.data.feature_names() != names.as_slice() {
            return Err(Error::InvalidPartition(format!(
                "party {} has a different feature set",
                shard.party_id
            )));
        }
        for (dst, src) in columns.iter_mut().zip(shard.data.columns()) {
            dst.extend_from_slice(src);
        }
        match (&mut label, shard.data.label()) {
            (Some(dst), Some(src)) => dst.extend_from_slice(src),
            (None, None) => {}
            _ => {
                return Err(Error::InvalidPartition(
                    "shards disagree on label presence".into(),
                ))
            }
        }
        row_ids.extend_from_slice(shard.data.row_ids());
    }
    DataMatrix::new(names, columns, label, row_ids)
}

/// Exact quantile cuts for one column.
///
/// Candidate thresholds are midpoints between consecutive distinct values. A
/// candidate's position is the number of rows below it; for each target rank
/// `i * n / max_bin` the candidate with the nearest position is kept (lower
/// candidate on ties), then duplicates are dropped.
pub fn compute_cuts(values: &[f64], max_bin: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidData(
            "cannot compute cuts of an empty column".into(),
        ));
    }
    if max_bin < 2 {
        return Err(Error::InvalidParam(format!(
            "max_bin must be >= 2, got {max_bin}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value in column".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    // (midpoint, rows strictly below it)
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    for i in 1..sorted.len() {
        let (lo, hi) = (sorted[i - 1], sorted[i]);
        if lo < hi {
            let mut mid = lo + (hi - lo) / 2.0;
            if mid <= lo {
                mid = hi;
            }
            candidates.push((mid, i));
        }
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let n = sorted.len() as u128;
    let mb = max_bin as u128;
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bin - 1);
    let mut start = 0usize;
    for i in 1..max_bin as u128 {
        // distance |pos * max_bin - i * n| compared in integers
        let target = i * n;
        let dist = |pos: usize| (pos as u128 * mb).abs_diff(target);
        // positions are increasing, so the nearest candidate is found by a
        // forward scan that resumes where the previous target stopped
        let mut best = start;
        while best + 1 < candidates.len() && dist(candidates[best + 1].1) < dist(candidates[best].1)
        {
            best += 1;
        }
        start = best;
        let cut = candidates[best].0;
        if cuts.last() != Some(&cut) {
            cuts.push(cut);
        }
    }
    Ok(cuts)
}

/// Merges per-party cut lists for one feature: sorted union, then thinned to
/// at most `max_bin - 1` entries by taking indices `floor(i * len / cap)`.
pub fn merge_cut_candidates(local_cut_lists: &[Vec<f64>], max_bin: usize) -> Vec<f64> {
    let mut all: Vec<f64> = local_cut_lists.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let cap = max_bin.saturating_sub(1).max(1);
    if all.len() <= cap {
        return all;
    }
    let len = all.len();
    (0..cap).map(|i| all[i * len / cap]).collect()
}

/// Number of thresholds `<= v`.
#[inline]
pub fn bin_value(v: f64, cuts: &[f64]) -> u32 {
    cuts.partition_point(|&t| t <= v) as u32
}

pub fn bin_column(values: &[f64], cuts: &[f64]) -> Vec<u32> {
    values.iter().map(|&v| bin_value(v, cuts)).collect()
}

/// Per-feature cut lists.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BinCuts {
    pub per_feature: Vec<Vec<f64>>,
}

impl BinCuts {
    pub fn compute(data: &DataMatrix, max_bin: usize) -> Result<Self> {
        let per_feature = data
            .columns()
            .iter()
            .map(|c| compute_cuts(c, max_bin))
            .collect::<Result<_>>()?;
        Ok(BinCuts { per_feature })
    }

    pub fn n_features(&self) -> usize {
        self.per_feature.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.per_feature[feature].len() + 1
    }

    pub fn max_bins(&self) -> usize {
        (0..self.n_features())
            .map(|f| self.n_bins(f))
            .max()
            .unwrap_or(1)
    }
}

/// Column-major bin indices for a matrix under a fixed set of cuts.
#[derive(Clone, Debug)]
pub struct BinnedMatrix {
    pub bins: Vec<Vec<u32>>,
    pub n_bins: Vec<usize>,
}

impl BinnedMatrix {
    pub fn new(data: &DataMatrix, cuts: &BinCuts) -> Result<Self> {
        if cuts.n_features() != data.n_features() {
            return Err(Error::LengthMismatch {
                expected: data.n_features(),
                actual: cuts.n_features(),
            });
        }
        Ok(BinnedMatrix {
            bins: data
                .columns()
                .iter()
                .zip(&cuts.per_feature)
                .map(|(col, c)| bin_column(col, c))
                .collect(),
            n_bins: (0..cuts.n_features()).map(|f| cuts.n_bins(f)).collect(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.bins.len()
    }

    pub fn n_rows(&self) -> usize {
        self.bins.first().map(Vec::len).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, features: usize) -> DataMatrix {
        let names = (0..features).map(|f| format!("f{f}")).collect();
        let cols = (0..features)
            .map(|f| (0..n).map(|r| (r * (f + 1)) as f64).collect())
            .collect();
        let label = Some((0..n).map(|r| (r % 2) as f64).collect());
        DataMatrix::from_columns(names, cols, label).unwrap()
    }

    #[test]
    fn rejects_nan_feature() {
        let err = DataMatrix::from_columns(vec!["a".into()], vec![vec![1.0, f64::NAN]], None);
        assert!(matches!(err, Err(Error::NonFinite { row: 1, .. })));
    }

    #[test]
    fn rejects_non_binary_label() {
        let err =
            DataMatrix::from_columns(vec!["a".into()], vec![vec![1.0, 2.0]], Some(vec![0.0, 2.0]));
        assert!(matches!(err, Err(Error::InvalidLabel { row: 1, .. })));
    }

    #[test]
    fn horizontal_sizes() {
        let sizes = |n, p| -> Vec<usize> {
            split_horizontal(&matrix(n, 2), p)
                .unwrap()
                .iter()
                .map(|s| s.data.n_rows())
                .collect()
        };
        assert_eq!(sizes(6, 3), vec![2, 2, 2]);
        assert_eq!(sizes(7, 3), vec![2, 2, 3]);
        assert!(split_horizontal(&matrix(2, 1), 3).is_err());
        assert!(split_horizontal(&matrix(5, 1), 1).is_err());
    }

    #[test]
    fn horizontal_remainder_at_full_scale() {
        // 227,845 rows over three clients
        let n = 227_845;
        let block = n / 3;
        assert_eq!((block, block, n - 2 * block), (75_948, 75_948, 75_949));
        let data = DataMatrix::from_columns(vec!["x".into()], vec![vec![0.0; n]], None).unwrap();
        let shards = split_horizontal(&data, 3).unwrap();
        let sizes: Vec<_> = shards.iter().map(|s| s.data.n_rows()).collect();
        assert_eq!(sizes, vec![75_948, 75_948, 75_949]);
    }

    #[test]
    fn vertical_split_ten_eighteen() {
        let data = matrix(5, 28);
        let names = data.feature_names().to_vec();
        let mut assignment = BTreeMap::new();
        assignment.insert(0, names[..18].to_vec());
        assignment.insert(1, names[18..].to_vec());
        let shards = split_vertical(&data, &assignment, 1).unwrap();
        assert_eq!(shards[0].data.n_features(), 18);
        assert_eq!(shards[1].data.n_features(), 10);
        assert!(shards[0].data.label().is_none());
        assert!(shards[1].data.label().is_some());
        assert_eq!(shards[1].role, Role::Active);
    }

    #[test]
    fn vertical_identity_partition() {
        let data = matrix(4, 3);
        let mut assignment = BTreeMap::new();
        assignment.insert(7, data.feature_names().to_vec());
        let shards = split_vertical(&data, &assignment, 7).unwrap();
        assert_eq!(shards.len(), 1);
        assert_eq!(shards[0].data, data);
    }

    #[test]
    fn vertical_rejects_bad_assignments() {
        let data = matrix(4, 3);
        let names = data.feature_names().to_vec();
        let mut incomplete = BTreeMap::new();
        incomplete.insert(0, names[..2].to_vec());
        assert!(matches!(
            split_vertical(&data, &incomplete, 0),
            Err(Error::InvalidPartition(_))
        ));
        let mut overlap = BTreeMap::new();
        overlap.insert(0, names.clone());
        overlap.insert(1, vec![names[0].clone()]);
        assert!(matches!(
            split_vertical(&data, &overlap, 0),
            Err(Error::InvalidPartition(_))
        ));
        let mut ok = BTreeMap::new();
        ok.insert(0, names);
        assert!(split_vertical(&data, &ok, 3).is_err());
    }

    #[test]
    fn cuts_examples() {
        assert_eq!(compute_cuts(&[1.0, 1.0, 2.0, 2.0], 2).unwrap(), vec![1.5]);
        assert!(compute_cuts(&[3.0; 10], 16).unwrap().is_empty());
        let seq: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(compute_cuts(&seq, 256).unwrap().len(), 255);
        assert!(compute_cuts(&[], 4).is_err());
        assert!(compute_cuts(&[1.0], 1).is_err());
    }

    #[test]
    fn cut_midpoint_between_adjacent_floats_goes_to_upper() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let cuts = compute_cuts(&[lo, hi], 2).unwrap();
        assert_eq!(bin_value(lo, &cuts), 0);
        assert_eq!(bin_value(hi, &cuts), 1);
    }

    #[test]
    fn merge_examples() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(merge_cut_candidates(&[a.clone(), a.clone()], 256), a);
        assert_eq!(
            merge_cut_candidates(&[vec![1.5], vec![2.5]], 256),
            vec![1.5, 2.5]
        );
        let many: Vec<f64> = (0..400).map(f64::from).collect();
        let merged = merge_cut_candidates(&[many], 256);
        assert_eq!(merged.len(), 255);
        assert!(merged.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(merged[0], 0.0);
        // strides alternate between 1 and 2 over 400 / 255
        let strides: HashSet<u64> = merged.windows(2).map(|w| (w[1] - w[0]) as u64).collect();
        assert_eq!(strides, HashSet::from([1, 2]));
    }

    #[test]
    fn binning_examples() {
        assert_eq!(bin_value(1.0, &[1.5]), 0);
        assert_eq!(bin_value(1.5, &[1.5]), 1);
        assert_eq!(bin_value(9.9, &[1.5, 3.0, 7.2]), 3);
        assert_eq!(bin_column(&[0.0, 1.5, 4.0], &[1.5, 3.0]), vec![0, 1, 2]);
    }
}
