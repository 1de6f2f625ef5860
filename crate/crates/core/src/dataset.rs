//! Rectangular study dataset over the full frame with a per-cell mask.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ParentId, PracticeId, SubsidiaryId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Outcome,
    FrameCovariate,
    ClaimsCovariate,
}

impl ColumnRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnRole::Outcome => "outcome",
            ColumnRole::FrameCovariate => "frame_covariate",
            ColumnRole::ClaimsCovariate => "claims_covariate",
        }
    }
}

/// One variable. Missing cells hold `NaN` in `values` and `false` in
/// `observed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
    pub values: Vec<f64>,
    pub observed: Vec<bool>,
}

impl Column {
    pub fn new(name: impl Into<String>, role: ColumnRole, values: Vec<Option<f64>>) -> Self {
        let observed = values.iter().map(Option::is_some).collect();
        let values = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        Self {
            name: name.into(),
            role,
            values,
            observed,
        }
    }

    pub fn complete(name: impl Into<String>, role: ColumnRole, values: Vec<f64>) -> Self {
        let observed = vec![true; values.len()];
        Self {
            name: name.into(),
            role,
            values,
            observed,
        }
    }

    pub fn observed_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.observed)
            .filter(|(_, &o)| o)
            .map(|(&v, _)| v)
            .collect()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }
}

/// Responses of selected subsidiaries and parents to their own survey
/// instruments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelResponses {
    pub subsidiaries: BTreeMap<SubsidiaryId, bool>,
    pub parents: BTreeMap<ParentId, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDataset {
    pub practice_ids: Vec<PracticeId>,
    /// Owner subsidiary per row; `None` marks an independent practice, which
    /// forms its own singleton cluster.
    pub cluster_id: Vec<Option<SubsidiaryId>>,
    /// Corporate parent per row; `None` for independent practices.
    pub parent_id: Vec<Option<ParentId>>,
    pub selected: Vec<bool>,
    pub responded: Vec<bool>,
    pub columns: Vec<Column>,
    #[serde(default)]
    pub level_responses: LevelResponses,
}

impl StudyDataset {
    pub fn n_rows(&self) -> usize {
        self.practice_ids.len()
    }

    /// Builds a dataset from raw parts, checking column lengths.
    pub fn new(
        practice_ids: Vec<PracticeId>,
        cluster_id: Vec<Option<SubsidiaryId>>,
        parent_id: Vec<Option<ParentId>>,
        selected: Vec<bool>,
        responded: Vec<bool>,
        columns: Vec<Column>,
    ) -> Result<Self> {
        let n = practice_ids.len();
        if cluster_id.len() != n
            || parent_id.len() != n
            || selected.len() != n
            || responded.len() != n
        {
            return Err(Error::Parse("row metadata lengths differ".into()));
        }
        for c in &columns {
            if c.values.len() != n || c.observed.len() != n {
                return Err(Error::Parse(format!("column `{}` has wrong length", c.name)));
            }
        }
        Ok(Self {
            practice_ids,
            cluster_id,
            parent_id,
            selected,
            responded,
            columns,
            level_responses: LevelResponses::default(),
        })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut Column> {
        let i = self.column_index(name)?;
        Ok(&mut self.columns[i])
    }

    pub fn names_with_role(&self, role: ColumnRole) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn outcome_names(&self) -> Vec<String> {
        self.names_with_role(ColumnRole::Outcome)
    }

    pub fn missing_cells(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.observed.iter().filter(|&&o| !o).count())
            .sum()
    }

    /// Rows grouped into clusters: one group per subsidiary (in id order)
    /// followed by one singleton per independent row.
    pub fn cluster_groups(&self) -> Vec<Vec<usize>> {
        let mut by_sub: BTreeMap<SubsidiaryId, Vec<usize>> = BTreeMap::new();
        let mut singles = Vec::new();
        for (i, c) in self.cluster_id.iter().enumerate() {
            match c {
                Some(s) => by_sub.entry(*s).or_default().push(i),
                None => singles.push(vec![i]),
            }
        }
        by_sub.into_values().chain(singles).collect()
    }
}

pub fn outcome_name(index: usize) -> String {
    format!("y{index}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_put_independents_last_as_singletons() {
        let ds = StudyDataset::new(
            (0..5).map(PracticeId).collect(),
            vec![
                Some(SubsidiaryId(1)),
                None,
                Some(SubsidiaryId(0)),
                Some(SubsidiaryId(1)),
                None,
            ],
            vec![None; 5],
            vec![true; 5],
            vec![true; 5],
            vec![Column::new(
                "y0",
                ColumnRole::Outcome,
                vec![Some(1.0), None, Some(2.0), Some(3.0), None],
            )],
        )
        .unwrap();
        assert_eq!(ds.cluster_groups(), vec![vec![2], vec![0, 3], vec![1], vec![4]]);
        assert_eq!(ds.missing_cells(), 2);
        assert_eq!(ds.column("y0").unwrap().observed_values(), vec![1.0, 2.0, 3.0]);
        assert!(ds.column("nope").is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        let err = StudyDataset::new(
            vec![PracticeId(0)],
            vec![None],
            vec![None],
            vec![true],
            vec![true],
            vec![Column::complete("a", ColumnRole::Outcome, vec![1.0, 2.0])],
        );
        assert!(err.is_err());
    }
}
