//! Versioned JSON document holding a fitted tree and how it was obtained.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Schema};
use crate::error::{GptError, Result};
use crate::prune::PenaltyGrid;
use crate::tree::{GrowConfig, SplitKind, TreeNode};

pub const SCHEMA_VERSION: u32 = 1;

/// Floats are written in the shortest decimal form that reads back to the
/// same bits, so `from_json(to_json(doc)) == doc` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub schema_version: u32,
    pub threshold_u: f64,
    /// Number of excesses the tree was fitted on.
    pub k_n: usize,
    pub grow: GrowConfig,
    pub prune: PenaltyGrid,
    /// Selected penalty.
    pub lambda: f64,
    pub schema: Schema,
    pub root: TreeNode,
}

impl TreeDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_str(text)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(GptError::Schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        check_rules(&doc.root, &doc.schema)?;
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        TreeDocument::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_rules(t: &TreeNode, schema: &Schema) -> Result<()> {
    if let TreeNode::Internal { rule, left, right, .. } = t {
        let kind = schema
            .kinds
            .get(rule.column)
            .ok_or_else(|| GptError::Schema(format!("rule on column {} outside the schema", rule.column)))?;
        let ok = matches!(
            (kind, &rule.kind),
            (ColumnKind::Numeric, SplitKind::NumericThreshold { .. })
                | (ColumnKind::Categorical { .. }, SplitKind::CategorySubset { .. })
        );
        if !ok {
            return Err(GptError::Schema(format!("rule type does not match column {}", schema.names[rule.column])));
        }
        check_rules(left, schema)?;
        check_rules(right, schema)?;
    }
    Ok(())
}
