//! Graphviz drawing of a tree. Leaves show γ̂, σ̂ and their share of the
//! fitted observations.

use std::fmt::Write;

use crate::data::{ColumnKind, Schema};
use crate::numfmt::sig;
use crate::tree::{SplitKind, SplitRule, TreeNode};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DotOptions {
    /// When set, leaf labels show `σ̂ × sigma_scale` instead of `σ̂`.
    pub sigma_scale: Option<f64>,
}

/// Quoted-string body with one escaped line per item.
fn label(lines: &[String]) -> String {
    lines.iter().map(|s| s.replace('\\', "\\\\").replace('"', "\\\"")).collect::<Vec<_>>().join("\\n")
}

fn column_name(schema: Option<&Schema>, column: usize) -> String {
    schema.and_then(|s| s.names.get(column).cloned()).unwrap_or_else(|| format!("x{column}"))
}

fn rule_label(rule: &SplitRule, schema: Option<&Schema>) -> String {
    let name = column_name(schema, rule.column);
    match &rule.kind {
        SplitKind::NumericThreshold { x_star } => format!("{name} <= {}", sig(*x_star, 6)),
        SplitKind::CategorySubset { left_levels, .. } => {
            let levels = schema.and_then(|s| match s.kinds.get(rule.column) {
                Some(ColumnKind::Categorical { levels }) => Some(levels),
                _ => None,
            });
            let names: Vec<String> = left_levels
                .iter()
                .map(|&id| levels.and_then(|l| l.get(id as usize).cloned()).unwrap_or_else(|| id.to_string()))
                .collect();
            format!("{name} in {{{}}}", names.join(", "))
        }
    }
}

/// DOT digraph of `t`; node `n<id>` per tree node, left edges labelled
/// `yes`.
pub fn export_dot(t: &TreeNode, schema: Option<&Schema>, opts: &DotOptions) -> String {
    let total = t.fit().n_obs.max(1) as f64;
    let mut out = String::from("digraph gptree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    let mut stack = vec![t];
    while let Some(node) = stack.pop() {
        match node {
            TreeNode::Leaf { id, fit } => {
                let sigma = match opts.sigma_scale {
                    Some(s) => format!("sigma x {} = {}", sig(s, 3), sig(fit.params.sigma * s, 3)),
                    None => format!("sigma = {}", sig(fit.params.sigma, 3)),
                };
                let text = label(&[
                    format!("leaf {id}"),
                    format!("gamma = {}", sig(fit.params.gamma, 3)),
                    sigma,
                    format!("{}%", sig(100.0 * fit.n_obs as f64 / total, 3)),
                ]);
                let _ = writeln!(out, "  n{id} [label=\"{text}\", shape=ellipse];");
            }
            TreeNode::Internal { id, fit, rule, left, right } => {
                let text = label(&[rule_label(rule, schema), format!("n = {}", fit.n_obs)]);
                let _ = writeln!(out, "  n{id} [label=\"{text}\"];");
                let _ = writeln!(out, "  n{id} -> n{} [label=\"yes\"];", left.id());
                let _ = writeln!(out, "  n{id} -> n{} [label=\"no\"];", right.id());
                stack.push(right);
                stack.push(left);
            }
        }
    }
    out.push_str("}\n");
    out
}
