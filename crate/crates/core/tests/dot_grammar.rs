//! Exported drawings must parse under the DOT language grammar:
//!
//! ```text
//! graph     : [strict] (graph | digraph) [ID] '{' stmt_list '}'
//! stmt_list : [stmt [';'] stmt_list]
//! stmt      : node_stmt | edge_stmt | attr_stmt | ID '=' ID | subgraph
//! attr_stmt : (graph | node | edge) attr_list
//! attr_list : '[' [a_list] ']' [attr_list]
//! a_list    : ID '=' ID [(';' | ',')] [a_list]
//! edge_stmt : (node_id | subgraph) edgeRHS [attr_list]
//! edgeRHS   : edgeop (node_id | subgraph) [edgeRHS]
//! node_stmt : node_id [attr_list]
//! node_id   : ID [port]
//! ```
//!
//! The checker below is written from that grammar alone and shares no code
//! with the exporter. Ports and subgraphs are rejected since the exporter
//! never emits them.

use gptree::data::{Column, Dataset};
use gptree::gpd::{gp_sample, GpParams};
use gptree::io::{export_dot, DotOptions};
use gptree::{grow, GrowConfig, TreeNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Punct(char),
    Arrow,
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let c: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < c.len() {
        let ch = c[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch == '/' && c.get(i + 1) == Some(&'/') {
            while i < c.len() && c[i] != '\n' {
                i += 1;
            }
        } else if "{}[];,=".contains(ch) {
            out.push(Tok::Punct(ch));
            i += 1;
        } else if ch == '-' && c.get(i + 1) == Some(&'>') {
            out.push(Tok::Arrow);
            i += 2;
        } else if ch == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match c.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') if c.get(i + 1) == Some(&'"') => {
                        s.push('"');
                        i += 2;
                    }
                    Some(&x) => {
                        s.push(x);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Tok::Id(s));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < c.len() && (c[i].is_ascii_alphanumeric() || c[i] == '_') {
                i += 1;
            }
            out.push(Tok::Id(c[start..i].iter().collect()));
        } else if ch.is_ascii_digit() || ch == '.' || ch == '-' {
            let start = i;
            i += 1;
            while i < c.len() && (c[i].is_ascii_digit() || c[i] == '.') {
                i += 1;
            }
            let num: String = c[start..i].iter().collect();
            if num.matches('.').count() > 1 || num == "-" || num == "." {
                return Err(format!("bad numeral {num}"));
            }
            out.push(Tok::Id(num));
        } else {
            return Err(format!("unexpected character {ch:?}"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    nodes: std::collections::BTreeSet<String>,
    edges: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.peek().cloned() {
            Some(Tok::Id(s)) => {
                self.pos += 1;
                Ok(s)
            }
            t => Err(format!("expected ID, found {t:?}")),
        }
    }

    fn keyword(s: &str) -> bool {
        ["strict", "graph", "digraph", "node", "edge", "subgraph"].contains(&s.to_ascii_lowercase().as_str())
    }

    fn graph(&mut self) -> Result<(), String> {
        if let Some(Tok::Id(s)) = self.peek() {
            if s.eq_ignore_ascii_case("strict") {
                self.pos += 1;
            }
        }
        let kind = self.id()?;
        if !kind.eq_ignore_ascii_case("digraph") {
            return Err("edges use -> so the graph must be a digraph".into());
        }
        if let Some(Tok::Id(_)) = self.peek() {
            self.pos += 1;
        }
        if !self.eat(&Tok::Punct('{')) {
            return Err("expected {".into());
        }
        while !self.eat(&Tok::Punct('}')) {
            self.stmt()?;
            self.eat(&Tok::Punct(';'));
        }
        if self.pos != self.toks.len() {
            return Err("trailing tokens".into());
        }
        Ok(())
    }

    fn attr_list(&mut self) -> Result<(), String> {
        while self.eat(&Tok::Punct('[')) {
            while !self.eat(&Tok::Punct(']')) {
                self.id()?;
                if !self.eat(&Tok::Punct('=')) {
                    return Err("expected = in attribute".into());
                }
                self.id()?;
                if !self.eat(&Tok::Punct(',')) {
                    self.eat(&Tok::Punct(';'));
                }
            }
        }
        Ok(())
    }

    fn stmt(&mut self) -> Result<(), String> {
        let first = self.id()?;
        let lower = first.to_ascii_lowercase();
        if lower == "graph" || lower == "node" || lower == "edge" {
            if self.peek() != Some(&Tok::Punct('[')) {
                return Err("attr_stmt needs an attribute list".into());
            }
            return self.attr_list();
        }
        if Self::keyword(&first) {
            return Err(format!("keyword {first} cannot start a statement here"));
        }
        if self.eat(&Tok::Punct('=')) {
            self.id()?;
            return Ok(());
        }
        self.nodes.insert(first);
        while self.eat(&Tok::Arrow) {
            let next = self.id()?;
            if Self::keyword(&next) {
                return Err("subgraphs are not expected".into());
            }
            self.nodes.insert(next);
            self.edges += 1;
        }
        self.attr_list()
    }
}

/// Parses `src`; returns (distinct node ids, edges).
fn check_dot(src: &str) -> Result<(usize, usize), String> {
    let mut p = Parser { toks: lex(src)?, pos: 0, nodes: Default::default(), edges: 0 };
    p.graph()?;
    Ok((p.nodes.len(), p.edges))
}

#[test]
fn checker_rejects_malformed_input() {
    assert!(check_dot("digraph { a -> b; }").is_ok());
    assert!(check_dot("digraph { a -> ; }").is_err());
    assert!(check_dot("digraph { a [label=\"x]; }").is_err());
    assert!(check_dot("digraph { a [label] }").is_err());
    assert!(check_dot("graph { a -> b }").is_err());
    assert!(check_dot("digraph { a } b").is_err());
}

fn mixed_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let g: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    let light = gp_sample(n, GpParams { sigma: 1.0, gamma: 0.2 }, seed + 1).unwrap().values;
    let heavy = gp_sample(n, GpParams { sigma: 2.0, gamma: 1.2 }, seed + 2).unwrap().values;
    let y = (0..n).map(|i| if x[i] > 0.5 || g[i] == 1 { heavy[i] } else { light[i] }).collect();
    let levels = vec!["a \"quoted\" level".to_string(), "back\\slash".into(), "plain".into()];
    Dataset::new(
        "y",
        y,
        vec!["x".into(), "group name".into()],
        vec![Column::Numeric(x), Column::Categorical { ids: g, levels }],
    )
    .unwrap()
}

#[test]
fn exported_trees_parse_with_expected_shape() {
    let one = export_dot(
        &TreeNode::Leaf { id: 0, fit: *grow(&mixed_dataset(30, 9), &GrowConfig::default()).unwrap().fit() },
        None,
        &DotOptions::default(),
    );
    assert_eq!(check_dot(&one).unwrap(), (1, 0));
    for seed in 0..5 {
        let d = mixed_dataset(400, seed);
        let t = grow(&d, &GrowConfig { max_leaves: 6, ..GrowConfig::default() }).unwrap();
        for opts in [DotOptions::default(), DotOptions { sigma_scale: Some(1e-5) }] {
            let dot = export_dot(&t, Some(&d.schema()), &opts);
            let (nodes, edges) = check_dot(&dot).unwrap_or_else(|e| panic!("{e}\n{dot}"));
            assert_eq!(nodes, t.n_nodes());
            assert_eq!(edges, t.n_nodes() - 1);
            assert_eq!(nodes, 2 * t.n_leaves() - 1);
        }
    }
}
