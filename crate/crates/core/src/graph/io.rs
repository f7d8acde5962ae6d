//! Plain-text edge lists.
//!
//! ```text
//! # comments and blank lines are ignored
//! n 3
//! 2 1 1.0     # weight with which node 2 listens to node 1
//! 3 2 0.5
//! ```
//!
//! The header is `n <count>` (a bare `<count>` is also accepted). Node ids are
//! 1-based; each line `i j w` adds the directed edge `j -> i` with weight `w`.

use nalgebra::DMatrix;

use super::WeightedDigraph;
use crate::{Error, Result};

pub fn parse_edge_list(text: &str) -> Result<WeightedDigraph> {
    let mut n: Option<usize> = None;
    let mut weights: Option<DMatrix<f64>> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let Some(count) = n else {
            let token = match fields.as_slice() {
                ["n", c] => *c,
                [c] => *c,
                _ => return Err(err(format!("expected header `n <count>`, found `{line}`"))),
            };
            let count: usize = token.parse().map_err(|_| err(format!("bad node count `{token}`")))?;
            if count == 0 {
                return Err(err("node count must be positive".into()));
            }
            n = Some(count);
            weights = Some(DMatrix::zeros(count, count));
            continue;
        };
        let [i, j, w] = fields.as_slice() else {
            return Err(err(format!("expected `i j w`, found `{line}`")));
        };
        let parse_id = |s: &str| -> Result<usize> {
            let id: usize = s.parse().map_err(|_| err(format!("bad node id `{s}`")))?;
            if id == 0 || id > count {
                return Err(err(format!("node id {id} outside 1..={count}")));
            }
            Ok(id - 1)
        };
        let (i, j) = (parse_id(i)?, parse_id(j)?);
        let w: f64 = w.parse().map_err(|_| err(format!("bad weight `{w}`")))?;
        if i == j {
            return Err(err(format!("self-loop on node {}", i + 1)));
        }
        if !(w.is_finite() && w >= 0.0) {
            return Err(err(format!("weight {w} is not a nonnegative real")));
        }
        let m = weights.as_mut().expect("allocated with header");
        if m[(i, j)] != 0.0 {
            return Err(err(format!("duplicate edge {} {}", i + 1, j + 1)));
        }
        m[(i, j)] = w;
    }
    let weights = weights.ok_or(Error::Parse { line: 0, msg: "missing `n <count>` header".into() })?;
    WeightedDigraph::new(weights)
}

pub fn write_edge_list(g: &WeightedDigraph) -> String {
    let mut out = format!("n {}\n", g.n());
    for i in 0..g.n() {
        for j in 0..g.n() {
            let w = g.weight(i, j);
            if w > 0.0 {
                out.push_str(&format!("{} {} {:?}\n", i + 1, j + 1, w));
            }
        }
    }
    out
}
