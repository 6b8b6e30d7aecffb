//! Line-oriented sparse triplet serialization of [`ConicProgram`].
//!
//! ```text
//! conic-program v1
//! num_vars <n>
//! objective_constant <c>
//! c <var> <coef>                 objective term
//! eq <row> <rhs>                 equality row header
//! a_eq <row> <var> <coef>
//! ge <row> <rhs>                 row · z >= rhs header
//! a_ge <row> <var> <coef>
//! psd <block> <order>
//! psd_entry <block> <pos> <slot>
//! exp <cone> <slot> <slot> <slot>
//! ```
//!
//! A slot is `v:<var>` or `k:<value>`. Floats use Rust's shortest round-trip
//! formatting, so parsing the output reproduces the program exactly.

use std::fmt::Write as _;

use super::{ConicProgram, ExpCone, LinearConstraint, LinearForm, PsdBlock, Slot};
use crate::{Error, Result};

const HEADER: &str = "conic-program v1";

fn slot_token(s: &Slot) -> String {
    match s {
        Slot::Var(v) => format!("v:{v}"),
        Slot::Const(c) => format!("k:{c:?}"),
    }
}

pub fn to_text(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "num_vars {}", p.num_vars);
    let _ = writeln!(out, "objective_constant {:?}", p.objective_constant);
    for &(v, c) in &p.objective.terms {
        let _ = writeln!(out, "c {v} {c:?}");
    }
    for (tag, rows) in [("eq", &p.equalities), ("ge", &p.nonneg_inequalities)] {
        for (k, row) in rows.iter().enumerate() {
            let _ = writeln!(out, "{tag} {k} {:?}", row.rhs);
            for &(v, c) in &row.row.terms {
                let _ = writeln!(out, "a_{tag} {k} {v} {c:?}");
            }
        }
    }
    for (k, b) in p.psd_blocks.iter().enumerate() {
        let _ = writeln!(out, "psd {k} {}", b.order);
        for (pos, s) in b.entries.iter().enumerate() {
            let _ = writeln!(out, "psd_entry {k} {pos} {}", slot_token(s));
        }
    }
    for (k, e) in p.exp_cones.iter().enumerate() {
        let _ = writeln!(
            out,
            "exp {k} {} {} {}",
            slot_token(&e.a),
            slot_token(&e.b),
            slot_token(&e.c)
        );
    }
    out
}

struct Cursor<'a> {
    line: usize,
    fields: std::str::SplitWhitespace<'a>,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.fields.next().ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse().map_err(|_| self.err(format!("bad {what}: {tok}")))
    }

    fn slot(&mut self) -> Result<Slot> {
        let tok: String = self.next("slot")?;
        if let Some(v) = tok.strip_prefix("v:") {
            v.parse().map(Slot::Var).map_err(|_| self.err(format!("bad slot {tok}")))
        } else if let Some(c) = tok.strip_prefix("k:") {
            c.parse().map(Slot::Const).map_err(|_| self.err(format!("bad slot {tok}")))
        } else {
            Err(self.err(format!("bad slot {tok}")))
        }
    }

    /// Parses a sequential index and checks it equals `expected`.
    fn index(&mut self, expected: usize, what: &str) -> Result<()> {
        let k: usize = self.next(what)?;
        if k != expected {
            return Err(self.err(format!("{what} {k} out of order, expected {expected}")));
        }
        Ok(())
    }
}

pub fn from_text(text: &str) -> Result<ConicProgram> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header '{HEADER}'"),
            })
        }
    }
    let mut p = ConicProgram::default();
    for (idx, line) in lines {
        let mut cur = Cursor {
            line: idx + 1,
            fields: line.split_whitespace(),
        };
        let key: String = cur.next("keyword")?;
        match key.as_str() {
            "num_vars" => p.num_vars = cur.next("count")?,
            "objective_constant" => p.objective_constant = cur.next("value")?,
            "c" => {
                let v = cur.next("variable")?;
                let c = cur.next("coefficient")?;
                p.objective.terms.push((v, c));
            }
            "eq" | "ge" => {
                let rows = if key == "eq" { &mut p.equalities } else { &mut p.nonneg_inequalities };
                cur.index(rows.len(), "row")?;
                rows.push(LinearConstraint::new(LinearForm::new(), cur.next("rhs")?));
            }
            "a_eq" | "a_ge" => {
                let rows = if key == "a_eq" { &mut p.equalities } else { &mut p.nonneg_inequalities };
                if rows.is_empty() {
                    return Err(cur.err("row entry before any row header"));
                }
                cur.index(rows.len() - 1, "row")?;
                let v = cur.next("variable")?;
                let c = cur.next("coefficient")?;
                rows.last_mut().unwrap().row.terms.push((v, c));
            }
            "psd" => {
                cur.index(p.psd_blocks.len(), "block")?;
                p.psd_blocks.push(PsdBlock {
                    order: cur.next("order")?,
                    entries: Vec::new(),
                });
            }
            "psd_entry" => {
                if p.psd_blocks.is_empty() {
                    return Err(cur.err("psd entry before any block header"));
                }
                cur.index(p.psd_blocks.len() - 1, "block")?;
                let pos = p.psd_blocks.last().unwrap().entries.len();
                cur.index(pos, "position")?;
                let s = cur.slot()?;
                p.psd_blocks.last_mut().unwrap().entries.push(s);
            }
            "exp" => {
                cur.index(p.exp_cones.len(), "cone")?;
                let (a, b, c) = (cur.slot()?, cur.slot()?, cur.slot()?);
                p.exp_cones.push(ExpCone { a, b, c });
            }
            other => return Err(cur.err(format!("unknown keyword {other}"))),
        }
        if cur.fields.next().is_some() {
            return Err(cur.err("trailing fields"));
        }
    }
    p.validate()?;
    Ok(p)
}
