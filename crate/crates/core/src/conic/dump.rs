//! Plain-text program dump.
//!
//! ```text
//! conic-program 1
//! vars <n>
//! var <index> <name> [binary]
//! maximize <affine>
//! eq <affine>            # affine == 0
//! nonneg <affine>        # affine >= 0
//! soc <k>                # followed by k affine lines, first is the bound
//! psd <dim>              # followed by dim(dim+1)/2 affine lines, upper
//!                        # triangle in column-major order
//! ```
//!
//! An affine expression is `<constant> [<index>:<coef> ...]`, numbers in
//! round-trip precision.

use std::fmt::Write;

use super::{Affine, ConicProgram};
use crate::scalar::Scalar;

fn affine<T: Scalar>(out: &mut String, e: &Affine<T>) {
    let e = e.compact();
    write!(out, "{:e}", e.constant.as_f64()).unwrap();
    for (i, c) in e.terms {
        write!(out, " {i}:{:e}", c.as_f64()).unwrap();
    }
    out.push('\n');
}

pub(super) fn write<T: Scalar>(p: &ConicProgram<T>) -> String {
    let mut out = String::new();
    writeln!(out, "conic-program 1").unwrap();
    writeln!(out, "vars {}", p.len()).unwrap();
    for (i, name) in p.names.iter().enumerate() {
        let tag = if p.binaries.contains(&i) { " binary" } else { "" };
        writeln!(out, "var {i} {name}{tag}").unwrap();
    }
    out.push_str("maximize ");
    affine(&mut out, &p.objective);
    for e in &p.eqs {
        out.push_str("eq ");
        affine(&mut out, e);
    }
    for e in &p.nonneg {
        out.push_str("nonneg ");
        affine(&mut out, e);
    }
    for c in &p.socs {
        writeln!(out, "soc {}", c.len()).unwrap();
        for e in c {
            affine(&mut out, e);
        }
    }
    for b in &p.psd {
        writeln!(out, "psd {}", b.dim).unwrap();
        for e in &b.upper {
            affine(&mut out, e);
        }
    }
    out
}
