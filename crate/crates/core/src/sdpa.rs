//! SDPA sparse-format (".dat-s") export of assembled relaxations.
//!
//! The moment problem `min cost . y` over equality rows and PSD blocks is
//! written in the dual slot of the SDPA form: the block-diagonal matrix
//! variable collects all PSD blocks, every linear row becomes one dual
//! constraint `tr(F_i Y) = rhs_i`, and the objective matrix is
//! `F_0 = -mat(cost)`, so the optimal value reported by an SDPA solver is
//! the negated relaxation minimum.
//!
//! Byte layout, fixed and deterministic:
//! - one comment line `*counts <links> <defs> <eqs>` giving the number of
//!   slot-linking rows, compound-slot definition rows, and problem
//!   equality rows beyond the normalization;
//! - the constraint count, the block count, and the block size line;
//! - the right-hand-side line;
//! - entry records `matno blkno i j value` with 1-based indices, `i <= j`,
//!   17-significant-digit values, off-diagonal coefficients halved so the
//!   trace pairing reproduces the intended slot coefficient.
//!
//! Row order: the normalization first; then one linking row per repeated
//! plain-moment slot, tying it (coefficient +1) to the first slot holding
//! the same moment (coefficient -1) in block scan order; then one
//! definition row per compound slot, +1 on the slot and the negated
//! functional on canonical slots; then the remaining equality rows. Every
//! moment variable's canonical slot lies in the leading moment block,
//! whose upper triangle is scanned row-major.

use crate::moment::SdpProblem;
use std::collections::HashMap;
use std::fmt::Write as _;

/// A position in the block-diagonal matrix variable: (block, row, col)
/// with `row <= col`, all 0-based.
type Slot = (usize, usize, usize);

/// Canonical slot of every moment variable: the first slot, in block scan
/// order, whose functional is exactly the variable with coefficient one.
fn canonical_slots(sdp: &SdpProblem) -> HashMap<usize, Slot> {
    let mut canon = HashMap::new();
    for (b, blk) in sdp.blocks.iter().enumerate() {
        for r in 0..blk.dim {
            for c in r..blk.dim {
                if let [(v, 1.0)] = blk.entry(r, c) {
                    canon.entry(*v).or_insert((b, r, c));
                }
            }
        }
    }
    canon
}

/// Render the problem as SDPA sparse text. Byte-identical across runs for
/// identical inputs.
pub fn export_sdpa(sdp: &SdpProblem) -> String {
    let canon = canonical_slots(sdp);
    let at = |v: usize| -> Slot {
        *canon
            .get(&v)
            .expect("moment variable without a canonical slot")
    };
    let map_row = |entries: &[(usize, f64)]| -> Vec<(Slot, f64)> {
        let mut out: Vec<(Slot, f64)> =
            entries.iter().map(|&(v, w)| (at(v), w)).collect();
        out.sort_by_key(|&(s, _)| s);
        out
    };

    // Rows in the documented order; each is (slot coefficients, rhs).
    let mut links: Vec<Vec<(Slot, f64)>> = Vec::new();
    let mut defs: Vec<Vec<(Slot, f64)>> = Vec::new();
    for (b, blk) in sdp.blocks.iter().enumerate() {
        for r in 0..blk.dim {
            for c in r..blk.dim {
                let slot = (b, r, c);
                let f = blk.entry(r, c);
                if let [(v, 1.0)] = f {
                    if at(*v) != slot {
                        links.push(vec![(slot, 1.0), (at(*v), -1.0)]);
                    }
                } else {
                    let mut row = vec![(slot, 1.0)];
                    for &(v, w) in f {
                        row.push((at(v), -w));
                    }
                    defs.push(row);
                }
            }
        }
    }

    let mut rows: Vec<(Vec<(Slot, f64)>, f64)> = Vec::new();
    rows.push((map_row(&sdp.eq[0].entries), sdp.eq[0].rhs));
    rows.extend(links.iter().map(|r| (r.clone(), 0.0)));
    rows.extend(defs.iter().map(|r| (r.clone(), 0.0)));
    for row in &sdp.eq[1..] {
        rows.push((map_row(&row.entries), row.rhs));
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "*counts {} {} {}",
        links.len(),
        defs.len(),
        sdp.eq.len() - 1
    );
    let _ = writeln!(out, "{}", rows.len());
    let _ = writeln!(out, "{}", sdp.blocks.len());
    let sizes: Vec<String> = sdp.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = rows.iter().map(|r| format!("{:.16e}", r.1)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));

    // One record per entry: off-diagonal coefficients halved so that the
    // symmetric trace pairing recovers the slot coefficient.
    let mut record = |matno: usize, entries: &[(Slot, f64)]| {
        for &((b, r, c), w) in entries {
            let v = if r == c { w } else { w / 2.0 };
            if v != 0.0 {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {:.16e}",
                    matno,
                    b + 1,
                    r + 1,
                    c + 1,
                    v
                );
            }
        }
    };
    let objective: Vec<(Slot, f64)> = {
        let mut o: Vec<(Slot, f64)> = sdp
            .cost
            .iter()
            .enumerate()
            .filter(|&(_, w)| *w != 0.0)
            .map(|(v, &w)| (at(v), -w))
            .collect();
        o.sort_by_key(|&(s, _)| s);
        o
    };
    record(0, &objective);
    for (i, (entries, _)) in rows.iter().enumerate() {
        record(i + 1, entries);
    }
    out
}
