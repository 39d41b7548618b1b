//! Plain-text weight checkpoints.
//!
//! ```text
//! memristor-rl weights 1
//! topology separate
//! block a 6 5
//! <row 0 values>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so reading a written
//! file reproduces the weights bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::WeightLayout;

const MAGIC: &str = "memristor-rl weights 1";

pub fn to_string<W: WeightLayout>(weights: &W) -> String {
    let flat = weights.to_flat();
    let mut out = format!("{MAGIC}\ntopology {}\n", W::TOPOLOGY);
    let mut offset = 0;
    for block in W::BLOCKS {
        let _ = writeln!(out, "block {} {} {}", block.name, block.rows, block.cols);
        for r in 0..block.rows {
            let row = &flat[offset + r * block.cols..offset + (r + 1) * block.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        offset += block.len();
    }
    out
}

pub fn from_str<W: WeightLayout>(text: &str) -> Result<W> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(bad("missing header".into()));
    }
    match lines.next().and_then(|l| l.trim().strip_prefix("topology ")) {
        Some(t) if t == W::TOPOLOGY => {}
        Some(t) => return Err(bad(format!("topology `{t}` where `{}` was expected", W::TOPOLOGY))),
        None => return Err(bad("missing topology line".into())),
    }
    let mut flat = Vec::with_capacity(W::len());
    for block in W::BLOCKS {
        let header = lines
            .next()
            .ok_or_else(|| bad(format!("missing block `{}`", block.name)))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "block" || fields[1] != block.name {
            return Err(bad(format!("expected block `{}`, found `{header}`", block.name)));
        }
        let dims: Vec<usize> = fields[2..]
            .iter()
            .map(|f| f.parse().map_err(|_| bad(format!("bad dimension `{f}`"))))
            .collect::<Result<_>>()?;
        if (dims[0], dims[1]) != (block.rows, block.cols) {
            return Err(Error::Shape {
                expected: (block.rows, block.cols),
                got: (dims[0], dims[1]),
            });
        }
        for r in 0..block.rows {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("block `{}` truncated at row {r}", block.name)))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(format!("bad value `{v}`"))))
                .collect::<Result<_>>()?;
            if row.len() != block.cols {
                return Err(Error::Shape {
                    expected: (block.rows, block.cols),
                    got: (block.rows, row.len()),
                });
            }
            flat.extend(row);
        }
    }
    if let Some(extra) = lines.next() {
        return Err(bad(format!("trailing content `{extra}`")));
    }
    W::from_flat(&flat)
}

pub fn save<W: WeightLayout>(weights: &W, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(weights))?;
    Ok(())
}

pub fn load<W: WeightLayout>(path: &Path) -> Result<W> {
    from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{SeparateNetWeights, SharedNetWeights};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = crate::seed::rng(5, "ckpt", 0);
        let w = SeparateNetWeights::random(&mut rng).scale(1.0 / 3.0);
        let back: SeparateNetWeights = from_str(&to_string(&w)).unwrap();
        assert_eq!(
            back.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            w.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn wrong_topology_rejected() {
        let text = to_string(&SharedNetWeights::zeros());
        let err = from_str::<SeparateNetWeights>(&text).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn wrong_shape_rejected() {
        let text = to_string(&SharedNetWeights::zeros()).replace("block w_v 1 6", "block w_v 1 5");
        assert!(matches!(
            from_str::<SharedNetWeights>(&text).unwrap_err(),
            Error::Shape { .. }
        ));
        let text = to_string(&SharedNetWeights::zeros()).replacen("0 0 0 0 0\n", "0 0 0 0\n", 1);
        assert!(from_str::<SharedNetWeights>(&text).is_err());
    }
}
