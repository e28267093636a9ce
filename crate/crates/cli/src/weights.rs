//! Text file holding a trained ID head together with the tracker seed, ID
//! count and channel count it was trained against.
//!
//! ```text
//! IAIHEAD 1 <seed> <n-ids> <channels>
//! W1 <C*C reals, row-major>
//! B1 <C reals>
//! W2 <C*(N+1) reals, row-major>
//! B2 <N+1 reals>
//! ```

use std::fmt::Write as _;

use iai_core::toyhead::ToyIdHead;
use iai_core::Matrix;

use crate::iaitrack::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadFile {
    pub seed: u64,
    pub head: ToyIdHead,
}

fn row(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        // shortest representation that parses back to the same bits
        let _ = write!(out, " {v:?}");
    }
    out.push('\n');
}

pub fn write(file: &HeadFile) -> String {
    let h = &file.head;
    let mut out = format!("IAIHEAD 1 {} {} {}\n", file.seed, h.n_ids(), h.channels());
    row(&mut out, "W1", h.w1.data());
    row(&mut out, "B1", &h.b1);
    row(&mut out, "W2", h.w2.data());
    row(&mut out, "B2", &h.b2);
    out
}

pub fn parse(text: &str) -> Result<HeadFile, ParseError> {
    let bad = |line: usize, reason: String| ParseError::Malformed { line, reason };
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != 5 {
        return Err(bad(lines.len().clamp(1, 5), "expected a header and 4 weight rows".into()));
    }
    let h: Vec<&str> = lines[0].split_ascii_whitespace().collect();
    if h.len() != 5 || h[0] != "IAIHEAD" || h[1] != "1" {
        return Err(bad(1, "expected `IAIHEAD 1 <seed> <n-ids> <channels>`".into()));
    }
    let seed: u64 = h[2].parse().map_err(|_| bad(1, "invalid seed".into()))?;
    let n: usize = h[3].parse().map_err(|_| bad(1, "invalid id count".into()))?;
    let c: usize = h[4].parse().map_err(|_| bad(1, "invalid channel count".into()))?;
    if n < 2 || c == 0 {
        return Err(bad(1, "need at least 2 ids and 1 channel".into()));
    }
    let values = |idx: usize, tag: &str, len: usize| -> Result<Vec<f64>, ParseError> {
        let mut parts = lines[idx].split_ascii_whitespace();
        if parts.next() != Some(tag) {
            return Err(bad(idx + 1, format!("expected `{tag}` row")));
        }
        let v = parts
            .map(|p| p.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(idx + 1, "weights must be finite reals".into()))?;
        if v.len() != len {
            return Err(bad(idx + 1, format!("expected {len} values, found {}", v.len())));
        }
        Ok(v)
    };
    let w1 = Matrix::from_vec(c, c, values(1, "W1", c * c)?).expect("checked");
    let b1 = values(2, "B1", c)?;
    let w2 = Matrix::from_vec(c, n + 1, values(3, "W2", c * (n + 1))?).expect("checked");
    let b2 = values(4, "B2", n + 1)?;
    Ok(HeadFile {
        seed,
        head: ToyIdHead { w1, b1, w2, b2 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let f = HeadFile {
            seed: 11,
            head: ToyIdHead::new(3, 4, 5),
        };
        let text = write(&f);
        let back = parse(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(write(&back), text);
    }

    #[test]
    fn wrong_length_row_rejected() {
        let f = HeadFile {
            seed: 0,
            head: ToyIdHead::new(2, 2, 0),
        };
        let text = write(&f).replace("B1 ", "B1 1.0 ");
        assert!(matches!(parse(&text), Err(ParseError::Malformed { line: 3, .. })));
    }
}
