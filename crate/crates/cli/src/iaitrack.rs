//! IAITRACK v1: the ASCII tube format shared by datasets and predictions.
//!
//! ```text
//! IAITRACK 1 <dataset|pred> <videos>
//! VIDEO <id> <frames> <height> <width> <categories>
//! TUBE <instance-id> <class> <confidence>
//! F <t> <run,run,...>
//! ```
//!
//! Frames are 0-based. Runs encode the row-major mask starting with the
//! number of leading zeros; frames where the tube is absent have no `F` line.

use std::fmt::Write as _;
use std::str::FromStr;

use iai_core::tracker::MaskTube;
use iai_core::Mask;

pub const MAGIC: &str = "IAITRACK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dataset,
    Pred,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Dataset => "dataset",
            Kind::Pred => "pred",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub categories: usize,
    pub tubes: Vec<MaskTube>,
}

impl VideoRecord {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackFile {
    pub kind: Kind,
    pub videos: Vec<VideoRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Malformed { line: usize, reason: String },
    Collision { line: usize, video: u64, id: usize },
}

fn malformed(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        reason: reason.into(),
    }
}

pub fn write(file: &TrackFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION} {} {}", file.kind.as_str(), file.videos.len());
    for v in &file.videos {
        let _ = writeln!(
            out,
            "VIDEO {} {} {} {} {}",
            v.id, v.frames, v.height, v.width, v.categories
        );
        for tube in &v.tubes {
            let _ = writeln!(out, "TUBE {} {} {:.6}", tube.id, tube.class, tube.confidence);
            for (t, m) in tube.masks.iter().enumerate() {
                if m.is_blank() {
                    continue;
                }
                let runs: Vec<String> = m.to_runs().iter().map(usize::to_string).collect();
                let _ = writeln!(out, "F {t} {}", runs.join(","));
            }
        }
    }
    out
}

fn field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| malformed(line, format!("missing {what}")))?;
    if tok.starts_with('+') {
        return Err(malformed(line, format!("invalid {what} `{tok}`")));
    }
    tok.parse()
        .map_err(|_| malformed(line, format!("invalid {what} `{tok}`")))
}

fn finish(mut parts: std::str::SplitAsciiWhitespace<'_>, line: usize) -> Result<(), ParseError> {
    match parts.next() {
        Some(extra) => Err(malformed(line, format!("unexpected trailing `{extra}`"))),
        None => Ok(()),
    }
}

pub fn parse(text: &str) -> Result<TrackFile, ParseError> {
    if text.contains('\r') {
        let line = text[..text.find('\r').unwrap()].matches('\n').count() + 1;
        return Err(malformed(line, "carriage return; LF line endings required"));
    }
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| malformed(text.lines().count().max(1), "file must end with a newline"))?;
    let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(malformed(1, format!("expected `{MAGIC}` header")));
    }
    let version: u32 = field(parts.next(), 1, "version")?;
    if version != VERSION {
        return Err(malformed(1, format!("unsupported version {version}")));
    }
    let kind = match parts.next() {
        Some("dataset") => Kind::Dataset,
        Some("pred") => Kind::Pred,
        other => return Err(malformed(1, format!("unknown kind {other:?}"))),
    };
    let declared: usize = field(parts.next(), 1, "video count")?;
    finish(parts, 1)?;

    let mut videos: Vec<VideoRecord> = Vec::new();
    // last frame index written for the current tube
    let mut last_t: Option<usize> = None;
    for (n, line) in lines {
        let mut parts = line.split_ascii_whitespace();
        match parts.next() {
            Some("VIDEO") => {
                let id: u64 = field(parts.next(), n, "video id")?;
                let frames: usize = field(parts.next(), n, "frame count")?;
                let height: usize = field(parts.next(), n, "height")?;
                let width: usize = field(parts.next(), n, "width")?;
                let categories: usize = field(parts.next(), n, "category count")?;
                finish(parts, n)?;
                if frames == 0 || height == 0 || width == 0 || categories == 0 {
                    return Err(malformed(n, "video dimensions must be positive"));
                }
                if videos.iter().any(|v| v.id == id) {
                    return Err(malformed(n, format!("duplicate video id {id}")));
                }
                check_tube_closed(&videos, n)?;
                videos.push(VideoRecord {
                    id,
                    frames,
                    height,
                    width,
                    categories,
                    tubes: Vec::new(),
                });
                last_t = None;
            }
            Some("TUBE") => {
                check_tube_closed(&videos, n)?;
                let video = videos
                    .last_mut()
                    .ok_or_else(|| malformed(n, "TUBE before any VIDEO"))?;
                let id: usize = field(parts.next(), n, "instance id")?;
                let class: usize = field(parts.next(), n, "class")?;
                let confidence: f64 = field(parts.next(), n, "confidence")?;
                finish(parts, n)?;
                if class >= video.categories {
                    return Err(malformed(n, format!("class {class} >= {}", video.categories)));
                }
                if !(0.0..=1.0).contains(&confidence) {
                    return Err(malformed(n, format!("confidence {confidence} outside [0, 1]")));
                }
                if video.tubes.iter().any(|t| t.id == id) {
                    return Err(ParseError::Collision {
                        line: n,
                        video: video.id,
                        id,
                    });
                }
                let pixels = video.pixels();
                video.tubes.push(MaskTube {
                    id,
                    class,
                    confidence,
                    masks: vec![Mask::empty(pixels); video.frames],
                });
                last_t = None;
            }
            Some("F") => {
                let video = videos
                    .last_mut()
                    .ok_or_else(|| malformed(n, "F before any VIDEO"))?;
                let pixels = video.pixels();
                let frames = video.frames;
                let tube = video
                    .tubes
                    .last_mut()
                    .ok_or_else(|| malformed(n, "F before any TUBE"))?;
                let t: usize = field(parts.next(), n, "frame index")?;
                let rle = parts.next().ok_or_else(|| malformed(n, "missing run lengths"))?;
                finish(parts, n)?;
                if t >= frames {
                    return Err(malformed(n, format!("frame {t} >= {frames}")));
                }
                if last_t.is_some_and(|p| t <= p) {
                    return Err(malformed(n, "frame indices must increase within a tube"));
                }
                let runs = rle
                    .split(',')
                    .map(|r| field::<usize>(Some(r), n, "run length"))
                    .collect::<Result<Vec<_>, _>>()?;
                let mask = Mask::from_runs(pixels, &runs)
                    .ok_or_else(|| malformed(n, format!("runs do not cover {pixels} pixels")))?;
                if mask.is_blank() {
                    return Err(malformed(n, "blank frames must be omitted"));
                }
                if mask.to_runs() != runs {
                    return Err(malformed(n, "runs are not in canonical form"));
                }
                tube.masks[t] = mask;
                last_t = Some(t);
            }
            Some(other) => return Err(malformed(n, format!("unknown record `{other}`"))),
            None => return Err(malformed(n, "blank line")),
        }
    }
    let end = body.split('\n').count() + 1;
    check_tube_closed(&videos, end)?;
    if videos.len() != declared {
        return Err(malformed(
            1,
            format!("header declares {declared} videos, found {}", videos.len()),
        ));
    }
    Ok(TrackFile { kind, videos })
}

fn check_tube_closed(videos: &[VideoRecord], line: usize) -> Result<(), ParseError> {
    match videos.last().and_then(|v| v.tubes.last()) {
        Some(t) if t.is_blank() => Err(malformed(
            line,
            format!("tube {} has no frames", t.id),
        )),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrackFile {
        let m = |idx: &[usize]| Mask::from_indices(6, idx.iter().copied());
        TrackFile {
            kind: Kind::Pred,
            videos: vec![
                VideoRecord {
                    id: 3,
                    frames: 2,
                    height: 2,
                    width: 3,
                    categories: 2,
                    tubes: vec![MaskTube {
                        id: 0,
                        class: 1,
                        confidence: 0.5,
                        masks: vec![m(&[1, 2]), Mask::empty(6)],
                    }],
                },
                VideoRecord {
                    id: 4,
                    frames: 1,
                    height: 2,
                    width: 3,
                    categories: 1,
                    tubes: vec![],
                },
            ],
        }
    }

    #[test]
    fn exact_text() {
        assert_eq!(
            write(&sample()),
            "IAITRACK 1 pred 2\nVIDEO 3 2 2 3 2\nTUBE 0 1 0.500000\nF 0 1,2,3\nVIDEO 4 1 2 3 1\n"
        );
    }

    #[test]
    fn roundtrip() {
        let f = sample();
        assert_eq!(parse(&write(&f)).unwrap(), f);
    }

    #[test]
    fn reports_line_numbers() {
        let cases = [
            ("IAITRACK 2 pred 0\n", 1),
            ("IAITRACK 1 pred 1\nVIDEO 1 2 2 2 1\nTUBE 0 0 1.000000\nF 0 1,2\n", 4),
            ("IAITRACK 1 pred 1\nVIDEO 1 2 2 2 1\nTUBE 0 0 1.000000\nF 5 1,3\n", 4),
            ("IAITRACK 1 pred 1\nVIDEO 1 2 2 2 1\nTUBE 0 3 1.000000\n", 3),
            ("IAITRACK 1 pred 1\nVIDEO 1 2 2 2 1\nTUBE 0 0 1.000000\n", 4),
            ("IAITRACK 1 pred 1\nVIDEO 1 2 2 2 1\nTUBE 0 0 1.000000\nF 0 4\n", 4),
            ("IAITRACK 1 pred 2\nVIDEO 1 2 2 2 1\n", 1),
            ("IAITRACK 1 pred 1\nVIDEO 1 2 2 2 1\n\n", 3),
            ("IAITRACK 1 pred 1\r\nVIDEO 1 2 2 2 1\n", 1),
            ("IAITRACK 1 pred 0", 1),
            ("IAITRACK 1 pred 1\nVIDEO 1 1 2 2 1\nTUBE 0 0 1.000000\nF 0 1,0,0,1,2\n", 4),
        ];
        for (text, line) in cases {
            match parse(text) {
                Err(ParseError::Malformed { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_tube_id_is_collision() {
        let text = "IAITRACK 1 pred 1\nVIDEO 9 1 1 2 1\nTUBE 4 0 1.000000\nF 0 0,1,1\nTUBE 4 0 1.000000\nF 0 1,1\n";
        assert_eq!(
            parse(text),
            Err(ParseError::Collision {
                line: 5,
                video: 9,
                id: 4
            })
        );
    }
}
