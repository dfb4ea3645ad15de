use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A continuous multichannel recording with a gesture label per sample
/// (label `0` is rest).
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub sample_rate: f64,
    channels: Vec<Vec<f32>>,
    labels: Vec<u32>,
}

impl Recording {
    pub fn new(subject_id: u32, sample_rate: f64, channels: Vec<Vec<f32>>, labels: Vec<u32>) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::config(format!("sample rate must be positive, got {sample_rate}")));
        }
        if channels.is_empty() {
            return Err(Error::config("a recording needs at least one channel"));
        }
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != labels.len()) {
            return Err(Error::Data(format!(
                "channel {} has {} samples but there are {} labels",
                i + 1,
                c.len(),
                labels.len()
            )));
        }
        Ok(Recording {
            subject_id,
            sample_rate,
            channels,
            labels,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        &self.channels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Canonical CSV text:
    /// `subject,<id>,rate,<hz>,channels,<n>` then `t_index,ch1,...,chN,label` rows.
    pub fn to_canonical(&self) -> String {
        let mut out = String::with_capacity(self.len() * (self.n_channels() + 2) * 10);
        let _ = writeln!(
            out,
            "subject,{},rate,{},channels,{}",
            self.subject_id,
            self.sample_rate,
            self.n_channels()
        );
        for t in 0..self.len() {
            let _ = write!(out, "{t}");
            for c in &self.channels {
                let _ = write!(out, ",{}", c[t]);
            }
            let _ = writeln!(out, ",{}", self.labels[t]);
        }
        out
    }

    pub fn parse_canonical(text: &str) -> Result<Self> {
        let mut lines = text.split('\n').enumerate();
        let header = lines.next().map(|(_, l)| l.trim_end_matches('\r')).unwrap_or("");
        let bad_header = |msg: &str| Error::Parse {
            line: 1,
            message: format!("{msg}; expected `subject,<id>,rate,<hz>,channels,<n>`"),
        };
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 6 || fields[0] != "subject" || fields[2] != "rate" || fields[4] != "channels" {
            return Err(bad_header("malformed header"));
        }
        let subject_id: u32 = fields[1].parse().map_err(|_| bad_header("subject id is not an integer"))?;
        let sample_rate: f64 = fields[3].parse().map_err(|_| bad_header("rate is not a number"))?;
        let n: usize = fields[5].parse().map_err(|_| bad_header("channel count is not an integer"))?;
        if n == 0 {
            return Err(bad_header("channel count must be positive"));
        }

        let mut channels = vec![Vec::new(); n];
        let mut labels = Vec::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 2 {
                // A header that disagrees with every row is reported against the header.
                let line = if labels.is_empty() { 1 } else { line_no };
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} columns for {n} channels, found {}", n + 2, cells.len()),
                });
            }
            let t: usize = cells[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("sample index `{}` is not an integer", cells[0]),
            })?;
            if t != labels.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected sample index {}, found {t}", labels.len()),
                });
            }
            for (c, cell) in cells[1..=n].iter().enumerate() {
                let v: f32 = cell.parse().ok().filter(|v: &f32| v.is_finite()).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("channel {} value `{cell}` is not a finite number", c + 1),
                })?;
                channels[c].push(v);
            }
            let label: u32 = cells[n + 1].parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("label `{}` is not a non-negative integer", cells[n + 1]),
            })?;
            labels.push(label);
        }
        Recording::new(subject_id, sample_rate, channels, labels).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })
    }

    pub fn save_canonical(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_canonical()).map_err(|e| Error::file(path, e))
    }
}

/// Loads a recording from a canonical CSV file.
pub fn load_canonical(path: &Path) -> Result<Recording> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Recording::parse_canonical(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "subject,3,rate,100,channels,2\n0,0.5,-1.25,0\n1,2,0.001,4\n2,-3.5,1e-3,4\n";

    #[test]
    fn fixture_values() {
        let r = Recording::parse_canonical(FIXTURE).unwrap();
        assert_eq!(r.subject_id, 3);
        assert_eq!(r.sample_rate, 100.0);
        assert_eq!(r.n_channels(), 2);
        assert_eq!(r.channel(0), &[0.5, 2.0, -3.5]);
        assert_eq!(r.channel(1), &[-1.25, 0.001, 0.001]);
        assert_eq!(r.labels(), &[0, 4, 4]);
    }

    #[test]
    fn round_trip() {
        let r = Recording::new(
            9,
            1000.0,
            vec![vec![0.1, f32::MIN_POSITIVE, -7.25e6], vec![1.0 / 3.0, 0.0, -0.0]],
            vec![0, 1, 1],
        )
        .unwrap();
        let back = Recording::parse_canonical(&r.to_canonical()).unwrap();
        assert_eq!(back, r);
        for c in 0..2 {
            for (a, b) in back.channel(c).iter().zip(r.channel(c)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn header_channel_mismatch_is_line_one() {
        let text = "subject,3,rate,100,channels,3\n0,0.5,-1.25,0\n1,2,0.001,4\n";
        match Recording::parse_canonical(text) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_non_numeric_rows() {
        let ragged = "subject,3,rate,100,channels,2\n0,0.5,-1.25,0\n1,2,4\n";
        assert!(matches!(Recording::parse_canonical(ragged), Err(Error::Parse { line: 3, .. })));
        let nan = "subject,3,rate,100,channels,2\n0,0.5,abc,0\n";
        assert!(matches!(Recording::parse_canonical(nan), Err(Error::Parse { line: 2, .. })));
        let neg = "subject,3,rate,100,channels,2\n0,0.5,1,-1\n";
        assert!(matches!(Recording::parse_canonical(neg), Err(Error::Parse { line: 2, .. })));
        assert!(Recording::parse_canonical("subject,x\n").is_err());
    }
}
