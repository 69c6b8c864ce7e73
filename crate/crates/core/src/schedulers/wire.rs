//! Frames exchanged with multi-process workers.
//!
//! Every frame is `len: u64 LE` (bytes that follow) then `kind: u8` then the
//! body. All integers and floats are little-endian; matrices use the `RMX1`
//! layout from [`crate::dataio::matrix_file`].
//!
//! ```text
//! HELLO    (0x01, worker → orchestrator)  worker_id u64
//! FEATURES (0x02)  threads u64 | RMX1(X)
//! TASK     (0x03)  task_id u64 | col_lo u64 | col_hi u64 | r u64 | r × f64 grid
//!                  | split_seed u64 | split_kind u8 | folds u64 | fraction f64
//!                  | metric u8 | job u8 | job_lambda f64 | RMX1(Y block)
//! SHUTDOWN (0x04)  empty
//! RESULT   (0x81)  task_id u64 | flags u8 | lambda f64 | svd_s f64 | sweep_s f64
//!                  | refit_s f64 | [splits u64 | r u64 | width u64 | scores f64…]
//!                  | [RMX1(weights)]
//! ERROR    (0x82)  task_id u64 | usage u8 | len u64 | utf-8 message
//! ```
//!
//! `flags` bit 0 marks a score table, bit 1 a chosen λ, bit 2 weights.

use std::io::{Read, Write};

use faer::{Mat, MatRef};

use crate::dataio::matrix_file::{decode_matrix_prefix, encode_matrix};
use crate::error::{Error, Result};
use crate::selection::{HyperParamGrid, Metric, PhaseTimes, SplitKind, SplitPlan, TargetScores};

use super::block::{BlockJob, BlockOutcome, BlockTask, CvSettings};

pub const KIND_HELLO: u8 = 0x01;
pub const KIND_FEATURES: u8 = 0x02;
pub const KIND_TASK: u8 = 0x03;
pub const KIND_SHUTDOWN: u8 = 0x04;
pub const KIND_RESULT: u8 = 0x81;
pub const KIND_ERROR: u8 = 0x82;

/// Upper bound on a single frame, to reject garbage lengths early.
const MAX_FRAME: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { worker_id: u64 },
    Features { threads: u64, x: Mat<f64> },
    Task { task: BlockTask, settings: CvSettings, y_block: Mat<f64> },
    Shutdown,
    Result(BlockOutcome),
    Error { task_id: u64, usage: bool, message: String },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: MatRef<'_, f64>) {
        encode_matrix(m, &mut self.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::Protocol(format!(
                "frame truncated: needed {n} more bytes at offset {}",
                self.at
            )));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Protocol("count exceeds usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn matrix(&mut self) -> Result<Mat<f64>> {
        let (m, used) = decode_matrix_prefix(&self.buf[self.at..])?;
        self.at += used;
        Ok(m)
    }
    fn finish(&self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(Error::Protocol(format!("{} trailing bytes in frame", self.buf.len() - self.at)));
        }
        Ok(())
    }
}

fn encode_settings(w: &mut Writer, s: &CvSettings) {
    w.u64(s.grid.len() as u64);
    for &l in s.grid.lambdas() {
        w.f64(l);
    }
    w.u64(s.plan.seed);
    let (kind, folds, fraction) = match s.plan.kind {
        SplitKind::KFold { folds } => (0u8, folds as u64, 0.0),
        SplitKind::LeaveOneOut => (1, 0, 0.0),
        SplitKind::Holdout { fraction } => (2, 0, fraction),
    };
    w.u8(kind);
    w.u64(folds);
    w.f64(fraction);
    w.u8(match s.metric {
        Metric::NegMse => 0,
        Metric::PearsonMean => 1,
    });
}

fn decode_settings(r: &mut Reader<'_>) -> Result<CvSettings> {
    let n = r.usize()?;
    let lambdas = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let grid = HyperParamGrid::new(lambdas)?;
    let seed = r.u64()?;
    let kind = r.u8()?;
    let folds = r.usize()?;
    let fraction = r.f64()?;
    let kind = match kind {
        0 => SplitKind::KFold { folds },
        1 => SplitKind::LeaveOneOut,
        2 => SplitKind::Holdout { fraction },
        k => return Err(Error::Protocol(format!("unknown split kind {k}"))),
    };
    let metric = match r.u8()? {
        0 => Metric::NegMse,
        1 => Metric::PearsonMean,
        m => return Err(Error::Protocol(format!("unknown metric code {m}"))),
    };
    Ok(CvSettings { grid, plan: SplitPlan { kind, seed }, metric })
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut w = Writer(vec![0; 8]);
    match msg {
        Message::Hello { worker_id } => {
            w.u8(KIND_HELLO);
            w.u64(*worker_id);
        }
        Message::Features { threads, x } => {
            w.u8(KIND_FEATURES);
            w.u64(*threads);
            w.matrix(x.as_ref());
        }
        Message::Task { task, settings, y_block } => {
            w.u8(KIND_TASK);
            encode_task_into(&mut w, task, settings, y_block.as_ref());
        }
        Message::Shutdown => w.u8(KIND_SHUTDOWN),
        Message::Result(out) => {
            w.u8(KIND_RESULT);
            w.u64(out.id);
            let flags = u8::from(out.scores.is_some())
                | u8::from(out.lambda.is_some()) << 1
                | u8::from(out.weights.is_some()) << 2;
            w.u8(flags);
            w.f64(out.lambda.unwrap_or(f64::NAN));
            w.f64(out.phases.svd_s);
            w.f64(out.phases.sweep_s);
            w.f64(out.phases.refit_s);
            if let Some(s) = &out.scores {
                w.u64(s.splits() as u64);
                w.u64(s.lambdas() as u64);
                w.u64(s.width() as u64);
                for &v in s.raw() {
                    w.f64(v);
                }
            }
            if let Some(b) = &out.weights {
                w.matrix(b.as_ref());
            }
        }
        Message::Error { task_id, usage, message } => {
            w.u8(KIND_ERROR);
            w.u64(*task_id);
            w.u8(u8::from(*usage));
            w.u64(message.len() as u64);
            w.0.extend_from_slice(message.as_bytes());
        }
    }
    let len = (w.0.len() - 8) as u64;
    w.0[..8].copy_from_slice(&len.to_le_bytes());
    w.0
}

fn encode_task_into(w: &mut Writer, task: &BlockTask, settings: &CvSettings, y_block: MatRef<'_, f64>) {
    w.u64(task.id);
    w.u64(task.cols.start as u64);
    w.u64(task.cols.end as u64);
    encode_settings(w, settings);
    let (job, lambda) = match task.job {
        BlockJob::Select => (0u8, f64::NAN),
        BlockJob::Score => (1, f64::NAN),
        BlockJob::Refit { lambda } => (2, lambda),
    };
    w.u8(job);
    w.f64(lambda);
    w.matrix(y_block);
}

/// Encodes a TASK frame from a borrowed column block, avoiding a copy.
pub fn encode_task(task: &BlockTask, settings: &CvSettings, y_block: MatRef<'_, f64>) -> Vec<u8> {
    let mut w = Writer(vec![0; 8]);
    w.u8(KIND_TASK);
    encode_task_into(&mut w, task, settings, y_block);
    let len = (w.0.len() - 8) as u64;
    w.0[..8].copy_from_slice(&len.to_le_bytes());
    w.0
}

/// Decodes a frame body (everything after the length prefix).
pub fn decode_body(body: &[u8]) -> Result<Message> {
    let mut r = Reader { buf: body, at: 0 };
    let msg = match r.u8()? {
        KIND_HELLO => Message::Hello { worker_id: r.u64()? },
        KIND_FEATURES => Message::Features { threads: r.u64()?, x: r.matrix()? },
        KIND_TASK => {
            let id = r.u64()?;
            let lo = r.usize()?;
            let hi = r.usize()?;
            if lo > hi {
                return Err(Error::Protocol(format!("batch bounds {lo}..{hi} are reversed")));
            }
            let settings = decode_settings(&mut r)?;
            let job = match (r.u8()?, r.f64()?) {
                (0, _) => BlockJob::Select,
                (1, _) => BlockJob::Score,
                (2, lambda) => BlockJob::Refit { lambda },
                (j, _) => return Err(Error::Protocol(format!("unknown job code {j}"))),
            };
            let y_block = r.matrix()?;
            Message::Task { task: BlockTask { id, cols: lo..hi, job }, settings, y_block }
        }
        KIND_SHUTDOWN => Message::Shutdown,
        KIND_RESULT => {
            let id = r.u64()?;
            let flags = r.u8()?;
            let lambda = r.f64()?;
            let phases = PhaseTimes { svd_s: r.f64()?, sweep_s: r.f64()?, refit_s: r.f64()? };
            let scores = if flags & 1 != 0 {
                let (s, l, w) = (r.usize()?, r.usize()?, r.usize()?);
                let count = s
                    .checked_mul(l)
                    .and_then(|v| v.checked_mul(w))
                    .ok_or_else(|| Error::Protocol("score table size overflows".into()))?;
                let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Protocol("score table too large".into()))?)?;
                let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                Some(TargetScores::from_raw(s, l, w, data)?)
            } else {
                None
            };
            let weights = if flags & 4 != 0 { Some(r.matrix()?) } else { None };
            Message::Result(BlockOutcome {
                id,
                scores,
                lambda: (flags & 2 != 0).then_some(lambda),
                weights,
                phases,
            })
        }
        KIND_ERROR => {
            let task_id = r.u64()?;
            let usage = r.u8()? != 0;
            let len = r.usize()?;
            let message = String::from_utf8_lossy(r.take(len)?).into_owned();
            Message::Error { task_id, usage, message }
        }
        k => return Err(Error::Protocol(format!("unknown frame kind {k:#04x}"))),
    };
    r.finish()?;
    Ok(msg)
}

pub fn write_frame(stream: &mut impl Write, frame: &[u8]) -> Result<()> {
    stream.write_all(frame)?;
    stream.flush()?;
    Ok(())
}

pub fn send(stream: &mut impl Write, msg: &Message) -> Result<()> {
    write_frame(stream, &encode(msg))
}

pub fn recv(stream: &mut impl Read) -> Result<Message> {
    let mut len = [0u8; 8];
    stream.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME {
        return Err(Error::Protocol(format!("implausible frame length {len}")));
    }
    let mut body = vec![0u8; len as usize];
    stream.read_exact(&mut body)?;
    decode_body(&body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(msg: Message) {
        let bytes = encode(&msg);
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 8);
        assert_eq!(decode_body(&bytes[8..]).unwrap(), msg);
    }

    #[test]
    fn task_frame_header_layout() {
        let settings = CvSettings {
            grid: HyperParamGrid::new(vec![0.5, 2.0]).unwrap(),
            plan: SplitPlan::k_fold(3, 99),
            metric: Metric::PearsonMean,
        };
        let task = BlockTask { id: 7, cols: 4..9, job: BlockJob::Refit { lambda: 2.0 } };
        let y = Mat::from_fn(3, 5, |i, j| (i * 5 + j) as f64);
        let bytes = encode_task(&task, &settings, y.as_ref());
        assert_eq!(bytes[8], KIND_TASK);
        assert_eq!(bytes[9..17], 7u64.to_le_bytes());
        assert_eq!(bytes[17..25], 4u64.to_le_bytes());
        assert_eq!(bytes[25..33], 9u64.to_le_bytes());
        assert_eq!(bytes[33..41], 2u64.to_le_bytes());
        assert_eq!(bytes[41..49], 0.5f64.to_le_bytes());
        assert_eq!(bytes[49..57], 2.0f64.to_le_bytes());
        assert_eq!(bytes[57..65], 99u64.to_le_bytes());
        round_trip(Message::Task { task, settings, y_block: y });
    }

    #[test]
    fn result_and_control_frames() {
        round_trip(Message::Hello { worker_id: 3 });
        round_trip(Message::Shutdown);
        round_trip(Message::Features { threads: 2, x: Mat::from_fn(4, 2, |i, j| (i + 10 * j) as f64) });
        round_trip(Message::Error { task_id: 5, usage: true, message: "bad λ".into() });
        round_trip(Message::Result(BlockOutcome {
            id: 11,
            scores: Some(TargetScores::from_raw(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()),
            lambda: Some(100.0),
            weights: Some(Mat::from_fn(2, 3, |i, j| (i * j) as f64 - 0.25)),
            phases: PhaseTimes { svd_s: 0.5, sweep_s: 1.5, refit_s: 0.25 },
        }));
        round_trip(Message::Result(BlockOutcome {
            id: 0,
            scores: None,
            lambda: None,
            weights: None,
            phases: PhaseTimes::default(),
        }));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_body(&[0x55]).is_err());
        assert!(decode_body(&[KIND_HELLO, 1, 2]).is_err());
        let mut extra = encode(&Message::Shutdown);
        extra.push(0);
        assert!(decode_body(&extra[8..]).is_err());
    }
}
