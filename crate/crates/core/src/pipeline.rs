//! Cycle-level model of the six-stage pipeline.
//!
//! One transaction may be issued per cycle. It enters S0 on the next clock
//! edge and advances one stage per cycle; the cycle it occupies S5 is the
//! cycle it retires, six cycles after issue. There are no stalls.

use std::io::Write;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::datapath::{
    stage0_decode, stage1_multiply, stage2_align, stage3_accumulate, stage4_normalize,
    stage5_output, Datapath, MacConfig, MacResult, S0Decoded, S1Multiplied, S2Aligned,
    S3Accumulated, S4Normalized,
};
use crate::error::{Error, Result};
use crate::formats::PackedWord;
use crate::oracle::REPORT_VERSION;

pub const STAGES: usize = 6;
/// Cycles from issue to retirement.
pub const LATENCY: u64 = STAGES as u64;

pub type TxnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Operands {
    pub a: PackedWord,
    pub b: PackedWord,
    pub c: PackedWord,
}

/// Latch contents of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StagePayload {
    S0(S0Decoded),
    S1(S1Multiplied),
    S2(S2Aligned),
    S3(S3Accumulated),
    S4(S4Normalized),
    S5(MacResult),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub id: TxnId,
    pub issue_cycle: u64,
    pub payload: StagePayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Retired {
    pub id: TxnId,
    pub issue_cycle: u64,
    pub cycle: u64,
    pub result: MacResult,
}

/// One trace record per cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub version: u32,
    pub cycle: u64,
    /// Transaction id held by S0..S5, `None` for a bubble.
    pub stages: [Option<TxnId>; STAGES],
    pub retired: Vec<TxnId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub version: u32,
    pub cycles: u64,
    pub macs_retired: u64,
    pub lanes: u64,
    pub flops: u64,
    /// `flops / cycles` as an exact ratio.
    pub flops_per_cycle_num: u64,
    pub flops_per_cycle_den: u64,
}

impl ThroughputReport {
    pub fn new(cycles: u64, macs_retired: u64, lanes: u64) -> Self {
        let flops = 2 * lanes * macs_retired;
        let ratio = if cycles == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(flops, cycles)
        };
        ThroughputReport {
            version: REPORT_VERSION,
            cycles,
            macs_retired,
            lanes,
            flops,
            flops_per_cycle_num: *ratio.numer(),
            flops_per_cycle_den: *ratio.denom(),
        }
    }

    pub fn flops_per_cycle(&self) -> Ratio<u64> {
        Ratio::new(self.flops_per_cycle_num, self.flops_per_cycle_den)
    }

    pub fn flops_per_cycle_f64(&self) -> f64 {
        self.flops_per_cycle_num as f64 / self.flops_per_cycle_den as f64
    }

    /// Throughput at a clock frequency in GHz.
    pub fn gflops(&self, freq_ghz: f64) -> f64 {
        self.flops_per_cycle_f64() * freq_ghz
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    datapath: Datapath,
    stages: [Option<InFlight>; STAGES],
    pending: Option<(TxnId, Operands)>,
    cycle: u64,
    next_id: TxnId,
    retired: Vec<Retired>,
    trace: Vec<CycleRecord>,
    record_trace: bool,
}

impl Pipeline {
    pub fn new(cfg: MacConfig) -> Self {
        Pipeline {
            datapath: Datapath::new(cfg),
            stages: Default::default(),
            pending: None,
            cycle: 0,
            next_id: 0,
            retired: Vec::new(),
            trace: Vec::new(),
            record_trace: false,
        }
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn config(&self) -> &MacConfig {
        self.datapath.config()
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn retired(&self) -> &[Retired] {
        &self.retired
    }

    pub fn trace(&self) -> &[CycleRecord] {
        &self.trace
    }

    pub fn stage(&self, k: usize) -> Option<&InFlight> {
        self.stages[k].as_ref()
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_none() && self.stages.iter().all(Option::is_none)
    }

    /// Queues a transaction for S0 at the next clock edge.
    pub fn issue(&mut self, a: PackedWord, b: PackedWord, c: PackedWord) -> Result<TxnId> {
        if self.pending.is_some() {
            return Err(Error::IssueConflict(self.cycle));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.pending = Some((id, Operands { a, b, c }));
        Ok(id)
    }

    /// Advances one clock: every transaction moves one stage and the stage
    /// it lands in does its work. Whatever lands in S5 retires this cycle.
    pub fn step(&mut self) {
        self.cycle += 1;
        let cfg = *self.datapath.config();
        let mut retired_now = Vec::new();

        for k in (1..STAGES).rev() {
            self.stages[k] = self.stages[k - 1].take().map(|t| {
                let payload = match &t.payload {
                    StagePayload::S0(s) => {
                        StagePayload::S1(stage1_multiply(s, &cfg, self.datapath.comparator()))
                    }
                    StagePayload::S1(s) => StagePayload::S2(stage2_align(s, &cfg)),
                    StagePayload::S2(s) => StagePayload::S3(stage3_accumulate(s, &cfg)),
                    StagePayload::S3(s) => StagePayload::S4(stage4_normalize(s, &cfg)),
                    StagePayload::S4(s) => StagePayload::S5(stage5_output(s, &cfg)),
                    StagePayload::S5(_) => unreachable!("S5 has no successor"),
                };
                InFlight { payload, ..t }
            });
        }
        self.stages[0] = self.pending.take().map(|(id, ops)| InFlight {
            id,
            issue_cycle: self.cycle - 1,
            payload: StagePayload::S0(stage0_decode(ops.a, ops.b, ops.c, &cfg)),
        });

        if let Some(t) = &self.stages[STAGES - 1] {
            if let StagePayload::S5(result) = t.payload {
                self.retired.push(Retired {
                    id: t.id,
                    issue_cycle: t.issue_cycle,
                    cycle: self.cycle,
                    result,
                });
                retired_now.push(t.id);
            }
        }

        if self.record_trace {
            self.trace.push(CycleRecord {
                version: REPORT_VERSION,
                cycle: self.cycle,
                stages: std::array::from_fn(|k| self.stages[k].as_ref().map(|t| t.id)),
                retired: retired_now,
            });
        }
    }

    /// Steps until nothing is in flight.
    pub fn drain(&mut self) {
        while !self.is_idle() {
            self.step();
        }
        // the last S5 occupant leaves on the following edge
        self.stages = Default::default();
    }

    /// Issues one transaction per cycle and drains.
    pub fn run(&mut self, inputs: &[Operands]) -> ThroughputReport {
        let start = self.retired.len();
        for ops in inputs {
            self.issue(ops.a, ops.b, ops.c)
                .expect("one issue per cycle");
            self.step();
        }
        while self.stages.iter().any(Option::is_some) {
            self.step();
            if self.stages[..STAGES - 1].iter().all(Option::is_none) {
                break;
            }
        }
        let done = (self.retired.len() - start) as u64;
        // cycles counted from the first issue cycle through the last retirement
        let cycles = if done == 0 { 0 } else { self.cycle + 1 };
        ThroughputReport::new(cycles, done, self.config().mode.lanes() as u64)
    }

    /// Dependent chain: each MAC's result is the next one's addend. Issues
    /// are spaced [`LATENCY`] cycles apart since there is no forwarding path.
    pub fn run_chain(
        &mut self,
        pairs: &[(PackedWord, PackedWord)],
        init: PackedWord,
    ) -> (PackedWord, ThroughputReport) {
        let mut acc = init;
        let start = self.retired.len();
        for &(a, b) in pairs {
            self.issue(a, b, acc).expect("one issue per cycle");
            let target = self.retired.len() + 1;
            while self.retired.len() < target {
                self.step();
            }
            acc = self.retired.last().expect("retired").result.bits;
        }
        let done = (self.retired.len() - start) as u64;
        let cycles = if done == 0 { 0 } else { self.cycle + 1 };
        self.stages = Default::default();
        (
            acc,
            ThroughputReport::new(cycles, done, self.config().mode.lanes() as u64),
        )
    }
}

/// Runs a stream through a fresh pipeline.
pub fn run_stream(inputs: &[Operands], cfg: &MacConfig) -> (Vec<MacResult>, ThroughputReport) {
    let mut p = Pipeline::new(*cfg);
    let report = p.run(inputs);
    (p.retired().iter().map(|r| r.result).collect(), report)
}

pub fn write_trace_csv<W: Write>(records: &[CycleRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "version", "cycle", "s0", "s1", "s2", "s3", "s4", "s5", "retired",
    ])?;
    for r in records {
        let mut row = vec![r.version.to_string(), r.cycle.to_string()];
        row.extend(
            r.stages
                .iter()
                .map(|s| s.map(|id| id.to_string()).unwrap_or_default()),
        );
        row.push(
            r.retired
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_jsonl<W: Write>(records: &[CycleRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapath::MacMode;

    fn word(cfg: &MacConfig, x: u8) -> PackedWord {
        cfg.mode.word(x)
    }

    fn ops(cfg: &MacConfig, a: u8, b: u8, c: u8) -> Operands {
        Operands {
            a: word(cfg, a),
            b: word(cfg, b),
            c: word(cfg, c),
        }
    }

    #[test]
    fn single_transaction_latency() {
        let cfg = MacConfig::new(MacMode::E4M3);
        let mut p = Pipeline::new(cfg);
        p.issue(word(&cfg, 0x40), word(&cfg, 0x44), word(&cfg, 0x38))
            .unwrap();
        for k in 0..5 {
            p.step();
            assert!(p.retired().is_empty());
            assert_eq!(p.stage(k).map(|t| t.id), Some(0));
        }
        p.step();
        assert_eq!(p.retired().len(), 1);
        let r = p.retired()[0];
        assert_eq!((r.issue_cycle, r.cycle), (0, 6));
        assert_eq!(r.result.bits.bits, 0x4E);
    }

    #[test]
    fn s1_holds_multiplier_output_two_cycles_after_issue() {
        let cfg = MacConfig::new(MacMode::E4M3);
        let mut p = Pipeline::new(cfg);
        p.issue(word(&cfg, 0x40), word(&cfg, 0x44), word(&cfg, 0x38))
            .unwrap();
        p.step();
        p.step();
        assert_eq!(p.cycle(), 2);
        match &p.stage(1).unwrap().payload {
            // 1.000 * 1.100 = 0b1100 << 3
            StagePayload::S1(s) => assert_eq!(s.multiplier_outputs[0], 0b0110_0000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn idle_pipeline_retires_nothing() {
        let mut p = Pipeline::new(MacConfig::new(MacMode::E5M2));
        for _ in 0..20 {
            p.step();
        }
        assert!(p.retired().is_empty());
    }

    #[test]
    fn double_issue_rejected() {
        let cfg = MacConfig::new(MacMode::E4M3);
        let mut p = Pipeline::new(cfg);
        p.issue(word(&cfg, 1), word(&cfg, 1), word(&cfg, 1))
            .unwrap();
        assert!(matches!(
            p.issue(word(&cfg, 1), word(&cfg, 1), word(&cfg, 1)),
            Err(Error::IssueConflict(0))
        ));
    }

    #[test]
    fn back_to_back_hundred() {
        let cfg = MacConfig::new(MacMode::E4M3);
        let mut p = Pipeline::new(cfg);
        for i in 0..100u8 {
            p.issue(word(&cfg, i), word(&cfg, 0x38), word(&cfg, 0))
                .unwrap();
            p.step();
        }
        while p.cycle() < 106 {
            p.step();
        }
        assert_eq!(p.retired().len(), 100);
        assert!(p
            .retired()
            .iter()
            .all(|r| r.cycle - r.issue_cycle == LATENCY));
        assert_eq!(p.retired().last().unwrap().cycle, 105);
    }

    #[test]
    fn stream_report_counts() {
        let cfg = MacConfig::new(MacMode::E4M3);
        let inputs: Vec<_> = (0..1000u32).map(|i| ops(&cfg, i as u8, 0x38, 0)).collect();
        let (results, report) = run_stream(&inputs, &cfg);
        assert_eq!(results.len(), 1000);
        assert_eq!((report.cycles, report.flops), (1006, 2000));
        assert_eq!(report.flops_per_cycle(), Ratio::new(2000, 1006));

        let dual = MacConfig::new(MacMode::DualE2M1);
        let inputs: Vec<_> = (0..1000u32).map(|i| ops(&dual, i as u8, 0x22, 0)).collect();
        let (_, report) = run_stream(&inputs, &dual);
        assert_eq!((report.cycles, report.flops), (1006, 4000));

        let (results, report) = run_stream(&[], &cfg);
        assert!(results.is_empty());
        assert_eq!(
            (report.cycles, report.flops, report.macs_retired),
            (0, 0, 0)
        );
    }

    #[test]
    fn trace_shape() {
        let cfg = MacConfig::new(MacMode::DualE1M2);
        let mut p = Pipeline::new(cfg).with_trace(true);
        let inputs: Vec<_> = (0..3u8).map(|i| ops(&cfg, i, 0x44, 0)).collect();
        p.run(&inputs);
        let t = p.trace();
        assert_eq!(t.len(), 8);
        assert_eq!(t[0].stages, [Some(0), None, None, None, None, None]);
        assert_eq!(t[5].stages[5], Some(0));
        assert_eq!(t[5].retired, vec![0]);
        assert_eq!(t[7].retired, vec![2]);

        let mut csv_out = Vec::new();
        write_trace_csv(t, &mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.starts_with("version,cycle,s0,s1,s2,s3,s4,s5,retired\n"));
        assert_eq!(text.lines().count(), 9);

        let mut jl = Vec::new();
        write_trace_jsonl(t, &mut jl).unwrap();
        let first: CycleRecord =
            serde_json::from_str(std::str::from_utf8(&jl).unwrap().lines().next().unwrap())
                .unwrap();
        assert_eq!(first, t[0]);
    }

    #[test]
    fn chain_spacing() {
        let cfg = MacConfig::new(MacMode::E4M3);
        let mut p = Pipeline::new(cfg);
        let one = word(&cfg, 0x38);
        let (acc, report) = p.run_chain(&[(one, one), (one, one), (one, one)], word(&cfg, 0));
        assert_eq!(acc.bits, 0x44); // 3.0
        assert_eq!(report.macs_retired, 3);
        let issues: Vec<u64> = p.retired().iter().map(|r| r.issue_cycle).collect();
        assert_eq!(issues, vec![0, 6, 12]);
    }
}
