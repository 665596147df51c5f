//! Acceptance suite. Runs every criterion, prints one `[AC-n] PASS|FAIL`
//! line each, and exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use fpmac::datapath::{carry_select_add, csa_3to2, Datapath, MAX_GUARD_BITS};
use fpmac::exponent_cmp::{reachable_ranges, ExponentComparator};
use fpmac::formats::pack_dual;
use fpmac::oracle::{compare_sweep, exact_mac, relu_pattern, Quantizer, SweepDomain};
use fpmac::pipeline::{Operands, Pipeline, LATENCY};
use fpmac::{
    decode, encode, masked_ppsum, unit_multiply, FloatClass, Format, MacConfig, MacMode, MulMode,
};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn ac1_multiplier() -> Outcome {
    for a in 0..16u8 {
        for b in 0..16u8 {
            let full = unit_multiply(a, b, MulMode::Full);
            check(full == a * b, || format!("full {a}x{b} = {full}"))?;
            check(masked_ppsum(a, b, MulMode::Full) == u32::from(full), || {
                format!("ppsum full {a}x{b}")
            })?;
            let split = unit_multiply(a, b, MulMode::Split);
            let want = ((a >> 2) * (b >> 2)) << 4 | ((a & 3) * (b & 3));
            check(split == want, || {
                format!("split {a}x{b} = {split:#x}, want {want:#x}")
            })?;
            check(
                masked_ppsum(a, b, MulMode::Split) == u32::from(split),
                || format!("ppsum split {a}x{b}"),
            )?;
        }
    }
    Ok("all 256 4-bit operand pairs x 2 modes bit-exact, masked sum included".into())
}

/// Every per-lane triple in each lane, with the idle lane randomized.
fn ac2_fp4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0u64;
    for mode in [MacMode::DualE2M1, MacMode::DualE1M2] {
        for relu in [false, true] {
            let cfg = MacConfig::new(mode)
                .with_guard_bits(8)
                .unwrap()
                .with_relu(relu);
            let dp = Datapath::new(cfg);
            let spec = cfg.spec();
            let q = Quantizer::new(mode.format());
            for lane in 0..2 {
                for a in 0..16u8 {
                    for b in 0..16u8 {
                        for c in 0..16u8 {
                            let mut word = |x: u8| {
                                let other: u8 = rng.random_range(0..16);
                                if lane == 0 {
                                    pack_dual(other, x)
                                } else {
                                    pack_dual(x, other)
                                }
                            };
                            let (wa, wb, wc) = (word(a), word(b), word(c));
                            let got = dp.mac(wa, wb, wc).lane_bits(lane);
                            let exact = exact_mac(
                                &decode(a, spec),
                                &decode(b, spec),
                                &decode(c, spec),
                                spec,
                            );
                            let mut want = q.quantize_truncate(&exact);
                            if relu {
                                want = relu_pattern(want, spec);
                            }
                            check(got == want, || {
                                format!("{mode} lane{lane} relu={relu} {a:x}*{b:x}+{c:x}: {got:x} vs {want:x}")
                            })?;
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{checked} lane results, 0 ULP at guard 8"))
}

fn ac3_fp8() -> Outcome {
    let mut notes = Vec::new();
    for mode in [MacMode::E4M3, MacMode::E5M2] {
        let cfg = MacConfig::new(mode).with_relu(false);
        let stats = compare_sweep(&cfg, &SweepDomain::Exhaustive);
        check(stats.samples == 1 << 24, || {
            format!("{mode}: {} samples", stats.samples)
        })?;
        check(stats.special_mismatch == 0, || {
            format!("{mode}: {} NaN mismatches", stats.special_mismatch)
        })?;
        check(stats.max_ulp <= 1, || {
            format!("{mode} guard 3: max ULP {}", stats.max_ulp)
        })?;
        notes.push(format!(
            "{mode} g3 max_ulp={} mismatches={} mean_abs_err={:.4}",
            stats.max_ulp,
            stats.mismatch_count,
            stats.mean_abs().to_f64().unwrap_or(f64::NAN)
        ));

        let guard = if mode == MacMode::E4M3 { 24 } else { 64 };
        let exact_cfg = cfg.with_guard_bits(guard).unwrap();
        let stats = compare_sweep(
            &exact_cfg,
            &SweepDomain::Random {
                count: 1_000_000,
                seed: 3,
            },
        );
        check(stats.worst_ulp() == 0, || {
            format!("{mode} guard {guard}: max ULP {}", stats.worst_ulp())
        })?;
        notes.push(format!("{mode} g{guard} 1e6 random 0 ULP"));
    }
    Ok(notes.join("; "))
}

fn ac4_pure_product() -> Outcome {
    for mode in [MacMode::E4M3, MacMode::E5M2] {
        for guard in 0..=MAX_GUARD_BITS {
            let cfg = MacConfig::new(mode)
                .with_guard_bits(guard)
                .unwrap()
                .with_relu(false);
            let stats = compare_sweep(&cfg, &SweepDomain::ProductPairs);
            check(stats.samples == 1 << 16, || {
                format!("{mode}: {} samples", stats.samples)
            })?;
            check(stats.worst_ulp() == 0, || {
                format!("{mode} guard {guard}: max ULP {}", stats.worst_ulp())
            })?;
        }
    }
    Ok(format!(
        "65536 pairs x guard 0..={MAX_GUARD_BITS} x 2 formats bit-exact"
    ))
}

fn ac5_exponent_compare() -> Outcome {
    let mut pairs = 0u64;
    for mode in MacMode::ALL {
        for guard in [0, 3, 8, 24, MAX_GUARD_BITS] {
            let cfg = MacConfig::new(mode).with_guard_bits(guard).unwrap();
            let w = cfg.width();
            let cmp = ExponentComparator::new(w);
            let (ps, cs) = reachable_ranges(cfg.spec());
            for e_p in ps.clone() {
                for e_c in cs.clone() {
                    let r = cmp.compare_align(e_p, e_c);
                    let e_ref = e_p.max(e_c);
                    let sp = ((e_ref - e_p) as u32).min(w);
                    let sc = ((e_ref - e_c) as u32).min(w);
                    check((r.e_ref, r.shift_p, r.shift_c) == (e_ref, sp, sc), || {
                        format!("{mode} ({e_p},{e_c}) -> {r:?}")
                    })?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("{pairs} reachable exponent pairs bit-exact"))
}

fn ac6_csa_csla() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut samples = 0u64;
    for width in [8u32, 13, 16, 40, 64, 80, 126] {
        let mask = (1u128 << width) - 1;
        let sign = 1u128 << (width - 1);
        let boundary = [0, 1, mask, sign, sign - 1, sign | 1, mask - 1];
        let mut check_one = |x: u128, y: u128, z: u128| -> Result<(), String> {
            let (s, k) = csa_3to2(x, y, z, width);
            check(
                s.wrapping_add(k) & mask == x.wrapping_add(y).wrapping_add(z) & mask,
                || format!("csa w={width} {x:#x} {y:#x} {z:#x}"),
            )?;
            check(
                carry_select_add(x, y, width) == x.wrapping_add(y) & mask,
                || format!("csla w={width} {x:#x} {y:#x}"),
            )?;
            check(
                carry_select_add(s, k, width) == x.wrapping_add(y).wrapping_add(z) & mask,
                || format!("csa+csla w={width} {x:#x} {y:#x} {z:#x}"),
            )?;
            samples += 1;
            Ok(())
        };
        for &x in &boundary {
            for &y in &boundary {
                for &z in &boundary {
                    check_one(x, y, z)?;
                }
            }
        }
        for _ in 0..20_000 {
            let (x, y, z) = (
                rng.random::<u128>() & mask,
                rng.random::<u128>() & mask,
                rng.random::<u128>() & mask,
            );
            check_one(x, y, z)?;
        }
    }
    Ok(format!("{samples} samples incl. boundary patterns"))
}

fn ac7_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for mode in MacMode::ALL {
        let cfg = MacConfig::new(mode);
        let inputs: Vec<Operands> = (0..10_000)
            .map(|_| Operands {
                a: mode.word(rng.random()),
                b: mode.word(rng.random()),
                c: mode.word(rng.random()),
            })
            .collect();
        let mut p = Pipeline::new(cfg);
        p.run(&inputs);
        let dp = Datapath::new(cfg);
        check(p.retired().len() == inputs.len(), || {
            format!("{mode}: {} retired", p.retired().len())
        })?;
        for (i, (r, op)) in p.retired().iter().zip(&inputs).enumerate() {
            check(r.id == i as u64, || format!("{mode}: out of order at {i}"))?;
            check(r.cycle - r.issue_cycle == LATENCY, || {
                format!("{mode}: txn {i} latency {}", r.cycle - r.issue_cycle)
            })?;
            check(r.result == dp.mac(op.a, op.b, op.c), || {
                format!("{mode}: txn {i} result differs")
            })?;
        }
    }
    Ok(format!(
        "4 modes x 10^4 transactions, in order, latency {LATENCY}"
    ))
}

fn ac8_throughput() -> Outcome {
    let freq = 1.938;
    let mut notes = Vec::new();
    for (mode, ratio, gflops) in [
        (MacMode::E4M3, 2.0, 3.88),
        (MacMode::E5M2, 2.0, 3.88),
        (MacMode::DualE2M1, 4.0, 7.75),
        (MacMode::DualE1M2, 4.0, 7.75),
    ] {
        let cfg = MacConfig::new(mode);
        let (report, _) = fpmac::cli::pipe_report(10_000, 8, &cfg, false);
        let fpc = report.flops_per_cycle_f64();
        let g = report.gflops(freq);
        check((fpc - ratio).abs() / ratio <= 0.01, || {
            format!("{mode}: {fpc} FLOPs/cycle")
        })?;
        check((g - gflops).abs() / gflops <= 0.01, || {
            format!("{mode}: {g} GFLOPS")
        })?;
        notes.push(format!("{mode} {fpc:.4} FLOPs/cycle {g:.3} GFLOPS"));
    }
    Ok(notes.join("; "))
}

fn ac9_relu() -> Outcome {
    let mut zeroed = 0u64;
    for mode in [MacMode::DualE2M1, MacMode::DualE1M2] {
        let on = Datapath::new(MacConfig::new(mode).with_relu(true));
        let off = Datapath::new(MacConfig::new(mode).with_relu(false));
        let spec = mode.spec();
        for a in 0..16u8 {
            for b in 0..16u8 {
                for c in 0..16u8 {
                    // lane 1 carries the reflected operands so both lanes see every triple
                    let w = |x: u8| pack_dual(15 - x, x);
                    let t = on.mac_traced(w(a), w(b), w(c));
                    let plain = off.mac(w(a), w(b), w(c));
                    for lane in 0..2 {
                        let pre = t.s4.lanes[lane].value;
                        let got = t.s5.lane_bits(lane);
                        if pre.negative && pre.class != FloatClass::NaN {
                            check(got == 0, || {
                                format!("{mode} lane{lane} {a:x},{b:x},{c:x}: negative -> {got:x}")
                            })?;
                            zeroed += 1;
                        } else {
                            check(got == plain.lane_bits(lane), || {
                                format!("{mode} lane{lane} {a:x},{b:x},{c:x} changed")
                            })?;
                        }
                        check(!decode(got, spec).negative, || {
                            format!("{mode}: negative output {got:x}")
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{zeroed} negative results clamped to +0, the rest unchanged"
    ))
}

fn ac10_codec() -> Outcome {
    let mut total = 0;
    let mut round_trips = 0;
    for f in Format::ALL {
        let spec = f.spec();
        for p in spec.patterns() {
            total += 1;
            let d = decode(p, spec);
            let e = encode(&d, spec);
            if spec.is_nan(p) {
                check(spec.is_nan(e.bits), || {
                    format!("{f}: NaN {p:#x} re-encoded as {:#x}", e.bits)
                })?;
            } else {
                check(e.bits == p && !e.overflow && !e.invalid, || {
                    format!("{f}: {p:#x} -> {:#x}", e.bits)
                })?;
                round_trips += 1;
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for p in spec
            .patterns()
            .filter(|&p| p & spec.sign_mask() == 0 && !spec.is_nan(p))
        {
            let v: f64 = decode(p, spec).value(spec).unwrap();
            check(v > prev, || {
                format!("{f}: {p:#x} not above its predecessor")
            })?;
            prev = v;
        }
    }
    check(total == 544, || format!("{total} patterns"))?;
    Ok(format!(
        "{total} patterns ({round_trips} non-NaN exact round trips), monotone"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("multiplier exhaustive equivalence", ac1_multiplier),
        ("FP4 MAC exhaustive oracle match", ac2_fp4),
        ("FP8 MAC exhaustive oracle bound", ac3_fp8),
        ("pure-product exactness", ac4_pure_product),
        ("EC+LUT equivalence", ac5_exponent_compare),
        ("CSA/CSLA algebra", ac6_csa_csla),
        ("pipeline equivalence and latency", ac7_pipeline),
        ("throughput ratio", ac8_throughput),
        ("ReLU behavior", ac9_relu),
        ("codec round trip", ac10_codec),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[AC-{}] PASS {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[AC-{}] FAIL {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
