use fpmac::datapath::{
    accumulate, align_one, carry_select_add, carry_select_add_traced, csa_3to2, Datapath,
    CSLA_BLOCK,
};
use fpmac::formats::pack_dual;
use fpmac::oracle::{exact_mac, oracle_lanes, ulp_distance, Quantizer};
use fpmac::pipeline::{run_stream, Operands};
use fpmac::{decode, MacConfig, MacMode};
use num_traits::{Signed, Zero};
use proptest::prelude::*;

fn mode() -> impl Strategy<Value = MacMode> {
    prop::sample::select(MacMode::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn csa_then_csla_is_integer_addition(x: u128, y: u128, z: u128, width in 4u32..=127) {
        let m = (1u128 << width) - 1;
        let (x, y, z) = (x & m, y & m, z & m);
        let (s, k) = csa_3to2(x, y, z, width);
        prop_assert_eq!(s, x ^ y ^ z);
        prop_assert_eq!(carry_select_add(s, k, width), x.wrapping_add(y).wrapping_add(z) & m);
    }

    #[test]
    fn csla_blocks_select_on_carry(s: u64, k: u64, width in 4u32..=64) {
        let m = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        let (s, k) = (u128::from(s & m), u128::from(k & m));
        let (sum, blocks) = carry_select_add_traced(s, k, width, CSLA_BLOCK);
        prop_assert_eq!(sum, (s + k) & u128::from(m));
        prop_assert_eq!(blocks.len() as u32, width.div_ceil(CSLA_BLOCK));
        prop_assert!(!blocks[0].carry_in);
        for pair in blocks.windows(2) {
            prop_assert_eq!(pair[1].carry_in, pair[0].carry_out);
        }
    }

    #[test]
    fn alignment_truncates_then_negates(mag in 0u128..(1 << 40), shift in 0u32..48, neg: bool) {
        let width = 48;
        let t = align_one(mag, neg, shift, width);
        let kept = mag >> shift;
        prop_assert_eq!(t.sticky, kept << shift != mag);
        prop_assert_eq!(t.value, if neg { -(kept as i128) } else { kept as i128 });
    }

    #[test]
    fn accumulate_matches_signed_sum(p in -(1i64 << 40)..(1i64 << 40), c in -(1i64 << 40)..(1i64 << 40), pn: bool, cn: bool) {
        let width = 44;
        let p = align_one(u128::from(p.unsigned_abs()), pn, 0, width);
        let c = align_one(u128::from(c.unsigned_abs()), cn, 0, width);
        prop_assert_eq!(accumulate(&p, &c, width), p.value + c.value);
    }

    #[test]
    fn mac_within_one_ulp_at_default_guard(mode in mode(), a: u8, b: u8, c: u8, relu: bool) {
        let cfg = MacConfig::new(mode).with_relu(relu);
        let r = Datapath::new(cfg).mac_bits(a, b, c);
        let want = oracle_lanes(a, b, c, &cfg, &Quantizer::new(mode.format()));
        for (lane, &w) in want.iter().enumerate().take(mode.lanes()) {
            let d = ulp_distance(r.lane_bits(lane), w, cfg.spec());
            prop_assert!(matches!(d, Some(0) | Some(1)), "lane {} {:?}", lane, d);
        }
    }

    #[test]
    fn sign_matches_exact_result(mode in mode(), a: u8, b: u8, c: u8) {
        let cfg = MacConfig::new(mode).with_relu(false);
        let spec = cfg.spec();
        let r = Datapath::new(cfg).mac_bits(a, b, c);
        for lane in 0..mode.lanes() {
            let w = |x| mode.word(x).lane(lane);
            let exact = exact_mac(&decode(w(a), spec), &decode(w(b), spec), &decode(w(c), spec), spec);
            let got = decode(r.lane_bits(lane), spec);
            if let Some(q) = exact.to_rational() {
                if !q.is_zero() && !got.is_zero() {
                    prop_assert_eq!(got.negative, q.is_negative());
                }
            }
        }
    }

    #[test]
    fn lane_zero_ignores_lane_one(a: u8, b: u8, c: u8, noise: [u8; 3], e1m2: bool) {
        let mode = if e1m2 { MacMode::DualE1M2 } else { MacMode::DualE2M1 };
        let dp = Datapath::new(MacConfig::new(mode).with_relu(false));
        let base = dp.mac(pack_dual(0, a & 15), pack_dual(0, b & 15), pack_dual(0, c & 15));
        let other = dp.mac(pack_dual(noise[0], a & 15), pack_dual(noise[1], b & 15), pack_dual(noise[2], c & 15));
        prop_assert_eq!(base.lane_bits(0), other.lane_bits(0));
        prop_assert_eq!(base.flags[0], other.flags[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pipeline_stream_equals_one_shot(mode in mode(), ops in prop::collection::vec(any::<(u8, u8, u8)>(), 1..200)) {
        let cfg = MacConfig::new(mode);
        let inputs: Vec<Operands> = ops.iter().map(|&(a, b, c)| Operands { a: mode.word(a), b: mode.word(b), c: mode.word(c) }).collect();
        let (results, report) = run_stream(&inputs, &cfg);
        let dp = Datapath::new(cfg);
        prop_assert_eq!(report.cycles, inputs.len() as u64 + 6);
        for (r, op) in results.iter().zip(&inputs) {
            prop_assert_eq!(*r, dp.mac(op.a, op.b, op.c));
        }
    }
}
