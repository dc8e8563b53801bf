//! Cross-module invariants, mostly as property tests.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qostf::channel::{
    apply_channel, frame_rng, frequency_response, sample_taps, ChannelRealization, PowerDelayProfile, Stream, Taps,
};
use qostf::code_metrics::{cgd, distance_matrix};
use qostf::codebook::{qostbc4, qostftc8, CodeFamily, StfGrid};
use qostf::constellation::Constellation;
use qostf::harness::{count_errors, StopRule, SweepOptions};
use qostf::linalg::CMatrix;
use qostf::partitioner::{build_trellis, expand_constellation, partition};
use qostf::transceiver::{BlockDecoder, FrameConfig, Scheme, Transceiver};

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn quad() -> impl Strategy<Value = [Complex64; 4]> {
    prop::array::uniform4(complex())
}

fn off_pattern_max(g: &CMatrix<f64>) -> f64 {
    let coupled = |i: usize, j: usize| matches!((i, j), (0, 3) | (3, 0) | (1, 2) | (2, 1));
    let mut worst = 0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j && !coupled(i, j) {
                worst = worst.max(g[(i, j)].norm());
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constellation_unit_energy_and_rotation(m in 2usize..17, phi in -4.0..4.0f64) {
        let c = Constellation::<f64>::mpsk(m, phi).unwrap();
        let base = Constellation::<f64>::mpsk(m, 0.0).unwrap();
        let energy = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        prop_assert!((energy - 1.0).abs() < 1e-12);
        let rot = Complex64::from_polar(1.0, phi);
        for (a, b) in c.points().iter().zip(base.points()) {
            prop_assert!((a - rot * b).norm() < 1e-12);
        }
    }

    #[test]
    fn gray_map_round_trip(bits in prop::collection::vec(0u8..2, 3), phi in -1.0..1.0f64) {
        for m in [2usize, 4, 8] {
            let c = Constellation::<f64>::mpsk(m, phi).unwrap();
            let k = c.bits_per_symbol().unwrap();
            let group = &bits[..k];
            prop_assert_eq!(c.demap(c.map_bits(group).unwrap()), group.to_vec());
        }
    }

    #[test]
    fn qostbc4_gram_pattern(c in quad()) {
        let g = qostbc4(c).matrix.gram();
        let scale = c.iter().map(|z| z.norm_sqr()).sum::<f64>().max(1.0);
        prop_assert!(off_pattern_max(&g) <= 1e-12 * scale);
    }

    #[test]
    fn stacked_gram_is_sum_of_halves(x in quad(), xt in quad()) {
        let m = qostftc8(x, xt).matrix;
        let half = |r0: usize| CMatrix::from_fn(4, 4, |r, c| m[(r0 + r, c)]);
        let (top, bottom) = (half(0), half(4));
        let sum = top.gram().try_add(&bottom.gram()).unwrap();
        let full = m.gram();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((full[(i, j)] - sum[(i, j)]).norm() < 1e-12);
            }
        }
        prop_assert!(off_pattern_max(&full) <= 1e-11);
    }

    #[test]
    fn distance_matrix_symmetric_and_cgd_scales(x in quad(), xt in quad(), y in quad(), yt in quad(), s in 0.2..3.0f64) {
        let (c, e) = (qostftc8(x, xt).matrix, qostftc8(y, yt).matrix);
        let (ab, ba) = (distance_matrix(&c, &e).unwrap(), distance_matrix(&e, &c).unwrap());
        prop_assert!(ab.try_sub(&ba).unwrap().max_abs() < 1e-12);
        let d = c.try_sub(&e).unwrap().scale(s);
        let base = cgd(&[ab]).unwrap();
        let scaled = cgd(&[d.gram()]).unwrap();
        prop_assert!((scaled - s.powi(8) * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
    }

    #[test]
    fn parseval_for_any_taps(seed in any::<u64>(), taps in 1usize..9, n_pow in 3u32..7) {
        let n = 1usize << n_pow;
        prop_assume!(taps <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Taps::from_fn(1, 1, taps, |_, _, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let h = frequency_response(&t, n).unwrap();
        let freq = (0..n).map(|k| h.get(0, 0, k).norm_sqr()).sum::<f64>() / n as f64;
        let time: f64 = t.link(0, 0).iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((freq - time).abs() < 1e-12);
    }

    #[test]
    fn stop_rule_independent_of_batching(pattern in prop::collection::vec(any::<bool>(), 1..200), stop in 1u64..20, batch in 1u64..50) {
        let rule = StopRule { stop_errors: stop, min_frames: 1, max_frames: 5000 };
        let outcome = |f: u64| Ok(pattern[f as usize % pattern.len()]);
        let serial = count_errors(rule, SweepOptions { parallel: false, batch: 1 }, outcome).unwrap();
        let parallel = count_errors(rule, SweepOptions { parallel: true, batch }, outcome).unwrap();
        prop_assert_eq!(serial, parallel);
    }
}

#[test]
fn grid_power_is_one_per_subcarrier() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = std::f64::consts::FRAC_PI_4;
    for fam in [CodeFamily::family_a(phi), CodeFamily::baseline_2tx(phi)] {
        let rows = fam.kind().rows();
        let mut total = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let mut grid = StfGrid::zeros(64, fam.kind().tx_antennas(), 1);
            for m in 0..64 / rows {
                let cw = fam.codeword(rng.gen_range(0..fam.len()));
                grid.place(0, m, &cw.transmit_matrix()).unwrap();
            }
            total += grid.energy() / 64.0;
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "{:?}: {mean}", fam.kind());
    }
}

#[test]
fn partition_refines_and_trellis_is_reproducible() {
    let (a, b) = expand_constellation(&Constellation::<f64>::qpsk(0.0)).unwrap();
    let trees = [partition(&a, 2).unwrap(), partition(&b, 2).unwrap()];
    for t in &trees {
        let m: Vec<f64> = t.levels().iter().map(|l| l.min_metric).collect();
        assert!(m.windows(2).all(|w| w[1] >= w[0]), "{m:?}");
    }
    let t1 = build_trellis(&trees[0], &trees[1]).unwrap();
    let again = [partition(&a, 2).unwrap(), partition(&b, 2).unwrap()];
    assert_eq!(again[0].to_text(), trees[0].to_text());
    let t2 = build_trellis(&again[0], &again[1]).unwrap();
    assert_eq!(t1.to_text(), t2.to_text());

    // per-state injectivity of (state, bits) -> (next, codeword)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in 0..t1.num_states() {
        let mut seen = std::collections::HashMap::new();
        for _ in 0..4000 {
            let bits: Vec<u8> = (0..t1.bits_per_step()).map(|_| rng.gen_range(0..2)).collect();
            let step = t1.encode_step(s, &bits).unwrap();
            let key = (step.next, step.subset.family, step.codeword);
            if let Some(prev) = seen.insert(key, bits.clone()) {
                assert_eq!(prev, bits, "state {s} maps two inputs to one codeword");
            }
        }
    }
}

#[test]
fn distinct_frames_draw_distinct_channels() {
    let pdp = PowerDelayProfile::<f64>::uniform(4).unwrap();
    let a = sample_taps(&pdp, 4, 2, &mut frame_rng(1, Stream::Channel, 10));
    let b = sample_taps(&pdp, 4, 2, &mut frame_rng(1, Stream::Channel, 11));
    let c = sample_taps(&pdp, 4, 2, &mut frame_rng(1, Stream::Channel, 10));
    assert_eq!(a, c);
    assert_ne!(a, b);
    let noise = sample_taps(&pdp, 4, 2, &mut frame_rng(1, Stream::Noise, 10));
    assert_ne!(a, noise);
}

#[test]
fn pairwise_equals_exhaustive_on_full_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let phi = std::f64::consts::FRAC_PI_4;
    for (scheme, fam) in [
        (Scheme::Qostfbc4Tx, CodeFamily::family_a(phi)),
        (Scheme::Qostfbc2Tx, CodeFamily::baseline_2tx(phi)),
    ] {
        let dec = BlockDecoder::new(&fam);
        assert!(dec.is_pairwise());
        let rows = fam.kind().rows();
        for trial in 0..12 {
            let rx = 1 + trial % 2;
            let mut grid = StfGrid::zeros(rows, fam.kind().tx_antennas(), 1);
            grid.place(0, 0, &fam.codeword(rng.gen_range(0..fam.len())).transmit_matrix()).unwrap();
            let pdp = PowerDelayProfile::uniform(4).unwrap();
            let ch = ChannelRealization::new(sample_taps(&pdp, fam.kind().tx_antennas(), rx, &mut rng), rows, 0).unwrap();
            let y = apply_channel(&grid, &ch, rng.gen_range(0.01..1.0), &mut rng).unwrap();
            let fast = dec.decode(&y, &ch.cfr, 0, 0);
            let slow = dec.exhaustive_classes(&y, &ch.cfr, 0, 0)[0];
            assert_eq!(fast.id, slow.id, "{scheme}");
            assert!((fast.metric - slow.metric).abs() < 1e-9);
        }
    }
}

#[test]
fn second_antenna_keeps_noiseless_decodes_correct_and_decoding_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pdp = PowerDelayProfile::<f64>::uniform(4).unwrap();
    for scheme in Scheme::ALL {
        let one = Transceiver::<f64>::new(FrameConfig::new(scheme, 1).unwrap()).unwrap();
        let two = one.reconfigured(FrameConfig::new(scheme, 2).unwrap()).unwrap();
        for f in 0..10 {
            let bits: Vec<u8> = (0..one.bits_per_frame()).map(|_| rng.gen_range(0..2)).collect();
            let enc = one.encode_frame(&bits).unwrap();
            let full = ChannelRealization::new(sample_taps(&pdp, 4, 2, &mut frame_rng(3, Stream::Channel, f)), 64, f).unwrap();
            let (c1, c2) = (
                full.restrict(scheme.tx_antennas(), 1).unwrap(),
                full.restrict(scheme.tx_antennas(), 2).unwrap(),
            );
            let y1 = apply_channel(&enc.grid, &c1, 0.0, &mut rng).unwrap();
            let y2 = apply_channel(&enc.grid, &c2, 0.0, &mut rng).unwrap();
            let d1 = one.decode_frame(&y1, &c1.cfr).unwrap();
            assert_eq!(d1.bits, bits);
            assert_eq!(two.decode_frame(&y2, &c2.cfr).unwrap().bits, bits);
            assert_eq!(one.decode_frame(&y1, &c1.cfr).unwrap(), d1);
        }
    }
}
