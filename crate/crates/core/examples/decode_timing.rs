//! Times frame encoding, channel and decoding for every scheme.

use std::time::Instant;

use qostf::channel::{apply_channel, frame_rng, sample_taps, ChannelRealization, PowerDelayProfile, Stream};
use qostf::transceiver::{FrameConfig, Scheme, Transceiver};
use rand::Rng;

fn main() {
    let pdp = PowerDelayProfile::<f64>::uniform(4).unwrap();
    for scheme in Scheme::ALL {
        for rx in [1, 2] {
            for snr_db in [6.0f64, 14.0] {
                let cfg = FrameConfig::new(scheme, rx).unwrap();
                let tx = Transceiver::<f64>::new(cfg).unwrap();
                let n0 = 10f64.powf(-snr_db / 10.0);
                let frames = 40;
                let start = Instant::now();
                let mut errors = 0;
                for f in 0..frames {
                    let mut brng = frame_rng(1, Stream::Bits, f);
                    let bits: Vec<u8> = (0..tx.bits_per_frame()).map(|_| brng.gen_range(0..2)).collect();
                    let taps = sample_taps(&pdp, 4, 2, &mut frame_rng(1, Stream::Channel, f));
                    let ch = ChannelRealization::new(taps, 64, f).unwrap().restrict(cfg.tx(), rx).unwrap();
                    let enc = tx.encode_frame(&bits).unwrap();
                    let y = apply_channel(&enc.grid, &ch, n0, &mut frame_rng(1, Stream::Noise, f)).unwrap();
                    let dec = tx.decode_frame(&y, &ch.cfr).unwrap();
                    errors += usize::from(dec.bits != bits);
                }
                let ms = start.elapsed().as_secs_f64() * 1e3 / frames as f64;
                println!("{scheme} rx={rx} snr={snr_db} dB: {ms:.2} ms/frame, {errors}/{frames} errors");
            }
        }
    }
}
