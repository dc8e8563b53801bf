//! Splits trellis frame errors into parallel-transition errors and path errors.
//!
//! "genie" decodes each step inside the transmitted subset only, so it counts
//! frames lost to parallel transitions alone. "viterbi" is the full decoder and
//! "block" is the 4-Tx block code on the same channels and noise.

use qostf::channel::{apply_channel, frame_rng, sample_taps, ChannelRealization, PowerDelayProfile, Stream};
use qostf::transceiver::{FrameConfig, Scheme, Transceiver};
use rand::Rng;

fn main() {
    let pdp = PowerDelayProfile::<f64>::uniform(4).unwrap();
    let tc = Transceiver::<f64>::new(FrameConfig::new(Scheme::Qostftc4State, 1).unwrap()).unwrap();
    let bc = Transceiver::<f64>::new(FrameConfig::new(Scheme::Qostfbc4Tx, 1).unwrap()).unwrap();
    let tr = tc.trellis().unwrap().clone();
    for snr in [14.0f64, 16.0, 18.0] {
        let n0 = 10f64.powf(-snr / 10.0);
        let (mut genie, mut vit, mut blk) = (0, 0, 0);
        let frames = 3000;
        for f in 0..frames {
            let mut br = frame_rng(1, Stream::Bits, f);
            let bits: Vec<u8> = (0..512).map(|_| br.gen_range(0..2)).collect();
            let taps = sample_taps(&pdp, 4, 2, &mut frame_rng(1, Stream::Channel, f));
            let ch = ChannelRealization::new(taps, 64, f).unwrap().restrict(4, 1).unwrap();
            let enc = tc.encode_frame(&bits).unwrap();
            let y = apply_channel(&enc.grid, &ch, n0, &mut frame_rng(1, Stream::Noise, f)).unwrap();
            let mut err = false;
            let mut state = 0;
            for (z, cw) in enc.codewords.iter().enumerate() {
                let (t, m) = tc.config().placement(z);
                let input = ((bits[16 * z] as usize) << 1) | bits[16 * z + 1] as usize;
                let b = tr.branch(state, input);
                let best = tc.decoders()[b.subset.family].decode_classes(&y, &ch.cfr, t, m);
                err |= best[b.subset.subset as usize].id != cw.id;
                state = b.next;
            }
            genie += err as usize;
            vit += (tc.decode_frame(&y, &ch.cfr).unwrap().bits != bits) as usize;
            let encb = bc.encode_frame(&bits).unwrap();
            let yb = apply_channel(&encb.grid, &ch, n0, &mut frame_rng(1, Stream::Noise, f)).unwrap();
            blk += (bc.decode_frame(&yb, &ch.cfr).unwrap().bits != bits) as usize;
        }
        println!("{snr} dB: genie {genie} viterbi {vit} block {blk} / {frames}");
    }
}
