use mseq_core::nn::{scale_xcorr, SemigroupFilter};
use mseq_core::oracle::naive_scale_xcorr;
use mseq_core::ScaleStack;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fast_xcorr_matches_naive_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let levels = rng.gen_range(1..=4);
        let taps = rng.gen_range(1..=levels.min(2));
        let (ci, co) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let (h, w) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        let stride = rng.gen_range(1..=2);
        let f =
            ScaleStack::from_vec(levels, ci, h, w, (0..levels * ci * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let n = taps * ci * co * k * k;
        let filt = SemigroupFilter::new(taps, ci, co, k, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let fast = scale_xcorr(&f, &filt, stride).unwrap();
        let slow = naive_scale_xcorr(&f, &filt, stride).unwrap();
        assert_eq!(fast.shape(), slow.shape(), "case {case}");
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert_eq!(a.to_bits(), b.to_bits(), "case {case}");
        }
    }
}
