use fluxfuse::frame::u8_to_unit;
use fluxfuse::semcodec::{compression_report, decode, encode, lossless_reference_bytes, raw_reference_bytes, SemanticContainer};
use fluxfuse::{BinaryMask, Frame};

const W: usize = 128;
const H: usize = 96;
const SIDE: usize = 10;

fn texel(x: usize, y: usize, c: usize) -> u8 {
    let mut z = (x as u64) << 32 | (y as u64) << 8 | c as u64;
    z = (z ^ (z >> 29)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 32;
    60 + (z % 80) as u8
}

fn square_origin(t: usize) -> (usize, usize) {
    (10 + (t * 3) % (W - SIDE - 20), 20 + (t / 4) % (H - SIDE - 40))
}

/// Static texture with a white square moving over it; the square enters
/// after the first frame so the base frame holds background only.
fn sequence(n: usize) -> (Vec<Frame>, Vec<BinaryMask>) {
    let mut frames = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for t in 0..n {
        let (ox, oy) = square_origin(t);
        let inside = |x: usize, y: usize| t > 0 && (ox..ox + SIDE).contains(&x) && (oy..oy + SIDE).contains(&y);
        frames.push(Frame::from_fn(t, W, H, 3, |x, y, c| {
            if inside(x, y) {
                u8_to_unit(250)
            } else {
                u8_to_unit(texel(x, y, c))
            }
        }));
        masks.push(BinaryMask::from_fn(W, H, |x, y| {
            (ox.saturating_sub(2)..ox + SIDE + 2).contains(&x) && (oy.saturating_sub(2)..oy + SIDE + 2).contains(&y)
        }));
    }
    (frames, masks)
}

#[test]
fn sparse_masks_beat_lossless_frames() {
    let (frames, masks) = sequence(200);
    let c = encode(&frames, &masks, 75).unwrap();
    assert_eq!(c.frame_count(), 200);
    let report = compression_report(&c, lossless_reference_bytes(&frames).unwrap(), raw_reference_bytes(&frames)).unwrap();
    assert!(report.container_bytes < report.reference_lossless_bytes);
    assert!(report.scr() > 5.0, "scr {}", report.scr());
    let back = SemanticContainer::from_bytes(&c.to_bytes()).unwrap();
    assert_eq!(back, c);
}

fn bright_centroid(f: &Frame) -> [f64; 2] {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..f.height() {
        for x in 0..f.width() {
            if f.get(x, y, 0) > 0.85 && f.get(x, y, 1) > 0.85 && f.get(x, y, 2) > 0.85 {
                sx += x as f64;
                sy += y as f64;
                n += 1.0;
            }
        }
    }
    [sx / n, sy / n]
}

#[test]
fn decoded_square_stays_in_place() {
    let (frames, masks) = sequence(40);
    let c = encode(&frames, &masks, 60).unwrap();
    let decoded = decode(&c, true).unwrap();
    assert_eq!(decoded.len(), 40);
    for (t, f) in decoded.iter().enumerate().skip(1) {
        assert_eq!(f.index, t);
        let (ox, oy) = square_origin(t);
        let truth = [ox as f64 + (SIDE - 1) as f64 / 2.0, oy as f64 + (SIDE - 1) as f64 / 2.0];
        let got = bright_centroid(f);
        assert!((got[0] - truth[0]).hypot(got[1] - truth[1]) < 1.0, "frame {t}: {got:?} vs {truth:?}");
    }
}

#[test]
fn lossless_quality_is_exact_inside_roi() {
    let (frames, masks) = sequence(12);
    let c = encode(&frames, &masks, 100).unwrap();
    let decoded = decode(&c, true).unwrap();
    assert_eq!(decoded[0], frames[0]);
    for t in 1..frames.len() {
        for y in 0..H {
            for x in 0..W {
                let expect = if masks[t].get(x, y) { &frames[t] } else { &frames[0] };
                for ch in 0..3 {
                    assert_eq!(decoded[t].get(x, y, ch), expect.get(x, y, ch));
                }
            }
        }
    }
}

#[test]
fn lower_quality_compresses_more() {
    let (frames, masks) = sequence(30);
    let sizes: Vec<usize> = [95u8, 75, 50, 20]
        .iter()
        .map(|&q| encode(&frames, &masks, q).unwrap().byte_len())
        .collect();
    assert!(sizes.windows(2).all(|w| w[1] < w[0]), "{sizes:?}");
    let empty: Vec<BinaryMask> = masks.iter().map(|_| BinaryMask::new(W, H)).collect();
    assert!(encode(&frames, &empty, 75).unwrap().byte_len() < sizes[1]);
}
