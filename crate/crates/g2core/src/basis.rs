//! Multi-index bookkeeping for alternating forms on R^7.
//!
//! A degree-p basis form `e^{i1...ip}` (strictly increasing indices) is stored
//! as a 7-bit mask with bit `k` set when axis `k+1` participates. Per-degree
//! tables list masks in lexicographic tuple order, which fixes the coefficient
//! layout used everywhere else in the crate.

/// Ambient dimension.
pub const DIM: usize = 7;

/// Number of basis forms per degree, C(7, p).
pub const COUNTS: [usize; 8] = [1, 7, 21, 35, 35, 21, 7, 1];

/// Largest component count over all degrees.
pub const MAX_COMPS: usize = 35;

const FULL_MASK: u8 = 0x7f;
const INVALID: u8 = 0xff;

const fn build_masks() -> [[u8; MAX_COMPS]; 8] {
    let mut out = [[0u8; MAX_COMPS]; 8];
    let mut p = 0;
    while p <= DIM {
        let count = COUNTS[p];
        // First combination in lex order: (0, 1, ..., p-1).
        let mut combo = [0usize; DIM];
        let mut i = 0;
        while i < p {
            combo[i] = i;
            i += 1;
        }
        let mut slot = 0;
        while slot < count {
            let mut mask = 0u8;
            let mut j = 0;
            while j < p {
                mask |= 1 << combo[j];
                j += 1;
            }
            out[p][slot] = mask;
            slot += 1;
            if slot == count {
                break;
            }
            // Advance the rightmost index that still has headroom.
            let mut k = p;
            while k > 0 {
                k -= 1;
                if combo[k] < DIM - p + k {
                    combo[k] += 1;
                    let mut m = k + 1;
                    while m < p {
                        combo[m] = combo[m - 1] + 1;
                        m += 1;
                    }
                    break;
                }
            }
        }
        p += 1;
    }
    out
}

/// Basis masks per degree, lexicographic tuple order.
pub const MASKS: [[u8; MAX_COMPS]; 8] = build_masks();

const fn build_index() -> [[u8; 128]; 8] {
    let mut out = [[INVALID; 128]; 8];
    let mut p = 0;
    while p <= DIM {
        let mut i = 0;
        while i < COUNTS[p] {
            out[p][MASKS[p][i] as usize] = i as u8;
            i += 1;
        }
        p += 1;
    }
    out
}

/// Mask -> lexicographic slot, `0xff` when the popcount does not match.
pub const INDEX_OF: [[u8; 128]; 8] = build_index();

const fn sign_of_merge(a: u8, b: u8) -> i8 {
    // Number of transpositions interleaving sorted b into sorted a.
    let mut inv = 0u32;
    let mut j = 0;
    while j < DIM {
        if b & (1 << j) != 0 {
            inv += (a >> (j + 1)).count_ones();
        }
        j += 1;
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

const fn build_comp_signs() -> [[i8; MAX_COMPS]; 8] {
    let mut out = [[0i8; MAX_COMPS]; 8];
    let mut p = 0;
    while p <= DIM {
        let mut i = 0;
        while i < COUNTS[p] {
            let mask = MASKS[p][i];
            out[p][i] = sign_of_merge(mask, FULL_MASK & !mask);
            i += 1;
        }
        p += 1;
    }
    out
}

/// Sign eps(I) with `e^I ^ e^{I^c} = eps(I) e^{1...7}`.
pub const COMP_SIGN: [[i8; MAX_COMPS]; 8] = build_comp_signs();

/// Slot of the complementary mask in degree `7 - p`.
pub fn complement_slot(p: usize, slot: usize) -> usize {
    let mask = MASKS[p][slot];
    INDEX_OF[DIM - p][(FULL_MASK & !mask) as usize] as usize
}

/// Sign of `e^I ^ e^J` relative to the merged increasing basis form,
/// zero when the index sets overlap.
pub fn wedge_sign(a: u8, b: u8) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    sign_of_merge(a, b) as f64
}

/// Sign picked up by `e_k` contracted into `e^I` (k must be set in I):
/// the parity of the indices of I below k.
pub fn interior_sign(mask: u8, k: usize) -> f64 {
    if (mask >> k) & 1 == 0 {
        return 0.0;
    }
    let below = (mask & ((1u8 << k) - 1)).count_ones();
    if below % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Axes (0-based) present in `mask`, low to high.
pub fn axes_of(mask: u8) -> impl Iterator<Item = usize> {
    (0..DIM).filter(move |k| (mask >> k) & 1 == 1)
}
