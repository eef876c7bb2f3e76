//! Per-slot channel realizations for the three fading scenarios.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, CMatrix};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingScenario {
    /// One draw for the whole run.
    SlowFading,
    /// Redrawn every slot pair `(n, n + 1)` with `n` even; relay-to-relay
    /// links are reciprocal within the pair.
    BlockPerTwoSlots,
    /// Independent redraw every slot.
    BlockPerSlot,
}

impl FadingScenario {
    pub fn name(&self) -> &'static str {
        match self {
            FadingScenario::SlowFading => "slow_fading",
            FadingScenario::BlockPerTwoSlots => "block_per_two_slots",
            FadingScenario::BlockPerSlot => "block_per_slot",
        }
    }
}

/// All channel matrices seen in one slot. Relay indices are zero-based in
/// the arrays: `backward[0]` is the source to relay 1 link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `H_iS`: source to relay `i`.
    pub backward: [CMatrix; 3],
    /// `H_Di`: relay `i` to destination.
    pub forward: [CMatrix; 3],
    /// `H_13`: relay 3 to relay 1.
    pub h13: CMatrix,
    /// `H_23`: relay 3 to relay 2.
    pub h23: CMatrix,
    /// `H_31`: relay 1 to relay 3.
    pub h31: CMatrix,
    /// `H_32`: relay 2 to relay 3.
    pub h32: CMatrix,
    pub slot_index: usize,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.h13.nrows()
    }

    /// `H_i3` for relay `i` in {0, 1}.
    pub fn from_r3(&self, i: usize) -> &CMatrix {
        if i == 0 {
            &self.h13
        } else {
            &self.h23
        }
    }

    /// `H_3i` for relay `i` in {0, 1}.
    pub fn to_r3(&self, i: usize) -> &CMatrix {
        if i == 0 {
            &self.h31
        } else {
            &self.h32
        }
    }

    pub fn draw<R: rand::Rng + ?Sized>(m: usize, slot_index: usize, rng: &mut R) -> Self {
        let mut g = || complex_gaussian(m, m, rng);
        ChannelSet {
            backward: [g(), g(), g()],
            forward: [g(), g(), g()],
            h13: g(),
            h23: g(),
            h31: g(),
            h32: g(),
            slot_index,
        }
    }

    /// Largest elementwise deviation from `H_3i = H_i3^T` over both relays.
    pub fn reciprocity_deviation(&self) -> f64 {
        let dev = |a: &CMatrix, b: &CMatrix| {
            (a - b.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max)
        };
        dev(&self.h31, &self.h13).max(dev(&self.h32, &self.h23))
    }

    fn named(&self) -> [(&'static str, &CMatrix); 10] {
        [
            ("H_1S", &self.backward[0]),
            ("H_2S", &self.backward[1]),
            ("H_3S", &self.backward[2]),
            ("H_D1", &self.forward[0]),
            ("H_D2", &self.forward[1]),
            ("H_D3", &self.forward[2]),
            ("H_13", &self.h13),
            ("H_23", &self.h23),
            ("H_31", &self.h31),
            ("H_32", &self.h32),
        ]
    }
}

pub fn check_antennas(op: &'static str, m: usize) -> Result<()> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::dim(op, format!("M must be even and >= 2, got {m}")));
    }
    Ok(())
}

/// Channel sequence of `n_slots` slots obeying the scenario's constancy and
/// reciprocity rules. Every redraw is i.i.d. CN(0, 1).
pub fn draw_channel_sequence(
    scenario: FadingScenario,
    m: usize,
    n_slots: usize,
    stream: &RngStream,
) -> Result<Vec<ChannelSet>> {
    const OP: &str = "channel::draw_channel_sequence";
    check_antennas(OP, m)?;
    if n_slots < 2 {
        return Err(Error::dim(OP, format!("n_slots must be >= 2, got {n_slots}")));
    }
    let mut rng = stream.generator();
    let mut seq: Vec<ChannelSet> = Vec::with_capacity(n_slots);
    for n in 0..n_slots {
        let set = match scenario {
            FadingScenario::SlowFading if n > 0 => seq[0].clone(),
            FadingScenario::BlockPerTwoSlots if n % 2 == 1 => seq[n - 1].clone(),
            FadingScenario::BlockPerTwoSlots => {
                let mut set = ChannelSet::draw(m, n, &mut rng);
                set.h31 = set.h13.transpose();
                set.h32 = set.h23.transpose();
                set
            }
            _ => ChannelSet::draw(m, n, &mut rng),
        };
        seq.push(ChannelSet {
            slot_index: n,
            ..set
        });
    }
    Ok(seq)
}

#[derive(Serialize)]
struct SlotRecord<'a> {
    slot: usize,
    matrices: Vec<MatrixRecord<'a>>,
}

#[derive(Serialize)]
struct MatrixRecord<'a> {
    name: &'a str,
    /// Row-major `[re, im]` pairs.
    rows: Vec<Vec<[f64; 2]>>,
}

/// JSON dump: one record per slot, each matrix as row-major `[re, im]` pairs.
pub fn channels_to_json(seq: &[ChannelSet]) -> String {
    let records: Vec<SlotRecord> = seq
        .iter()
        .map(|set| SlotRecord {
            slot: set.slot_index,
            matrices: set
                .named()
                .iter()
                .map(|(name, mat)| MatrixRecord {
                    name,
                    rows: (0..mat.nrows())
                        .map(|r| {
                            (0..mat.ncols())
                                .map(|c| [mat[(r, c)].re, mat[(r, c)].im])
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("channel records serialize")
}

/// CSV dump with columns `slot,matrix,row,col,re,im`.
pub fn channels_to_csv(seq: &[ChannelSet]) -> String {
    let mut out = String::from("slot,matrix,row,col,re,im\n");
    for set in seq {
        for (name, mat) in set.named() {
            for r in 0..mat.nrows() {
                for c in 0..mat.ncols() {
                    let z = mat[(r, c)];
                    let _ = writeln!(out, "{},{},{},{},{:e},{:e}", set.slot_index, name, r, c, z.re, z.im);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slow_fading_is_constant() {
        let seq = draw_channel_sequence(FadingScenario::SlowFading, 4, 6, &RngStream::new(1, 0)).unwrap();
        assert_eq!(seq.len(), 6);
        for s in &seq[1..] {
            assert_eq!(s.backward, seq[0].backward);
            assert_eq!(s.forward, seq[0].forward);
            assert_eq!(s.h13, seq[0].h13);
            assert_eq!(s.h32, seq[0].h32);
        }
    }

    #[test]
    fn two_slot_blocks_are_reciprocal_and_paired() {
        let seq =
            draw_channel_sequence(FadingScenario::BlockPerTwoSlots, 4, 8, &RngStream::new(2, 0)).unwrap();
        for pair in seq.chunks(2) {
            assert_eq!(pair[0].h31, pair[0].h13.transpose());
            assert_eq!(pair[0].h32, pair[0].h23.transpose());
            assert_eq!(pair[1].h31, pair[0].h13.transpose());
            assert_eq!(pair[0].backward, pair[1].backward);
            assert_eq!(pair[0].forward, pair[1].forward);
        }
        assert_ne!(seq[0].backward, seq[2].backward);
        assert_eq!(seq[5].slot_index, 5);
    }

    #[test]
    fn per_slot_variance() {
        let seq =
            draw_channel_sequence(FadingScenario::BlockPerSlot, 2, 10_000, &RngStream::new(3, 0)).unwrap();
        let n = seq.len() as f64;
        let var = seq.iter().map(|s| s.backward[0][(0, 0)].norm_sqr()).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
        assert_ne!(seq[0].backward, seq[1].backward);
    }

    #[test]
    fn rejects_odd_antennas() {
        for m in [0, 1, 3] {
            assert!(matches!(
                draw_channel_sequence(FadingScenario::BlockPerSlot, m, 2, &RngStream::new(0, 0)),
                Err(Error::InvalidDimension { .. })
            ));
        }
        assert!(draw_channel_sequence(FadingScenario::BlockPerSlot, 2, 1, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn reproducible_per_trial() {
        let a = draw_channel_sequence(FadingScenario::BlockPerSlot, 2, 4, &RngStream::new(5, 9)).unwrap();
        let b = draw_channel_sequence(FadingScenario::BlockPerSlot, 2, 4, &RngStream::new(5, 9)).unwrap();
        let c = draw_channel_sequence(FadingScenario::BlockPerSlot, 2, 4, &RngStream::new(5, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dumps_have_one_entry_per_matrix_element() {
        let seq = draw_channel_sequence(FadingScenario::SlowFading, 2, 2, &RngStream::new(1, 1)).unwrap();
        let csv = channels_to_csv(&seq);
        assert_eq!(csv.lines().count(), 1 + 2 * 10 * 4);
        let json: serde_json::Value = serde_json::from_str(&channels_to_json(&seq)).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 2);
        assert_eq!(json[0]["matrices"].as_array().unwrap().len(), 10);
    }
}
