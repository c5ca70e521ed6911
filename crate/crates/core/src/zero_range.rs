//! Zero-range recoding of the exclusion front.
//!
//! Reading the window from the front leftwards, let `x1 > x2 > ...` be the
//! empty sites. The stack at the zero-range front `q = r - p` holds
//! `r - x1` particles and the stack `n - 1` steps behind it holds the
//! `x_{n-1} - x_n - 1` particles of the run between consecutive empty sites.
//! Only runs delimited by empty sites inside the window are tracked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoundaryPolicy, Event, FrontState};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroRangeState {
    pub zfront: i64,
    pub counter: i64,
    /// `stacks[k]` is the height at site `zfront - k`.
    pub stacks: Vec<u32>,
}

impl ZeroRangeState {
    /// Number of tracked sites (equals the number of empty sites used).
    pub fn tracked_depth(&self) -> usize {
        self.stacks.len()
    }

    /// Height at site `x`; sites outside the tracked range read 0.
    pub fn height(&self, x: i64) -> u32 {
        let k = self.zfront - x;
        if k < 0 {
            0
        } else {
            self.stacks.get(k as usize).copied().unwrap_or(0)
        }
    }

    pub fn total(&self) -> u64 {
        self.stacks.iter().map(|&h| h as u64).sum()
    }

    /// Agreement of front, counter and the stacks tracked by both states.
    pub fn agrees_with(&self, other: &ZeroRangeState) -> bool {
        let n = self.stacks.len().min(other.stacks.len());
        self.zfront == other.zfront && self.counter == other.counter && self.stacks[..n] == other.stacks[..n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZrEvent {
    /// One particle from site `x` to `x - 1` (leaves the tracked range if `x` is the deepest site).
    Left(i64),
    /// One particle from site `x < q` to `x + 1`.
    Right(i64),
    /// Front particle moves: `q -> q + 1`, one particle transfers from `q` to `q + 1`.
    FrontMove,
    /// New particle at `q`; `p -> p + 1`.
    Branch,
    /// A particle from below the tracked range lands on its deepest site.
    Inflow,
    /// Event that does not touch any tracked stack.
    Untracked,
}

/// Empty sites of the window, nearest to the front first.
fn empty_sites(state: &FrontState) -> Vec<i64> {
    (state.edge()..=state.front()).rev().filter(|&x| state.get(x) == 0).collect()
}

pub fn to_zero_range(state: &FrontState) -> Result<ZeroRangeState> {
    let empties = empty_sites(state);
    if empties.is_empty() {
        return Err(Error::NoEmptySite);
    }
    let mut stacks = Vec::with_capacity(empties.len());
    stacks.push((state.front() - empties[0]) as u32);
    for w in empties.windows(2) {
        stacks.push((w[0] - w[1] - 1) as u32);
    }
    Ok(ZeroRangeState { zfront: state.zfront(), counter: state.counter(), stacks })
}

/// Leftmost-first word over the tracked region `[x_m, front]`.
pub fn tracked_word(z: &ZeroRangeState) -> Vec<u8> {
    let mut word = Vec::new();
    for &h in z.stacks.iter().rev() {
        word.push(0);
        word.extend(std::iter::repeat_n(1, h as usize));
    }
    word
}

/// Inverse map onto the smallest window holding the tracked region.
pub fn to_exclusion(z: &ZeroRangeState, front: i64, counter: i64) -> Result<FrontState> {
    let len = tracked_word(z).len().max(2);
    to_exclusion_in(z, front, counter, len - 1, BoundaryPolicy::Frozen)
}

pub fn to_exclusion_in(
    z: &ZeroRangeState,
    front: i64,
    counter: i64,
    window: usize,
    policy: BoundaryPolicy,
) -> Result<FrontState> {
    if front - counter != z.zfront {
        return Err(Error::InconsistentFront { front, counter, zfront: z.zfront });
    }
    let word = tracked_word(z);
    if word.len() > window + 1 {
        return Err(Error::WidthTooLarge { width: word.len(), window });
    }
    Ok(FrontState::from_word_at(front, counter, &word, window, policy))
}

/// Nonzero generator terms of the zero-range dynamics on the tracked sites.
pub fn zr_enabled_events(z: &ZeroRangeState, rho: f64) -> Vec<(ZrEvent, f64)> {
    let mut out = Vec::new();
    let q = z.zfront;
    for (k, &h) in z.stacks.iter().enumerate() {
        if h == 0 {
            continue;
        }
        let x = q - k as i64;
        out.push((ZrEvent::Left(x), 1.0));
        if k == 0 {
            if rho < 1.0 {
                out.push((ZrEvent::FrontMove, 1.0 - rho));
            }
            if rho > 0.0 {
                out.push((ZrEvent::Branch, rho));
            }
        } else {
            out.push((ZrEvent::Right(x), 1.0));
        }
    }
    out
}

pub fn zr_apply(z: &ZeroRangeState, ev: ZrEvent) -> Result<ZeroRangeState> {
    let mut n = z.clone();
    let disabled = || Error::DisabledEvent { event: format!("{ev:?}") };
    let q = z.zfront;
    match ev {
        ZrEvent::Left(x) => {
            let k = q - x;
            if k < 0 || k as usize >= n.stacks.len() || n.stacks[k as usize] == 0 {
                return Err(disabled());
            }
            let k = k as usize;
            n.stacks[k] -= 1;
            if k + 1 < n.stacks.len() {
                n.stacks[k + 1] += 1;
            }
        }
        ZrEvent::Right(x) => {
            let k = q - x;
            if k <= 0 || k as usize >= n.stacks.len() || n.stacks[k as usize] == 0 {
                return Err(disabled());
            }
            let k = k as usize;
            n.stacks[k] -= 1;
            n.stacks[k - 1] += 1;
        }
        ZrEvent::FrontMove => {
            if n.stacks.first().copied().unwrap_or(0) == 0 {
                return Err(disabled());
            }
            n.stacks[0] -= 1;
            n.stacks.insert(0, 1);
            n.zfront += 1;
        }
        ZrEvent::Branch => {
            if n.stacks.first().copied().unwrap_or(0) == 0 {
                return Err(disabled());
            }
            n.stacks[0] += 1;
            n.counter += 1;
        }
        ZrEvent::Inflow => match n.stacks.last_mut() {
            Some(h) => *h += 1,
            None => return Err(disabled()),
        },
        ZrEvent::Untracked => {}
    }
    Ok(n)
}

/// Zero-range image of an enabled exclusion event.
pub fn translate_event(state: &FrontState, event: Event) -> Result<ZrEvent> {
    if !state.is_enabled(&event) {
        return Err(Error::DisabledEvent { event: event.to_string() });
    }
    let empties = empty_sites(state);
    let q = state.zfront();
    let rank = |y: i64| empties.iter().position(|&e| e == y);
    Ok(match event {
        Event::FrontBranch => ZrEvent::Branch,
        Event::FrontMove => ZrEvent::FrontMove,
        // Particle at `x` jumps into the empty site `x - 1`.
        Event::SwapLeft(x) => match rank(x - 1) {
            Some(i) if x > state.edge() => ZrEvent::Left(q - i as i64),
            _ => ZrEvent::Untracked,
        },
        // Particle at `x` jumps into the empty site `x + 1`.
        Event::SwapRight(x) => {
            if x < state.edge() {
                ZrEvent::Untracked
            } else {
                match rank(x + 1) {
                    Some(i) if i + 1 == empties.len() => ZrEvent::Inflow,
                    Some(i) => ZrEvent::Right(q - i as i64 - 1),
                    None => ZrEvent::Untracked,
                }
            }
        }
    })
}

/// Checks the commutation square for one event. Returns `Ok(None)` when one
/// side is undefined (no empty site in a window).
pub fn commutes(state: &FrontState, event: Event) -> Result<Option<bool>> {
    let (Ok(before), Ok(after)) = (to_zero_range(state), to_zero_range(&crate::lattice::apply_event(state, event)?))
    else {
        return Ok(None);
    };
    let image = zr_apply(&before, translate_event(state, event)?)?;
    Ok(Some(image.agrees_with(&after)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::apply_event;

    #[test]
    fn hand_recursion_example() {
        let s = FrontState::from_word(&[0, 1, 0, 1, 1, 1], 5, BoundaryPolicy::Frozen);
        let z = to_zero_range(&s).unwrap();
        assert_eq!(z.zfront, 0);
        assert_eq!(z.height(0), 3);
        assert_eq!(z.height(-1), 1);
        let back = to_exclusion(&z, 0, 0).unwrap();
        assert_eq!(back.occupancy(), vec![0, 1, 0, 1, 1, 1]);
    }

    #[test]
    fn single_particle_image() {
        let s = FrontState::from_word(&[1], 6, BoundaryPolicy::Frozen);
        let z = to_zero_range(&s).unwrap();
        assert_eq!(z.stacks[0], 1);
        assert!(z.stacks[1..].iter().all(|&h| h == 0));
    }

    #[test]
    fn zfront_is_front_minus_counter() {
        let s = FrontState::from_word_at(5, 2, &[0, 1, 1], 8, BoundaryPolicy::Frozen);
        assert_eq!(to_zero_range(&s).unwrap().zfront, 3);
    }

    #[test]
    fn full_window_has_no_image() {
        let s = FrontState::from_word(&[1, 1, 1], 2, BoundaryPolicy::Frozen);
        assert_eq!(to_zero_range(&s), Err(Error::NoEmptySite));
    }

    #[test]
    fn inconsistent_triple_rejected() {
        let z = ZeroRangeState { zfront: 1, counter: 0, stacks: vec![1] };
        assert!(matches!(to_exclusion(&z, 3, 1), Err(Error::InconsistentFront { .. })));
    }

    #[test]
    fn zero_stacks_give_empty_word() {
        let z = ZeroRangeState { zfront: 0, counter: 0, stacks: vec![0; 4] };
        assert_eq!(tracked_word(&z), vec![0; 4]);
        assert!(zr_enabled_events(&z, 0.5).is_empty());
    }

    #[test]
    fn rates_at_front_and_behind() {
        let z = ZeroRangeState { zfront: 0, counter: 0, stacks: vec![3, 1] };
        let ev = zr_enabled_events(&z, 0.5);
        assert_eq!(
            ev,
            vec![
                (ZrEvent::Left(0), 1.0),
                (ZrEvent::FrontMove, 0.5),
                (ZrEvent::Branch, 0.5),
                (ZrEvent::Left(-1), 1.0),
                (ZrEvent::Right(-1), 1.0)
            ]
        );
    }

    #[test]
    fn branch_grows_front_stack() {
        let z = ZeroRangeState { zfront: 2, counter: 0, stacks: vec![1, 0] };
        let b = zr_apply(&z, ZrEvent::Branch).unwrap();
        assert_eq!((b.zfront, b.counter, b.stacks[0]), (2, 1, 2));
    }

    #[test]
    fn front_left_jump_translation() {
        let s = FrontState::from_word(&[1, 0, 1], 8, BoundaryPolicy::Frozen);
        assert_eq!(translate_event(&s, Event::SwapLeft(0)).unwrap(), ZrEvent::Left(0));
        let n = apply_event(&s, Event::SwapLeft(0)).unwrap();
        assert_eq!((-2..=0).map(|x| n.get(x)).collect::<Vec<_>>(), vec![1, 1, 0]);
        assert_eq!(commutes(&s, Event::SwapLeft(0)).unwrap(), Some(true));
    }

    #[test]
    fn front_events_translate() {
        let s = FrontState::from_word(&[0, 1], 8, BoundaryPolicy::Frozen);
        assert_eq!(translate_event(&s, Event::FrontBranch).unwrap(), ZrEvent::Branch);
        assert_eq!(translate_event(&s, Event::FrontMove).unwrap(), ZrEvent::FrontMove);
        assert_eq!(commutes(&s, Event::FrontMove).unwrap(), Some(true));
        assert_eq!(commutes(&s, Event::FrontBranch).unwrap(), Some(true));
    }

    #[test]
    fn every_enabled_event_commutes_on_a_fixed_state() {
        let s = FrontState::from_word(&[1, 0, 0, 1, 1, 0, 1, 0, 1, 1], 9, BoundaryPolicy::Frozen).with_outside(1);
        for (e, _) in crate::lattice::enabled_events(&s, 0.5) {
            assert_ne!(commutes(&s, e).unwrap(), Some(false), "{e}");
        }
    }
}
