//! Event-driven state of one replica.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::label::Label;
use super::sampling::sample_division_time;
use crate::model::{CellTrait, ModelParams, Status};
use crate::rate::DivisionRate;
use crate::{Error, Result};

/// A living cell. Its size is not stored but evaluated from the birth record.
#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub label: Label,
    pub birth_size: f64,
    pub status: Status,
    pub birth_time: f64,
    /// Absolute time of the scheduled division, `+inf` if none.
    pub division_time: f64,
}

impl Individual {
    pub fn size_at(&self, t: f64, params: &ModelParams) -> f64 {
        self.birth_size * (params.growth_rate(self.status) * (t - self.birth_time)).exp()
    }

    pub fn trait_at(&self, t: f64, params: &ModelParams) -> CellTrait {
        CellTrait::new(self.size_at(t, params), self.status).expect("sizes stay positive")
    }
}

/// One division: a parent of size `parent_size` replaced by two children.
#[derive(Clone, Debug, PartialEq)]
pub struct DivisionEvent {
    pub time: f64,
    pub parent: Label,
    pub parent_status: Status,
    pub parent_size: f64,
    /// Sizes of the status-0 and status-1 children.
    pub child_sizes: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Splits `size` into the two children so that their sizes add up to
/// `size` exactly: the larger share is computed by multiplication and the
/// smaller one by an exact subtraction.
pub fn split_size(size: f64, params: &ModelParams) -> [f64; 2] {
    let t0 = params.fraction(Status::Old);
    if t0 >= 0.5 {
        let big = t0 * size;
        [big, size - big]
    } else {
        let big = params.fraction(Status::New) * size;
        [size - big, big]
    }
}

/// Seed of the random stream attached to an individual.
pub fn stream_seed(seed: u64, replica: u64, label: &Label) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut h = mix(seed ^ mix(replica));
    h = mix(h ^ label.generation() as u64);
    for chunk in label.digits().chunks(63) {
        let word = chunk.iter().fold(1u64, |w, &d| (w << 1) | d as u64);
        h = mix(h ^ word);
    }
    h
}

/// Alive individuals of one replica together with the event queue.
#[derive(Clone, Debug)]
pub struct PopulationState {
    time: f64,
    slots: Vec<Option<Individual>>,
    free: Vec<usize>,
    queue: BinaryHeap<Reverse<Key>>,
    alive: usize,
    event_log: Option<Vec<DivisionEvent>>,
    seed: u64,
    replica: u64,
    window: f64,
}

/// Outcome of [`PopulationState::step`].
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Divided(DivisionEvent),
    /// No division occurs before the horizon; time was advanced to it.
    Horizon,
}

impl PopulationState {
    /// Population of the given founders at time 0. A single founder is the
    /// root; with several, founder `i` is named by the binary digits of `i`
    /// at a fixed width so that no founder is an ancestor of another.
    pub fn new<R: DivisionRate + ?Sized>(
        founders: &[CellTrait],
        params: &ModelParams,
        rate: &R,
        seed: u64,
        replica: u64,
        window: f64,
        record_events: bool,
    ) -> Result<Self> {
        if founders.is_empty() {
            return Err(Error::EmptyPopulation("no founders".into()));
        }
        let mut state = PopulationState {
            time: 0.0,
            slots: Vec::with_capacity(founders.len()),
            free: Vec::new(),
            queue: BinaryHeap::new(),
            alive: 0,
            event_log: record_events.then(Vec::new),
            seed,
            replica,
            window,
        };
        let width = usize::BITS - (founders.len() - 1).leading_zeros();
        for (i, f) in founders.iter().enumerate() {
            let label = (0..width).rev().fold(Label::root(), |l, b| l.child(((i >> b) & 1) as u8));
            state.insert(label, f.size(), f.status(), 0.0, params, rate);
        }
        Ok(state)
    }

    fn insert<R: DivisionRate + ?Sized>(
        &mut self,
        label: Label,
        size: f64,
        status: Status,
        birth_time: f64,
        params: &ModelParams,
        rate: &R,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, self.replica, &label));
        let at = CellTrait::new(size, status).expect("child sizes are positive");
        let wait = sample_division_time(at, params, rate, self.window, &mut rng);
        let division_time = birth_time + wait;
        let ind = Individual { label, birth_size: size, status, birth_time, division_time };
        let slot = match self.free.pop() {
            Some(s) => {
                self.slots[s] = Some(ind);
                s
            }
            None => {
                self.slots.push(Some(ind));
                self.slots.len() - 1
            }
        };
        if division_time.is_finite() {
            self.queue.push(Reverse(Key(division_time, slot)));
        }
        self.alive += 1;
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn alive_count(&self) -> usize {
        self.alive
    }

    pub fn individuals(&self) -> impl Iterator<Item = &Individual> {
        self.slots.iter().flatten()
    }

    /// Traits of all alive individuals at the current time.
    pub fn traits(&self, params: &ModelParams) -> Vec<CellTrait> {
        self.individuals().map(|i| i.trait_at(self.time, params)).collect()
    }

    /// Sum of alive sizes at the current time.
    pub fn total_size(&self, params: &ModelParams) -> f64 {
        self.individuals().map(|i| i.size_at(self.time, params)).sum()
    }

    pub fn event_log(&self) -> Option<&[DivisionEvent]> {
        self.event_log.as_deref()
    }

    pub fn take_event_log(&mut self) -> Option<Vec<DivisionEvent>> {
        self.event_log.take()
    }

    /// Time of the next scheduled division, `+inf` if none.
    pub fn next_event_time(&self) -> f64 {
        self.queue.peek().map_or(f64::INFINITY, |k| k.0 .0)
    }

    /// Advances to the next division if it happens no later than `horizon`,
    /// otherwise moves the clock to `horizon`.
    ///
    /// Fails with [`Error::PopulationCap`] before a division that would bring
    /// the population above `cap`; the state is left at the time of that
    /// division, unchanged otherwise.
    pub fn step<R: DivisionRate + ?Sized>(
        &mut self,
        params: &ModelParams,
        rate: &R,
        horizon: f64,
        cap: usize,
    ) -> Result<Step> {
        let next = self.next_event_time();
        if next > horizon {
            self.time = self.time.max(horizon);
            return Ok(Step::Horizon);
        }
        if self.alive + 1 > cap {
            self.time = next;
            return Err(Error::PopulationCap { cap, time: next });
        }
        let Reverse(Key(t, slot)) = self.queue.pop().expect("queue nonempty");
        let parent = self.slots[slot].take().expect("queued slot is alive");
        self.free.push(slot);
        self.alive -= 1;
        self.time = t;

        let parent_size = parent.size_at(t, params);
        let child_sizes = split_size(parent_size, params);
        for status in Status::ALL {
            let label = parent.label.child(status.index() as u8);
            self.insert(label, child_sizes[status.index()], status, t, params, rate);
        }
        let event = DivisionEvent {
            time: t,
            parent: parent.label,
            parent_status: parent.status,
            parent_size,
            child_sizes,
        };
        if let Some(log) = self.event_log.as_mut() {
            log.push(event.clone());
        }
        Ok(Step::Divided(event))
    }

    /// Runs until `t`, stopping early at the cap.
    pub fn advance_to<R: DivisionRate + ?Sized>(
        &mut self,
        params: &ModelParams,
        rate: &R,
        t: f64,
        cap: usize,
    ) -> Result<usize> {
        let mut events = 0;
        while let Step::Divided(_) = self.step(params, rate, t, cap)? {
            events += 1;
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{Linear, NoDivision};

    fn founder() -> Vec<CellTrait> {
        vec![CellTrait::new(1.0, Status::Old).unwrap()]
    }

    #[test]
    fn no_division_keeps_single_cell() {
        let p = ModelParams::new(1.0, 0.1, 0.5).unwrap();
        let mut s = PopulationState::new(&founder(), &p, &NoDivision, 1, 0, 0.1, true).unwrap();
        assert_eq!(s.step(&p, &NoDivision, 5.0, 10).unwrap(), Step::Horizon);
        assert_eq!(s.alive_count(), 1);
        assert_eq!(s.time(), 5.0);
        let x = s.traits(&p)[0].size();
        assert!((x - (0.9f64 * 5.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn first_division_follows_rule() {
        let p = ModelParams::new(1.0, 0.0, 0.7).unwrap();
        let mut s = PopulationState::new(&founder(), &p, &Linear, 9, 0, 0.1, true).unwrap();
        let Step::Divided(ev) = s.step(&p, &Linear, 100.0, 100).unwrap() else { panic!("no division") };
        assert_eq!(ev.parent.to_string(), "");
        assert_eq!(ev.child_sizes[0] + ev.child_sizes[1], ev.parent_size);
        assert!((ev.child_sizes[0] - 0.7 * ev.parent_size).abs() < 1e-15 * ev.parent_size);
        let mut labels: Vec<String> = s.individuals().map(|i| i.label.to_string()).collect();
        labels.sort();
        assert_eq!(labels, vec!["0", "1"]);
    }

    #[test]
    fn split_is_exact_for_small_theta() {
        let p = ModelParams::new(1.0, 0.0, 0.1).unwrap();
        for &x in &[0.3, 1.7, 123.456, 1e-5] {
            let [a, b] = split_size(x, &p);
            assert_eq!(a + b, x);
            assert!(a < b);
        }
    }

    #[test]
    fn cap_is_reported() {
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        let mut s = PopulationState::new(&founder(), &p, &Linear, 2, 0, 0.1, false).unwrap();
        let err = s.advance_to(&p, &Linear, 50.0, 8).unwrap_err();
        assert!(matches!(err, Error::PopulationCap { cap: 8, .. }));
        assert_eq!(s.alive_count(), 8);
    }

    #[test]
    fn founders_get_distinct_labels() {
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        let f: Vec<CellTrait> = (0..5).map(|_| CellTrait::new(1.0, Status::New).unwrap()).collect();
        let s = PopulationState::new(&f, &p, &Linear, 2, 0, 0.1, false).unwrap();
        let mut labels: Vec<String> = s.individuals().map(|i| i.label.to_string()).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 5);
    }
}
