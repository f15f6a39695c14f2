//! Reflection-aware progressive ray groups: the disjoint partition of
//! training rays into uncertain (possibly emissive) and certain (confirmed
//! reflective) sets, the threshold schedule, and stratified batching.

use serde::{Deserialize, Serialize};

use crate::sampler::Stream;

/// Linear threshold schedule over the progressive phase: k starts at the
/// floor and rises to the cap across the planned number of group updates.
#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub floor: f64,
    pub cap: f64,
    pub n_updates: usize,
}

impl ThresholdSchedule {
    pub fn new(floor: f64, cap: f64, n_updates: usize) -> ThresholdSchedule {
        ThresholdSchedule { floor, cap, n_updates }
    }

    /// Threshold for the given update index; nondecreasing, clamped to
    /// [floor, cap].
    pub fn k_at(&self, update_index: usize) -> f64 {
        if self.n_updates <= 1 {
            return self.cap;
        }
        let t = (update_index as f64 / (self.n_updates - 1) as f64).min(1.0);
        (self.floor + (self.cap - self.floor) * t).clamp(self.floor, self.cap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayGroups {
    /// true = certain.
    certain: Vec<bool>,
    n_certain: usize,
    pub update_count: usize,
    pub current_k: f64,
}

impl RayGroups {
    /// All rays start uncertain.
    pub fn new(n_rays: usize) -> RayGroups {
        RayGroups { certain: vec![false; n_rays], n_certain: 0, update_count: 0, current_k: 0.0 }
    }

    /// Rebuild from a stored membership vector (true = certain).
    pub fn from_membership(certain: Vec<bool>, update_count: usize, current_k: f64) -> RayGroups {
        let n_certain = certain.iter().filter(|c| **c).count();
        RayGroups { certain, n_certain, update_count, current_k }
    }

    pub fn len(&self) -> usize {
        self.certain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.certain.is_empty()
    }

    pub fn is_certain(&self, id: usize) -> bool {
        self.certain[id]
    }

    pub fn n_certain(&self) -> usize {
        self.n_certain
    }

    pub fn n_uncertain(&self) -> usize {
        self.certain.len() - self.n_certain
    }

    pub fn uncertain_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.certain.iter().enumerate().filter(|(_, c)| !**c).map(|(i, _)| i)
    }

    pub fn certain_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.certain.iter().enumerate().filter(|(_, c)| **c).map(|(i, _)| i)
    }

    /// One progressive update: uncertain rays whose expected emission
    /// strength falls below k move to the certain group; certain rays never
    /// move back, so |uncertain| is nonincreasing.
    pub fn update(&mut self, strength_of: impl Fn(usize) -> f64, k: f64) -> usize {
        let mut moved = 0;
        for id in 0..self.certain.len() {
            if !self.certain[id] && strength_of(id) < k {
                self.certain[id] = true;
                self.n_certain += 1;
                moved += 1;
            }
        }
        self.update_count += 1;
        self.current_k = k;
        moved
    }
}

/// Stratified mini-batch sampler: rays are drawn from both groups in
/// proportion to group sizes, without replacement within an epoch per
/// group. Group membership changes invalidate the epoch orders.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    seed: u64,
    epoch: u64,
    order_uncertain: Vec<usize>,
    order_certain: Vec<usize>,
    cursor_uncertain: usize,
    cursor_certain: usize,
    dirty: bool,
}

impl BatchSampler {
    pub fn new(seed: u64) -> BatchSampler {
        BatchSampler {
            seed,
            epoch: 0,
            order_uncertain: Vec::new(),
            order_certain: Vec::new(),
            cursor_uncertain: 0,
            cursor_certain: 0,
            dirty: true,
        }
    }

    /// Must be called after group membership changes.
    pub fn invalidate(&mut self) {
        self.dirty = true;
    }

    fn reshuffle(&mut self, groups: &RayGroups) {
        self.epoch += 1;
        self.order_uncertain = groups.uncertain_ids().collect();
        self.order_certain = groups.certain_ids().collect();
        let mut rng = Stream::new(&[self.seed, self.epoch, 0xba7c]);
        rng.shuffle(&mut self.order_uncertain);
        rng.shuffle(&mut self.order_certain);
        self.cursor_uncertain = 0;
        self.cursor_certain = 0;
        self.dirty = false;
    }

    fn draw(order: &[usize], cursor: &mut usize, n: usize, out: &mut Vec<usize>) -> usize {
        let take = n.min(order.len() - *cursor);
        out.extend_from_slice(&order[*cursor..*cursor + take]);
        *cursor += take;
        take
    }

    pub fn make_batch(&mut self, groups: &RayGroups, batch_size: usize) -> Vec<usize> {
        let total = groups.len();
        if total == 0 || batch_size == 0 {
            return Vec::new();
        }
        let batch_size = batch_size.min(total);
        let mut want_u = ((batch_size * groups.n_uncertain()) as f64 / total as f64).round() as usize;
        want_u = want_u.min(groups.n_uncertain()).min(batch_size);
        let mut want_c = (batch_size - want_u).min(groups.n_certain());
        // Backfill if one group ran short.
        want_u = (batch_size - want_c).min(groups.n_uncertain());
        want_c = (batch_size - want_u).min(groups.n_certain());

        let mut out = Vec::with_capacity(batch_size);
        let mut need_u = want_u;
        let mut need_c = want_c;
        while need_u + need_c > 0 {
            if self.dirty
                || (need_u > 0 && self.cursor_uncertain >= self.order_uncertain.len())
                || (need_c > 0 && self.cursor_certain >= self.order_certain.len())
            {
                self.reshuffle(groups);
            }
            need_u -= Self::draw(&self.order_uncertain, &mut self.cursor_uncertain, need_u, &mut out);
            need_c -= Self::draw(&self.order_certain, &mut self.cursor_certain, need_c, &mut out);
        }
        out
    }
}
