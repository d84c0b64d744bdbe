//! Episode-structured replay storage.
//!
//! Transitions are grouped by episode so sub-trajectory sampling can never
//! cross an episode boundary, and eviction drops whole episodes oldest-first
//! (no orphaned partial episodes).

use rand::Rng;
use std::collections::VecDeque;

/// One experience tuple (o_t, a_t, o_{t+Δt}, r_t, Δt).
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub obs_next: Vec<f64>,
    pub reward: f64,
    pub dt: f64,
    pub episode_id: u64,
    pub step_index: usize,
}

#[derive(Debug)]
struct Episode {
    id: u64,
    transitions: Vec<Transition>,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { episodes: VecDeque::new(), capacity, len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Append one transition; a new `episode_id` opens a new episode.
    /// Oldest whole episodes are evicted once capacity is exceeded.
    pub fn push(&mut self, t: Transition) {
        let open_new = self.episodes.back().map_or(true, |e| e.id != t.episode_id);
        if open_new {
            self.episodes.push_back(Episode { id: t.episode_id, transitions: Vec::new() });
        }
        let ep = self.episodes.back_mut().expect("episode exists");
        debug_assert_eq!(
            ep.transitions.last().map_or(t.step_index, |p| p.step_index + 1),
            t.step_index,
            "step indices must be contiguous within an episode"
        );
        ep.transitions.push(t);
        self.len += 1;
        while self.len > self.capacity && self.episodes.len() > 1 {
            let evicted = self.episodes.pop_front().expect("non-empty");
            self.len -= evicted.transitions.len();
        }
    }

    /// Count of valid length-`h` sub-trajectory start positions.
    pub fn n_starts(&self, h: usize) -> usize {
        self.episodes
            .iter()
            .map(|e| e.transitions.len().saturating_sub(h - 1))
            .sum()
    }

    pub fn can_sample(&self, h: usize) -> bool {
        self.n_starts(h) > 0
    }

    /// Uniform draw over all valid sub-trajectory windows of length `h`.
    pub fn sample_window<R: Rng>(&self, h: usize, rng: &mut R) -> Option<&[Transition]> {
        let total = self.n_starts(h);
        if total == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..total);
        for ep in &self.episodes {
            let starts = ep.transitions.len().saturating_sub(h - 1);
            if pick < starts {
                return Some(&ep.transitions[pick..pick + h]);
            }
            pick -= starts;
        }
        unreachable!("pick within total start count")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn transition(ep: u64, step: usize) -> Transition {
        Transition {
            obs: vec![ep as f64, step as f64],
            action: vec![0.0],
            obs_next: vec![ep as f64, step as f64 + 1.0],
            reward: -1.0,
            dt: 0.05,
            episode_id: ep,
            step_index: step,
        }
    }

    fn fill(buffer: &mut ReplayBuffer, episodes: u64, steps: usize) {
        for ep in 0..episodes {
            for s in 0..steps {
                buffer.push(transition(ep, s));
            }
        }
    }

    #[test]
    fn windows_never_cross_episode_boundaries() {
        let mut buf = ReplayBuffer::new(1000);
        fill(&mut buf, 7, 10);
        let mut rng = stream(3, "replay", &[]);
        for _ in 0..500 {
            let w = buf.sample_window(4, &mut rng).unwrap();
            let ep = w[0].episode_id;
            for (i, t) in w.iter().enumerate() {
                assert_eq!(t.episode_id, ep);
                assert_eq!(t.step_index, w[0].step_index + i);
            }
        }
    }

    #[test]
    fn eviction_drops_whole_episodes_oldest_first() {
        let mut buf = ReplayBuffer::new(25);
        fill(&mut buf, 5, 10); // 50 transitions, capacity 25
        assert!(buf.len() <= 25 + 9, "at most one partial overshoot before eviction");
        // every remaining episode is complete (10 transitions)
        for ep in &buf.episodes {
            assert_eq!(ep.transitions.len(), 10, "no orphaned partial episodes");
        }
        // and the survivors are the newest ones
        let ids: Vec<u64> = buf.episodes.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![3, 4]);
    }

    #[test]
    fn short_episodes_yield_no_windows() {
        let mut buf = ReplayBuffer::new(100);
        buf.push(transition(0, 0));
        buf.push(transition(0, 1));
        assert!(!buf.can_sample(3));
        let mut rng = stream(1, "replay", &[]);
        assert!(buf.sample_window(3, &mut rng).is_none());
        assert!(buf.can_sample(2));
    }
}
