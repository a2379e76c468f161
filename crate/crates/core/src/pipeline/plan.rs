//! Local neighbour windows and global reference frames.

use std::ops::Range;

use serde::Serialize;

use super::config::SceneConfig;

/// Per output frame: a contiguous window of local neighbours and the global
/// references `{0, s, 2s, …}` that fall outside it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChunkPlan {
    pub n: usize,
    pub neighbor_count: usize,
    pub ref_stride: usize,
    locals: Vec<Range<usize>>,
}

/// Output frames processed together, sharing one local window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkGroup {
    pub outputs: Range<usize>,
    pub locals: Range<usize>,
    pub references: Vec<usize>,
}

/// Window of `min(neighbor_count, n)` frames around `t`, shifted to stay in
/// bounds.
fn local_window(t: usize, n: usize, neighbor_count: usize) -> Range<usize> {
    let len = neighbor_count.min(n);
    let start = t.saturating_sub(neighbor_count / 2).min(n - len);
    start..start + len
}

pub fn plan_chunks(n: usize, cfg: &SceneConfig) -> ChunkPlan {
    let neighbor_count = cfg.neighbor_count.max(1);
    ChunkPlan {
        n,
        neighbor_count,
        ref_stride: cfg.ref_stride.max(1),
        locals: (0..n).map(|t| local_window(t, n, neighbor_count)).collect(),
    }
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn locals(&self, t: usize) -> Range<usize> {
        self.locals[t].clone()
    }

    /// Every global reference index.
    pub fn reference_set(&self) -> Vec<usize> {
        (0..self.n).step_by(self.ref_stride).collect()
    }

    pub fn references(&self, t: usize) -> Vec<usize> {
        excluding(self.reference_set(), &self.locals[t])
    }

    /// Largest local window.
    pub fn max_locals(&self) -> usize {
        self.neighbor_count.min(self.n)
    }

    /// `neighbor_count + |reference set| + 2`.
    pub fn residency_bound(&self) -> usize {
        self.neighbor_count + self.reference_set().len() + 2
    }

    /// Consecutive output frames in groups of `max(1, neighbor_count / 2)`,
    /// each processed with the window of its centre frame, which contains
    /// the whole group.
    pub fn groups(&self) -> Vec<ChunkGroup> {
        let size = (self.neighbor_count / 2).max(1);
        let refs = self.reference_set();
        (0..self.n)
            .step_by(size)
            .map(|start| {
                let outputs = start..(start + size).min(self.n);
                let centre = (outputs.start + outputs.end - 1) / 2;
                let locals = self.locals(centre);
                debug_assert!(locals.start <= outputs.start && outputs.end <= locals.end);
                ChunkGroup {
                    references: excluding(refs.clone(), &locals),
                    outputs,
                    locals,
                }
            })
            .collect()
    }
}

fn excluding(mut refs: Vec<usize>, locals: &Range<usize>) -> Vec<usize> {
    refs.retain(|r| !locals.contains(r));
    refs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(neighbor_count: usize, ref_stride: usize) -> SceneConfig {
        SceneConfig {
            neighbor_count,
            ref_stride,
            ..Default::default()
        }
    }

    #[test]
    fn reference_arithmetic() {
        assert_eq!(plan_chunks(100, &cfg(18, 20)).reference_set(), vec![0, 20, 40, 60, 80]);
    }

    #[test]
    fn short_sequence_uses_everything() {
        let p = plan_chunks(5, &cfg(18, 20));
        for t in 0..5 {
            assert_eq!(p.locals(t), 0..5);
            assert!(p.references(t).is_empty());
        }
    }

    #[test]
    fn single_frame() {
        let p = plan_chunks(1, &cfg(18, 20));
        assert_eq!(p.locals(0), 0..1);
        assert!(p.references(0).is_empty());
        assert_eq!(p.groups().len(), 1);
    }

    #[test]
    fn centred_windows() {
        let p = plan_chunks(100, &cfg(18, 20));
        assert_eq!(p.locals(0), 0..18);
        assert_eq!(p.locals(50), 41..59);
        assert_eq!(p.locals(99), 82..100);
        assert_eq!(p.references(50), vec![0, 20, 40, 60, 80]);
        assert_eq!(p.references(25), vec![0, 40, 60, 80]);
        assert_eq!(p.residency_bound(), 18 + 5 + 2);
    }

    #[test]
    fn groups_cover_outputs_once() {
        for (n, k) in [(1000, 18), (7, 1), (10, 3), (33, 18)] {
            let p = plan_chunks(n, &cfg(k, 20));
            let mut next = 0;
            for g in p.groups() {
                assert_eq!(g.outputs.start, next);
                assert!(g.locals.start <= g.outputs.start && g.outputs.end <= g.locals.end);
                assert!(g.locals.len() <= k);
                next = g.outputs.end;
            }
            assert_eq!(next, n);
        }
    }
}
