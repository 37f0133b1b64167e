//! Static background (leakage + static reflections) estimation and removal
//! in the CSI domain.

use std::collections::VecDeque;

use crate::config::{SicConfig, SicKind};
use crate::C64;

#[derive(Debug, Clone)]
pub struct BackgroundState {
    kind: SicKind,
    window_k: usize,
    alpha: f64,
    window: VecDeque<Vec<C64>>,
    background: Option<Vec<C64>>,
    frames_seen: u64,
}

impl BackgroundState {
    pub fn new(sic: &SicConfig) -> Self {
        Self {
            kind: sic.kind,
            window_k: sic.window_k,
            alpha: sic.alpha,
            window: VecDeque::with_capacity(sic.window_k),
            background: None,
            frames_seen: 0,
        }
    }

    pub fn kind(&self) -> SicKind {
        self.kind
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Current background estimate; `None` before the first update or when
    /// subtraction is disabled.
    pub fn background(&self) -> Option<&[C64]> {
        self.background.as_deref()
    }

    pub fn is_warmup(&self) -> bool {
        let needed = match self.kind {
            SicKind::SlidingMean | SicKind::Template => self.window_k as u64,
            SicKind::Ema => (1.0 / self.alpha).ceil() as u64,
            SicKind::None => 0,
        };
        self.frames_seen < needed
    }

    /// `csi − background`, using the background as it stands (before this
    /// frame is ingested).
    pub fn subtract(&self, csi: &[C64]) -> Vec<C64> {
        match &self.background {
            Some(bg) => csi.iter().zip(bg).map(|(x, b)| x - b).collect(),
            None => csi.to_vec(),
        }
    }

    pub fn update(&mut self, csi: &[C64]) {
        let first = self.frames_seen == 0;
        self.frames_seen += 1;
        match self.kind {
            SicKind::None => {}
            SicKind::Ema => match &mut self.background {
                Some(bg) if !first => {
                    let a = self.alpha;
                    for (b, x) in bg.iter_mut().zip(csi) {
                        *b = *b * (1.0 - a) + x * a;
                    }
                }
                _ => self.background = Some(csi.to_vec()),
            },
            SicKind::SlidingMean | SicKind::Template => {
                if self.kind == SicKind::Template && self.frames_seen > self.window_k as u64 {
                    return;
                }
                if self.window.len() == self.window_k {
                    self.window.pop_front();
                }
                self.window.push_back(csi.to_vec());
                let scale = 1.0 / self.window.len() as f64;
                let mut mean = vec![C64::new(0.0, 0.0); csi.len()];
                for frame in &self.window {
                    for (m, x) in mean.iter_mut().zip(frame) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m *= scale);
                self.background = Some(mean);
            }
        }
    }
}

/// Removes the component of `residual` along `background`:
/// `r − (⟨b, r⟩ / ⟨b, b⟩)·b`.
pub fn project_out_static(residual: &mut [C64], background: &[C64]) {
    let energy: f64 = background.iter().map(|b| b.norm_sqr()).sum();
    if energy <= 0.0 {
        return;
    }
    let inner: C64 = background.iter().zip(residual.iter()).map(|(b, r)| b.conj() * r).sum();
    let coef = inner / energy;
    for (r, b) in residual.iter_mut().zip(background) {
        *r -= coef * b;
    }
}

/// Orthonormal basis of the static subspace: the background `b` and its
/// first-order delay perturbation `f ⊙ b`.
///
/// Per-frame delay and phase estimates absorb a little of any target close to
/// the leakage, which modulates the whole frame along these two directions.
/// Removing them from each residual keeps that modulation out of the map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticSubspace {
    basis: Vec<Vec<C64>>,
}

impl StaticSubspace {
    pub fn new(background: &[C64], freqs: &[f64]) -> Self {
        let scale = freqs.iter().fold(0.0f64, |a, f| a.max(f.abs()));
        let scale = if scale > 0.0 { 1.0 / scale } else { 0.0 };
        let ramp: Vec<C64> = background.iter().zip(freqs).map(|(b, f)| b * (f * scale)).collect();
        let mut space = Self { basis: Vec::with_capacity(2) };
        for v in [background.to_vec(), ramp] {
            let before = norm(&v);
            let mut u = v;
            space.project_out(&mut u);
            let after = norm(&u);
            if before > 0.0 && after > 1e-9 * before {
                u.iter_mut().for_each(|x| *x /= after);
                space.basis.push(u);
            }
        }
        space
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Removes the subspace component of `v` in place.
    pub fn project_out(&self, v: &mut [C64]) {
        for u in &self.basis {
            let c: C64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            for (x, a) in v.iter_mut().zip(u) {
                *x -= c * a;
            }
        }
    }

    /// Energy of `v` inside the subspace.
    pub fn energy_in(&self, v: &[C64]) -> f64 {
        self.basis
            .iter()
            .map(|u| u.iter().zip(v).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr())
            .sum()
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}
