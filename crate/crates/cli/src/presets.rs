//! Named parameter sets.

use serde::Serialize;

use crate::config::{ModelSection, Outputs, RunConfig, Sweep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// ξ and η surfaces for g² ∈ {0.1, 0.3, 1.0}, φ² = 0.3, T = 1.
    Fig1,
    /// Bandwidth against T and T = 0 band structure, g² = 0.1, φ² ∈ {0.1, 0.3}.
    Fig2,
    /// ξ and η surfaces at T ∈ {0.2, 1.3, 4.0}, g² = 0.1, φ² = 0.3.
    Fig3,
    /// D(T) for g² ∈ {0.1, 0.5}, φ² ∈ {0, 0.3, 0.7}, N ∈ {4, 6, 8}.
    Fig4,
    /// D(T) for Δ ∈ {0.05, 0.1, 0.2} at g² = 0.5, φ² = 0.
    Fig5,
    /// D(T) at moderate couplings, for a logarithmic plot.
    Fig6,
}

pub const ALL: [Preset; 6] = [Preset::Fig1, Preset::Fig2, Preset::Fig3, Preset::Fig4, Preset::Fig5, Preset::Fig6];

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Command the preset's data is meant for.
    pub fn command(self) -> &'static str {
        match self {
            Preset::Fig1 | Preset::Fig3 => "solve",
            Preset::Fig2 => "band",
            Preset::Fig4 | Preset::Fig5 | Preset::Fig6 => "transport",
        }
    }

    pub fn config(self) -> RunConfig {
        let model = |n: &[usize], g2: &[f64], phi2: &[f64], delta: &[f64]| ModelSection {
            n_sites: n.to_vec(),
            transfer: 0.1,
            g2: g2.to_vec(),
            phi2: phi2.to_vec(),
            delta: delta.to_vec(),
            ..Default::default()
        };
        let transport_sweep = Sweep::Range { start: 0.2, stop: 4.0, count: 15 };
        let surfaces = Outputs { surfaces: true, ..Default::default() };
        let (model, sweep, outputs) = match self {
            Preset::Fig1 => (model(&[32], &[0.1, 0.3, 1.0], &[0.3], &[0.1]), Sweep::List(vec![1.0]), surfaces),
            Preset::Fig2 => (
                model(&[32], &[0.1], &[0.1, 0.3], &[0.1]),
                Sweep::Range { start: 0.0, stop: 4.0, count: 21 },
                Outputs::default(),
            ),
            Preset::Fig3 => (model(&[32], &[0.1], &[0.3], &[0.1]), Sweep::List(vec![0.2, 1.3, 4.0]), surfaces),
            Preset::Fig4 => (model(&[4, 6, 8], &[0.1, 0.5], &[0.0, 0.3, 0.7], &[0.1]), transport_sweep, Outputs::default()),
            Preset::Fig5 => (model(&[6], &[0.5], &[0.0], &[0.05, 0.1, 0.2]), transport_sweep, Outputs::default()),
            Preset::Fig6 => (model(&[6], &[0.1], &[0.0, 0.1, 0.3], &[0.1]), transport_sweep, Outputs::default()),
        };
        RunConfig { preset: Some(self), model, sweep, outputs, ..Default::default() }
    }
}
