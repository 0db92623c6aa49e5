//! Scenario files shipped with the binary.

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Fig2,
    Fig3,
    Fig5,
    Fig6a,
    Fig6b,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Fig2, Preset::Fig3, Preset::Fig5, Preset::Fig6a, Preset::Fig6b];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig5 => "fig5",
            Preset::Fig6a => "fig6a",
            Preset::Fig6b => "fig6b",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Preset::Fig2 => include_str!("../../../presets/fig2.conf"),
            Preset::Fig3 => include_str!("../../../presets/fig3.conf"),
            Preset::Fig5 => include_str!("../../../presets/fig5.conf"),
            Preset::Fig6a => include_str!("../../../presets/fig6a.conf"),
            Preset::Fig6b => include_str!("../../../presets/fig6b.conf"),
        }
    }
}
