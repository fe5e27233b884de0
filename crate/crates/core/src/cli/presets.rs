//! Built-in configurations, embedded from the `presets/` directory.

/// `(name, TOML)` of every built-in preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("example1a", include_str!("../../../../presets/example1a.toml")),
    ("example1b", include_str!("../../../../presets/example1b.toml")),
    ("example1c", include_str!("../../../../presets/example1c.toml")),
    ("rw2", include_str!("../../../../presets/rw2.toml")),
    ("walk-example1a", include_str!("../../../../presets/walk-example1a.toml")),
    ("kuczek2", include_str!("../../../../presets/kuczek2.toml")),
    ("immunisation3", include_str!("../../../../presets/immunisation3.toml")),
    ("bins-basic", include_str!("../../../../presets/bins-basic.toml")),
    ("bins-prime-2-3", include_str!("../../../../presets/bins-prime-2-3.toml")),
    ("links", include_str!("../../../../presets/links.toml")),
    ("harris-split", include_str!("../../../../presets/harris-split.toml")),
    ("acceptance", include_str!("../../../../presets/acceptance.toml")),
];

/// The TOML of a preset.
pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
