//! Electrode names and 2-D scalp coordinates.
//!
//! Coordinates are an azimuthal projection onto the unit disc with Cz at the
//! origin, `+x` towards the right ear and `+y` towards the nose. The ring
//! through Fpz, T7, Oz and T8 lies on the unit circle.

/// Channel names with their disc coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    pub names: Vec<String>,
    pub xy: Vec<[f32; 2]>,
}

const STANDARD_22: [(&str, f32, f32); 22] = [
    ("Fz", 0.0, 0.5),
    ("FC3", -0.48, 0.26),
    ("FC1", -0.24, 0.25),
    ("FCz", 0.0, 0.25),
    ("FC2", 0.24, 0.25),
    ("FC4", 0.48, 0.26),
    ("C5", -0.75, 0.0),
    ("C3", -0.5, 0.0),
    ("C1", -0.25, 0.0),
    ("Cz", 0.0, 0.0),
    ("C2", 0.25, 0.0),
    ("C4", 0.5, 0.0),
    ("C6", 0.75, 0.0),
    ("CP3", -0.48, -0.26),
    ("CP1", -0.24, -0.25),
    ("CPz", 0.0, -0.25),
    ("CP2", 0.24, -0.25),
    ("CP4", 0.48, -0.26),
    ("P1", -0.24, -0.5),
    ("Pz", 0.0, -0.5),
    ("P2", 0.24, -0.5),
    ("POz", 0.0, -0.75),
];

impl Montage {
    pub fn new(names: Vec<String>, xy: Vec<[f32; 2]>) -> Option<Self> {
        (names.len() == xy.len()).then_some(Montage { names, xy })
    }

    /// The 22-electrode sensorimotor layout of the BCI Competition IV 2a
    /// recordings.
    pub fn standard_22() -> Self {
        Montage {
            names: STANDARD_22.iter().map(|(n, _, _)| n.to_string()).collect(),
            xy: STANDARD_22.iter().map(|&(_, x, y)| [x, y]).collect(),
        }
    }

    /// Channels of the standard layout picked by name, in the given order.
    pub fn standard_subset(names: &[&str]) -> Option<Self> {
        let full = Self::standard_22();
        let mut out = Montage {
            names: Vec::new(),
            xy: Vec::new(),
        };
        for &name in names {
            let idx = full.names.iter().position(|n| n.eq_ignore_ascii_case(name))?;
            out.names.push(full.names[idx].clone());
            out.xy.push(full.xy[idx]);
        }
        Some(out)
    }

    /// A layout for `n` channels. Uses the standard layout (or an evenly
    /// spread subset of it) up to 22 channels, and a ring arrangement
    /// beyond that.
    pub fn for_channels(n: usize) -> Self {
        if n == 22 {
            return Self::standard_22();
        }
        if n == 8 {
            return Self::standard_subset(&["FC3", "FC4", "C3", "Cz", "C4", "CP3", "CP4", "Pz"]).unwrap();
        }
        if n < 22 {
            let full = Self::standard_22();
            let picks: Vec<usize> = (0..n).map(|i| i * 22 / n).collect();
            return Montage {
                names: picks.iter().map(|&i| full.names[i].clone()).collect(),
                xy: picks.iter().map(|&i| full.xy[i]).collect(),
            };
        }
        let xy = (0..n)
            .map(|i| {
                let a = i as f32 / n as f32 * std::f32::consts::TAU;
                let r = if i % 2 == 0 { 0.8 } else { 0.45 };
                [r * a.sin(), r * a.cos()]
            })
            .collect();
        Montage {
            names: (1..=n).map(|i| format!("Ch{i}")).collect(),
            xy,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_stay_inside_unit_disc() {
        for n in [1, 3, 8, 16, 22, 40, 128] {
            let m = Montage::for_channels(n);
            assert_eq!(m.len(), n);
            assert_eq!(m.xy.len(), n);
            for [x, y] in &m.xy {
                assert!(x * x + y * y <= 1.0);
            }
        }
    }

    #[test]
    fn subset_keeps_requested_order() {
        let m = Montage::standard_subset(&["C4", "c3"]).unwrap();
        assert_eq!(m.names, vec!["C4", "C3"]);
        assert_eq!(m.xy[0], [0.5, 0.0]);
        assert!(Montage::standard_subset(&["Oz"]).is_none());
    }
}
