//! Scenario files.
//!
//! Vehicle parameters sit at the top level under their symbol names; the
//! remaining settings are grouped in `[model]`, `[numerics]`, `[initial]`,
//! `[control]` and `[chart]`. Every key is optional and defaults to the
//! reference vehicle and experiment. Units are SI; angles are radians unless
//! written as a string with a `deg` or `rad` suffix, e.g. `"2 deg"`.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::chart::{self, ChartSpec};
use crate::control::{ClosedLoopConfig, FeedbackMode, Gains, PAPER_F, PAPER_L};
use crate::error::{Error, Result};
use crate::model::{Carcass, LbarRule, PressureProfile, TabulatedPressure, VehicleParams};

/// Angle in radians, read from a number (rad) or a string such as `"4 deg"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Angle(pub f64);

impl Angle {
    pub fn parse(s: &str) -> std::result::Result<f64, String> {
        let t = s.trim();
        let (num, scale) = if let Some(n) = t.strip_suffix("deg") {
            (n, std::f64::consts::PI / 180.0)
        } else if let Some(n) = t.strip_suffix("rad") {
            (n, 1.0)
        } else {
            (t, 1.0)
        };
        num.trim()
            .parse::<f64>()
            .map(|v| v * scale)
            .map_err(|_| format!("invalid angle `{s}` (expected a number, optionally suffixed by `deg` or `rad`)"))
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Angle;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an angle in rad or a string like \"2 deg\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Angle, E> {
                Ok(Angle(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Angle, E> {
                Ok(Angle(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Angle, E> {
                Angle::parse(v).map(Angle).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Pressure profile entry: `"constant"` or a table with a `kind` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PressureSpec {
    Name(String),
    Table(PressureTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureTable {
    /// `constant`, `exponential` or `tabulated`.
    pub kind: String,
    /// Decay rate of the exponential profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Optional slopes; with them the table is Hermite-interpolated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<Vec<f64>>,
}

impl Default for PressureSpec {
    fn default() -> Self {
        PressureSpec::Name("constant".into())
    }
}

impl PressureSpec {
    pub fn build(&self) -> Result<PressureProfile> {
        let bad = |s: &str| Error::Config(format!("unknown pressure profile `{s}` (expected constant, exponential or tabulated)"));
        match self {
            PressureSpec::Name(n) if n == "constant" => Ok(PressureProfile::Constant),
            PressureSpec::Name(n) => Err(bad(n)),
            PressureSpec::Table(t) => match t.kind.as_str() {
                "constant" => Ok(PressureProfile::Constant),
                "exponential" => {
                    let decay = t
                        .decay
                        .ok_or_else(|| Error::Config("exponential pressure needs `decay`".into()))?;
                    PressureProfile::exponential(decay)
                }
                "tabulated" => {
                    let (xi, p) = t
                        .xi
                        .clone()
                        .zip(t.p.clone())
                        .ok_or_else(|| Error::Config("tabulated pressure needs `xi` and `p`".into()))?;
                    Ok(PressureProfile::Tabulated(TabulatedPressure::new(xi, p, t.dp.clone())?))
                }
                other => Err(bad(other)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `rigid` or `flexible`.
    pub carcass: String,
    /// Profile for both axles, unless overridden per axle.
    pub pressure: PressureSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pressure_1: Option<PressureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pressure_2: Option<PressureSpec>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            carcass: "flexible".into(),
            pressure: PressureSpec::default(),
            pressure_1: None,
            pressure_2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsSection {
    /// Cells of the uniform grid on [0, 1].
    pub n_cells: usize,
    /// Time step of the full model (s).
    pub dt: f64,
    /// Horizon (s).
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Full-model steps between output rows.
    pub stride: usize,
    /// Time step of the reduced model (s).
    pub reduced_dt: f64,
    pub reduced_stride: usize,
    /// Times (s) at which bristle profiles are written.
    pub snapshot_times: Vec<f64>,
    /// Boundary-layer step as a fraction of the CFL limit.
    pub boundary_cfl: f64,
    /// Boundary-layer horizon in fast time.
    pub boundary_s_end: f64,
    /// Time-scale factors of the epsilon sweep.
    pub eps_scales: Vec<f64>,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            n_cells: 50,
            dt: 1e-6,
            t_end: 10.0,
            stride: 1000,
            reduced_dt: 1e-4,
            reduced_stride: 10,
            snapshot_times: Vec::new(),
            boundary_cfl: 0.5,
            boundary_s_end: 8.0,
            eps_scales: vec![1.0, 0.5, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// `[beta, r]` (rad, rad/s).
    #[serde(rename = "X0")]
    pub x0: [f64; 2],
    /// Constant initial bristle deflection per axle.
    pub z0: [f64; 2],
    #[serde(rename = "Xhat0")]
    pub xhat0: [f64; 2],
    /// Open-loop steering input `[delta_1, delta_2]`.
    #[serde(rename = "U")]
    pub u: [Angle; 2],
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            x0: [0.03, -0.25],
            z0: [0.027, 0.033],
            xhat0: [0.0, 0.0],
            u: [Angle(0.0); 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    /// `output` or `state`.
    pub mode: String,
    /// Feedback gain, row-major.
    #[serde(rename = "F")]
    pub f: [f64; 4],
    /// Observer gain.
    #[serde(rename = "L")]
    pub l: [f64; 2],
    /// Input delay (s).
    pub delay: f64,
    /// Yaw-rate noise standard deviation (rad/s).
    pub noise_std: f64,
    /// Noise hold period (s).
    pub noise_dt: f64,
    pub seed: u64,
    #[serde(rename = "X_star")]
    pub x_star: [f64; 2],
    #[serde(rename = "U_star")]
    pub u_star: [Angle; 2],
}

impl Default for ControlSection {
    fn default() -> Self {
        let c = ClosedLoopConfig::paper();
        Self {
            mode: "output".into(),
            f: [PAPER_F[0][0], PAPER_F[0][1], PAPER_F[1][0], PAPER_F[1][1]],
            l: PAPER_L,
            delay: c.delay,
            noise_std: c.noise_std,
            noise_dt: c.noise_dt,
            seed: c.seed,
            x_star: [0.0, 0.0],
            u_star: [Angle(0.0); 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartSection {
    pub index_min: f64,
    pub index_max: f64,
    pub index_steps: usize,
    pub vx_min: f64,
    pub vx_max: f64,
    pub vx_steps: usize,
    /// Worker threads, 0 for one per core.
    pub jobs: usize,
}

impl Default for ChartSection {
    fn default() -> Self {
        Self {
            index_min: 0.5,
            index_max: 1.5,
            index_steps: 15,
            vx_min: 2.0,
            vx_max: 60.0,
            vx_steps: 15,
            jobs: 0,
        }
    }
}

/// On-disk form of a scenario; also the effective-config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    /// Longitudinal speed (m/s).
    pub v_x: f64,
    /// Mass (kg).
    pub m: f64,
    /// Yaw inertia (kg m^2).
    #[serde(rename = "I_z")]
    pub i_z: f64,
    /// Distances of the axles from the center of mass (m).
    pub l1: f64,
    pub l2: f64,
    /// Vertical loads (N).
    #[serde(rename = "F_z1")]
    pub f_z1: f64,
    #[serde(rename = "F_z2")]
    pub f_z2: f64,
    /// Wind force (N) and its offset (m).
    #[serde(rename = "F_w")]
    pub f_w: f64,
    pub l_w: f64,
    /// Contact patch lengths (m).
    #[serde(rename = "L1")]
    pub patch_1: f64,
    #[serde(rename = "L2")]
    pub patch_2: f64,
    /// Micro-stiffness (1/m).
    pub sigma0_1: f64,
    pub sigma0_2: f64,
    /// Micro-damping (s/m).
    pub sigma1_1: f64,
    pub sigma1_2: f64,
    /// Viscous coefficients (s/m).
    pub sigma2_1: f64,
    pub sigma2_2: f64,
    /// Carcass structural parameters in (0, 1].
    pub phi_1: f64,
    pub phi_2: f64,
    /// Rear steering flag, 0 or 1.
    pub chi: u8,
    pub eps_reg: f64,
    /// `mean` or `product_over_sum`.
    #[serde(rename = "Lbar_rule")]
    pub lbar_rule: String,
    pub model: ModelSection,
    pub numerics: NumericsSection,
    pub initial: InitialSection,
    pub control: ControlSection,
    pub chart: ChartSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let p = VehicleParams::table1();
        Self {
            v_x: p.v_x,
            m: p.m,
            i_z: p.i_z,
            l1: p.l1,
            l2: p.l2,
            f_z1: p.f_z[0],
            f_z2: p.f_z[1],
            f_w: p.f_w,
            l_w: p.l_w,
            patch_1: p.patch_len[0],
            patch_2: p.patch_len[1],
            sigma0_1: p.sigma0[0],
            sigma0_2: p.sigma0[1],
            sigma1_1: p.sigma1[0],
            sigma1_2: p.sigma1[1],
            sigma2_1: p.sigma2[0],
            sigma2_2: p.sigma2[1],
            phi_1: p.phi[0],
            phi_2: p.phi[1],
            chi: u8::from(p.rear_steer),
            eps_reg: p.eps_reg,
            lbar_rule: p.lbar_rule.name().into(),
            model: ModelSection::default(),
            numerics: NumericsSection::default(),
            initial: InitialSection::default(),
            control: ControlSection::default(),
            chart: ChartSection::default(),
        }
    }
}

/// Validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: VehicleParams,
    pub carcass: Carcass,
    pub pressure: [PressureProfile; 2],
    pub numerics: NumericsSection,
    pub initial: InitialSection,
    pub control: ControlSection,
    pub chart: ChartSection,
    /// Effective configuration, after defaults and command-line overrides.
    pub file: ScenarioFile,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::from_file(ScenarioFile::default()).expect("default scenario is valid")
    }
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let chi = match file.chi {
            0 => false,
            1 => true,
            v => {
                return Err(Error::InvalidParameter {
                    field: "chi",
                    value: v as f64,
                    reason: "must be 0 or 1",
                })
            }
        };
        let lbar_rule = LbarRule::parse(&file.lbar_rule).ok_or_else(|| {
            Error::Config(format!(
                "unknown Lbar_rule `{}` (expected mean or product_over_sum)",
                file.lbar_rule
            ))
        })?;
        let params = VehicleParams {
            v_x: file.v_x,
            m: file.m,
            i_z: file.i_z,
            l1: file.l1,
            l2: file.l2,
            f_z: [file.f_z1, file.f_z2],
            f_w: file.f_w,
            l_w: file.l_w,
            patch_len: [file.patch_1, file.patch_2],
            sigma0: [file.sigma0_1, file.sigma0_2],
            sigma1: [file.sigma1_1, file.sigma1_2],
            sigma2: [file.sigma2_1, file.sigma2_2],
            phi: [file.phi_1, file.phi_2],
            rear_steer: chi,
            eps_reg: file.eps_reg,
            lbar_rule,
        };
        params.validate()?;
        let carcass = match file.model.carcass.as_str() {
            "rigid" => Carcass::Rigid,
            "flexible" => Carcass::Flexible,
            other => {
                return Err(Error::Config(format!(
                    "unknown carcass `{other}` (expected rigid or flexible)"
                )))
            }
        };
        let m = &file.model;
        let pressure = [
            m.pressure_1.as_ref().unwrap_or(&m.pressure).build()?,
            m.pressure_2.as_ref().unwrap_or(&m.pressure).build()?,
        ];
        match file.control.mode.as_str() {
            "output" | "state" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown control mode `{other}` (expected output or state)"
                )))
            }
        }
        let n = &file.numerics;
        if n.n_cells == 0 {
            return Err(Error::Config("numerics.n_cells must be positive".into()));
        }
        if n.stride == 0 || n.reduced_stride == 0 {
            return Err(Error::Config("numerics strides must be positive".into()));
        }
        Ok(Self {
            params,
            carcass,
            pressure,
            numerics: file.numerics.clone(),
            initial: file.initial.clone(),
            control: file.control.clone(),
            chart: file.chart.clone(),
            file,
        })
    }

    pub fn x0(&self) -> Vector2<f64> {
        Vector2::from(self.initial.x0)
    }

    pub fn z0(&self) -> Vector2<f64> {
        Vector2::from(self.initial.z0)
    }

    pub fn xhat0(&self) -> Vector2<f64> {
        Vector2::from(self.initial.xhat0)
    }

    pub fn input(&self) -> Vector2<f64> {
        Vector2::new(self.initial.u[0].0, self.initial.u[1].0)
    }

    pub fn closed_loop_config(&self) -> ClosedLoopConfig {
        let c = &self.control;
        ClosedLoopConfig {
            gains: Gains {
                f: Matrix2::new(c.f[0], c.f[1], c.f[2], c.f[3]),
                l: Vector2::from(c.l),
                alpha_star: Vector2::zeros(),
            },
            mode: if c.mode == "state" {
                FeedbackMode::State
            } else {
                FeedbackMode::Output
            },
            delay: c.delay,
            noise_std: c.noise_std,
            noise_dt: c.noise_dt,
            seed: c.seed,
            x_star: Vector2::from(c.x_star),
            u_star: Vector2::new(c.u_star[0].0, c.u_star[1].0),
            ..ClosedLoopConfig::paper()
        }
    }

    pub fn chart_spec(&self) -> ChartSpec {
        let c = &self.chart;
        ChartSpec {
            index: chart::linspace(c.index_min, c.index_max, c.index_steps),
            v_x: chart::linspace(c.vx_min, c.vx_max, c.vx_steps),
            n_cells: self.numerics.n_cells,
            carcass: self.carcass,
            pressure: self.pressure.clone(),
        }
    }

    /// Effective configuration as TOML.
    pub fn echo_toml(&self) -> String {
        toml::to_string(&self.file).expect("scenario serializes")
    }
}

/// Parse a scenario file; see [`parse_scenario_str`].
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario_str(&text, &path.display().to_string())
}

/// Parse scenario text. `origin` prefixes diagnostics (typically the path).
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario> {
    Scenario::from_file(parse_scenario_file(text, origin)?)
}

/// Syntactic stage of [`parse_scenario_str`]: defaults filled in, nothing
/// validated yet.
pub fn parse_scenario_file(text: &str, origin: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| diagnostic(text, origin, &e))
}

/// Read a scenario file without validating it, or the defaults for `None`.
pub fn load_scenario_file(path: Option<&Path>) -> Result<ScenarioFile> {
    match path {
        None => Ok(ScenarioFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_scenario_file(&text, &p.display().to_string())
        }
    }
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn diagnostic(text: &str, origin: &str, e: &toml::de::Error) -> Error {
    let loc = match e.span() {
        Some(span) => {
            let (l, c) = line_col(text, span.start);
            format!("{origin}:{l}:{c}")
        }
        None => origin.to_string(),
    };
    let msg = e.message().trim();
    match unknown_key(msg) {
        Some((key, expected)) => {
            let hint = suggest(&key, &expected)
                .map(|s| format!("; did you mean `{s}`?"))
                .unwrap_or_default();
            Error::Config(format!("{loc}: unknown key `{key}`{hint}"))
        }
        None => Error::Config(format!("{loc}: {msg}")),
    }
}

/// Split serde's "unknown field `x`, expected one of `a`, `b`" message.
fn unknown_key(msg: &str) -> Option<(String, Vec<String>)> {
    let rest = msg.strip_prefix("unknown field `")?;
    let (key, tail) = rest.split_once('`')?;
    let expected = tail
        .split('`')
        .skip(1)
        .step_by(2)
        .map(str::to_string)
        .collect();
    Some((key.to_string(), expected))
}

const ALIASES: &[(&str, &str)] = &[
    ("mass", "m"),
    ("inertia", "I_z"),
    ("Iz", "I_z"),
    ("yaw_inertia", "I_z"),
    ("vx", "v_x"),
    ("speed", "v_x"),
    ("velocity", "v_x"),
    ("Fz1", "F_z1"),
    ("Fz2", "F_z2"),
    ("lbar_rule", "Lbar_rule"),
    ("rear_steer", "chi"),
    ("N", "n_cells"),
    ("t_end", "T"),
    ("horizon", "T"),
];

/// Closest accepted key: alias table first, then edit distance.
pub fn suggest(key: &str, expected: &[String]) -> Option<String> {
    if let Some((_, to)) = ALIASES.iter().find(|(from, _)| *from == key) {
        if expected.iter().any(|e| e == to) {
            return Some(to.to_string());
        }
    }
    expected
        .iter()
        .map(|e| (strsim::normalized_damerau_levenshtein(&key.to_lowercase(), &e.to_lowercase()), e))
        .filter(|(score, _)| *score >= 0.6)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, e)| e.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_suffixes() {
        assert_eq!(Angle::parse("0.1").unwrap(), 0.1);
        assert_eq!(Angle::parse("0.1 rad").unwrap(), 0.1);
        assert!((Angle::parse("180deg").unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!(Angle::parse("4 grad").is_err());
    }

    #[test]
    fn line_col_counts_from_one() {
        let t = "a = 1\nbb = 2\n";
        assert_eq!(line_col(t, 0), (1, 1));
        assert_eq!(line_col(t, 6), (2, 1));
        assert_eq!(line_col(t, 9), (2, 4));
    }

    #[test]
    fn suggestions() {
        let exp: Vec<String> = ["m", "I_z", "v_x", "sigma0_1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(suggest("mass", &exp).as_deref(), Some("m"));
        assert_eq!(suggest("sigma0_l", &exp).as_deref(), Some("sigma0_1"));
        assert_eq!(suggest("zzzzzz", &exp), None);
    }

    #[test]
    fn echo_round_trips() {
        let s = parse_scenario_str("v_x = 20.0\n[initial]\nU = [\"1 deg\", 0.0]\n", "t").unwrap();
        let again = parse_scenario_str(&s.echo_toml(), "echo").unwrap();
        assert_eq!(again.file, s.file);
        assert_eq!(again.params, s.params);
    }

    #[test]
    fn diagnostics() {
        let e = parse_scenario_str("v_x = 20.0\nmass = 1300\n", "s.toml").unwrap_err().to_string();
        assert!(e.contains("s.toml:2:1") && e.contains("`mass`") && e.contains("`m`"), "{e}");
        let e = parse_scenario_str("[numerics]\nn_cells = \"many\"\n", "s.toml").unwrap_err().to_string();
        assert!(e.contains("s.toml:2:11"), "{e}");
        let e = parse_scenario_str("[chart]\nvx_step = 3\n", "s.toml").unwrap_err().to_string();
        assert!(e.contains("`vx_steps`"), "{e}");
    }
}
