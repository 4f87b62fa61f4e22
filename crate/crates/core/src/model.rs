//! Vehicle parameters and the state-space form of the single-track model
//! with distributed tire friction.
//!
//! The model is written as
//!
//! ```text
//! X'      = A1 X + G1 [ K1 z + Sigma(alpha) K2 z ] + G1 h1(alpha) + b
//! eps z_t + Lambda z_xi = Sigma(alpha) [ z + K3 z ] + K4 z + h2(alpha),   z(0, t) = 0
//! alpha   = A2 X + G2 U
//! ```
//!
//! with `X = [beta, r]`, `U = [delta1, delta2]` and `z(xi, t)` the bristle
//! deflections of the front and rear axle on `xi in [0, 1]`. Every kernel is
//! diagonal, so kernels are stored as their diagonal entries.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};

/// Regularized absolute value `sqrt(v^2 + eps_reg)`; exactly `|v|` for `eps_reg = 0`.
pub fn reg_abs(v: f64, eps_reg: f64) -> f64 {
    if eps_reg == 0.0 {
        v.abs()
    } else {
        v.hypot(eps_reg.sqrt())
    }
}

/// Rule for the characteristic length of the rolling contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LbarRule {
    /// `(a1 + a2) / 2`.
    #[default]
    Mean,
    /// `a1 a2 / (a1 + a2)`.
    ProductOverSum,
}

impl LbarRule {
    pub fn apply(self, a: [f64; 2]) -> f64 {
        match self {
            LbarRule::Mean => 0.5 * (a[0] + a[1]),
            LbarRule::ProductOverSum => a[0] * a[1] / (a[0] + a[1]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LbarRule::Mean => "mean",
            LbarRule::ProductOverSum => "product_over_sum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(LbarRule::Mean),
            "product_over_sum" | "product" => Some(LbarRule::ProductOverSum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Carcass {
    Rigid,
    #[default]
    Flexible,
}

impl Carcass {
    pub fn name(self) -> &'static str {
        match self {
            Carcass::Rigid => "rigid",
            Carcass::Flexible => "flexible",
        }
    }
}

/// Physical constants of the vehicle and its tires (SI units, angles in rad).
///
/// Two-element arrays hold the front (index 0) and rear (index 1) axle values.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    pub v_x: f64,
    pub m: f64,
    pub i_z: f64,
    pub l1: f64,
    pub l2: f64,
    pub f_z: [f64; 2],
    pub f_w: f64,
    pub l_w: f64,
    /// Contact patch lengths `L1`, `L2`.
    pub patch_len: [f64; 2],
    /// Normalized micro-stiffness (1/m).
    pub sigma0: [f64; 2],
    /// Normalized micro-damping.
    pub sigma1: [f64; 2],
    /// Viscous coefficients.
    pub sigma2: [f64; 2],
    /// Carcass structural parameters in `(0, 1]`; `psi = 1 - phi`.
    pub phi: [f64; 2],
    pub rear_steer: bool,
    pub eps_reg: f64,
    pub lbar_rule: LbarRule,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::table1()
    }
}

impl VehicleParams {
    /// The reference passenger car used throughout the examples.
    pub fn table1() -> Self {
        Self {
            v_x: 50.0,
            m: 1300.0,
            i_z: 2000.0,
            l1: 1.4,
            l2: 1.0,
            f_z: [2660.0, 3720.0],
            f_w: 0.0,
            l_w: 0.0,
            patch_len: [0.11, 0.09],
            sigma0: [240.0, 269.0],
            sigma1: [0.0, 0.0],
            sigma2: [0.0, 0.0],
            phi: [0.92, 0.92],
            rear_steer: false,
            eps_reg: 0.0,
            lbar_rule: LbarRule::Mean,
        }
    }

    pub fn psi(&self) -> [f64; 2] {
        [1.0 - self.phi[0], 1.0 - self.phi[1]]
    }

    pub fn chi(&self) -> f64 {
        if self.rear_steer {
            1.0
        } else {
            0.0
        }
    }

    /// Relaxation lengths `L_i / phi_i`.
    pub fn relaxation_len(&self) -> [f64; 2] {
        [
            self.patch_len[0] / self.phi[0],
            self.patch_len[1] / self.phi[1],
        ]
    }

    /// Characteristic length: built from the patch lengths for a rigid carcass
    /// and from the relaxation lengths for a flexible one.
    pub fn lbar(&self, carcass: Carcass) -> f64 {
        match carcass {
            Carcass::Rigid => self.lbar_rule.apply(self.patch_len),
            Carcass::Flexible => self.lbar_rule.apply(self.relaxation_len()),
        }
    }

    pub fn sigma_bar0(&self) -> [f64; 2] {
        [
            self.sigma0[0] * self.patch_len[0],
            self.sigma0[1] * self.patch_len[1],
        ]
    }

    pub fn sigma_bar1(&self) -> [f64; 2] {
        [
            self.sigma1[0] * self.patch_len[0],
            self.sigma1[1] * self.patch_len[1],
        ]
    }

    pub fn sigma_bar2(&self) -> [f64; 2] {
        [self.sigma2[0] * self.v_x, self.sigma2[1] * self.v_x]
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, value: f64) -> Result<()> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    field,
                    value,
                    reason: "must be positive and finite",
                })
            }
        }
        fn nonneg(field: &'static str, value: f64) -> Result<()> {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    field,
                    value,
                    reason: "must be nonnegative and finite",
                })
            }
        }
        positive("v_x", self.v_x)?;
        positive("m", self.m)?;
        positive("I_z", self.i_z)?;
        positive("l1", self.l1)?;
        positive("l2", self.l2)?;
        positive("F_z1", self.f_z[0])?;
        positive("F_z2", self.f_z[1])?;
        positive("L1", self.patch_len[0])?;
        positive("L2", self.patch_len[1])?;
        positive("sigma0_1", self.sigma0[0])?;
        positive("sigma0_2", self.sigma0[1])?;
        nonneg("sigma1_1", self.sigma1[0])?;
        nonneg("sigma1_2", self.sigma1[1])?;
        nonneg("sigma2_1", self.sigma2[0])?;
        nonneg("sigma2_2", self.sigma2[1])?;
        nonneg("eps_reg", self.eps_reg)?;
        if !self.f_w.is_finite() {
            return Err(Error::InvalidParameter {
                field: "F_w",
                value: self.f_w,
                reason: "must be finite",
            });
        }
        if !self.l_w.is_finite() {
            return Err(Error::InvalidParameter {
                field: "l_w",
                value: self.l_w,
                reason: "must be finite",
            });
        }
        for (field, phi) in [("phi_1", self.phi[0]), ("phi_2", self.phi[1])] {
            if !(phi > 0.0 && phi <= 1.0) {
                return Err(Error::InvalidParameter {
                    field,
                    value: phi,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        Ok(())
    }
}

/// Nondimensional vertical pressure distribution on the contact patch.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PressureProfile {
    /// `p(xi) = 1`.
    #[default]
    Constant,
    /// `p(xi) = a exp(-a xi) / (1 - exp(-a))`, unit mean.
    Exponential { decay: f64 },
    Tabulated(TabulatedPressure),
}

/// Pressure given at increasing abscissae covering `[0, 1]`.
///
/// With slopes the profile is the cubic Hermite interpolant (C1); without them
/// it is piecewise linear, which only the rigid carcass accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPressure {
    xi: Vec<f64>,
    values: Vec<f64>,
    slopes: Option<Vec<f64>>,
}

impl TabulatedPressure {
    pub fn new(xi: Vec<f64>, values: Vec<f64>, slopes: Option<Vec<f64>>) -> Result<Self> {
        if xi.len() < 2 || xi.len() != values.len() {
            return Err(Error::InvalidPressure(
                "need at least two (xi, p) pairs of equal length".into(),
            ));
        }
        if let Some(s) = &slopes {
            if s.len() != xi.len() {
                return Err(Error::InvalidPressure("slope table length mismatch".into()));
            }
        }
        if xi[0] != 0.0 || xi[xi.len() - 1] != 1.0 {
            return Err(Error::InvalidPressure("abscissae must start at 0 and end at 1".into()));
        }
        if xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPressure("abscissae must be strictly increasing".into()));
        }
        if values.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPressure("pressure values must be finite and >= 0".into()));
        }
        Ok(Self { xi, values, slopes })
    }

    fn segment(&self, x: f64) -> usize {
        let x = x.clamp(0.0, 1.0);
        match self.xi.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => k.min(self.xi.len() - 2),
            Err(k) => (k.max(1) - 1).min(self.xi.len() - 2),
        }
    }

    fn value(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let (x0, x1) = (self.xi[k], self.xi[k + 1]);
        let h = x1 - x0;
        let t = (x.clamp(0.0, 1.0) - x0) / h;
        let (p0, p1) = (self.values[k], self.values[k + 1]);
        match &self.slopes {
            None => p0 + t * (p1 - p0),
            Some(s) => {
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * p0
                    + (t3 - 2.0 * t2 + t) * h * s[k]
                    + (-2.0 * t3 + 3.0 * t2) * p1
                    + (t3 - t2) * h * s[k + 1]
            }
        }
    }

    fn slope(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let (x0, x1) = (self.xi[k], self.xi[k + 1]);
        let h = x1 - x0;
        let t = (x.clamp(0.0, 1.0) - x0) / h;
        let (p0, p1) = (self.values[k], self.values[k + 1]);
        match &self.slopes {
            None => (p1 - p0) / h,
            Some(s) => {
                let t2 = t * t;
                ((6.0 * t2 - 6.0 * t) * p0 + (-6.0 * t2 + 6.0 * t) * p1) / h
                    + (3.0 * t2 - 4.0 * t + 1.0) * s[k]
                    + (3.0 * t2 - 2.0 * t) * s[k + 1]
            }
        }
    }
}

impl PressureProfile {
    pub fn exponential(decay: f64) -> Result<Self> {
        if !(decay.is_finite() && decay >= 0.0) {
            return Err(Error::InvalidPressure(format!(
                "exponential decay must be finite and >= 0, got {decay}"
            )));
        }
        Ok(PressureProfile::Exponential { decay })
    }

    pub fn value(&self, xi: f64) -> f64 {
        match self {
            PressureProfile::Constant => 1.0,
            PressureProfile::Exponential { decay } => {
                let a = *decay;
                if a == 0.0 {
                    1.0
                } else {
                    a * (-a * xi).exp() / -(-a).exp_m1()
                }
            }
            PressureProfile::Tabulated(t) => t.value(xi),
        }
    }

    pub fn slope(&self, xi: f64) -> f64 {
        match self {
            PressureProfile::Constant => 0.0,
            PressureProfile::Exponential { decay } => -decay * self.value(xi),
            PressureProfile::Tabulated(t) => t.slope(xi),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        match self {
            PressureProfile::Tabulated(t) => t.slopes.is_some(),
            _ => true,
        }
    }
}

/// Scalar friction characteristic of the slip angle (`mu_i` or `g_i`).
#[derive(Clone)]
pub enum FrictionFn {
    Constant(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl FrictionFn {
    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            FrictionFn::Constant(c) => *c,
            FrictionFn::Custom(f) => f(alpha),
        }
    }
}

impl Default for FrictionFn {
    fn default() -> Self {
        FrictionFn::Constant(1.0)
    }
}

impl fmt::Debug for FrictionFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrictionFn::Constant(c) => write!(f, "Constant({c})"),
            FrictionFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Friction coefficient `mu` and friction function `g` of one axle.
#[derive(Debug, Clone, Default)]
pub struct AxleFriction {
    pub mu: FrictionFn,
    pub g: FrictionFn,
}

/// Assembled state-space objects. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelForm {
    pub carcass: Carcass,
    pub a1: Matrix2<f64>,
    pub a2: Matrix2<f64>,
    pub g1: Matrix2<f64>,
    pub g2: Matrix2<f64>,
    /// Diagonal of `Lambda`, entries `1 / Lbar_i`.
    pub lambda: Vector2<f64>,
    pub b: Vector2<f64>,
    pub c: RowVector2<f64>,
    pub eps: f64,
    pub lbar: f64,
    params: VehicleParams,
    pressure: [PressureProfile; 2],
    friction: [AxleFriction; 2],
    /// `Lbar_i = L_i / Lbar`.
    lbar_axle: Vector2<f64>,
    k1_coef: Vector2<f64>,
    k2_coef: Vector2<f64>,
    k3_coef: Vector2<f64>,
    k4_coef: Vector2<f64>,
    k5: Vector2<f64>,
}

impl ModelForm {
    pub fn assemble(
        params: &VehicleParams,
        carcass: Carcass,
        pressure: [PressureProfile; 2],
        friction: [AxleFriction; 2],
    ) -> Result<Self> {
        match carcass {
            Carcass::Rigid => Self::rigid(params, pressure, friction),
            Carcass::Flexible => Self::flexible(params, pressure, friction),
        }
    }

    /// Table 1 vehicle with constant pressure and unit friction functions.
    pub fn default_for(params: &VehicleParams, carcass: Carcass) -> Result<Self> {
        Self::assemble(params, carcass, Default::default(), Default::default())
    }

    /// Rigid carcass: `K3 = K4 = K5 = 0`.
    pub fn rigid(
        params: &VehicleParams,
        pressure: [PressureProfile; 2],
        friction: [AxleFriction; 2],
    ) -> Result<Self> {
        params.validate()?;
        let mut form = Self::shared(params, Carcass::Rigid, pressure, friction);
        let sb0 = params.sigma_bar0();
        let sb1 = params.sigma_bar1();
        form.k1_coef = Vector2::new(params.f_z[0] * sb0[0], params.f_z[1] * sb0[1]);
        form.k2_coef = Vector2::new(params.f_z[0] * sb1[0], params.f_z[1] * sb1[1]);
        Ok(form)
    }

    /// Flexible carcass: `K2 = 0`, `h1 = 0`, nonlocal `K3`, `K4`, `K5`.
    pub fn flexible(
        params: &VehicleParams,
        pressure: [PressureProfile; 2],
        friction: [AxleFriction; 2],
    ) -> Result<Self> {
        params.validate()?;
        for (field, v) in [
            ("sigma1_1", params.sigma1[0]),
            ("sigma1_2", params.sigma1[1]),
            ("sigma2_1", params.sigma2[0]),
            ("sigma2_2", params.sigma2[1]),
        ] {
            if v != 0.0 {
                return Err(Error::InvalidParameter {
                    field,
                    value: v,
                    reason: "the flexible carcass model requires zero damping and viscous coefficients",
                });
            }
        }
        for (axle, p) in pressure.iter().enumerate() {
            if !p.is_differentiable() {
                return Err(Error::NonDifferentiablePressure { axle: axle + 1 });
            }
        }
        let mut form = Self::shared(params, Carcass::Flexible, pressure, friction);
        let sb0 = params.sigma_bar0();
        let psi = params.psi();
        let lb = form.lbar_axle;
        form.k1_coef = Vector2::new(params.f_z[0] * sb0[0], params.f_z[1] * sb0[1]);
        form.k3_coef = Vector2::new(-psi[0], -psi[1]);
        form.k4_coef = Vector2::new(-psi[0] / lb[0], -psi[1] / lb[1]);
        form.k5 = Vector2::new(
            psi[0] / lb[0] * form.pressure[0].value(1.0),
            psi[1] / lb[1] * form.pressure[1].value(1.0),
        );
        Ok(form)
    }

    fn shared(
        p: &VehicleParams,
        carcass: Carcass,
        pressure: [PressureProfile; 2],
        friction: [AxleFriction; 2],
    ) -> Self {
        let lbar = p.lbar(carcass);
        let lbar_axle = Vector2::new(p.patch_len[0] / lbar, p.patch_len[1] / lbar);
        let mv = p.m * p.v_x;
        Self {
            carcass,
            a1: Matrix2::new(0.0, -1.0, 0.0, 0.0),
            a2: Matrix2::new(1.0, p.l1 / p.v_x, 1.0, -p.l2 / p.v_x),
            g1: -Matrix2::new(1.0 / mv, 1.0 / mv, p.l1 / p.i_z, -p.l2 / p.i_z),
            g2: -Matrix2::new(1.0, 0.0, 0.0, p.chi()),
            lambda: Vector2::new(1.0 / lbar_axle[0], 1.0 / lbar_axle[1]),
            b: Vector2::new(p.f_w / mv, p.l_w * p.f_w / p.i_z),
            c: RowVector2::new(0.0, 1.0),
            eps: lbar / p.v_x,
            lbar,
            params: p.clone(),
            pressure,
            friction,
            lbar_axle,
            k1_coef: Vector2::zeros(),
            k2_coef: Vector2::zeros(),
            k3_coef: Vector2::zeros(),
            k4_coef: Vector2::zeros(),
            k5: Vector2::zeros(),
        }
    }

    /// Same model with the time-scale parameter replaced. All other objects,
    /// hence the reduced model, are unchanged.
    pub fn with_eps(&self, eps: f64) -> Self {
        assert!(eps > 0.0, "time-scale parameter must be positive");
        let mut f = self.clone();
        f.eps = eps;
        f
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn pressure(&self, axle: usize) -> &PressureProfile {
        &self.pressure[axle]
    }

    pub fn friction(&self, axle: usize) -> &AxleFriction {
        &self.friction[axle]
    }

    pub fn lbar_axle(&self) -> Vector2<f64> {
        self.lbar_axle
    }

    pub fn slip_angles(&self, x: &Vector2<f64>, u: &Vector2<f64>) -> Vector2<f64> {
        self.a2 * x + self.g2 * u
    }

    /// Friction function in the denominator of `Sigma`: `g` for a rigid
    /// carcass, `mu` for a flexible one.
    fn denom(&self, i: usize, y: f64) -> f64 {
        match self.carcass {
            Carcass::Rigid => self.friction[i].g.eval(y),
            Carcass::Flexible => self.friction[i].mu.eval(y),
        }
    }

    pub fn sigma_axle(&self, i: usize, y: f64) -> f64 {
        let sb0 = self.params.sigma0[i] * self.params.patch_len[i];
        -sb0 * reg_abs(y, self.params.eps_reg) / (self.lbar_axle[i] * self.denom(i, y))
    }

    /// Diagonal of the source matrix `Sigma(y)`.
    pub fn sigma(&self, y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.sigma_axle(0, y[0]), self.sigma_axle(1, y[1]))
    }

    pub fn h1_axle(&self, i: usize, y: f64) -> f64 {
        match self.carcass {
            Carcass::Rigid => {
                let p = &self.params;
                let sb1 = p.sigma1[i] * p.patch_len[i];
                let sb2 = p.sigma2[i] * p.v_x;
                let ratio = self.friction[i].mu.eval(y) / (self.lbar_axle[i] * self.denom(i, y));
                2.0 * p.f_z[i] * (sb1 * ratio + sb2) * y
            }
            Carcass::Flexible => 0.0,
        }
    }

    pub fn h1(&self, y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.h1_axle(0, y[0]), self.h1_axle(1, y[1]))
    }

    pub fn h2_axle(&self, i: usize, y: f64) -> f64 {
        match self.carcass {
            Carcass::Rigid => {
                2.0 * self.friction[i].mu.eval(y) / (self.lbar_axle[i] * self.denom(i, y)) * y
            }
            Carcass::Flexible => 2.0 * self.params.phi[i] / self.lbar_axle[i] * y,
        }
    }

    pub fn h2(&self, y: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.h2_axle(0, y[0]), self.h2_axle(1, y[1]))
    }

    fn profile_diag(&self, coef: &Vector2<f64>, xi: f64) -> Vector2<f64> {
        Vector2::new(
            coef[0] * self.pressure[0].value(xi),
            coef[1] * self.pressure[1].value(xi),
        )
    }

    /// Diagonal of `K1(xi)`.
    pub fn k1(&self, xi: f64) -> Vector2<f64> {
        self.profile_diag(&self.k1_coef, xi)
    }

    pub fn k2(&self, xi: f64) -> Vector2<f64> {
        self.profile_diag(&self.k2_coef, xi)
    }

    pub fn k3(&self, xi: f64) -> Vector2<f64> {
        self.profile_diag(&self.k3_coef, xi)
    }

    pub fn k4(&self, xi: f64) -> Vector2<f64> {
        Vector2::new(
            self.k4_coef[0] * self.pressure[0].slope(xi),
            self.k4_coef[1] * self.pressure[1].slope(xi),
        )
    }

    pub fn k5(&self) -> Vector2<f64> {
        self.k5
    }

    /// Scalar factors multiplying the pressure profile (or its slope for K4)
    /// in the kernels `K1`..`K4`.
    pub fn kernel_coefficients(&self) -> KernelCoefficients {
        KernelCoefficients {
            k1: self.k1_coef,
            k2: self.k2_coef,
            k3: self.k3_coef,
            k4: self.k4_coef,
            k5: self.k5,
        }
    }
}

/// `K1(xi) = diag(k1) p(xi)`, `K2 = diag(k2) p`, `K3 = diag(k3) p`,
/// `K4 = diag(k4) p'`, `K5 = diag(k5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCoefficients {
    pub k1: Vector2<f64>,
    pub k2: Vector2<f64>,
    pub k3: Vector2<f64>,
    pub k4: Vector2<f64>,
    pub k5: Vector2<f64>,
}
