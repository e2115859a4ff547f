//! Equivalent-thermal-parameter (ETP) house simulator.
//!
//! Two thermal nodes, indoor air `T_A` and building mass `T_M`:
//!
//! ```text
//! C_A dT_A/dt = Q_A - U_A (T_A - T_O) - H_M (T_A - T_M)
//! C_M dT_M/dt = Q_M - H_M (T_M - T_A)
//! ```
//!
//! integrated exactly over one-minute substeps with the heater state frozen
//! inside each substep. A hysteresis thermostat drives an electric heater; a
//! single-node water tank with its own thermostat and an hourly base-load
//! profile complete the electrical demand. Units: kW, kWh, degrees Celsius,
//! hours for the ODE time axis.

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::EnergySeries;
use crate::synth;

/// Specific heat of water, kWh per litre per degree.
const WATER_KWH_PER_LITRE_C: f64 = 4.186 / 3600.0;

/// Setpoint reduction over a nightly window `[start_hour, end_hour)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setback {
    pub start_hour: u32,
    pub end_hour: u32,
    pub delta_c: f64,
}

impl Setback {
    fn active(&self, hour: u32) -> bool {
        if self.start_hour <= self.end_hour {
            (self.start_hour..self.end_hour).contains(&hour)
        } else {
            hour >= self.start_hour || hour < self.end_hour
        }
    }
}

/// House, heater, water heater and base load parameters.
///
/// Defaults describe an electrically heated single-family home of roughly
/// 185 m2 (2000 ft2) with values typical of building-simulator house models:
/// `C_A` is the air volume plus furnishings, `C_M` about 2 Btu/F per ft2 of
/// floor, `H_M` the interior-surface film conductance times surface area.
/// The heater is sized about 1.3x the design load at -15 C; the 190 l tank
/// has a 4.5 kW element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtpHouseParams {
    pub u_a: f64,
    pub c_a: f64,
    pub h_m: f64,
    pub c_m: f64,
    /// Internal gains from occupants and appliances, kW.
    pub q_internal: f64,
    /// Share of internal gains deposited in the mass node (`Q_M`).
    pub mass_gain_fraction: f64,
    pub heater_rating: f64,
    pub setpoint: f64,
    pub deadband: f64,
    pub night_setback: Option<Setback>,
    pub water_heater_rating: f64,
    /// Tank heat capacity, kWh/C.
    pub tank_capacity: f64,
    /// Tank jacket conductance to indoor air, kW/C.
    pub tank_ua: f64,
    pub tank_setpoint: f64,
    pub tank_deadband: f64,
    pub inlet_temp: f64,
    /// Hot-water draw per hour of day, litres per hour (24 entries).
    pub water_draw_schedule: Vec<f64>,
    /// Non-thermostatic demand per hour of day, kW (24 entries).
    pub base_load_profile: Vec<f64>,
}

impl Default for EtpHouseParams {
    fn default() -> Self {
        Self {
            u_a: 0.25,
            c_a: 0.3,
            h_m: 3.0,
            c_m: 2.5,
            q_internal: 0.5,
            mass_gain_fraction: 0.5,
            heater_rating: 12.0,
            setpoint: 21.0,
            deadband: 1.0,
            night_setback: Some(Setback {
                start_hour: 23,
                end_hour: 6,
                delta_c: 3.0,
            }),
            water_heater_rating: 4.5,
            tank_capacity: 0.22,
            tank_ua: 0.002,
            tank_setpoint: 50.0,
            tank_deadband: 2.0,
            inlet_temp: 10.0,
            water_draw_schedule: vec![
                0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 30.0, 40.0, 20.0, 10.0, 8.0, 8.0, 10.0, 8.0, 6.0, 6.0,
                8.0, 12.0, 20.0, 25.0, 20.0, 12.0, 6.0, 2.0,
            ],
            base_load_profile: vec![
                0.3, 0.3, 0.3, 0.3, 0.3, 0.4, 0.8, 1.0, 0.8, 0.6, 0.5, 0.5, 0.6, 0.5, 0.5, 0.5,
                0.7, 1.0, 1.3, 1.3, 1.1, 0.9, 0.6, 0.4,
            ],
        }
    }
}

impl EtpHouseParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("u_a", self.u_a),
            ("c_a", self.c_a),
            ("h_m", self.h_m),
            ("c_m", self.c_m),
            ("heater_rating", self.heater_rating),
            ("deadband", self.deadband),
            ("water_heater_rating", self.water_heater_rating),
            ("tank_capacity", self.tank_capacity),
            ("tank_deadband", self.tank_deadband),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
        }
        if !(self.tank_ua >= 0.0 && self.q_internal >= 0.0) {
            return Err(Error::InvalidParams("tank_ua and q_internal must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.mass_gain_fraction) {
            return Err(Error::InvalidParams("mass_gain_fraction must be in [0, 1]".into()));
        }
        if self.water_draw_schedule.len() != 24 || self.base_load_profile.len() != 24 {
            return Err(Error::InvalidParams(
                "water_draw_schedule and base_load_profile need 24 hourly entries".into(),
            ));
        }
        if self.water_draw_schedule.iter().chain(&self.base_load_profile).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParams("hourly profiles must be non-negative".into()));
        }
        if let Some(s) = &self.night_setback {
            if s.start_hour > 23 || s.end_hour > 23 || s.delta_c < 0.0 {
                return Err(Error::InvalidParams("invalid night setback".into()));
            }
        }
        Ok(())
    }

    pub fn setpoint_at(&self, hour: u32) -> f64 {
        match &self.night_setback {
            Some(s) if s.active(hour) => self.setpoint - s.delta_c,
            _ => self.setpoint,
        }
    }

    /// ODE matrix `A` of `dx/dt = A x + b` with `x = (T_A, T_M)`.
    pub fn system_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            -(self.u_a + self.h_m) / self.c_a,
            self.h_m / self.c_a,
            self.h_m / self.c_m,
            -self.h_m / self.c_m,
        )
    }

    /// Forcing `b` for air heat input `q_a`, mass heat input `q_m`.
    pub fn forcing(&self, q_a: f64, q_m: f64, t_o: f64) -> Vector2<f64> {
        Vector2::new((q_a + self.u_a * t_o) / self.c_a, q_m / self.c_m)
    }

    /// Heat inputs `(Q_A, Q_M)` for a heater state.
    pub fn heat_inputs(&self, heater_delivering: bool) -> (f64, f64) {
        let q_m = self.mass_gain_fraction * self.q_internal;
        let q_a = (1.0 - self.mass_gain_fraction) * self.q_internal
            + if heater_delivering { self.heater_rating } else { 0.0 };
        (q_a, q_m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtpHouseState {
    pub t_a: f64,
    pub t_m: f64,
    /// Tank water temperature.
    pub t_w: f64,
    pub heater_on: bool,
    pub water_heater_on: bool,
    pub t: DateTime<Utc>,
}

impl EtpHouseState {
    /// Air and mass at the setpoint, tank at its setpoint, both devices off.
    pub fn initial(params: &EtpHouseParams, t: DateTime<Utc>) -> Self {
        let sp = params.setpoint_at(t.hour());
        Self {
            t_a: sp,
            t_m: sp,
            t_w: params.tank_setpoint,
            heater_on: false,
            water_heater_on: false,
            t,
        }
    }
}

fn hysteresis(on: bool, temp: f64, setpoint: f64, deadband: f64) -> bool {
    if temp < setpoint - deadband / 2.0 {
        true
    } else if temp > setpoint + deadband / 2.0 {
        false
    } else {
        on
    }
}

/// Exact propagator of the two-node system over a fixed substep.
struct Propagator {
    phi: Matrix2<f64>,
    a_inv: Matrix2<f64>,
}

impl Propagator {
    fn new(params: &EtpHouseParams, dt_hours: f64) -> Result<Self> {
        let a = params.system_matrix();
        let a_inv = a
            .try_inverse()
            .ok_or_else(|| Error::InvalidParams("singular ETP system matrix".into()))?;
        Ok(Self {
            phi: (a * dt_hours).exp(),
            a_inv,
        })
    }

    /// `x(dt) = x* + e^{A dt} (x - x*)` with equilibrium `x* = -A^{-1} b`.
    fn advance(&self, x: Vector2<f64>, b: Vector2<f64>) -> Vector2<f64> {
        let eq = -(self.a_inv * b);
        eq + self.phi * (x - eq)
    }
}

/// Exact single-node tank update over `dt_hours`, air temperature frozen.
fn tank_advance(params: &EtpHouseParams, t_w: f64, t_a: f64, heating: bool, draw_lph: f64, dt_hours: f64) -> f64 {
    let g = draw_lph * WATER_KWH_PER_LITRE_C;
    let q = if heating { params.water_heater_rating } else { 0.0 };
    let k = params.tank_ua + g;
    if k <= 0.0 {
        return t_w + q * dt_hours / params.tank_capacity;
    }
    let eq = (q + params.tank_ua * t_a + g * params.inlet_temp) / k;
    eq + (t_w - eq) * (-k * dt_hours / params.tank_capacity).exp()
}

fn hourly(profile: &[f64], t: DateTime<Utc>) -> f64 {
    profile[t.hour() as usize]
}

struct Stepper<'a> {
    params: &'a EtpHouseParams,
    prop: Propagator,
    dt_hours: f64,
    dt: Duration,
}

impl<'a> Stepper<'a> {
    fn new(params: &'a EtpHouseParams, dt_minutes: f64) -> Result<Self> {
        params.validate()?;
        if !(dt_minutes > 0.0 && dt_minutes <= 1.0) {
            return Err(Error::InvalidParams(format!("substep {dt_minutes} min not in (0, 1]")));
        }
        let dt_hours = dt_minutes / 60.0;
        Ok(Self {
            params,
            prop: Propagator::new(params, dt_hours)?,
            dt_hours,
            dt: Duration::nanoseconds((dt_minutes * 60e9).round() as i64),
        })
    }

    fn step(&self, s: &EtpHouseState, t_o: f64, power: bool) -> (EtpHouseState, f64) {
        let p = self.params;
        let heater_on = hysteresis(s.heater_on, s.t_a, p.setpoint_at(s.t.hour()), p.deadband);
        let wh_on = hysteresis(s.water_heater_on, s.t_w, p.tank_setpoint, p.tank_deadband);
        let (q_a, q_m) = p.heat_inputs(heater_on && power);
        let x = self.prop.advance(Vector2::new(s.t_a, s.t_m), p.forcing(q_a, q_m, t_o));
        let t_w = tank_advance(p, s.t_w, s.t_a, wh_on && power, hourly(&p.water_draw_schedule, s.t), self.dt_hours);
        let electric = if power {
            (if heater_on { p.heater_rating } else { 0.0 })
                + (if wh_on { p.water_heater_rating } else { 0.0 })
                + hourly(&p.base_load_profile, s.t)
        } else {
            0.0
        };
        (
            EtpHouseState {
                t_a: x[0],
                t_m: x[1],
                t_w,
                heater_on,
                water_heater_on: wh_on,
                t: s.t + self.dt,
            },
            electric,
        )
    }
}

/// Advances one substep of `dt_minutes` (at most 1) at outdoor temperature
/// `t_o`. Thermostats update from the incoming state and stay fixed for the
/// substep. Returns the next state and the electric demand in kW.
pub fn step(
    params: &EtpHouseParams,
    state: &EtpHouseState,
    t_o: f64,
    dt_minutes: f64,
    power_available: bool,
) -> Result<(EtpHouseState, f64)> {
    let stepper = Stepper::new(params, dt_minutes)?;
    Ok(stepper.step(state, t_o, power_available))
}

/// Outdoor temperature samples, linearly interpolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutdoorTemperature {
    pub start: DateTime<Utc>,
    pub step_minutes: u32,
    pub values: Vec<f64>,
}

impl OutdoorTemperature {
    pub fn constant(start: DateTime<Utc>, hours: usize, value: f64) -> Self {
        Self {
            start,
            step_minutes: 60,
            values: vec![value; hours + 1],
        }
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::minutes(self.step_minutes as i64 * (self.values.len() as i64 - 1))
    }

    pub fn at(&self, t: DateTime<Utc>) -> Result<f64> {
        if t < self.start || t > self.end() || self.values.is_empty() {
            return Err(Error::CoverageGap(t));
        }
        let pos = (t - self.start).num_milliseconds() as f64 / (self.step_minutes as f64 * 60e3);
        let i = pos.floor() as usize;
        if i + 1 >= self.values.len() {
            return Ok(self.values[self.values.len() - 1]);
        }
        let w = pos - i as f64;
        Ok(self.values[i] * (1.0 - w) + self.values[i + 1] * w)
    }

    /// Hourly temperatures covering `[from, to]`, for use as an exogenous series.
    pub fn sample(&self, from: DateTime<Utc>, step_minutes: u32, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|i| self.at(from + Duration::minutes(step_minutes as i64 * i as i64)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestorationBehavior {
    #[default]
    FullPowerUntilSetpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageScenario {
    pub t0: DateTime<Utc>,
    pub duration_hours: f64,
    pub restoration_behavior: RestorationBehavior,
}

impl OutageScenario {
    pub fn new(t0: DateTime<Utc>, duration_hours: f64) -> Result<Self> {
        if !(duration_hours > 0.0 && duration_hours.is_finite()) {
            return Err(Error::InvalidParams(format!("outage duration {duration_hours} h must be > 0")));
        }
        Ok(Self {
            t0,
            duration_hours,
            restoration_behavior: RestorationBehavior::FullPowerUntilSetpoint,
        })
    }

    pub fn restoration(&self) -> DateTime<Utc> {
        self.t0 + crate::clpu::hours(self.duration_hours)
    }
}

/// Simulated post-restoration recovery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub restoration: DateTime<Utc>,
    /// Time from restoration until the air temperature is back inside the
    /// thermostat deadband and the tank is back inside its deadband.
    pub duration_hours: f64,
    /// Largest one-minute demand over the recovery window.
    pub peak_kw: f64,
    /// Energy drawn over the recovery window.
    pub energy_kwh: f64,
    /// False when the horizon ended before recovery completed.
    pub recovered: bool,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub meter: EnergySeries,
    /// State at the end of every meter interval.
    pub trace: Vec<EtpHouseState>,
    /// Demand per one-minute substep, kW.
    pub power_kw: Vec<f64>,
    pub ground_truth: Option<GroundTruth>,
}

/// Simulates `horizon_hours` from `start` at one-minute resolution.
pub fn simulate(
    params: &EtpHouseParams,
    outdoor: &OutdoorTemperature,
    start: DateTime<Utc>,
    horizon_hours: usize,
    scenario: Option<&OutageScenario>,
    meter_delta_minutes: u32,
) -> Result<Simulation> {
    let stepper = Stepper::new(params, 1.0)?;
    let minutes = horizon_hours * 60;
    let per_interval = meter_delta_minutes as usize;
    if per_interval == 0 || 60 % per_interval != 0 {
        return Err(Error::InvalidParams(format!(
            "meter interval {meter_delta_minutes} min must divide an hour"
        )));
    }
    outdoor.at(start)?;
    outdoor.at(start + Duration::minutes(minutes as i64))?;

    let (out_from, out_to) = match scenario {
        Some(s) => (
            ((s.t0 - start).num_seconds() as f64 / 60.0).round() as i64,
            ((s.restoration() - start).num_seconds() as f64 / 60.0).round() as i64,
        ),
        None => (i64::MAX, i64::MAX),
    };

    let mut state = EtpHouseState::initial(params, start);
    let mut states = Vec::with_capacity(minutes + 1);
    let mut power_kw = Vec::with_capacity(minutes);
    states.push(state.clone());
    for k in 0..minutes {
        let ki = k as i64;
        let available = !(ki >= out_from && ki < out_to);
        let t_o = outdoor.at(state.t)?;
        let (next, p) = stepper.step(&state, t_o, available);
        power_kw.push(p);
        state = next;
        states.push(state.clone());
    }

    let values: Vec<f64> = power_kw
        .chunks(per_interval)
        .filter(|c| c.len() == per_interval)
        .map(|c| c.iter().sum::<f64>() / 60.0)
        .collect();
    let trace = (1..=values.len()).map(|i| states[i * per_interval].clone()).collect();
    let meter = EnergySeries::new(start, meter_delta_minutes, values, "etp")?;

    let ground_truth = match scenario {
        Some(s) if out_to >= 0 && (out_to as usize) < minutes => {
            Some(recovery(params, &states, &power_kw, out_to as usize, s.restoration()))
        }
        _ => None,
    };
    Ok(Simulation {
        meter,
        trace,
        power_kw,
        ground_truth,
    })
}

fn recovery(
    params: &EtpHouseParams,
    states: &[EtpHouseState],
    power_kw: &[f64],
    k1: usize,
    restoration: DateTime<Utc>,
) -> GroundTruth {
    let air_ok = |s: &EtpHouseState| s.t_a >= params.setpoint_at(s.t.hour()) - params.deadband / 2.0;
    let tank_ok = |s: &EtpHouseState| s.t_w >= params.tank_setpoint - params.tank_deadband / 2.0;
    let first = |ok: &dyn Fn(&EtpHouseState) -> bool| (k1..states.len()).find(|&j| ok(&states[j]));
    let (end, recovered) = match (first(&air_ok), first(&tank_ok)) {
        (Some(a), Some(w)) => (a.max(w), true),
        _ => (states.len() - 1, false),
    };
    let window = &power_kw[k1..end.max(k1 + 1).min(power_kw.len())];
    GroundTruth {
        restoration,
        duration_hours: (end - k1) as f64 / 60.0,
        peak_kw: window.iter().copied().fold(0.0, f64::max),
        energy_kwh: power_kw[k1..end.min(power_kw.len())].iter().sum::<f64>() / 60.0,
        recovered,
    }
}

/// Knobs for the synthetic winter suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WinterSuiteConfig {
    pub n_houses: usize,
    pub days: usize,
    pub mean_temp: f64,
    pub amplitude: f64,
    /// Standard deviation of the hourly AR(1) weather noise.
    pub noise_sigma: f64,
    /// Relative half-width of the uniform parameter jitter.
    pub jitter: f64,
    pub outage_hours: Vec<f64>,
    /// Outage start, hour of day on the last simulated day.
    pub outage_start_hour: u32,
    pub base: EtpHouseParams,
}

impl Default for WinterSuiteConfig {
    fn default() -> Self {
        Self {
            n_houses: 5,
            days: 28,
            mean_temp: -5.0,
            amplitude: 5.0,
            noise_sigma: 1.0,
            jitter: 0.2,
            outage_hours: (1..=10).map(f64::from).collect(),
            outage_start_hour: 9,
            base: EtpHouseParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseScenario {
    pub name: String,
    pub params: EtpHouseParams,
    pub start: DateTime<Utc>,
    pub days: usize,
    pub outdoor: OutdoorTemperature,
    pub outages: Vec<OutageScenario>,
}

impl HouseScenario {
    pub fn horizon_hours(&self) -> usize {
        self.days * 24
    }
}

/// Daily sinusoid (coldest at 05:00) plus hourly AR(1) noise.
pub fn winter_temperature(start: DateTime<Utc>, days: usize, cfg: &WinterSuiteConfig, seed: u64) -> OutdoorTemperature {
    let mut r = synth::rng(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(1e-12)).expect("valid sigma");
    let hours = days * 24 + 1;
    let mut ar = 0.0;
    let values = (0..hours)
        .map(|h| {
            ar = 0.9 * ar + (1.0f64 - 0.81).sqrt() * noise.sample(&mut r);
            let phase = 2.0 * std::f64::consts::PI * ((h % 24) as f64 - 17.0) / 24.0;
            cfg.mean_temp + cfg.amplitude * phase.cos() + ar
        })
        .collect();
    OutdoorTemperature {
        start,
        step_minutes: 60,
        values,
    }
}

// The heater keeps its sizing margin: its rating follows the envelope
// conductance, as an installer sizing to design load would.
fn jittered(base: &EtpHouseParams, jitter: f64, r: &mut impl Rng) -> EtpHouseParams {
    let mut f = || 1.0 + jitter * (2.0 * r.random::<f64>() - 1.0);
    let envelope = f();
    EtpHouseParams {
        u_a: base.u_a * envelope,
        c_a: base.c_a * f(),
        h_m: base.h_m * f(),
        c_m: base.c_m * f(),
        q_internal: base.q_internal * f(),
        heater_rating: base.heater_rating * envelope,
        water_heater_rating: base.water_heater_rating * f(),
        tank_capacity: base.tank_capacity * f(),
        ..base.clone()
    }
}

pub fn suite_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Outages of every configured length, starting on the last simulated day.
pub fn outages_for(cfg: &WinterSuiteConfig, start: DateTime<Utc>) -> Result<Vec<OutageScenario>> {
    let t0 = start + Duration::days(cfg.days as i64 - 1) + Duration::hours(cfg.outage_start_hour as i64);
    cfg.outage_hours.iter().map(|&h| OutageScenario::new(t0, h)).collect()
}

/// Deterministic suite of jittered houses under synthetic winter weather.
pub fn winter_scenario_suite(seed: u64, cfg: &WinterSuiteConfig) -> Result<Vec<HouseScenario>> {
    cfg.base.validate()?;
    let start = suite_start();
    let mut r = synth::rng(seed);
    (0..cfg.n_houses)
        .map(|i| {
            let params = jittered(&cfg.base, cfg.jitter, &mut r);
            params.validate()?;
            let weather_seed = r.random::<u64>();
            Ok(HouseScenario {
                name: format!("house-{i}"),
                params,
                start,
                days: cfg.days,
                outdoor: winter_temperature(start, cfg.days, cfg, weather_seed),
                outages: outages_for(cfg, start)?,
            })
        })
        .collect()
}

/// The undisturbed default house under the suite's weather for `seed`.
pub fn default_house(seed: u64, cfg: &WinterSuiteConfig) -> Result<HouseScenario> {
    let start = suite_start();
    Ok(HouseScenario {
        name: "default".into(),
        params: cfg.base.clone(),
        start,
        days: cfg.days,
        outdoor: winter_temperature(start, cfg.days, cfg, seed),
        outages: outages_for(cfg, start)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t0() -> DateTime<Utc> {
        suite_start()
    }

    fn quiet() -> EtpHouseParams {
        EtpHouseParams {
            q_internal: 0.0,
            night_setback: None,
            ..Default::default()
        }
    }

    // Eigen-decomposition solution of the 2x2 system, independent of expm.
    fn eigen_solution(p: &EtpHouseParams, x0: Vector2<f64>, b: Vector2<f64>, t: f64) -> Vector2<f64> {
        let a = p.system_matrix();
        let tr = a.trace();
        let det = a.determinant();
        let disc = (tr * tr / 4.0 - det).sqrt();
        let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
        let v = |l: f64| Vector2::new(a[(0, 1)], l - a[(0, 0)]);
        let (v1, v2) = (v(l1), v(l2));
        let eq = -a.try_inverse().unwrap() * b;
        let m = Matrix2::from_columns(&[v1, v2]);
        let c = m.try_inverse().unwrap() * (x0 - eq);
        eq + v1 * c[0] * (l1 * t).exp() + v2 * c[1] * (l2 * t).exp()
    }

    #[test]
    fn substep_matches_eigen_oracle() {
        let p = quiet();
        let s = EtpHouseState {
            t_a: 19.0,
            t_m: 20.5,
            t_w: 55.0,
            heater_on: true,
            water_heater_on: false,
            t: t0(),
        };
        let (next, power) = step(&p, &s, -8.0, 1.0, true).unwrap();
        let (qa, qm) = p.heat_inputs(true);
        let want = eigen_solution(&p, Vector2::new(19.0, 20.5), p.forcing(qa, qm, -8.0), 1.0 / 60.0);
        assert_abs_diff_eq!(next.t_a, want[0], epsilon = 1e-9);
        assert_abs_diff_eq!(next.t_m, want[1], epsilon = 1e-9);
        assert!(power >= p.heater_rating);
    }

    // C_A dT_A + C_M dT_M equals the time integral of net heat flow, with the
    // integral of the state computed from A^{-1} (e^{A dt} - I).
    #[test]
    fn energy_conservation_per_substep() {
        let p = EtpHouseParams::default();
        let x0 = Vector2::new(18.0, 19.5);
        let t_o = -12.0;
        let dt = 1.0 / 60.0;
        let (qa, qm) = p.heat_inputs(true);
        let b = p.forcing(qa, qm, t_o);
        let a = p.system_matrix();
        let a_inv = a.try_inverse().unwrap();
        let phi = (a * dt).exp();
        let eq = -(a_inv * b);
        let x1 = eq + phi * (x0 - eq);
        let integral = a_inv * (phi - Matrix2::identity()) * (x0 - eq) + eq * dt;
        let stored = p.c_a * (x1[0] - x0[0]) + p.c_m * (x1[1] - x0[1]);
        let inflow = (qa + qm) * dt - p.u_a * (integral[0] - t_o * dt);
        assert!((stored - inflow).abs() <= 1e-6 * inflow.abs().max(stored.abs()));
        let s = EtpHouseState {
            t_a: 18.0,
            t_m: 19.5,
            t_w: 55.0,
            heater_on: true,
            water_heater_on: false,
            t: t0(),
        };
        let (next, _) = step(&p, &s, t_o, 1.0, true).unwrap();
        assert_abs_diff_eq!(next.t_a, x1[0], epsilon = 1e-12);
    }

    #[test]
    fn cooling_without_heat() {
        let p = quiet();
        let mut s = EtpHouseState::initial(&p, t0());
        let mut prev = s.t_a;
        for _ in 0..120 {
            s = step(&p, &s, 0.0, 1.0, false).unwrap().0;
            assert!(s.t_a < prev);
            prev = s.t_a;
        }
        for _ in 0..(60 * 24 * 60) {
            s = step(&p, &s, 0.0, 1.0, false).unwrap().0;
        }
        assert!(s.t_a.abs() < 1e-3 && s.t_m.abs() < 1e-3);
    }

    #[test]
    fn hysteresis_band_held() {
        let p = EtpHouseParams {
            night_setback: None,
            ..Default::default()
        };
        let out = OutdoorTemperature::constant(t0(), 73, -10.0);
        let sim = simulate(&p, &out, t0(), 72, None, 15).unwrap();
        // Skip the first day to leave the initial transient.
        for s in &sim.trace[96..] {
            assert!(s.t_a > p.setpoint - p.deadband && s.t_a < p.setpoint + p.deadband, "{}", s.t_a);
        }
        assert!(sim.meter.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn mild_weather_heater_idle() {
        let p = EtpHouseParams {
            night_setback: None,
            q_internal: 0.0,
            ..Default::default()
        };
        let out = OutdoorTemperature::constant(t0(), 49, p.setpoint);
        let sim = simulate(&p, &out, t0(), 48, None, 15).unwrap();
        let total: f64 = sim.meter.values().iter().sum();
        let base: f64 = p.base_load_profile.iter().sum::<f64>() * 2.0;
        let hot_water: f64 = p.water_draw_schedule.iter().sum::<f64>() * 2.0 * WATER_KWH_PER_LITRE_C * (p.tank_setpoint - p.inlet_temp);
        let standby = p.tank_ua * (p.tank_setpoint - p.setpoint) * 48.0;
        let expected = base + hot_water + standby;
        assert!(sim.trace.iter().all(|s| !s.heater_on));
        assert!((total - expected).abs() < 0.1 * expected, "{total} vs {expected}");
    }

    #[test]
    fn outage_zeroes_meter_and_monotone_recovery() {
        let p = EtpHouseParams::default();
        let out = OutdoorTemperature::constant(t0(), 49, -10.0);
        let t_out = t0() + Duration::hours(32);
        let mut durations = Vec::new();
        for h in [1.0, 3.0] {
            let sc = OutageScenario::new(t_out, h).unwrap();
            let sim = simulate(&p, &out, t0(), 48, Some(&sc), 15).unwrap();
            let first = 32 * 4;
            let last = first + (h * 4.0) as usize;
            assert!(sim.meter.values()[first..last].iter().all(|v| *v == 0.0));
            let gt = sim.ground_truth.unwrap();
            assert!(gt.recovered);
            durations.push(gt.duration_hours);
        }
        assert!(durations[1] > durations[0], "{durations:?}");
    }

    #[test]
    fn coverage_gap() {
        let out = OutdoorTemperature::constant(t0(), 10, 0.0);
        assert!(matches!(
            simulate(&EtpHouseParams::default(), &out, t0(), 24, None, 15),
            Err(Error::CoverageGap(_))
        ));
    }

    #[test]
    fn invalid_params() {
        let p = EtpHouseParams {
            c_a: 0.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        assert!(step(&EtpHouseParams::default(), &EtpHouseState::initial(&p, t0()), 0.0, 2.0, true).is_err());
    }

    #[test]
    fn suite_deterministic() {
        let cfg = WinterSuiteConfig {
            days: 3,
            ..Default::default()
        };
        let a = winter_scenario_suite(7, &cfg).unwrap();
        let b = winter_scenario_suite(7, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.n_houses);
        for h in &a {
            assert!((h.params.u_a / cfg.base.u_a - 1.0).abs() <= cfg.jitter + 1e-12);
            assert_eq!(h.outages.len(), 10);
        }
    }
}
