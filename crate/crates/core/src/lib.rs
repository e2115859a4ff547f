//! Cold-load-pick-up (CLPU) estimation for a single dwelling.
//!
//! The crate forecasts the energy a household would have consumed during an
//! outage (ARIMA on the metered energy record), the power at which that energy
//! is recovered after restoration (an autoregression on daily peaks), and the
//! resulting recovery duration. Around that core sit the order-identification
//! machinery, two baseline forecasters, a two-node thermal house simulator used
//! as a physics oracle, and a rolling-origin backtesting harness.
//!
//! Module map:
//!
//! - [`series`]: meter records, CSV ingestion, differencing, daily peaks.
//! - [`stattests`]: ACF/PACF correlograms and the ADF unit-root test.
//! - [`arima`]: exact-likelihood ARIMA/ARIMAX fitting and forecasting.
//! - [`order_select`]: full and reduced (p, q) grid searches.
//! - [`clpu`]: peak model, foregone energy, duration estimates.
//! - [`baselines`]: Holt-Winters and random-walk forecasters.
//! - [`etpsim`]: equivalent-thermal-parameter house simulator.
//! - [`harness`]: backtests, method comparison, physics validation.

pub mod arima;
pub mod baselines;
pub mod clpu;
mod error;
pub mod etpsim;
pub mod harness;
mod linalg;
pub mod optim;
pub mod order_select;
pub mod series;
pub mod stattests;
pub mod synth;

pub use arima::{ArimaModel, ArimaOrder, ArimaxModel, CumulativeForecast, FitOptions};
pub use clpu::{ClpuEstimate, NormalConsumption, PeakModel};
pub use error::{Error, Result};
pub use order_select::{SearchConfig, SearchResult};
pub use series::{DiffMode, DifferencedSeries, EnergySeries, PeakSeries};
pub use stattests::{AdfResult, Correlogram};
