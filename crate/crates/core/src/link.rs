//! Bundle of source, channel, and receiver parameters describing one
//! operating point of the link, with the derived constants shared by the
//! analytic formulas.

use crate::channel::{ChannelParams, TurbulenceModel};
use crate::error::{Error, Result};
use crate::receiver::ReceiverParams;
use crate::source::SourceParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub source: SourceParams,
    pub channel: ChannelParams,
    pub receiver: ReceiverParams,
}

impl LinkParams {
    pub fn new(source: SourceParams, channel: ChannelParams, receiver: ReceiverParams) -> Self {
        LinkParams { source, channel, receiver }
    }

    /// Displacement-to-signal coupling Omega = 2 |delta| mu sqrt(I_p).
    pub fn omega(&self) -> f64 {
        2.0 * self.receiver.delta_mag * self.source.mu * self.channel.path_loss_ip.sqrt()
    }

    /// rho = Omega / (N + 1).
    pub fn rho(&self) -> f64 {
        self.omega() / (self.receiver.thermal + 1.0)
    }

    /// chi = I_p mu^2 / (N + 1).
    pub fn chi(&self) -> f64 {
        self.channel.path_loss_ip * self.source.mu * self.source.mu
            / (self.receiver.thermal + 1.0)
    }

    /// Erlang turbulence parameters, or a domain error for the log-normal
    /// model (the analytic formulas average over the Erlang law only).
    pub fn erlang(&self) -> Result<(u32, f64)> {
        match self.channel.turbulence {
            TurbulenceModel::Erlang { shape, rate } => Ok((shape, rate)),
            TurbulenceModel::LogNormal { .. } => Err(Error::domain(
                "analytic path requires the Erlang turbulence model".to_string(),
            )),
        }
    }

    /// Copy of the point with a different displacement magnitude.
    pub fn with_delta(&self, delta_mag: f64) -> Self {
        let mut out = *self;
        out.receiver.delta_mag = delta_mag;
        out
    }
}
