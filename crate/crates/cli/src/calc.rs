use accessq_core::qos::{self, CapacityParams, EModelInput, SizingParams};
use accessq_core::units::{parse_bytes, parse_duration, parse_millis, parse_rate, UnitError};
use clap::{Args, Subcommand};

use crate::output::Output;

#[derive(Args)]
pub struct CalcArgs {
    #[command(subcommand)]
    formula: Formula,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Formula {
    /// IP-level capacity of a link-layer channel.
    Capacity {
        #[arg(long = "c-l2", value_parser = parse_rate)]
        c_l2: f64,
        /// Link-layer overhead per packet, bytes.
        #[arg(long = "h-l2", value_parser = parse_bytes)]
        h_l2: f64,
        /// IP packet size, bytes.
        #[arg(long = "l-l3", value_parser = parse_bytes)]
        l_l3: f64,
    },
    /// Bandwidth-delay product buffer.
    Bdp {
        #[arg(long, value_parser = parse_rate)]
        c: f64,
        #[arg(long, value_parser = parse_duration)]
        rtt: f64,
    },
    /// Bandwidth-delay product divided by the square root of the flow count.
    Stanford {
        #[arg(long, value_parser = parse_rate)]
        c: f64,
        #[arg(long, value_parser = parse_duration)]
        rtt: f64,
        #[arg(long)]
        n: u32,
    },
    /// Queue fill rate r_in - r_out.
    Fill {
        #[arg(long = "r-in", value_parser = parse_rate)]
        r_in: f64,
        #[arg(long = "r-out", value_parser = parse_rate)]
        r_out: f64,
    },
    /// Bandwidth of a constant packet stream.
    Voipbw {
        #[arg(long, value_parser = parse_bytes)]
        size: f64,
        #[arg(long, value_parser = parse_duration)]
        interval: f64,
    },
    /// R-factor and MOS from delay and loss.
    Emodel {
        /// Total one-way delay, ms.
        #[arg(long, value_parser = parse_millis, required_unless_present = "network_delay")]
        delay: Option<f64>,
        /// Network delay, ms; the fixed 96 ms budget is added.
        #[arg(long, value_parser = parse_millis, conflicts_with = "delay")]
        network_delay: Option<f64>,
        /// Loss as a fraction (`0.03`) or percentage (`3%`).
        #[arg(long, value_parser = parse_loss)]
        loss: f64,
    },
}

fn parse_loss(s: &str) -> Result<f64, UnitError> {
    let err = || UnitError {
        kind: "loss",
        input: s.to_string(),
    };
    let t = s.trim();
    let v = match t.strip_suffix('%') {
        Some(p) => p.trim().parse::<f64>().map_err(|_| err())? / 100.0,
        None => t.parse::<f64>().map_err(|_| err())?,
    };
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(err())
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive, got {v}"))
    }
}

pub fn run(args: &CalcArgs) -> Result<Output, String> {
    let mut out = Output::new(args.json);
    match args.formula {
        Formula::Capacity { c_l2, h_l2, l_l3 } => {
            positive("--c-l2", c_l2)?;
            positive("--l-l3", l_l3)?;
            if h_l2 < 0.0 {
                return Err("--h-l2 must be nonnegative".into());
            }
            let p = CapacityParams { c_l2, h_l2, l_l3 };
            out.rate("capacity_l3", qos::capacity_l3(p));
            out.seconds("transmission_time", qos::transmission_time_l3(p));
        }
        Formula::Bdp { c, rtt } => {
            positive("--c", c)?;
            let p = SizingParams { c, rtt, n_flows: 1 };
            out.bytes("bdp", qos::bdp_buffer(p));
            out.number("bdp_bits", qos::bdp_buffer_bits(p));
        }
        Formula::Stanford { c, rtt, n } => {
            positive("--c", c)?;
            if n == 0 {
                return Err("--n must be at least 1".into());
            }
            let p = SizingParams { c, rtt, n_flows: n };
            out.bytes("stanford", qos::stanford_buffer(p));
            out.bytes("bdp", qos::bdp_buffer(p));
        }
        Formula::Fill { r_in, r_out } => {
            out.rate("fill_rate", qos::fill_rate(r_in, r_out));
        }
        Formula::Voipbw { size, interval } => {
            positive("--size", size)?;
            positive("--interval", interval)?;
            out.rate("voip_bandwidth", qos::voip_bandwidth(size, interval));
        }
        Formula::Emodel {
            delay,
            network_delay,
            loss,
        } => {
            let total = match (delay, network_delay) {
                (Some(d), _) => d,
                (None, Some(n)) => qos::total_delay(n),
                (None, None) => return Err("--delay or --network-delay is required".into()),
            };
            let r = qos::r_factor(EModelInput {
                delay_total: total,
                loss,
            });
            out.number("delay_total_ms", total);
            out.number("loss", loss);
            out.number("r_factor", r);
            out.number("mos", qos::mos_from_r(r));
        }
    }
    Ok(out)
}
