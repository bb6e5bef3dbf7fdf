//! Closed-form QoS calculators: layer-3 capacity, buffer sizing, fill rate,
//! VoIP bandwidth and the simplified E-model (R-factor to MOS).
//!
//! Rates are bit/s, sizes bytes, times seconds, except the E-model which works
//! in milliseconds.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

/// Buffer size range, in packets, that "tiny buffer" proposals consider
/// sufficient for 80-90% utilization of non-bursty traffic. A rule of thumb,
/// not a formula.
pub const TINY_BUFFER_PACKETS: RangeInclusive<u32> = 20..=50;

/// One-way delay above which conversational quality degrades sharply, ms.
pub const DELAY_KNEE_MS: f64 = 177.3;

/// Router buffer plus de-jitter budget added to the network delay, ms.
pub const FIXED_DELAY_BUDGET_MS: f64 = 96.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    /// Link-layer capacity, bit/s.
    pub c_l2: f64,
    /// Link-layer header and trailer, bytes.
    pub h_l2: f64,
    /// IP packet size including its header, bytes.
    pub l_l3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingParams {
    /// Link capacity, bit/s.
    pub c: f64,
    /// Round-trip time, seconds.
    pub rtt: f64,
    pub n_flows: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EModelInput {
    /// Total one-way mouth-to-ear delay, ms.
    pub delay_total: f64,
    /// Packet loss as a fraction in [0, 1].
    pub loss: f64,
}

/// Throughput available to IP packets once link-layer overhead is paid.
pub fn capacity_l3(p: CapacityParams) -> f64 {
    p.c_l2 / (1.0 + p.h_l2 / p.l_l3)
}

/// Time to transmit one IP packet of `l_l3` bytes on the layer-2 link.
pub fn transmission_time_l3(p: CapacityParams) -> f64 {
    (p.l_l3 + p.h_l2) * 8.0 / p.c_l2
}

/// Bandwidth-delay product in bytes.
pub fn bdp_buffer(p: SizingParams) -> f64 {
    bdp_buffer_bits(p) / 8.0
}

pub fn bdp_buffer_bits(p: SizingParams) -> f64 {
    p.c * p.rtt
}

/// Bandwidth-delay product divided by the square root of the flow count, bytes.
pub fn stanford_buffer(p: SizingParams) -> f64 {
    bdp_buffer(p) / (p.n_flows.max(1) as f64).sqrt()
}

/// Signed: negative means the queue drains.
pub fn fill_rate(r_in: f64, r_out: f64) -> f64 {
    r_in - r_out
}

/// IP-level bandwidth of a constant packet stream.
pub fn voip_bandwidth(packet_size: f64, interval: f64) -> f64 {
    packet_size * 8.0 / interval
}

fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Simplified E-model transmission rating with delay and loss impairments.
pub fn r_factor(input: EModelInput) -> f64 {
    let d = input.delay_total;
    let delay_impairment =
        0.024 * d + 0.11 * (d - DELAY_KNEE_MS) * heaviside(d - DELAY_KNEE_MS);
    let loss_impairment = 11.0 + 40.0 * (1.0 + 10.0 * input.loss).ln();
    94.2 - delay_impairment - loss_impairment
}

/// R-factor to MOS, clamped to [1, 4.5].
pub fn mos_from_r(r: f64) -> f64 {
    if r <= 0.0 {
        1.0
    } else if r >= 100.0 {
        4.5
    } else {
        // the cubic dips below 1 for R < ~6.5
        (1.0 + 0.035 * r + 7e-6 * r * (r - 60.0) * (100.0 - r)).clamp(1.0, 4.5)
    }
}

/// Network one-way delay plus the fixed buffer budget, ms.
pub fn total_delay(network_owd_ms: f64) -> f64 {
    network_owd_ms + FIXED_DELAY_BUDGET_MS
}

pub fn mos(input: EModelInput) -> f64 {
    mos_from_r(r_factor(input))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(d: f64, loss: f64) -> f64 {
        r_factor(EModelInput {
            delay_total: d,
            loss,
        })
    }

    #[test]
    fn capacity_examples() {
        let p = |l_l3| CapacityParams {
            c_l2: 10e6,
            h_l2: 38.0,
            l_l3,
        };
        assert!((capacity_l3(p(150.0)) - 7.97e6).abs() < 0.01e6);
        assert!((capacity_l3(p(1500.0)) - 9.75e6).abs() < 0.01e6);
        let bare = CapacityParams {
            c_l2: 10e6,
            h_l2: 0.0,
            l_l3: 150.0,
        };
        assert_eq!(capacity_l3(bare), 10e6);
        assert!((transmission_time_l3(p(1500.0)) - 1538.0 * 8.0 / 10e6).abs() < 1e-15);
    }

    #[test]
    fn sizing_examples() {
        let p = SizingParams {
            c: 40e9,
            rtt: 0.25,
            n_flows: 100,
        };
        assert_eq!(bdp_buffer(p), 1.25e9);
        assert_eq!(bdp_buffer_bits(p), 10e9);
        assert_eq!(stanford_buffer(p), 125e6);
        assert_eq!(bdp_buffer(SizingParams { rtt: 0.0, ..p }), 0.0);
        assert_eq!(
            bdp_buffer(SizingParams {
                c: 100e6,
                rtt: 0.1,
                n_flows: 1
            }),
            1.25e6
        );
        let one = SizingParams { n_flows: 1, ..p };
        assert_eq!(stanford_buffer(one), bdp_buffer(one));
        let four = SizingParams { n_flows: 4, ..p };
        assert_eq!(stanford_buffer(four), bdp_buffer(four) / 2.0);
    }

    #[test]
    fn fill_rate_examples() {
        assert_eq!(fill_rate(5e6, 5e6), 0.0);
        assert_eq!(fill_rate(10e6, 5e6), 5e6);
        assert_eq!(fill_rate(5e6, 10e6), -5e6);
    }

    #[test]
    fn voip_examples() {
        assert_eq!(voip_bandwidth(60.0, 0.020), 24e3);
        assert!((voip_bandwidth(120.0, 0.040) - 24e3).abs() < 1e-9);
        assert_eq!(voip_bandwidth(60.0, 0.010), 48e3);
    }

    #[test]
    fn r_factor_examples() {
        assert!((r(0.0, 0.0) - 83.2).abs() < 1e-12);
        assert!((r(116.0, 0.0) - 80.416).abs() < 1e-9);
        // 40 ln 1.3 = 10.4946; the reference value is quoted to two decimals
        assert!((r(116.0, 0.03) - 69.92).abs() < 0.005);
        assert!((r(116.0, 0.03) - (80.416 - 40.0 * 1.3f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn mos_examples() {
        assert_eq!(mos_from_r(0.0), 1.0);
        assert_eq!(mos_from_r(-20.0), 1.0);
        assert_eq!(mos_from_r(100.0), 4.5);
        assert_eq!(mos_from_r(120.0), 4.5);
        assert!((mos_from_r(80.416) - 4.04).abs() < 0.005);
        assert_eq!(mos_from_r(3.0), 1.0);
    }

    #[test]
    fn total_delay_examples() {
        let pairs = [(20.0, 116.0), (40.0, 136.0), (60.0, 156.0), (100.0, 196.0), (120.0, 216.0), (140.0, 236.0)];
        for (owd, total) in pairs {
            assert_eq!(total_delay(owd), total);
        }
        assert_eq!(total_delay(0.0), 96.0);
    }

    #[test]
    fn continuous_at_knee() {
        let eps = 0.01;
        assert!((r(DELAY_KNEE_MS - eps, 0.0) - r(DELAY_KNEE_MS + eps, 0.0)).abs() < 0.01);
    }

    #[test]
    fn slope_steepens_past_knee() {
        let h = 1e-4;
        let slope = |d: f64| (r(d + h, 0.01) - r(d - h, 0.01)) / (2.0 * h);
        assert!((slope(150.0) + 0.024).abs() < 1e-6);
        assert!((slope(200.0) + 0.134).abs() < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn r_decreasing_in_delay(d in 0.0f64..400.0, dd in 0.001f64..50.0, loss in 0.0f64..1.0) {
            proptest::prop_assert!(r(d + dd, loss) < r(d, loss));
        }

        #[test]
        fn r_decreasing_in_loss(d in 0.0f64..400.0, loss in 0.0f64..0.99, dl in 0.001f64..0.01) {
            proptest::prop_assert!(r(d, loss + dl) < r(d, loss));
        }

        #[test]
        fn mos_bounded_and_monotone(a in -50.0f64..150.0, b in -50.0f64..150.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(mos_from_r(lo) <= mos_from_r(hi));
            for x in [a, b] {
                let m = mos_from_r(x);
                proptest::prop_assert!((1.0..=4.5).contains(&m));
            }
        }

        #[test]
        fn capacity_below_l2(c in 1e3f64..1e10, h in 1.0f64..100.0, l in 20.0f64..9000.0) {
            let p = CapacityParams { c_l2: c, h_l2: h, l_l3: l };
            proptest::prop_assert!(capacity_l3(p) < c);
            let big = CapacityParams { l_l3: 1e12, ..p };
            proptest::prop_assert!((capacity_l3(big) - c).abs() / c < 1e-8);
        }

        #[test]
        fn stanford_at_most_bdp(c in 1e3f64..1e10, rtt in 0.001f64..1.0, n in 1u32..10_000) {
            let p = SizingParams { c, rtt, n_flows: n };
            if n == 1 {
                proptest::prop_assert_eq!(stanford_buffer(p), bdp_buffer(p));
            } else {
                proptest::prop_assert!(stanford_buffer(p) < bdp_buffer(p));
            }
        }
    }
}
