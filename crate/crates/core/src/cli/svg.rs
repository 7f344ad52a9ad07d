//! Static compliance charts: one file per (load, scheduler), x = SLA share,
//! y = compliance, one line per burst class, one panel per SLA type.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::sweep::JobOutcome;
use crate::frame::SlaType;
use crate::metrics::ComplianceTally;
use crate::trafficgen::BurstClass;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 50.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 60.0;
const WIDTH: f64 = MARGIN_L + 2.0 * PANEL_W + GAP + 110.0;
const HEIGHT: f64 = MARGIN_T + PANEL_H + 50.0;

fn colour(burst: BurstClass) -> &'static str {
    match burst {
        BurstClass::Small => "#d62728",
        BurstClass::Medium => "#2ca02c",
        BurstClass::Large => "#1f77b4",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub scheduler: String,
    pub load_fraction: f64,
    /// (SLA type, burst class) -> points (share, compliance) sorted by share.
    pub series: BTreeMap<(SlaType, BurstClass), Vec<(f64, f64)>>,
}

/// Groups successful outcomes into charts. Repeated points (several seeds)
/// are pooled over their flow-frames.
pub fn charts(outcomes: &[JobOutcome]) -> Vec<Chart> {
    type Key = (String, u64);
    let mut pooled: BTreeMap<Key, BTreeMap<(SlaType, BurstClass, u64), ComplianceTally>> =
        BTreeMap::new();
    let mut loads: BTreeMap<Key, f64> = BTreeMap::new();
    for o in outcomes {
        let Ok(r) = &o.result else { continue };
        let key = (r.scheduler.clone(), r.scenario.load_fraction.to_bits());
        loads.insert(key.clone(), r.scenario.load_fraction);
        let chart = pooled.entry(key).or_default();
        for sla in [SlaType::Type1, SlaType::Type2] {
            let tally = r.tally(sla).copied().unwrap_or_default();
            let point = chart
                .entry((sla, r.scenario.burst_class, r.scenario.sla_share.to_bits()))
                .or_default();
            point.flow_frames += tally.flow_frames;
            point.breached += tally.breached;
        }
    }
    pooled
        .into_iter()
        .map(|(key, points)| {
            let mut series: BTreeMap<(SlaType, BurstClass), Vec<(f64, f64)>> = BTreeMap::new();
            for ((sla, burst, share), tally) in points {
                if let Some(c) = tally.compliance() {
                    series
                        .entry((sla, burst))
                        .or_default()
                        .push((f64::from_bits(share), c));
                }
            }
            for pts in series.values_mut() {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            Chart {
                load_fraction: loads[&key],
                scheduler: key.0,
                series,
            }
        })
        .collect()
}

impl Chart {
    pub fn file_name(&self) -> String {
        format!(
            "compliance_{}_load{:03}.svg",
            self.scheduler,
            (self.load_fraction * 100.0).round() as u32
        )
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="18" font-size="14" text-anchor="middle">{} scheduler, load {:.0}%</text>"#,
            WIDTH / 2.0,
            self.scheduler,
            self.load_fraction * 100.0
        );
        for (i, sla) in [SlaType::Type1, SlaType::Type2].into_iter().enumerate() {
            let x0 = MARGIN_L + i as f64 * (PANEL_W + GAP);
            self.panel(&mut s, x0, sla);
        }
        let lx = MARGIN_L + 2.0 * PANEL_W + GAP + 15.0;
        for (i, burst) in BurstClass::ALL.into_iter().enumerate() {
            let y = MARGIN_T + 20.0 + i as f64 * 18.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{burst}</text>"#,
                lx + 20.0,
                colour(burst),
                lx + 26.0,
                y + 4.0
            );
        }
        s.push_str("</svg>\n");
        s
    }

    fn panel(&self, s: &mut String, x0: f64, sla: SlaType) {
        let px = |share: f64| x0 + share * PANEL_W;
        let py = |c: f64| MARGIN_T + (1.0 - c) * PANEL_H;
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{MARGIN_T}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let title = match sla {
            SlaType::Type1 => "type-1 SLA",
            _ => "type-2 SLA",
        };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{title}</text>"#,
            x0 + PANEL_W / 2.0,
            MARGIN_T - 6.0
        );
        for tick in 0..=5 {
            let v = f64::from(tick) / 5.0;
            let _ = writeln!(
                s,
                r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/><text x="{tx}" y="{ty}" text-anchor="end">{v:.1}</text>"##,
                y = py(v),
                x1 = x0 + PANEL_W,
                tx = x0 - 4.0,
                ty = py(v) + 4.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{v:.1}</text>"#,
                px(v),
                MARGIN_T + PANEL_H + 14.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">SLA share of load</text>"#,
            x0 + PANEL_W / 2.0,
            MARGIN_T + PANEL_H + 32.0
        );
        for burst in BurstClass::ALL {
            let Some(points) = self.series.get(&(sla, burst)) else {
                continue;
            };
            let path: Vec<String> = points
                .iter()
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                colour(burst),
                path.join(" ")
            );
            for &(x, y) in points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}"/>"#,
                    px(x),
                    py(y),
                    colour(burst)
                );
            }
        }
    }
}
