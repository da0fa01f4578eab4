#![allow(dead_code)]

use std::path::{Path, PathBuf};

use atfqoe_core::filmstrip::save_filmstrip;
use atfqoe_core::{Filmstrip, Frame, MetricReport};

pub fn report(id: &str, vc: f64, si: f64, psi: f64) -> MetricReport {
    MetricReport {
        source_id: id.into(),
        ttfb_ms: 120.0,
        dclend_ms: Some(0.4 * vc),
        onload_ms: 0.8 * vc,
        first_paint_ms: Some(300.0),
        render_ms: Some(350.0),
        visual_complete_ms: vc,
        si_ms: si,
        psi_ms: psi,
        si_onload_ms: 0.9 * si,
        psi_onload_ms: 0.9 * psi,
        si_ttc_ms: None,
        psi_ttc_ms: None,
    }
}

/// 81 pages with visual complete within 2% of 5000 ms on a geometric SI x
/// PSI grid, plus ten honeypot pages (five fast, five slow). Every condition
/// bucket gets well over ten candidates.
pub fn grid_corpus() -> Vec<MetricReport> {
    let mut out = Vec::new();
    for i in 0..9 {
        for j in 0..9 {
            let si = 1000.0 * 1.06f64.powi(i);
            let psi = 1000.0 * 1.07f64.powi(j);
            out.push(report(&format!("p{i}{j}"), 4950.0 + 2.0 * (i * 9 + j) as f64, si, psi));
        }
    }
    for k in 0..5 {
        out.push(report(&format!("zfast{k}"), 1000.0, 500.0, 500.0));
        out.push(report(&format!("zslow{k}"), 9000.0, 4000.0, 4000.0));
    }
    out
}

/// White until `t_ms`, then a dark block covering the left half.
pub fn step_strip(id: &str, t_ms: u64) -> Filmstrip {
    let mut done = Frame::solid(t_ms, 32, 32, [255, 255, 255]);
    for y in 0..32 {
        for x in 0..16 {
            done.pixels.put_pixel(x, y, image::Rgb([20, 40, 60]));
        }
    }
    Filmstrip::new(id, vec![Frame::solid(0, 32, 32, [255, 255, 255]), done]).unwrap()
}

pub fn har_json(page: &str, ttfb: f64, onload: f64) -> String {
    serde_json::json!({
        "log": {
            "pages": [{"id": page, "pageTimings": {"onContentLoad": onload / 2.0, "onLoad": onload}}],
            "entries": [{
                "pageref": page,
                "response": {"status": 200},
                "timings": {"blocked": 0.0, "dns": 10.0, "connect": 20.0, "send": 1.0, "wait": ttfb - 31.0, "receive": 5.0}
            }]
        }
    })
    .to_string()
}

/// Writes a filmstrip and a matching HAR under `dir`; returns both paths.
pub fn write_page(dir: &Path, strip: &Filmstrip, onload: f64) -> (PathBuf, PathBuf) {
    let manifest = save_filmstrip(strip, &dir.join(strip.source_id())).unwrap();
    let har = dir.join(format!("{}.har", strip.source_id()));
    std::fs::write(&har, har_json(strip.source_id(), 150.0, onload)).unwrap();
    (manifest, har)
}
