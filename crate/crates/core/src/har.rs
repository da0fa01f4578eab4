//! Navigation timings from HAR 1.2 documents.
//!
//! TTFB is the sum of the pre-first-byte phases (`blocked`, `dns`,
//! `connect`, `send`, `wait`) of the page's first entry. When the page starts
//! with a redirect chain, the phases of every leading 3xx entry are summed
//! in as well, up to and including the first non-redirect response.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum HarError {
    #[error("malformed HAR document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("HAR document has no pages")]
    NoPages,
    #[error("page {0:?} not found")]
    UnknownPage(String),
    #[error("page {0:?} has no entries")]
    NoEntries(String),
    #[error("page {page:?} has no positive onLoad timing (got {value:?})")]
    MissingOnLoad { page: String, value: Option<f64> },
}

#[derive(Debug, Clone, Deserialize)]
pub struct Har {
    pub log: HarLog,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HarLog {
    #[serde(default)]
    pub pages: Vec<HarPage>,
    #[serde(default)]
    pub entries: Vec<HarEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HarPage {
    pub id: String,
    #[serde(rename = "pageTimings", default)]
    pub page_timings: PageTimings,
    #[serde(rename = "_firstPaint", default)]
    pub first_paint: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PageTimings {
    #[serde(rename = "onContentLoad", default)]
    pub on_content_load: Option<f64>,
    #[serde(rename = "onLoad", default)]
    pub on_load: Option<f64>,
    #[serde(rename = "_firstPaint", default)]
    pub first_paint: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HarEntry {
    #[serde(default)]
    pub pageref: Option<String>,
    #[serde(default)]
    pub response: Option<HarResponse>,
    pub timings: EntryTimings,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HarResponse {
    #[serde(default)]
    pub status: i64,
}

/// Request phases in milliseconds; `-1` marks a phase that does not apply.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct EntryTimings {
    #[serde(default)]
    pub blocked: Option<f64>,
    #[serde(default)]
    pub dns: Option<f64>,
    #[serde(default)]
    pub connect: Option<f64>,
    #[serde(default)]
    pub send: Option<f64>,
    #[serde(default)]
    pub wait: Option<f64>,
    #[serde(default)]
    pub receive: Option<f64>,
}

impl EntryTimings {
    pub fn before_first_byte(&self) -> f64 {
        [self.blocked, self.dns, self.connect, self.send, self.wait]
            .into_iter()
            .map(|v| v.filter(|x| *x >= 0.0).unwrap_or(0.0))
            .sum()
    }
}

/// Non-visual timings of one page load, relative to navigation start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub source_id: String,
    pub ttfb_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dclend_ms: Option<f64>,
    pub onload_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_paint_ms: Option<f64>,
}

pub fn parse_har(bytes: &[u8]) -> Result<Har, HarError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Extracts timings for `page_id`, or for the first page when `None`.
/// The record's `source_id` is the page id.
pub fn extract_timings(har: &Har, page_id: Option<&str>) -> Result<TimingRecord, HarError> {
    let page = match page_id {
        Some(id) => har.log.pages.iter().find(|p| p.id == id).ok_or_else(|| HarError::UnknownPage(id.to_string()))?,
        None => har.log.pages.first().ok_or(HarError::NoPages)?,
    };

    // Entries without a pageref are attributed to the page only in
    // single-page documents.
    let single_page = har.log.pages.len() == 1;
    let entries: Vec<&HarEntry> = har
        .log
        .entries
        .iter()
        .filter(|e| match &e.pageref {
            Some(r) => *r == page.id,
            None => single_page,
        })
        .collect();
    if entries.is_empty() {
        return Err(HarError::NoEntries(page.id.clone()));
    }

    let mut ttfb_ms = 0.0;
    for entry in &entries {
        ttfb_ms += entry.timings.before_first_byte();
        let status = entry.response.as_ref().map_or(0, |r| r.status);
        if !(300..400).contains(&status) {
            break;
        }
    }

    let onload = page.page_timings.on_load;
    let onload_ms = match onload {
        Some(v) if v > 0.0 => v,
        value => return Err(HarError::MissingOnLoad { page: page.id.clone(), value }),
    };

    Ok(TimingRecord {
        source_id: page.id.clone(),
        ttfb_ms,
        dclend_ms: page.page_timings.on_content_load.filter(|v| *v >= 0.0),
        onload_ms,
        first_paint_ms: page.first_paint.or(page.page_timings.first_paint).filter(|v| *v >= 0.0),
    })
}
