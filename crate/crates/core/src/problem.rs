//! Weekly scheduling problem: antennas, track requests, placed tracks and
//! schedules, plus the problem-set document format.
//!
//! The problem-set document is JSON:
//!
//! ```json
//! {
//!   "week_label": "synthetic-seed-1",
//!   "max_requests": 500,
//!   "antennas": [
//!     { "id": "DSS-14", "bounds": [0, 604800], "maintenance": [[36000, 57600]] }
//!   ],
//!   "requests": [
//!     {
//!       "id": 0, "mission": "M01",
//!       "requested_duration_s": 14400, "min_duration_s": 7200,
//!       "setup_s": 3600, "teardown_s": 900,
//!       "combos": [ { "antennas": ["DSS-14"], "view_periods": [[0, 30000]] } ]
//!     }
//!   ]
//! }
//! ```
//!
//! Request ids are dense and 0-based; the document order is the action order.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timewindow::{Seconds, TimeWindow, WindowSet, SECONDS_PER_HOUR};

/// Observation slots reserved for antenna free time.
pub const ANTENNA_SLOTS: usize = 15;
pub const DEFAULT_MAX_REQUESTS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Antenna {
    pub id: String,
    pub bounds: TimeWindow,
    #[serde(default)]
    pub maintenance: WindowSet,
}

impl Antenna {
    /// Week bounds minus maintenance.
    pub fn available(&self) -> WindowSet {
        WindowSet::single(self.bounds).subtract(&self.maintenance)
    }
}

/// One acceptable antenna combination for a request. Arrays list more than
/// one antenna; all of them must carry the track simultaneously.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaCombo {
    pub antennas: Vec<String>,
    pub view_periods: WindowSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRequest {
    pub id: usize,
    pub mission: String,
    pub requested_duration_s: Seconds,
    pub min_duration_s: Seconds,
    pub setup_s: Seconds,
    pub teardown_s: Seconds,
    pub combos: Vec<AntennaCombo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeekProblem {
    pub week_label: String,
    pub max_requests: usize,
    pub antennas: Vec<Antenna>,
    pub requests: Vec<TrackRequest>,
}

impl WeekProblem {
    pub fn from_json(text: &str) -> Result<Self> {
        let problem: WeekProblem =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        problem.validate()?;
        Ok(problem)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Canonical serialization: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("problem serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn n_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn antenna_index(&self, id: &str) -> Option<usize> {
        self.antennas.iter().position(|a| a.id == id)
    }

    pub fn total_requested_s(&self) -> Seconds {
        self.requests.iter().map(|r| r.requested_duration_s).sum()
    }

    /// Missions in first-appearance order.
    pub fn missions(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for r in &self.requests {
            if !seen.contains(&r.mission.as_str()) {
                seen.push(r.mission.as_str());
            }
        }
        seen
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_requests == 0 {
            return Err(Error::Validation("max_requests must be positive".into()));
        }
        if self.requests.len() > self.max_requests {
            return Err(Error::Validation(format!(
                "{} requests exceed max_requests {}",
                self.requests.len(),
                self.max_requests
            )));
        }
        if self.antennas.len() > ANTENNA_SLOTS {
            return Err(Error::Validation(format!(
                "{} antennas exceed the {ANTENNA_SLOTS} observation slots",
                self.antennas.len()
            )));
        }
        let mut ids = HashMap::new();
        for a in &self.antennas {
            if ids.insert(a.id.as_str(), ()).is_some() {
                return Err(Error::Validation(format!("duplicate antenna id {}", a.id)));
            }
            if let (Some(first), Some(last)) = (a.maintenance.windows().first(), a.maintenance.windows().last()) {
                if first.start() < a.bounds.start() || last.end() > a.bounds.end() {
                    return Err(Error::Validation(format!(
                        "antenna {}: maintenance outside week bounds",
                        a.id
                    )));
                }
            }
        }
        for (idx, r) in self.requests.iter().enumerate() {
            let bad = |reason: String| Error::InvalidRequest {
                request_id: r.id,
                reason,
            };
            if r.id != idx {
                return Err(bad(format!("expected dense id {idx}")));
            }
            if r.min_duration_s <= 0 || r.min_duration_s > r.requested_duration_s {
                return Err(bad(format!(
                    "need 0 < min_duration_s ({}) <= requested_duration_s ({})",
                    r.min_duration_s, r.requested_duration_s
                )));
            }
            if r.setup_s < 0 || r.teardown_s < 0 {
                return Err(bad("setup_s and teardown_s must be non-negative".into()));
            }
            if r.combos.is_empty() {
                return Err(bad("no antenna combinations".into()));
            }
            for combo in &r.combos {
                if combo.antennas.is_empty() {
                    return Err(bad("empty antenna combination".into()));
                }
                for (k, id) in combo.antennas.iter().enumerate() {
                    if !ids.contains_key(id.as_str()) {
                        return Err(bad(format!("unknown antenna {id}")));
                    }
                    if combo.antennas[..k].contains(id) {
                        return Err(bad(format!("antenna {id} repeated in a combination")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Valid view periods for every combination of `request`: the member
/// antennas' raw visibility minus their maintenance, intersected across the
/// combination, keeping only windows that can hold the minimum duration.
/// Returned in the request's combination order.
pub fn derive_valid_vps(
    request: &TrackRequest,
    raw_vps: &BTreeMap<String, WindowSet>,
    maintenance: &BTreeMap<String, WindowSet>,
) -> Result<Vec<WindowSet>> {
    let empty = WindowSet::new();
    request
        .combos
        .iter()
        .map(|combo| {
            let per_antenna = combo
                .antennas
                .iter()
                .map(|id| {
                    let raw = raw_vps.get(id).ok_or_else(|| {
                        Error::Config(format!(
                            "request {}: no view periods for antenna {id}",
                            request.id
                        ))
                    })?;
                    Ok(raw.subtract(maintenance.get(id).unwrap_or(&empty)))
                })
                .collect::<Result<Vec<_>>>()?;
            let joint = WindowSet::intersect_all(&per_antenna).unwrap_or_default();
            Ok(joint.retain_min_duration(request.min_duration_s))
        })
        .collect()
}

/// A placed track. `window` is the on-air time; setup and teardown, when
/// non-zero, sit immediately before and after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub request_id: usize,
    pub combo_index: usize,
    pub antennas: Vec<String>,
    pub window: TimeWindow,
    pub setup: Option<TimeWindow>,
    pub teardown: Option<TimeWindow>,
}

impl Track {
    pub fn on_air_s(&self) -> Seconds {
        self.window.duration()
    }

    /// Setup, on-air and teardown as one contiguous busy window.
    pub fn busy_window(&self) -> TimeWindow {
        let start = self.setup.map_or(self.window.start(), |s| s.start());
        let end = self.teardown.map_or(self.window.end(), |t| t.end());
        TimeWindow::new(start, end).expect("busy window is non-empty")
    }
}

/// The output of one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub tracks: Vec<Track>,
}

impl Schedule {
    /// On-air seconds per request.
    pub fn allocated_per_request(&self, n_requests: usize) -> Vec<Seconds> {
        let mut out = vec![0; n_requests];
        for t in &self.tracks {
            out[t.request_id] += t.on_air_s();
        }
        out
    }

    /// Busy time (setup + on-air + teardown) per antenna, keyed by id.
    pub fn busy_by_antenna(&self) -> BTreeMap<&str, WindowSet> {
        let mut raw: BTreeMap<&str, Vec<TimeWindow>> = BTreeMap::new();
        for t in &self.tracks {
            for a in &t.antennas {
                raw.entry(a.as_str()).or_default().push(t.busy_window());
            }
        }
        raw.into_iter()
            .map(|(k, v)| (k, WindowSet::from_windows(v)))
            .collect()
    }

    pub fn total_on_air_s(&self) -> Seconds {
        self.tracks.iter().map(Track::on_air_s).sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serializes");
        s.push('\n');
        s
    }

    /// Flat CSV: `request_id,mission,combo,start_s,end_s,duration_s`. Array
    /// combinations are joined with `+`.
    pub fn to_csv(&self, problem: &WeekProblem) -> String {
        let mut out = String::from("request_id,mission,combo,start_s,end_s,duration_s\n");
        for t in &self.tracks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                t.request_id,
                problem.requests[t.request_id].mission,
                t.antennas.join("+"),
                t.window.start(),
                t.window.end(),
                t.on_air_s()
            );
        }
        out
    }
}

pub fn hours(s: Seconds) -> f64 {
    s as f64 / SECONDS_PER_HOUR as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(pairs: &[(Seconds, Seconds)]) -> WindowSet {
        WindowSet::from_pairs(pairs).unwrap()
    }

    const MINIMAL: &str = r#"{
        "week_label": "w",
        "max_requests": 500,
        "antennas": [{"id": "DSS-14", "bounds": [0, 604800], "maintenance": []}],
        "requests": [{
            "id": 0, "mission": "M1",
            "requested_duration_s": 7200, "min_duration_s": 3600,
            "setup_s": 3600, "teardown_s": 900,
            "combos": [{"antennas": ["DSS-14"], "view_periods": [[0, 20000]]}]
        }]
    }"#;

    #[test]
    fn loads_minimal_document() {
        let p = WeekProblem::from_json(MINIMAL).unwrap();
        assert_eq!(p.n_requests(), 1);
        assert_eq!(p.requests[0].combos[0].view_periods, ws(&[(0, 20000)]));
    }

    #[test]
    fn rejects_unknown_antenna() {
        let doc = MINIMAL.replace(r#"["DSS-14"], "view"#, r#"["DSS-99"], "view"#);
        match WeekProblem::from_json(&doc) {
            Err(Error::InvalidRequest { request_id: 0, reason }) => assert!(reason.contains("DSS-99")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_field() {
        let doc = MINIMAL.replace(r#""min_duration_s": 3600,"#, "");
        match WeekProblem::from_json(&doc) {
            Err(Error::Parse(msg)) => assert!(msg.contains("min_duration_s"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_min_above_requested() {
        let doc = MINIMAL.replace(r#""min_duration_s": 3600"#, r#""min_duration_s": 9000"#);
        assert!(matches!(
            WeekProblem::from_json(&doc),
            Err(Error::InvalidRequest { request_id: 0, .. })
        ));
    }

    #[test]
    fn rejects_sparse_ids() {
        let doc = MINIMAL.replace(r#""id": 0"#, r#""id": 3"#);
        assert!(matches!(
            WeekProblem::from_json(&doc),
            Err(Error::InvalidRequest { request_id: 3, .. })
        ));
    }

    fn request(combos: &[&[&str]], min: Seconds) -> TrackRequest {
        TrackRequest {
            id: 0,
            mission: "M".into(),
            requested_duration_s: min.max(3600),
            min_duration_s: min,
            setup_s: 0,
            teardown_s: 0,
            combos: combos
                .iter()
                .map(|c| AntennaCombo {
                    antennas: c.iter().map(|s| s.to_string()).collect(),
                    view_periods: WindowSet::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn derive_single_antenna_drops_short_windows() {
        let raw = BTreeMap::from([("A".to_string(), ws(&[(0, 1000), (2000, 9000)]))]);
        let vps = derive_valid_vps(&request(&[&["A"]], 3600), &raw, &BTreeMap::new()).unwrap();
        assert_eq!(vps, vec![ws(&[(2000, 9000)])]);
    }

    #[test]
    fn derive_disjoint_array_is_empty() {
        let raw = BTreeMap::from([
            ("A".to_string(), ws(&[(0, 5000)])),
            ("B".to_string(), ws(&[(6000, 9000)])),
        ]);
        let vps = derive_valid_vps(&request(&[&["A", "B"]], 60), &raw, &BTreeMap::new()).unwrap();
        assert!(vps[0].is_empty());
    }

    #[test]
    fn derive_subtracts_maintenance_then_filters() {
        let raw = BTreeMap::from([("A".to_string(), ws(&[(0, 7200)]))]);
        let maint = BTreeMap::from([("A".to_string(), ws(&[(3000, 4000)]))]);
        let keep = derive_valid_vps(&request(&[&["A"]], 3000), &raw, &maint).unwrap();
        assert_eq!(keep[0], ws(&[(0, 3000), (4000, 7200)]));
        let drop_first = derive_valid_vps(&request(&[&["A"]], 3100), &raw, &maint).unwrap();
        assert_eq!(drop_first[0], ws(&[(4000, 7200)]));
        // [4000, 7200) is only 3200 s long.
        let drop_both = derive_valid_vps(&request(&[&["A"]], 3300), &raw, &maint).unwrap();
        assert!(drop_both[0].is_empty());
    }

    #[test]
    fn derive_missing_antenna_is_config_error() {
        let err = derive_valid_vps(&request(&[&["Z"]], 60), &BTreeMap::new(), &BTreeMap::new());
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
