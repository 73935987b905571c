//! Campaign detection, attack dispersal, AS/country attribution,
//! tunnel-endpoint heatmaps and flow/log time series.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

use crate::classify::{AttackCategory, AttackEvent};
use crate::logparse::{LogCategory, LogEvent};
use crate::model::{stable_hash64, FlowRecord, Micros, MICROS_PER_DAY};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("empty input")]
    EmptyInput,
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CampaignTrigger {
    VolumeOutlier,
    StaticSrcPort,
    ServiceSweep,
}

impl CampaignTrigger {
    pub fn name(&self) -> &'static str {
        match self {
            CampaignTrigger::VolumeOutlier => "VOLUME_OUTLIER",
            CampaignTrigger::StaticSrcPort => "STATIC_SRC_PORT",
            CampaignTrigger::ServiceSweep => "SERVICE_SWEEP",
        }
    }

    pub fn parse(s: &str) -> Option<CampaignTrigger> {
        match s {
            "VOLUME_OUTLIER" => Some(CampaignTrigger::VolumeOutlier),
            "STATIC_SRC_PORT" => Some(CampaignTrigger::StaticSrcPort),
            "SERVICE_SWEEP" => Some(CampaignTrigger::ServiceSweep),
            _ => None,
        }
    }
}

/// A sustained series of offensive actions from one source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Campaign {
    pub campaign_id: String,
    pub src_ips: BTreeSet<Ipv4Addr>,
    pub ts_start: Micros,
    pub ts_end: Micros,
    pub targeted_ports: BTreeSet<u16>,
    pub sensors_hit: BTreeSet<String>,
    pub trigger: CampaignTrigger,
    pub flow_count: u64,
}

#[derive(Debug, Clone)]
pub struct CampaignParams {
    pub min_flows: u64,
    pub static_port_frac: f64,
    pub volume_sigma: f64,
}

impl Default for CampaignParams {
    fn default() -> CampaignParams {
        CampaignParams {
            min_flows: 100,
            static_port_frac: 0.9,
            volume_sigma: 3.0,
        }
    }
}

/// Group flows by source and flag campaign behaviour: a dominant
/// static source port across several destination ports, one service
/// port swept across sensors, or a daily volume outlier. A source
/// qualifying for several triggers is reported once under the most
/// specific one (static port > sweep > volume).
pub fn detect_campaigns(flows: &[FlowRecord], params: &CampaignParams) -> Vec<Campaign> {
    let mut by_src: BTreeMap<Ipv4Addr, Vec<&FlowRecord>> = BTreeMap::new();
    for f in flows {
        by_src.entry(f.initiator_ip).or_default().push(f);
    }

    // population of per-(source, day) flow counts for the outlier rule
    let mut daily: HashMap<(Ipv4Addr, i64), u64> = HashMap::new();
    for f in flows {
        *daily
            .entry((f.initiator_ip, f.first_ts.div_euclid(MICROS_PER_DAY)))
            .or_insert(0) += 1;
    }
    let (mean, stddev) = mean_stddev(daily.values().map(|&c| c as f64));

    let mut campaigns = Vec::new();
    for (src, group) in &by_src {
        let flow_count = group.len() as u64;
        if flow_count < params.min_flows {
            continue;
        }
        let mut src_port_counts: BTreeMap<u16, u64> = BTreeMap::new();
        let mut dst_ports: BTreeSet<u16> = BTreeSet::new();
        let mut dst_port_counts: BTreeMap<u16, u64> = BTreeMap::new();
        let mut sensors: BTreeSet<String> = BTreeSet::new();
        let mut sensors_per_dst: BTreeMap<u16, BTreeSet<&str>> = BTreeMap::new();
        for f in group {
            *src_port_counts.entry(f.initiator_port).or_insert(0) += 1;
            dst_ports.insert(f.responder_port);
            *dst_port_counts.entry(f.responder_port).or_insert(0) += 1;
            sensors.insert(f.sensor_id.clone());
            sensors_per_dst
                .entry(f.responder_port)
                .or_default()
                .insert(f.sensor_id.as_str());
        }

        let static_port = src_port_counts
            .iter()
            .any(|(_, &c)| c as f64 >= params.static_port_frac * flow_count as f64)
            && dst_ports.len() >= 3;

        let sweep = dst_port_counts.iter().any(|(port, &count)| {
            count >= params.min_flows && sensors_per_dst[port].len() >= 3
        });

        let volume = daily
            .iter()
            .filter(|((ip, _), _)| ip == src)
            .any(|(_, &c)| c as f64 > mean + params.volume_sigma * stddev);

        let trigger = if static_port {
            CampaignTrigger::StaticSrcPort
        } else if sweep {
            CampaignTrigger::ServiceSweep
        } else if volume {
            CampaignTrigger::VolumeOutlier
        } else {
            continue;
        };

        let ts_start = group.iter().map(|f| f.first_ts).min().unwrap();
        let ts_end = group.iter().map(|f| f.last_ts).max().unwrap();
        let campaign_id = format!(
            "cmp-{:016x}",
            stable_hash64(&[
                &u32::from(*src).to_be_bytes(),
                trigger.name().as_bytes(),
                &ts_start.to_be_bytes(),
            ])
        );
        campaigns.push(Campaign {
            campaign_id,
            src_ips: BTreeSet::from([*src]),
            ts_start,
            ts_end,
            targeted_ports: dst_ports,
            sensors_hit: sensors,
            trigger,
            flow_count,
        });
    }
    campaigns.sort_by(|a, b| {
        b.flow_count
            .cmp(&a.flow_count)
            .then_with(|| a.src_ips.cmp(&b.src_ips))
    });
    campaigns
}

fn mean_stddev(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
    (mean, var.sqrt())
}

/// Dispersal histogram: how many sensors each attacking source
/// touched. Fractions are over attributable sources and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersalHistogram {
    pub counts: BTreeMap<u32, u64>,
    pub fractions: BTreeMap<u32, f64>,
    pub total_sources: u64,
}

pub fn dispersal(events: &[AttackEvent]) -> Result<DispersalHistogram, AnalyticsError> {
    if events.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let mut sensors_per_src: BTreeMap<Ipv4Addr, BTreeSet<&str>> = BTreeMap::new();
    for ev in events {
        if ev.src_ip.is_unspecified() {
            continue; // log-only events without a source address
        }
        sensors_per_src
            .entry(ev.src_ip)
            .or_default()
            .insert(ev.sensor_id.as_str());
    }
    if sensors_per_src.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let total = sensors_per_src.len() as u64;
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for sensors in sensors_per_src.values() {
        *counts.entry(sensors.len() as u32).or_insert(0) += 1;
    }
    let fractions = counts
        .iter()
        .map(|(&k, &c)| (k, c as f64 / total as f64))
        .collect();
    Ok(DispersalHistogram {
        counts,
        fractions,
        total_sources: total,
    })
}

/// One CIDR -> (country, ASN) mapping row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributionRecord {
    pub cidr: crate::filter::Cidr,
    pub country_code: String,
    pub asn: u32,
    pub as_name: String,
}

/// Longest-prefix-match attribution table.
#[derive(Debug, Default)]
pub struct AttributionTable {
    // per prefix length, masked network -> record index
    by_len: Vec<HashMap<u32, usize>>,
    records: Vec<AttributionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attribution {
    Known {
        country: String,
        asn: u32,
        as_name: String,
    },
    Unknown,
}

impl AttributionTable {
    pub fn new() -> AttributionTable {
        AttributionTable {
            by_len: (0..=32).map(|_| HashMap::new()).collect(),
            records: Vec::new(),
        }
    }

    pub fn insert(&mut self, rec: AttributionRecord) {
        let len = rec.cidr.prefix as usize;
        let net = mask(u32::from(rec.cidr.addr), rec.cidr.prefix);
        let idx = self.records.len();
        self.records.push(rec);
        self.by_len[len].insert(net, idx);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Longest-prefix match; UNKNOWN when no prefix covers the address.
    pub fn attribute(&self, ip: Ipv4Addr) -> Attribution {
        let val = u32::from(ip);
        for len in (0..=32u8).rev() {
            if self.by_len[len as usize].is_empty() {
                continue;
            }
            if let Some(&idx) = self.by_len[len as usize].get(&mask(val, len)) {
                let rec = &self.records[idx];
                return Attribution::Known {
                    country: rec.country_code.clone(),
                    asn: rec.asn,
                    as_name: rec.as_name.clone(),
                };
            }
        }
        Attribution::Unknown
    }

    /// Load `cidr,country_alpha3,asn,as_name` lines; as_name may be
    /// double-quoted when it contains commas.
    pub fn parse_str(text: &str, file: &str) -> Result<AttributionTable, AnalyticsError> {
        let mut table = AttributionTable::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| AnalyticsError::Parse {
                file: file.to_string(),
                line: lineno,
                msg,
            };
            let mut parts = line.splitn(4, ',');
            let cidr_s = parts.next().ok_or_else(|| err("missing cidr".into()))?;
            let country = parts.next().ok_or_else(|| err("missing country".into()))?;
            let asn_s = parts.next().ok_or_else(|| err("missing asn".into()))?;
            let name_raw = parts.next().unwrap_or("").trim();
            let (addr_s, len_s) = cidr_s
                .split_once('/')
                .ok_or_else(|| err(format!("bad cidr `{cidr_s}`")))?;
            let addr: Ipv4Addr = addr_s
                .parse()
                .map_err(|_| err(format!("bad address `{addr_s}`")))?;
            let prefix: u8 = len_s
                .parse()
                .map_err(|_| err(format!("bad prefix `{len_s}`")))?;
            if prefix > 32 {
                return Err(err(format!("prefix {prefix} exceeds 32")));
            }
            let asn: u32 = asn_s
                .trim()
                .trim_start_matches("AS")
                .parse()
                .map_err(|_| err(format!("bad asn `{asn_s}`")))?;
            let as_name = name_raw.trim_matches('"').to_string();
            table.insert(AttributionRecord {
                cidr: crate::filter::Cidr { addr, prefix },
                country_code: country.trim().to_string(),
                asn,
                as_name,
            });
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<AttributionTable, AnalyticsError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnalyticsError::Parse {
            file: path.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        AttributionTable::parse_str(&text, &path.display().to_string())
    }
}

fn mask(val: u32, prefix: u8) -> u32 {
    if prefix == 0 {
        0
    } else {
        val & (u32::MAX << (32 - prefix as u32))
    }
}

/// Tunnel endpoint x sensor matrix with sorted marginals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EndpointHeatmap {
    pub cells: BTreeMap<(Ipv4Addr, String), u64>,
    /// (endpoint, tunnel count), descending, ties by ascending ip.
    pub endpoint_totals: Vec<(Ipv4Addr, u64)>,
    /// (sensor, tunnel count), descending, ties by ascending name.
    pub sensor_totals: Vec<(String, u64)>,
    pub total: u64,
}

pub fn endpoint_heatmap(events: &[AttackEvent]) -> EndpointHeatmap {
    let mut hm = EndpointHeatmap::default();
    let mut per_endpoint: BTreeMap<Ipv4Addr, u64> = BTreeMap::new();
    let mut per_sensor: BTreeMap<String, u64> = BTreeMap::new();
    for ev in events {
        if ev.category != AttackCategory::TunnelEstablished {
            continue;
        }
        let endpoint = match ev.tunnel_endpoint {
            Some(ep) => ep,
            None => continue,
        };
        *hm.cells.entry((endpoint, ev.sensor_id.clone())).or_insert(0) += 1;
        *per_endpoint.entry(endpoint).or_insert(0) += 1;
        *per_sensor.entry(ev.sensor_id.clone()).or_insert(0) += 1;
        hm.total += 1;
    }
    hm.endpoint_totals = sorted_desc(per_endpoint);
    hm.sensor_totals = sorted_desc(per_sensor);
    hm
}

fn sorted_desc<K: Ord + Clone>(map: BTreeMap<K, u64>) -> Vec<(K, u64)> {
    let mut v: Vec<(K, u64)> = map.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    Hour,
    Day,
}

impl Bucket {
    pub fn micros(&self) -> i64 {
        match self {
            Bucket::Hour => 3_600 * 1_000_000,
            Bucket::Day => MICROS_PER_DAY,
        }
    }

    pub fn parse(s: &str) -> Option<Bucket> {
        match s {
            "hour" => Some(Bucket::Hour),
            "day" => Some(Bucket::Day),
            _ => None,
        }
    }
}

/// Aligned, zero-filled flow and hostile-log-event series plus their
/// Pearson correlation (None when either series has zero variance).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub bucket: Bucket,
    pub start_bucket: i64,
    pub flow_counts: Vec<u64>,
    pub log_counts: Vec<u64>,
    pub correlation: Option<f64>,
}

pub fn timeseries(flows: &[FlowRecord], events: &[LogEvent], bucket: Bucket) -> TimeSeries {
    let unit = bucket.micros();
    let hostile = |ev: &&LogEvent| ev.category != LogCategory::Other;
    let flow_buckets: Vec<i64> = flows.iter().map(|f| f.first_ts.div_euclid(unit)).collect();
    let log_buckets: Vec<i64> = events
        .iter()
        .filter(hostile)
        .map(|e| e.ts.div_euclid(unit))
        .collect();
    let lo = flow_buckets.iter().chain(&log_buckets).min().copied();
    let hi = flow_buckets.iter().chain(&log_buckets).max().copied();
    let (lo, hi) = match (lo, hi) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return TimeSeries {
                bucket,
                start_bucket: 0,
                flow_counts: Vec::new(),
                log_counts: Vec::new(),
                correlation: None,
            }
        }
    };
    let n = (hi - lo + 1) as usize;
    let mut flow_counts = vec![0u64; n];
    let mut log_counts = vec![0u64; n];
    for b in flow_buckets {
        flow_counts[(b - lo) as usize] += 1;
    }
    for b in log_buckets {
        log_counts[(b - lo) as usize] += 1;
    }
    let correlation = pearson(&flow_counts, &log_counts);
    TimeSeries {
        bucket,
        start_bucket: lo,
        flow_counts,
        log_counts,
        correlation,
    }
}

/// Pearson correlation; None for zero variance or length < 2.
pub fn pearson(a: &[u64], b: &[u64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<u64>() as f64 / n;
    let mb = b.iter().sum::<u64>() as f64 / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va.sqrt() * vb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowId, FlowState, IpProto, TcpFlags};

    fn flow(src: Ipv4Addr, sport: u16, dport: u16, sensor: &str, ts: Micros) -> FlowRecord {
        FlowRecord {
            flow_id: FlowId(stable_hash64(&[
                &u32::from(src).to_be_bytes(),
                &sport.to_be_bytes(),
                &dport.to_be_bytes(),
                &ts.to_be_bytes(),
            ])),
            sensor_id: sensor.to_string(),
            initiator_ip: src,
            initiator_port: sport,
            responder_ip: Ipv4Addr::new(192, 0, 2, 1),
            responder_port: dport,
            ip_proto: IpProto::Tcp,
            first_ts: ts,
            last_ts: ts,
            fwd_packets: 1,
            rev_packets: 0,
            fwd_bytes: 0,
            rev_bytes: 0,
            flag_union: TcpFlags::SYN,
            state: FlowState::SynOnly,
        }
    }

    #[test]
    fn static_src_port_campaign_detected() {
        let src = Ipv4Addr::new(198, 18, 5, 171);
        let mut flows = Vec::new();
        for i in 0..500i64 {
            flows.push(flow(src, 55453, 1000 + (i % 12) as u16, "s1", i * 1_000_000));
        }
        // background noise below min_flows
        for i in 0..50i64 {
            flows.push(flow(
                Ipv4Addr::new(198, 18, 9, (i % 20) as u8),
                40000 + i as u16,
                80,
                "s1",
                i * 2_000_000,
            ));
        }
        let campaigns = detect_campaigns(&flows, &CampaignParams::default());
        assert_eq!(campaigns.len(), 1);
        assert_eq!(campaigns[0].trigger, CampaignTrigger::StaticSrcPort);
        assert_eq!(campaigns[0].flow_count, 500);
        assert!(campaigns[0].targeted_ports.len() >= 3);
    }

    #[test]
    fn uniform_background_has_no_campaigns() {
        let mut flows = Vec::new();
        for i in 0..200i64 {
            flows.push(flow(
                Ipv4Addr::new(198, 18, 1, (i % 50) as u8),
                41000 + i as u16,
                80,
                "s1",
                i * 1_000_000,
            ));
        }
        assert!(detect_campaigns(&flows, &CampaignParams::default()).is_empty());
    }

    #[test]
    fn api_sweep_campaign_detected() {
        let src = Ipv4Addr::new(198, 18, 7, 70);
        let sensors = ["au", "br", "cn", "in", "nl", "us"];
        let mut flows = Vec::new();
        for i in 0..200i64 {
            flows.push(flow(
                src,
                42000 + i as u16,
                8728,
                sensors[(i % 6) as usize],
                i * 1_000_000,
            ));
        }
        let campaigns = detect_campaigns(&flows, &CampaignParams::default());
        assert_eq!(campaigns.len(), 1);
        assert_eq!(campaigns[0].trigger, CampaignTrigger::ServiceSweep);
        assert_eq!(campaigns[0].sensors_hit.len(), 6);
    }

    #[test]
    fn volume_outlier_campaign_detected() {
        let mut flows = Vec::new();
        // steady background: 60 sources, 4 flows/day over 3 days
        for day in 0..3i64 {
            for s in 0..60u8 {
                for k in 0..4i64 {
                    flows.push(flow(
                        Ipv4Addr::new(198, 18, 2, s),
                        43000 + k as u16,
                        80,
                        "s1",
                        day * MICROS_PER_DAY + k * 1_000_000 + s as i64,
                    ));
                }
            }
        }
        // one source bursts on day 1 with varying src ports on one port
        // at one sensor (neither static-port nor sweep applies)
        let burst = Ipv4Addr::new(198, 18, 3, 9);
        for i in 0..150i64 {
            flows.push(flow(
                burst,
                (44000 + i) as u16,
                80,
                "s1",
                MICROS_PER_DAY + i * 500_000,
            ));
        }
        let campaigns = detect_campaigns(&flows, &CampaignParams::default());
        assert_eq!(campaigns.len(), 1);
        assert_eq!(campaigns[0].trigger, CampaignTrigger::VolumeOutlier);
        assert_eq!(campaigns[0].src_ips.iter().next(), Some(&burst));
    }

    #[test]
    fn campaign_detection_is_permutation_invariant() {
        let src = Ipv4Addr::new(198, 18, 5, 171);
        let mut flows: Vec<FlowRecord> = (0..200i64)
            .map(|i| flow(src, 55453, 1000 + (i % 12) as u16, "s1", i * 1_000_000))
            .collect();
        let a = detect_campaigns(&flows, &CampaignParams::default());
        flows.reverse();
        let b = detect_campaigns(&flows, &CampaignParams::default());
        assert_eq!(a, b);
    }

    fn event(src: Ipv4Addr, sensor: &str) -> AttackEvent {
        let mut ev = AttackEvent::new(AttackCategory::MiraiScan, sensor, src);
        ev.ts_start = 1;
        ev.ts_end = 1;
        ev
    }

    #[test]
    fn dispersal_single_sensor_sources() {
        let events = vec![
            event(Ipv4Addr::new(198, 18, 0, 1), "a"),
            event(Ipv4Addr::new(198, 18, 0, 2), "a"),
            event(Ipv4Addr::new(198, 18, 0, 3), "b"),
        ];
        let hist = dispersal(&events).unwrap();
        assert_eq!(hist.fractions.get(&1), Some(&1.0));
        assert_eq!(hist.total_sources, 3);
    }

    #[test]
    fn dispersal_mixed_fractions() {
        // 67 one-sensor, 13 two-sensor, 20 three-sensor sources
        let sensors = ["a", "b", "c"];
        let mut events = Vec::new();
        for i in 0..100u8 {
            let src = Ipv4Addr::new(198, 18, 1, i);
            let k = if i < 67 {
                1
            } else if i < 80 {
                2
            } else {
                3
            };
            for sensor in sensors.iter().take(k) {
                events.push(event(src, sensor));
            }
        }
        let hist = dispersal(&events).unwrap();
        assert_eq!(hist.fractions.get(&1), Some(&0.67));
        assert_eq!(hist.fractions.get(&2), Some(&0.13));
        assert_eq!(hist.fractions.get(&3), Some(&0.2));
        let sum: f64 = hist.fractions.values().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dispersal_all_sensors_single_ip() {
        let src = Ipv4Addr::new(198, 18, 0, 9);
        let events: Vec<AttackEvent> = ["a", "b", "c", "d", "e", "f"]
            .iter()
            .map(|s| event(src, s))
            .collect();
        let hist = dispersal(&events).unwrap();
        assert_eq!(hist.fractions.get(&6), Some(&1.0));
    }

    #[test]
    fn dispersal_empty_is_error() {
        assert_eq!(dispersal(&[]).err(), Some(AnalyticsError::EmptyInput));
    }

    #[test]
    fn attribute_single_prefix() {
        let table =
            AttributionTable::parse_str("10.0.0.0/8,KOR,4766,Korea Telecom\n", "t").unwrap();
        match table.attribute(Ipv4Addr::new(10, 1, 2, 3)) {
            Attribution::Known { country, asn, as_name } => {
                assert_eq!(country, "KOR");
                assert_eq!(asn, 4766);
                assert_eq!(as_name, "Korea Telecom");
            }
            Attribution::Unknown => panic!("expected attribution"),
        }
    }

    #[test]
    fn longest_prefix_wins() {
        let table = AttributionTable::parse_str(
            "10.0.0.0/8,KOR,4766,Korea Telecom\n10.1.0.0/16,SYC,202425,\"IP Volume, Networks\"\n",
            "t",
        )
        .unwrap();
        match table.attribute(Ipv4Addr::new(10, 1, 2, 3)) {
            Attribution::Known { country, as_name, .. } => {
                assert_eq!(country, "SYC");
                assert_eq!(as_name, "IP Volume, Networks");
            }
            _ => panic!(),
        }
        match table.attribute(Ipv4Addr::new(10, 200, 0, 1)) {
            Attribution::Known { country, .. } => assert_eq!(country, "KOR"),
            _ => panic!(),
        }
    }

    #[test]
    fn unmapped_address_is_unknown() {
        let table = AttributionTable::parse_str("10.0.0.0/8,KOR,4766,KT\n", "t").unwrap();
        assert_eq!(
            table.attribute(Ipv4Addr::new(203, 0, 113, 9)),
            Attribution::Unknown
        );
    }

    fn tunnel_event(ep: Ipv4Addr, sensor: &str) -> AttackEvent {
        let mut ev = AttackEvent::new(AttackCategory::TunnelEstablished, sensor, ep);
        ev.tunnel_endpoint = Some(ep);
        ev.ts_start = 1;
        ev.ts_end = 1;
        ev
    }

    #[test]
    fn heatmap_single_cell() {
        let ep = Ipv4Addr::new(203, 0, 113, 46);
        let events = vec![
            tunnel_event(ep, "us"),
            tunnel_event(ep, "us"),
            tunnel_event(ep, "us"),
        ];
        let hm = endpoint_heatmap(&events);
        assert_eq!(hm.cells.get(&(ep, "us".to_string())), Some(&3));
        assert_eq!(hm.total, 3);
        assert_eq!(hm.endpoint_totals, vec![(ep, 3)]);
    }

    #[test]
    fn heatmap_empty() {
        let hm = endpoint_heatmap(&[]);
        assert!(hm.cells.is_empty());
        assert_eq!(hm.total, 0);
    }

    #[test]
    fn persistent_endpoint_row_covers_all_sensors() {
        // one endpoint used at all 6 sensors on 116 distinct days
        let ep = Ipv4Addr::new(203, 0, 113, 46);
        let sensors = ["au", "br", "cn", "in", "nl", "us"];
        let mut events = Vec::new();
        for day in 0..116i64 {
            let mut ev = tunnel_event(ep, sensors[(day % 6) as usize]);
            ev.ts_start = day * MICROS_PER_DAY;
            ev.ts_end = ev.ts_start;
            events.push(ev);
        }
        let hm = endpoint_heatmap(&events);
        assert_eq!(hm.endpoint_totals, vec![(ep, 116)]);
        let row_sensors = hm.cells.keys().filter(|(e, _)| *e == ep).count();
        assert_eq!(row_sensors, 6, "row spans every sensor");
        let row_sum: u64 = hm
            .cells
            .iter()
            .filter(|((e, _), _)| *e == ep)
            .map(|(_, c)| c)
            .sum();
        assert_eq!(row_sum, 116);
    }

    #[test]
    fn heatmap_total_equals_event_count_and_ties_by_ip() {
        let a = Ipv4Addr::new(203, 0, 113, 2);
        let b = Ipv4Addr::new(203, 0, 113, 1);
        let events = vec![tunnel_event(a, "us"), tunnel_event(b, "br")];
        let hm = endpoint_heatmap(&events);
        assert_eq!(hm.total, 2);
        assert_eq!(hm.endpoint_totals[0].0, b, "tie broken by ascending ip");
    }

    #[test]
    fn timeseries_zero_variance_has_no_correlation() {
        let flows: Vec<FlowRecord> = (0..3)
            .map(|d| flow(Ipv4Addr::new(198, 18, 0, 1), 40000, 80, "s1", d * MICROS_PER_DAY))
            .collect();
        let ts = timeseries(&flows, &[], Bucket::Day);
        assert_eq!(ts.flow_counts, vec![1, 1, 1]);
        assert_eq!(ts.correlation, None);
    }

    #[test]
    fn timeseries_proportional_series_correlates() {
        let mut flows = Vec::new();
        let mut events = Vec::new();
        for day in 0..5i64 {
            for i in 0..(day + 1) * 2 {
                flows.push(flow(
                    Ipv4Addr::new(198, 18, 0, 1),
                    40000 + i as u16,
                    80,
                    "s1",
                    day * MICROS_PER_DAY + i,
                ));
            }
            for i in 0..(day + 1) {
                events.push(crate::logparse::LogEvent {
                    ts: day * MICROS_PER_DAY + i,
                    sensor_id: "s1".into(),
                    topics: vec![],
                    message: String::new(),
                    category: LogCategory::DnsChanged,
                    actor: None,
                    service: None,
                    src_ip: None,
                    line_no: 0,
                });
            }
        }
        let ts = timeseries(&flows, &events, Bucket::Day);
        let corr = ts.correlation.unwrap();
        assert!((corr - 1.0).abs() < 1e-9, "correlation {corr}");
    }

    #[test]
    fn timeseries_single_bucket() {
        let flows = vec![flow(Ipv4Addr::new(198, 18, 0, 1), 40000, 80, "s1", 5)];
        let ts = timeseries(&flows, &[], Bucket::Day);
        assert_eq!(ts.flow_counts.len(), 1);
    }

    #[test]
    fn timeseries_zero_fills_empty_buckets() {
        let flows = vec![
            flow(Ipv4Addr::new(198, 18, 0, 1), 40000, 80, "s1", 0),
            flow(Ipv4Addr::new(198, 18, 0, 1), 40001, 80, "s1", 3 * MICROS_PER_DAY),
        ];
        let ts = timeseries(&flows, &[], Bucket::Day);
        assert_eq!(ts.flow_counts, vec![1, 0, 0, 1]);
    }
}
