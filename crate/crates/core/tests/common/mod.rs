//! Shared helpers for integration tests.

use std::fs;
use std::path::{Path, PathBuf};

use tiktriage::classify::{prepare_flows, FlowData};
use tiktriage::logparse::{parse_log_text, LogEvent};
use tiktriage::model::parse_capture_file;

pub fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tiktriage-t-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Read a generated corpus back through the normal parsers.
pub fn read_corpus(dir: &Path, sensors: &[String]) -> (Vec<FlowData>, Vec<LogEvent>, u64) {
    let mut packets = Vec::new();
    let mut events = Vec::new();
    let mut packet_count = 0u64;
    for sensor in sensors {
        let pcap_dir = dir.join(sensor).join("pcap");
        if pcap_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&pcap_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            paths.sort();
            for path in paths {
                let bytes = fs::read(&path).unwrap();
                let (pkts, stats) = parse_capture_file(&bytes, sensor).unwrap();
                assert_eq!(stats.malformed, 0, "{}", path.display());
                packet_count += pkts.len() as u64;
                packets.extend(pkts);
            }
        }
        let log_dir = dir.join(sensor).join("logs");
        if log_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&log_dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            paths.sort();
            for path in paths {
                let text = fs::read_to_string(&path).unwrap();
                events.extend(parse_log_text(&text, sensor));
            }
        }
    }
    (prepare_flows(packets, 60), events, packet_count)
}
