//! LOG signature matching over normalized log events.

use std::net::Ipv4Addr;

use crate::logparse::LogEvent;
use crate::sigdb::SignatureDb;

use super::{AttackEvent, Evidence};

/// Apply every LOG signature's anchored regex to every event message;
/// one event per (log line, signature) pair.
pub fn classify_log_signatures(events: &[LogEvent], db: &SignatureDb) -> Vec<AttackEvent> {
    let mut out = Vec::new();
    for sig in db.log_signatures() {
        let re = match sig.log_regex() {
            Some(re) => re,
            None => continue,
        };
        for ev in events {
            if !re.is_match(ev.message.as_bytes()) {
                continue;
            }
            let src = ev.src_ip.unwrap_or(Ipv4Addr::UNSPECIFIED);
            let mut event = AttackEvent::new(sig.category, &ev.sensor_id, src);
            event.signature_id = Some(sig.id.clone());
            event.cve_id = sig.cve_id.clone();
            event.ts_start = ev.ts;
            event.ts_end = ev.ts;
            event.evidence.push(Evidence::LogLine(ev.line_no));
            event.attributes = sig.attributes.clone();
            if let Some(actor) = &ev.actor {
                event
                    .attributes
                    .insert("account".to_string(), actor.clone());
            }
            out.push(event);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::AttackCategory;
    use crate::logparse::parse_log_text;

    #[test]
    fn settings_change_matches_generic_signature() {
        let events = parse_log_text(
            "2019-08-02 03:04:05 system,info SSTP server settings changed by admin\n\
             2019-08-02 03:04:06 system,info new script scheduled by admin\n",
            "s1",
        );
        let db = SignatureDb::builtin();
        let out = classify_log_signatures(&events, &db);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].category, AttackCategory::OtherSignature);
        assert_eq!(out[0].signature_id.as_deref(), Some("sstp-settings-changed"));
        assert_eq!(out[0].attributes.get("account"), Some(&"admin".to_string()));
    }

    #[test]
    fn anchoring_prevents_substring_matches() {
        let events = parse_log_text(
            "2019-08-02 03:04:05 system,info prefix SSTP server settings changed by admin suffix\n",
            "s1",
        );
        let db = SignatureDb::builtin();
        assert!(classify_log_signatures(&events, &db).is_empty());
    }
}
