//! Successful-login detection over normalized log events.

use std::net::Ipv4Addr;

use crate::logparse::{LogCategory, LogEvent};

use super::{AttackCategory, AttackEvent, Evidence, ServiceKind};

/// Every LOGIN_SUCCESS log event yields one event with the service
/// drawn from the message. LOGIN_FAILURE events feed the brute-force
/// detector instead.
pub fn detect_logins(events: &[LogEvent]) -> Vec<AttackEvent> {
    events
        .iter()
        .filter(|ev| ev.category == LogCategory::LoginSuccess)
        .map(|ev| {
            let src = ev.src_ip.unwrap_or(Ipv4Addr::UNSPECIFIED);
            let mut out = AttackEvent::new(AttackCategory::LoginSuccess, &ev.sensor_id, src);
            out.ts_start = ev.ts;
            out.ts_end = ev.ts;
            out.service = ev.service.as_deref().and_then(ServiceKind::from_log_name);
            out.evidence.push(Evidence::LogLine(ev.line_no));
            if let Some(actor) = &ev.actor {
                out.attributes.insert("account".to_string(), actor.clone());
            }
            out
        })
        .collect()
}
