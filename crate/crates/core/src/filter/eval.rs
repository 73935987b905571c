//! Filter evaluation over decoded packets, standard BPF semantics:
//! port qualifiers apply to TCP/UDP only, `either` direction matches
//! source or destination.

use crate::model::{IpProto, PacketRecord};

use super::{Dir, FilterAst, ProtoKind};

fn proto_matches(kind: ProtoKind, pkt: &PacketRecord) -> bool {
    matches!(
        (kind, pkt.ip_proto),
        (ProtoKind::Tcp, IpProto::Tcp)
            | (ProtoKind::Udp, IpProto::Udp)
            | (ProtoKind::Icmp, IpProto::Icmp)
            | (ProtoKind::Gre, IpProto::Gre)
    )
}

fn dir_match<T: Copy>(dir: Dir, src: T, dst: T, pred: impl Fn(T) -> bool) -> bool {
    match dir {
        Dir::Src => pred(src),
        Dir::Dst => pred(dst),
        Dir::Either => pred(src) || pred(dst),
    }
}

pub fn eval_filter(ast: &FilterAst, pkt: &PacketRecord) -> bool {
    match ast {
        FilterAst::And(l, r) => eval_filter(l, pkt) && eval_filter(r, pkt),
        FilterAst::Or(l, r) => eval_filter(l, pkt) || eval_filter(r, pkt),
        FilterAst::Not(x) => !eval_filter(x, pkt),
        FilterAst::Proto(p) => proto_matches(*p, pkt),
        FilterAst::Host(dir, ip) => dir_match(*dir, pkt.src_ip, pkt.dst_ip, |a| a == *ip),
        FilterAst::Net(dir, net) => dir_match(*dir, pkt.src_ip, pkt.dst_ip, |a| net.contains(a)),
        FilterAst::Port(dir, n) => {
            pkt.ip_proto.has_ports() && dir_match(*dir, pkt.src_port, pkt.dst_port, |p| p == *n)
        }
        FilterAst::PortRange(dir, lo, hi) => {
            pkt.ip_proto.has_ports()
                && dir_match(*dir, pkt.src_port, pkt.dst_port, |p| p >= *lo && p <= *hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::parse_filter;
    use crate::model::TcpFlags;
    use std::net::Ipv4Addr;

    fn pkt(proto: IpProto, src: [u8; 4], dst: [u8; 4], sport: u16, dport: u16) -> PacketRecord {
        PacketRecord {
            ts: 0,
            sensor_id: "s".into(),
            src_ip: src.into(),
            dst_ip: dst.into(),
            ip_proto: proto,
            src_port: sport,
            dst_port: dport,
            tcp_flags: TcpFlags::empty(),
            tcp_seq: if proto == IpProto::Tcp { Some(0) } else { None },
            payload: vec![],
            capture_len: 0,
            orig_len: 0,
        }
    }

    #[test]
    fn either_port_matches_source_side() {
        let ast = FilterAst::Port(Dir::Either, 1723);
        let p = pkt(IpProto::Tcp, [1, 1, 1, 1], [2, 2, 2, 2], 1723, 99);
        assert!(eval_filter(&ast, &p));
    }

    #[test]
    fn src_host_does_not_match_destination() {
        let ast = FilterAst::Host(Dir::Src, Ipv4Addr::new(64, 1, 2, 70));
        let p = pkt(IpProto::Tcp, [9, 9, 9, 9], [64, 1, 2, 70], 1, 2);
        assert!(!eval_filter(&ast, &p));
    }

    #[test]
    fn port_requires_tcp_or_udp() {
        let ast = FilterAst::Port(Dir::Either, 0);
        let p = pkt(IpProto::Icmp, [1, 1, 1, 1], [2, 2, 2, 2], 0, 0);
        assert!(!eval_filter(&ast, &p));
    }

    #[test]
    fn gre_proto_matches() {
        let ast = parse_filter("gre").unwrap();
        assert!(eval_filter(&ast, &pkt(IpProto::Gre, [1, 1, 1, 1], [2, 2, 2, 2], 0, 0)));
        assert!(!eval_filter(&ast, &pkt(IpProto::Tcp, [1, 1, 1, 1], [2, 2, 2, 2], 1, 2)));
    }

    #[test]
    fn compound_expression() {
        let ast = parse_filter("tcp and dst port 8291 and src net 198.51.100.0/24").unwrap();
        let hit = pkt(IpProto::Tcp, [198, 51, 100, 7], [192, 0, 2, 1], 4000, 8291);
        let miss = pkt(IpProto::Tcp, [203, 0, 113, 7], [192, 0, 2, 1], 4000, 8291);
        assert!(eval_filter(&ast, &hit));
        assert!(!eval_filter(&ast, &miss));
    }
}
