//! Append-only record of everything that happened to packets during a run.

use std::fmt;
use std::io::Write;

use super::packet::{Destination, DropReason, Packet, PacketClass};
use super::time::SimTime;
use crate::protocols::{MessageKind, NodeId};

pub const EVENT_LOG_HEADER: &str = "time_s,event,node,packet_id,class,protocol,src,dst,ttl,size_bytes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LogEvent {
    Send,
    Recv,
    Drop,
    Originate,
    Deliver,
}

impl LogEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            LogEvent::Send => "send",
            LogEvent::Recv => "recv",
            LogEvent::Drop => "drop",
            LogEvent::Originate => "originate",
            LogEvent::Deliver => "deliver",
        }
    }
}

impl fmt::Display for LogEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: SimTime,
    pub event: LogEvent,
    pub node: NodeId,
    pub packet_id: u64,
    pub class: PacketClass,
    pub kind: MessageKind,
    pub src: NodeId,
    pub dst: Destination,
    pub ttl: u8,
    pub size: u32,
    pub created_at: SimTime,
    pub reason: Option<DropReason>,
}

/// A route in use by a traffic session, captured whenever it changes.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteRecord {
    pub time: SimTime,
    pub session: u32,
    /// Node sequence from source to destination.
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub protocol: &'static str,
    pub records: Vec<LogRecord>,
    pub routes: Vec<RouteRecord>,
}

impl EventLog {
    pub fn new(protocol: &'static str) -> Self {
        Self {
            protocol,
            records: Vec::new(),
            routes: Vec::new(),
        }
    }

    pub fn push(&mut self, time: SimTime, event: LogEvent, node: NodeId, packet: &Packet, reason: Option<DropReason>) {
        self.records.push(LogRecord {
            time,
            event,
            node,
            packet_id: packet.id,
            class: packet.class(),
            kind: packet.kind(),
            src: packet.source,
            dst: packet.destination,
            ttl: packet.ttl,
            size: packet.size,
            created_at: packet.created_at,
            reason,
        });
    }

    pub fn iter_event(&self, event: LogEvent) -> impl Iterator<Item = &LogRecord> + '_ {
        self.records.iter().filter(move |r| r.event == event)
    }

    /// Number of frames of `kind` transmitted by `node`.
    pub fn sent_by(&self, node: NodeId, kind: MessageKind) -> usize {
        self.records
            .iter()
            .filter(|r| r.event == LogEvent::Send && r.node == node && r.kind == kind)
            .count()
    }

    /// Frames of `kind` originated by `node` (forwarded copies excluded).
    pub fn originated_by(&self, node: NodeId, kind: MessageKind) -> usize {
        self.records
            .iter()
            .filter(|r| r.event == LogEvent::Send && r.node == node && r.src == node && r.kind == kind)
            .count()
    }

    pub fn control_sent(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.event == LogEvent::Send && r.class == PacketClass::Control)
            .count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{EVENT_LOG_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.time,
                r.event,
                r.node,
                r.packet_id,
                r.class.as_str(),
                self.protocol,
                r.src,
                r.dst,
                r.ttl,
                r.size
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("log is ASCII")
    }
}
