use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::transport::Transport;
use super::{EventKind, PacketEvent, SimConfig};
use crate::Micros;

/// A data packet queued at (or heading into) the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedPacket {
    pub seq: u64,
    /// Position in the sender's transmission order; retransmissions get new ones.
    pub tx_index: u64,
    pub send_time: Micros,
    pub enqueue_time: Micros,
    /// Sender's acknowledged byte count when this copy was sent.
    pub delivered_at_send: u64,
}

/// Cumulative link counters, in packets unless noted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Delivered packets carrying a sequence number for the first time.
    pub unique_delivered: u64,
}

/// Drop-tail FIFO bottleneck served at a piecewise-constant capacity.
#[derive(Debug, Clone)]
pub struct LinkState {
    queue: VecDeque<QueuedPacket>,
    queue_bytes: u64,
    limit_bytes: u64,
    packet_size: u32,
    tick: Micros,
    /// Delivery capacity carried over from earlier ticks, always below one packet.
    byte_credit: f64,
    current_capacity: f64,
    pub counters: LinkCounters,
}

impl LinkState {
    /// Link whose buffer is sized from the episode's peak capacity.
    pub fn new(config: &SimConfig, peak_mbps: f64) -> Self {
        Self {
            queue: VecDeque::new(),
            queue_bytes: 0,
            limit_bytes: config.queue_limit_bytes(peak_mbps),
            packet_size: config.packet_size,
            tick: config.tick,
            byte_credit: 0.0,
            current_capacity: 0.0,
            counters: LinkCounters::default(),
        }
    }

    pub fn set_capacity(&mut self, mbps: f64) {
        self.current_capacity = mbps;
    }

    pub fn current_capacity(&self) -> f64 {
        self.current_capacity
    }

    pub fn byte_credit(&self) -> f64 {
        self.byte_credit
    }

    pub fn queue_bytes(&self) -> u64 {
        self.queue_bytes
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn limit_bytes(&self) -> u64 {
        self.limit_bytes
    }

    /// Offers a packet to the queue; returns false if it was dropped.
    pub fn enqueue(&mut self, pkt: QueuedPacket, now: Micros, events: Option<&mut Vec<PacketEvent>>) -> bool {
        self.counters.sent += 1;
        let fits = self.queue_bytes + self.packet_size as u64 <= self.limit_bytes;
        if let Some(events) = events {
            events.push(event(EventKind::Sent, pkt.seq, now));
            if !fits {
                events.push(event(EventKind::Dropped, pkt.seq, now));
            }
        }
        if !fits {
            self.counters.dropped += 1;
            return false;
        }
        self.queue_bytes += self.packet_size as u64;
        self.queue.push_back(QueuedPacket {
            enqueue_time: now,
            ..pkt
        });
        true
    }

    /// One tick of the path: the sender fills its window (a cwnd below one
    /// packet counts as one), then the link serves the queue head.
    /// Delivered packets schedule their ACK two propagation delays later.
    pub fn advance_tick(
        &mut self,
        sender: &mut Transport,
        cwnd: f64,
        now: Micros,
        mut events: Option<&mut Vec<PacketEvent>>,
    ) {
        while sender.can_send(cwnd) {
            let pkt = sender.next_transmission(now);
            self.enqueue(pkt, now, events.as_deref_mut());
        }

        let ps = self.packet_size as f64;
        self.byte_credit += self.current_capacity * self.tick as f64 / 8.0;
        let opportunities = libm::floor(self.byte_credit / ps);
        // Unused opportunities are lost: an idle link does not bank capacity.
        self.byte_credit -= opportunities * ps;
        for _ in 0..opportunities as u64 {
            let Some(pkt) = self.queue.pop_front() else {
                break;
            };
            self.queue_bytes -= self.packet_size as u64;
            self.counters.delivered += 1;
            if sender.on_egress(&pkt, now) {
                self.counters.unique_delivered += 1;
            }
            if let Some(events) = events.as_deref_mut() {
                events.push(event(EventKind::Delivered, pkt.seq, now));
            }
        }
    }
}

fn event(kind: EventKind, seq: u64, time: Micros) -> PacketEvent {
    PacketEvent {
        kind,
        seq,
        time,
        rtt_sample: None,
        owd_sample: None,
    }
}
