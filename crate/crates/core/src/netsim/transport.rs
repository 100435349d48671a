use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::link::QueuedPacket;
use crate::{Micros, SEC};

/// Duplicate-ACK threshold for declaring a transmission lost.
const DUP_THRESH: u64 = 3;
const MAX_RTO: Micros = 60 * SEC;

#[derive(Debug, Clone, Copy, Default)]
struct Segment {
    /// Transmissions of this segment still believed to be in the network.
    inflight_tx: u8,
    acked: bool,
    /// Marked lost by a timeout and waiting in the retransmission queue.
    awaiting_retx: bool,
    /// Some copy already left the bottleneck.
    delivered: bool,
}

/// An ACK travelling back to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct AckInFlight {
    pub seq: u64,
    pub tx_index: u64,
    pub send_time: Micros,
    pub egress_time: Micros,
    pub ack_time: Micros,
    pub delivered_at_send: u64,
}

/// What one arriving ACK told the sender.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AckOutcome {
    pub newly_acked: bool,
    pub rtt: Micros,
    pub owd: Micros,
    /// Bytes acknowledged between this transmission's send and its ACK.
    pub delivered_during_flight: u64,
}

/// Sender-side transport state: sequence space, pipe accounting, loss
/// detection and the retransmission timer.
///
/// The bottleneck is a single FIFO and the ACK path has constant delay, so
/// ACKs arrive in transmission order. A gap in transmission indices therefore
/// identifies dropped transmissions exactly; they are declared lost once
/// `DUP_THRESH` later transmissions have been acknowledged.
#[derive(Debug, Clone)]
pub struct Transport {
    packet_size: u32,
    one_way_delay: Micros,
    segments: VecDeque<Segment>,
    /// Lowest unacknowledged sequence number; index 0 of `segments`.
    snd_una: u64,
    snd_nxt: u64,
    next_tx: u64,
    /// Transmissions believed in flight.
    pipe: u64,
    /// (tx_index, seq) of transmissions not yet acknowledged, in send order.
    outstanding: VecDeque<(u64, u64)>,
    /// (seq, ack count when the gap was seen).
    suspects: VecDeque<(u64, u64)>,
    acks_received: u64,
    retx_queue: VecDeque<u64>,
    in_recovery: bool,
    recovery_point: u64,
    srtt: Option<f64>,
    rttvar: f64,
    min_rto: Micros,
    rto: Micros,
    rto_deadline: Option<Micros>,
    min_rtt: Option<Micros>,
    delivered_bytes: u64,
    pacing_tokens: f64,
    acks: VecDeque<AckInFlight>,
}

impl Transport {
    pub fn new(packet_size: u32, one_way_delay: Micros, min_rto: Micros, initial_rto: Micros) -> Self {
        Self {
            packet_size,
            one_way_delay,
            segments: VecDeque::new(),
            snd_una: 0,
            snd_nxt: 0,
            next_tx: 0,
            pipe: 0,
            outstanding: VecDeque::new(),
            suspects: VecDeque::new(),
            acks_received: 0,
            retx_queue: VecDeque::new(),
            in_recovery: false,
            recovery_point: 0,
            srtt: None,
            rttvar: 0.0,
            min_rto,
            rto: initial_rto.max(min_rto),
            rto_deadline: None,
            min_rtt: None,
            delivered_bytes: 0,
            pacing_tokens: 0.0,
            acks: VecDeque::new(),
        }
    }

    pub fn pipe(&self) -> u64 {
        self.pipe
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn min_rtt(&self) -> Option<Micros> {
        self.min_rtt
    }

    pub fn rto(&self) -> Micros {
        self.rto
    }

    pub fn in_recovery(&self) -> bool {
        self.in_recovery
    }

    fn segment_mut(&mut self, seq: u64) -> Option<&mut Segment> {
        if seq < self.snd_una {
            return None;
        }
        self.segments.get_mut((seq - self.snd_una) as usize)
    }

    /// Refills the pacing bucket for one tick; `None` disables pacing.
    pub(crate) fn refill_pacing(&mut self, rate_bytes_per_sec: Option<f64>, tick: Micros) {
        match rate_bytes_per_sec {
            Some(rate) => {
                let per_tick = rate * tick as f64 / SEC as f64;
                let cap = per_tick + self.packet_size as f64;
                self.pacing_tokens = (self.pacing_tokens + per_tick).min(cap);
            }
            None => self.pacing_tokens = f64::INFINITY,
        }
    }

    /// Whether the window and pacer allow another transmission.
    pub(crate) fn can_send(&self, cwnd: f64) -> bool {
        let window = if cwnd.is_finite() {
            libm::floor(cwnd).max(1.0)
        } else {
            1.0
        };
        (self.pipe as f64) < window && self.pacing_tokens >= self.packet_size as f64
    }

    /// Next transmission under the window: queued retransmissions first.
    pub(crate) fn next_transmission(&mut self, now: Micros) -> QueuedPacket {
        self.pacing_tokens -= self.packet_size as f64;
        while let Some(seq) = self.retx_queue.pop_front() {
            if let Some(seg) = self.segment_mut(seq) {
                if seg.awaiting_retx && !seg.acked {
                    seg.awaiting_retx = false;
                    return self.transmit(seq, now);
                }
            }
        }
        let seq = self.snd_nxt;
        self.snd_nxt += 1;
        self.segments.push_back(Segment::default());
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
        self.transmit(seq, now)
    }

    /// Resends `seq` immediately, outside the window.
    pub(crate) fn retransmit(&mut self, seq: u64, now: Micros) -> QueuedPacket {
        self.transmit(seq, now)
    }

    fn transmit(&mut self, seq: u64, now: Micros) -> QueuedPacket {
        let tx_index = self.next_tx;
        self.next_tx += 1;
        if let Some(seg) = self.segment_mut(seq) {
            seg.inflight_tx = seg.inflight_tx.saturating_add(1);
        }
        self.pipe += 1;
        self.outstanding.push_back((tx_index, seq));
        QueuedPacket {
            seq,
            tx_index,
            send_time: now,
            enqueue_time: now,
            delivered_at_send: self.delivered_bytes,
        }
    }

    /// Records a packet leaving the bottleneck. Returns whether this is the
    /// first copy of its sequence number to get through.
    pub(crate) fn on_egress(&mut self, pkt: &QueuedPacket, now: Micros) -> bool {
        self.acks.push_back(AckInFlight {
            seq: pkt.seq,
            tx_index: pkt.tx_index,
            send_time: pkt.send_time,
            egress_time: now,
            ack_time: now + 2 * self.one_way_delay,
            delivered_at_send: pkt.delivered_at_send,
        });
        match self.segment_mut(pkt.seq) {
            Some(seg) if !seg.delivered => {
                seg.delivered = true;
                true
            }
            _ => false,
        }
    }

    pub(crate) fn pop_due_ack(&mut self, now: Micros) -> Option<AckInFlight> {
        if self.acks.front().is_some_and(|a| a.ack_time <= now) {
            self.acks.pop_front()
        } else {
            None
        }
    }

    fn update_rtt(&mut self, rtt: Micros) {
        let sample = rtt as f64;
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * libm::fabs(srtt - sample);
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        self.min_rtt = Some(self.min_rtt.map_or(rtt, |m| m.min(rtt)));
    }

    fn base_rto(&self) -> Micros {
        let srtt = self.srtt.unwrap_or(0.0);
        let rto = libm::ceil(srtt + 4.0 * self.rttvar) as Micros;
        rto.clamp(self.min_rto, MAX_RTO)
    }

    /// Processes an arriving ACK; newly detected losses are appended to `lost`.
    pub(crate) fn on_ack(&mut self, ack: &AckInFlight, now: Micros, lost: &mut Vec<u64>) -> AckOutcome {
        let rtt = now - ack.send_time;
        self.update_rtt(rtt);

        // Everything sent before this transmission and still unacknowledged
        // was dropped at the bottleneck.
        while let Some(&(tx, seq)) = self.outstanding.front() {
            if tx > ack.tx_index {
                break;
            }
            self.outstanding.pop_front();
            if tx < ack.tx_index {
                self.suspects.push_back((seq, self.acks_received));
            }
        }
        self.acks_received += 1;

        let mut newly_acked = false;
        if let Some(seg) = self.segment_mut(ack.seq) {
            if !seg.acked {
                seg.acked = true;
                seg.awaiting_retx = false;
                let freed = seg.inflight_tx as u64;
                seg.inflight_tx = 0;
                self.pipe -= freed;
                newly_acked = true;
                self.delivered_bytes += self.packet_size as u64;
            } else if seg.inflight_tx > 0 {
                seg.inflight_tx -= 1;
                self.pipe -= 1;
            }
        }

        while let Some(&(seq, seen_at)) = self.suspects.front() {
            if self.acks_received - seen_at < DUP_THRESH {
                break;
            }
            self.suspects.pop_front();
            if let Some(seg) = self.segment_mut(seq) {
                if !seg.acked && seg.inflight_tx > 0 {
                    seg.inflight_tx -= 1;
                    self.pipe -= 1;
                    lost.push(seq);
                }
            }
        }

        let before = self.snd_una;
        while self.segments.front().is_some_and(|s| s.acked) {
            self.segments.pop_front();
            self.snd_una += 1;
        }
        if self.snd_una > before {
            self.rto = self.base_rto();
            self.rto_deadline = (self.snd_una < self.snd_nxt).then(|| now + self.rto);
        }

        AckOutcome {
            newly_acked,
            rtt,
            owd: ack.egress_time - ack.send_time + self.one_way_delay,
            delivered_during_flight: self.delivered_bytes - ack.delivered_at_send,
        }
    }

    /// Starts a recovery episode for a loss of `seq` unless one already covers
    /// it. Returns true when the controller should be told about the loss.
    pub(crate) fn enter_recovery(&mut self, seq: u64) -> bool {
        if self.in_recovery && seq < self.recovery_point {
            return false;
        }
        self.in_recovery = true;
        self.recovery_point = self.snd_nxt;
        true
    }

    /// True once when the cumulative ACK passes the recovery point.
    pub(crate) fn take_recovery_exit(&mut self) -> bool {
        if self.in_recovery && self.snd_una >= self.recovery_point {
            self.in_recovery = false;
            return true;
        }
        false
    }

    /// Fires the retransmission timer if it expired. Every unacknowledged
    /// segment is marked lost and queued for retransmission under the window;
    /// returns how many were marked.
    pub(crate) fn check_timeout(&mut self, now: Micros) -> Option<u64> {
        let deadline = self.rto_deadline?;
        if now < deadline || self.snd_una >= self.snd_nxt {
            return None;
        }
        self.retx_queue.clear();
        self.suspects.clear();
        for (i, seg) in self.segments.iter_mut().enumerate() {
            if seg.acked {
                continue;
            }
            self.pipe -= seg.inflight_tx as u64;
            seg.inflight_tx = 0;
            seg.awaiting_retx = true;
            self.retx_queue.push_back(self.snd_una + i as u64);
        }
        self.in_recovery = true;
        self.recovery_point = self.snd_nxt;
        self.rto = (self.rto * 2).min(MAX_RTO);
        self.rto_deadline = Some(now + self.rto);
        Some(self.retx_queue.len() as u64)
    }
}
