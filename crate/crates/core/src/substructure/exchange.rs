//! Typed point-to-point messaging between subdomain workers.
//!
//! Every collective call (interface exchange or all-reduce) consumes one
//! sequence number; all workers issue collectives in the same order, so a
//! message is identified by `(seq, sender)`. Messages that arrive early are
//! parked until the matching receive.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{LocalSystem, Source, SubstructureError};

const POLL: Duration = Duration::from_millis(20);

struct Message {
    seq: u64,
    from: usize,
    data: Vec<f64>,
}

pub(crate) struct Endpoint {
    id: usize,
    senders: Vec<SyncSender<Message>>,
    inbox: Receiver<Message>,
    pending: Vec<Message>,
    seq: u64,
    timeout: Duration,
    cancel: Arc<AtomicBool>,
}

/// One connected endpoint per subdomain.
pub(crate) fn endpoints(n: usize, timeout: Duration) -> Vec<Endpoint> {
    let capacity = 4 * n + 8;
    let (senders, inboxes): (Vec<_>, Vec<_>) = (0..n).map(|_| sync_channel(capacity)).unzip();
    let cancel = Arc::new(AtomicBool::new(false));
    inboxes
        .into_iter()
        .enumerate()
        .map(|(id, inbox)| Endpoint {
            id,
            senders: senders.clone(),
            inbox,
            pending: Vec::new(),
            seq: 0,
            timeout,
            cancel: Arc::clone(&cancel),
        })
        .collect()
}

impl Endpoint {
    #[cfg(test)]
    pub(crate) fn id(&self) -> usize {
        self.id
    }

    pub(crate) fn n_parts(&self) -> usize {
        self.senders.len()
    }

    /// Tells every other worker to stop.
    #[cfg(test)]
    pub(crate) fn cancel_group(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub(crate) fn cancel_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.cancel)
    }

    fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn send(&self, to: usize, seq: u64, data: Vec<f64>) -> Result<(), SubstructureError> {
        let deadline = Instant::now() + self.timeout;
        let mut msg = Message { seq, from: self.id, data };
        loop {
            match self.senders[to].try_send(msg) {
                Ok(()) => return Ok(()),
                Err(TrySendError::Full(m)) => {
                    if self.cancelled() {
                        return Err(SubstructureError::Cancelled(self.id));
                    }
                    if Instant::now() >= deadline {
                        return Err(SubstructureError::ProtocolDeadlock {
                            subdomain: self.id,
                            peer: to,
                            timeout: self.timeout,
                        });
                    }
                    msg = m;
                    std::thread::sleep(Duration::from_millis(1));
                }
                Err(TrySendError::Disconnected(_)) => return Err(SubstructureError::Cancelled(self.id)),
            }
        }
    }

    fn recv(&mut self, seq: u64, from: usize) -> Result<Vec<f64>, SubstructureError> {
        if let Some(i) = self.pending.iter().position(|m| m.seq == seq && m.from == from) {
            return Ok(self.pending.swap_remove(i).data);
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Err(SubstructureError::ProtocolDeadlock {
                    subdomain: self.id,
                    peer: from,
                    timeout: self.timeout,
                });
            }
            match self.inbox.recv_timeout(POLL.min(deadline - now)) {
                Ok(m) if m.seq == seq && m.from == from => return Ok(m.data),
                Ok(m) => self.pending.push(m),
                Err(RecvTimeoutError::Timeout) => {
                    if self.cancelled() {
                        return Err(SubstructureError::Cancelled(self.id));
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return Err(SubstructureError::Cancelled(self.id)),
            }
        }
    }

    /// Interface assembly of a local product `y`.
    ///
    /// Sends the interface values to every neighbour, then replaces each
    /// interface entry by the sum of all owners' contributions taken in
    /// ascending owner id, so every copy ends up bitwise equal.
    pub(crate) fn assemble(&mut self, local: &LocalSystem, y: &mut [f64]) -> Result<(), SubstructureError> {
        let seq = self.next_seq();
        for d in local.interfaces() {
            let temp: Vec<f64> = d.equation_list.iter().map(|&l| y[l]).collect();
            self.send(d.neighbor_id, seq, temp)?;
        }
        let mut received = Vec::with_capacity(local.interfaces().len());
        for d in local.interfaces() {
            let buf = self.recv(seq, d.neighbor_id)?;
            if buf.len() != d.equation_list.len() {
                return Err(SubstructureError::BufferLengthMismatch {
                    subdomain: self.id,
                    peer: d.neighbor_id,
                    expected: d.equation_list.len(),
                    found: buf.len(),
                });
            }
            received.push(buf);
        }
        for (li, sources) in local.assembly() {
            let own = y[*li];
            y[*li] = sources.iter().fold(0.0, |acc, s| {
                acc + match *s {
                    Source::Own => own,
                    Source::Neighbor(k, pos) => received[k][pos],
                }
            });
        }
        Ok(())
    }

    /// Element-wise sum of `partials` over all workers. Subdomain 0 adds
    /// the contributions left to right in id order and broadcasts the sums.
    pub(crate) fn allreduce(&mut self, partials: &[f64]) -> Result<Vec<f64>, SubstructureError> {
        let seq = self.next_seq();
        let n = self.n_parts();
        if self.id != 0 {
            self.send(0, seq, partials.to_vec())?;
            let out = self.recv(seq, 0)?;
            if out.len() != partials.len() {
                return Err(SubstructureError::BufferLengthMismatch {
                    subdomain: self.id,
                    peer: 0,
                    expected: partials.len(),
                    found: out.len(),
                });
            }
            return Ok(out);
        }
        let mut sums: Vec<f64> = partials.iter().map(|&p| 0.0 + p).collect();
        for from in 1..n {
            let buf = self.recv(seq, from)?;
            if buf.len() != partials.len() {
                return Err(SubstructureError::BufferLengthMismatch {
                    subdomain: 0,
                    peer: from,
                    expected: partials.len(),
                    found: buf.len(),
                });
            }
            for (s, v) in sums.iter_mut().zip(buf) {
                *s += v;
            }
        }
        for to in 1..n {
            self.send(to, seq, sums.clone())?;
        }
        Ok(sums)
    }
}
