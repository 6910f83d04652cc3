//! Per-slot outcomes and their compact binary encoding.

use std::io::{self, Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmitter {
    None,
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    None,
    Ack,
    Nack,
}

/// What happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub slot: u64,
    /// User transmitting in the slot, if any.
    pub transmitter: Transmitter,
    /// Relay transmitting in the slot, if any.
    pub relay: Option<u8>,
    pub relay_serves_primary: bool,
    pub collision: bool,
    /// The destination of the transmitted packet decoded it.
    pub destination_ok: bool,
    /// Bit k set when relay k decoded an undelivered user packet.
    pub relay_decoded: u32,
    pub feedback: Feedback,
    pub accepted_by: Option<u8>,
}

const RECORD_LEN: usize = 8 + 1 + 1 + 1 + 4;
const NONE: u8 = u8::MAX;

/// Fixed 15-byte little-endian records.
pub fn write_trace<W: Write>(mut w: W, outcomes: &[SlotOutcome]) -> io::Result<()> {
    for o in outcomes {
        let mut buf = [0u8; RECORD_LEN];
        buf[..8].copy_from_slice(&o.slot.to_le_bytes());
        let tx = match o.transmitter {
            Transmitter::None => 0,
            Transmitter::Primary => 1,
            Transmitter::Secondary => 2,
        };
        let fb = match o.feedback {
            Feedback::None => 0,
            Feedback::Ack => 1,
            Feedback::Nack => 2,
        };
        buf[8] = tx
            | (fb << 2)
            | (u8::from(o.collision) << 4)
            | (u8::from(o.destination_ok) << 5)
            | (u8::from(o.relay_serves_primary) << 6);
        buf[9] = o.relay.unwrap_or(NONE);
        buf[10] = o.accepted_by.unwrap_or(NONE);
        buf[11..].copy_from_slice(&o.relay_decoded.to_le_bytes());
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> io::Result<Vec<SlotOutcome>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % RECORD_LEN != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "truncated trace record"));
    }
    let opt = |b: u8| (b != NONE).then_some(b);
    bytes
        .chunks_exact(RECORD_LEN)
        .map(|c| {
            let flags = c[8];
            let transmitter = match flags & 3 {
                0 => Transmitter::None,
                1 => Transmitter::Primary,
                2 => Transmitter::Secondary,
                _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "bad transmitter")),
            };
            let feedback = match (flags >> 2) & 3 {
                0 => Feedback::None,
                1 => Feedback::Ack,
                2 => Feedback::Nack,
                _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "bad feedback")),
            };
            Ok(SlotOutcome {
                slot: u64::from_le_bytes(c[..8].try_into().unwrap()),
                transmitter,
                relay: opt(c[9]),
                relay_serves_primary: flags & (1 << 6) != 0,
                collision: flags & (1 << 4) != 0,
                destination_ok: flags & (1 << 5) != 0,
                relay_decoded: u32::from_le_bytes(c[11..].try_into().unwrap()),
                feedback,
                accepted_by: opt(c[10]),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let o = vec![
            SlotOutcome {
                slot: 3,
                transmitter: Transmitter::Secondary,
                relay: None,
                relay_serves_primary: false,
                collision: false,
                destination_ok: false,
                relay_decoded: 0b101,
                feedback: Feedback::Nack,
                accepted_by: Some(2),
            },
            SlotOutcome {
                slot: u64::MAX - 1,
                transmitter: Transmitter::None,
                relay: Some(1),
                relay_serves_primary: true,
                collision: false,
                destination_ok: true,
                relay_decoded: 0,
                feedback: Feedback::Ack,
                accepted_by: None,
            },
        ];
        let mut buf = Vec::new();
        write_trace(&mut buf, &o).unwrap();
        assert_eq!(buf.len(), 30);
        assert_eq!(read_trace(&buf[..]).unwrap(), o);
    }
}
