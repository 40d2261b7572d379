//! Little-endian wire format for queries and responses.
//!
//! Query (29 bytes): magic u32, version u8, ego_id u32, pose x/y/theta f32, dict_id u32,
//! n u16, t u16.
//!
//! Response (10 + 9·records bytes): magic u32, version u8, responder_id u32, status u8, then
//! records of cost f32, uncertainty f32, valid u8 in trajectory-major, step-minor order.

use super::{CostQuery, CostResponse, Record, ResponseStatus};
use crate::error::{Error, Result};

pub const QUERY_MAGIC: u32 = 0x5145_5854;
pub const RESPONSE_MAGIC: u32 = 0x5245_5854;
pub const WIRE_VERSION: u8 = 1;
pub const QUERY_LEN: usize = 29;
pub const RESPONSE_HEADER_LEN: usize = 10;
pub const RECORD_LEN: usize = 9;

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.remaining() < N {
            return Err(Error::decode(
                self.pos,
                format!("need {N} bytes, {} left", self.remaining()),
            ));
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

fn header(r: &mut Reader<'_>, magic: u32) -> Result<()> {
    let m = r.u32()?;
    if m != magic {
        return Err(Error::decode(0, format!("bad magic {m:#010x}")));
    }
    let v = r.u8()?;
    if v != WIRE_VERSION {
        return Err(Error::decode(4, format!("unsupported version {v}")));
    }
    Ok(())
}

pub fn encode_query(q: &CostQuery) -> Vec<u8> {
    let mut out = Vec::with_capacity(QUERY_LEN);
    out.extend_from_slice(&QUERY_MAGIC.to_le_bytes());
    out.push(WIRE_VERSION);
    out.extend_from_slice(&q.ego_id.to_le_bytes());
    for v in q.ego_pose {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&q.dict_id.to_le_bytes());
    out.extend_from_slice(&q.n.to_le_bytes());
    out.extend_from_slice(&q.t.to_le_bytes());
    out
}

pub fn decode_query(buf: &[u8]) -> Result<CostQuery> {
    let mut r = Reader::new(buf);
    header(&mut r, QUERY_MAGIC)?;
    let ego_id = r.u32()?;
    let ego_pose = [r.f32()?, r.f32()?, r.f32()?];
    let dict_id = r.u32()?;
    let n = r.u16()?;
    let t = r.u16()?;
    if r.remaining() != 0 {
        return Err(Error::decode(r.offset(), "trailing bytes after query"));
    }
    Ok(CostQuery {
        ego_id,
        ego_pose,
        dict_id,
        n,
        t,
    })
}

pub fn response_len(records: usize) -> usize {
    RESPONSE_HEADER_LEN + records * RECORD_LEN
}

pub fn encode_response(resp: &CostResponse) -> Vec<u8> {
    let mut out = Vec::with_capacity(response_len(resp.records.len()));
    out.extend_from_slice(&RESPONSE_MAGIC.to_le_bytes());
    out.push(WIRE_VERSION);
    out.extend_from_slice(&resp.responder_id.to_le_bytes());
    out.push(resp.status as u8);
    for rec in &resp.records {
        out.extend_from_slice(&rec.cost.to_le_bytes());
        out.extend_from_slice(&rec.uncertainty.to_le_bytes());
        out.push(rec.valid as u8);
    }
    out
}

pub fn decode_response(buf: &[u8]) -> Result<CostResponse> {
    let mut r = Reader::new(buf);
    header(&mut r, RESPONSE_MAGIC)?;
    let responder_id = r.u32()?;
    let status_at = r.offset();
    let status = ResponseStatus::from_u8(r.u8()?)
        .ok_or_else(|| Error::decode(status_at, "unknown status code"))?;
    let rem = r.remaining();
    if !rem.is_multiple_of(RECORD_LEN) {
        return Err(Error::decode(
            RESPONSE_HEADER_LEN + rem / RECORD_LEN * RECORD_LEN,
            "truncated record",
        ));
    }
    if status != ResponseStatus::Ok && rem != 0 {
        return Err(Error::decode(
            RESPONSE_HEADER_LEN,
            "error response carries records",
        ));
    }
    let mut records = Vec::with_capacity(rem / RECORD_LEN);
    while r.remaining() > 0 {
        let cost = r.f32()?;
        let uncertainty = r.f32()?;
        let at = r.offset();
        let valid = match r.u8()? {
            0 => false,
            1 => true,
            v => {
                return Err(Error::decode(
                    at,
                    format!("valid flag must be 0 or 1, got {v}"),
                ))
            }
        };
        records.push(Record {
            cost,
            uncertainty,
            valid,
        });
    }
    Ok(CostResponse {
        responder_id,
        status,
        records,
    })
}
