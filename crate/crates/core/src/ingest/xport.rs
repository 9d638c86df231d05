//! SAS transport (XPORT) version 5 reader and writer.
//!
//! A file is a sequence of 80-byte records: a library header, then per member
//! a member header, descriptor, NAMESTR block (one 140-byte NAMESTR per
//! variable, packed and blank-padded to an 80-byte boundary), an OBS header
//! and the packed observations, again blank-padded.

use super::ibm::{self, Decoded};
use super::table::{Column, ColumnKind, RawTable, Value};
use super::IngestError;

pub const RECORD_LEN: usize = 80;

const LIBRARY_MAGIC: &[u8] = b"HEADER RECORD*******LIBRARY HEADER RECORD!!!!!!!";
const MEMBER_MAGIC: &[u8] = b"HEADER RECORD*******MEMBER  HEADER RECORD!!!!!!!";
const DSCRPTR_MAGIC: &[u8] = b"HEADER RECORD*******DSCRPTR HEADER RECORD!!!!!!!";
const NAMESTR_MAGIC: &[u8] = b"HEADER RECORD*******NAMESTR HEADER RECORD!!!!!!!";
const OBS_MAGIC: &[u8] = b"HEADER RECORD*******OBS     HEADER RECORD!!!!!!!";
const V8_LIBRARY_MAGIC: &[u8] = b"HEADER RECORD*******LIBV8   HEADER RECORD!!!!!!!";
const SAS_LIB_MAGIC: &[u8] = b"SAS     SAS     SASLIB  ";

const ZEROS_30: &[u8] = b"000000000000000000000000000000";
const FIXED_STAMP: &[u8; 16] = b"01JAN70:00:00:00";

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn record(&mut self) -> Result<&'a [u8], IngestError> {
        self.take(RECORD_LEN)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        if self.pos + n > self.bytes.len() {
            return Err(IngestError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.bytes.len() - self.pos,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn expect(&mut self, magic: &[u8], what: &'static str) -> Result<&'a [u8], IngestError> {
        let offset = self.pos;
        let rec = self.record()?;
        if !rec.starts_with(magic) {
            return Err(IngestError::Format { offset, message: format!("expected {what}") });
        }
        Ok(rec)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}

struct Namestr {
    kind: ColumnKind,
    length: usize,
    name: String,
    position: usize,
}

fn be_i16(b: &[u8]) -> i16 {
    i16::from_be_bytes([b[0], b[1]])
}

fn be_i32(b: &[u8]) -> i32 {
    i32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn ascii_field(b: &[u8]) -> String {
    String::from_utf8_lossy(b).trim_end_matches([' ', '\0']).to_string()
}

fn parse_namestr(b: &[u8], offset: usize) -> Result<Namestr, IngestError> {
    let kind = match be_i16(&b[0..2]) {
        1 => ColumnKind::Numeric,
        2 => ColumnKind::Text,
        other => {
            return Err(IngestError::Format {
                offset,
                message: format!("unknown variable type {other} in NAMESTR"),
            })
        }
    };
    let length = be_i16(&b[4..6]);
    let position = be_i32(&b[84..88]);
    if length <= 0 || position < 0 {
        return Err(IngestError::Format {
            offset,
            message: format!("invalid variable length {length} or position {position}"),
        });
    }
    if kind == ColumnKind::Numeric && !(2..=8).contains(&length) {
        return Err(IngestError::Format {
            offset,
            message: format!("numeric variable length {length} outside 2..=8"),
        });
    }
    Ok(Namestr { kind, length: length as usize, name: ascii_field(&b[8..16]), position: position as usize })
}

/// Parses every member dataset of a complete XPORT v5 file image.
pub fn parse_xport(bytes: &[u8]) -> Result<Vec<RawTable>, IngestError> {
    let mut cur = Cursor { bytes, pos: 0 };

    let first = cur.record()?;
    if first.starts_with(V8_LIBRARY_MAGIC) {
        return Err(IngestError::UnsupportedFormat("XPORT version 8/9 library".into()));
    }
    if !first.starts_with(LIBRARY_MAGIC) {
        return Err(IngestError::Format { offset: 0, message: "missing library header magic".into() });
    }
    let offset = cur.pos;
    if !cur.record()?.starts_with(SAS_LIB_MAGIC) {
        return Err(IngestError::Format { offset, message: "missing SASLIB real header".into() });
    }
    cur.record()?; // modification stamp

    let mut tables = Vec::new();
    while !cur.at_end() {
        // Trailing blank padding after the final member.
        if bytes[cur.pos..].iter().all(|&b| b == b' ') {
            break;
        }
        tables.push(parse_member(&mut cur)?);
    }
    Ok(tables)
}

fn parse_member(cur: &mut Cursor<'_>) -> Result<RawTable, IngestError> {
    let offset = cur.pos;
    let header = cur.expect(MEMBER_MAGIC, "member header")?;
    let namestr_len: usize = std::str::from_utf8(&header[74..78])
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| IngestError::Format { offset, message: "bad NAMESTR length".into() })?;
    if namestr_len != 140 && namestr_len != 136 {
        return Err(IngestError::UnsupportedFormat(format!("NAMESTR length {namestr_len}")));
    }
    cur.expect(DSCRPTR_MAGIC, "descriptor header")?;
    let offset = cur.pos;
    let member1 = cur.record()?;
    if !member1.starts_with(b"SAS     ") {
        return Err(IngestError::Format { offset, message: "missing member SAS header".into() });
    }
    let name = ascii_field(&member1[8..16]);
    cur.record()?; // modified stamp, label, type

    let offset = cur.pos;
    let ns_header = cur.expect(NAMESTR_MAGIC, "NAMESTR header")?;
    let nvars: usize = std::str::from_utf8(&ns_header[54..58])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| IngestError::Format { offset, message: "bad variable count".into() })?;

    let block_len = (nvars * namestr_len).div_ceil(RECORD_LEN) * RECORD_LEN;
    let block_start = cur.pos;
    let block = cur.take(block_len)?;
    let mut vars = Vec::with_capacity(nvars);
    for i in 0..nvars {
        let start = i * namestr_len;
        vars.push(parse_namestr(&block[start..start + namestr_len], block_start + start)?);
    }

    cur.expect(OBS_MAGIC, "OBS header")?;

    // Observations run until the next member header or end of file.
    let data_start = cur.pos;
    let mut data_end = data_start;
    while data_end < cur.bytes.len() {
        let rest = &cur.bytes[data_end..];
        if rest.len() >= RECORD_LEN && rest.starts_with(MEMBER_MAGIC) {
            break;
        }
        data_end += RECORD_LEN.min(rest.len());
    }
    if (data_end - data_start) % RECORD_LEN != 0 {
        return Err(IngestError::Truncated {
            offset: data_end,
            needed: RECORD_LEN - (data_end - data_start) % RECORD_LEN,
            available: 0,
        });
    }
    let data = cur.take(data_end - data_start)?;

    let row_len = vars.iter().map(|v| v.position + v.length).max().unwrap_or(0);
    let mut rows = Vec::new();
    if row_len > 0 {
        let mut n = data.len() / row_len;
        // Blank rows that fit inside the final 80-byte pad are padding, not data.
        while n > 0 {
            let start = (n - 1) * row_len;
            let blank = data[start..start + row_len].iter().all(|&b| b == b' ');
            if blank && data.len() - start <= RECORD_LEN {
                n -= 1;
            } else {
                break;
            }
        }
        rows.reserve(n);
        for r in 0..n {
            let row = &data[r * row_len..(r + 1) * row_len];
            rows.push(
                vars.iter()
                    .map(|v| {
                        let field = &row[v.position..v.position + v.length];
                        match v.kind {
                            ColumnKind::Numeric => match ibm::decode(field) {
                                Decoded::Value(x) => Value::Number(x),
                                Decoded::Missing(_) => Value::Missing,
                            },
                            ColumnKind::Text => {
                                let s = ascii_field(field);
                                if s.is_empty() {
                                    Value::Missing
                                } else {
                                    Value::Text(s)
                                }
                            }
                        }
                    })
                    .collect(),
            );
        }
    }

    let columns = vars.into_iter().map(|v| Column { name: v.name, kind: v.kind }).collect();
    RawTable::new(name, columns, rows)
        .map_err(|message| IngestError::Format { offset: data_start, message })
}

fn padded(text: &str, width: usize) -> Vec<u8> {
    let mut out = text.as_bytes().to_vec();
    out.resize(width, b' ');
    out
}

fn pad_to_record(buf: &mut Vec<u8>) {
    let rem = buf.len() % RECORD_LEN;
    if rem != 0 {
        buf.resize(buf.len() + RECORD_LEN - rem, b' ');
    }
}

fn header_record(magic: &[u8], tail: &[u8]) -> Vec<u8> {
    let mut rec = magic.to_vec();
    rec.extend_from_slice(tail);
    rec.resize(RECORD_LEN, b' ');
    rec
}

/// Serializes tables as an XPORT v5 library. Numeric variables are written
/// with length 8, text variables with the longest value's byte length.
/// Timestamps are fixed so output is deterministic.
pub fn write_xport(tables: &[RawTable]) -> Result<Vec<u8>, IngestError> {
    let mut out = Vec::new();
    out.extend(header_record(LIBRARY_MAGIC, ZEROS_30));
    let mut real = SAS_LIB_MAGIC.to_vec();
    real.extend(padded("9.4", 8));
    real.extend(padded("X64_7PRO", 8));
    real.extend(padded("", 24));
    real.extend_from_slice(FIXED_STAMP);
    out.extend(real);
    out.extend(padded(std::str::from_utf8(FIXED_STAMP).unwrap(), RECORD_LEN));

    for table in tables {
        write_member(&mut out, table)?;
    }
    Ok(out)
}

fn check_name(name: &str, what: &str) -> Result<(), IngestError> {
    if name.is_empty() || name.len() > 8 || !name.is_ascii() {
        return Err(IngestError::Write(format!("{what} `{name}` must be 1-8 ASCII characters")));
    }
    Ok(())
}

fn write_member(out: &mut Vec<u8>, table: &RawTable) -> Result<(), IngestError> {
    check_name(&table.name, "dataset name")?;
    if table.columns.len() > 9999 {
        return Err(IngestError::Write("more than 9999 variables".into()));
    }

    let lengths: Vec<usize> = table
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| match c.kind {
            ColumnKind::Numeric => 8,
            ColumnKind::Text => table
                .rows
                .iter()
                .filter_map(|r| r[j].as_str().map(str::len))
                .max()
                .unwrap_or(1)
                .max(1),
        })
        .collect();
    if let Some(&l) = lengths.iter().find(|&&l| l > 200) {
        return Err(IngestError::Write(format!("text value of {l} bytes exceeds 200")));
    }

    out.extend(header_record(MEMBER_MAGIC, b"000000000000000001600000000140"));
    out.extend(header_record(DSCRPTR_MAGIC, ZEROS_30));
    let mut m1 = b"SAS     ".to_vec();
    m1.extend(padded(&table.name, 8));
    m1.extend(padded("SASDATA", 8));
    m1.extend(padded("9.4", 8));
    m1.extend(padded("X64_7PRO", 8));
    m1.extend(padded("", 24));
    m1.extend_from_slice(FIXED_STAMP);
    out.extend(m1);
    let mut m2 = FIXED_STAMP.to_vec();
    m2.resize(RECORD_LEN, b' ');
    out.extend(m2);

    let mut ns_header = NAMESTR_MAGIC.to_vec();
    ns_header.extend_from_slice(format!("000000{:04}", table.columns.len()).as_bytes());
    ns_header.extend_from_slice(b"00000000000000000000");
    ns_header.resize(RECORD_LEN, b' ');
    out.extend(ns_header);

    let mut position = 0usize;
    for (j, (col, &len)) in table.columns.iter().zip(&lengths).enumerate() {
        check_name(&col.name, "variable name")?;
        let mut ns = Vec::with_capacity(140);
        let ntype: i16 = match col.kind {
            ColumnKind::Numeric => 1,
            ColumnKind::Text => 2,
        };
        ns.extend(ntype.to_be_bytes());
        ns.extend(0i16.to_be_bytes());
        ns.extend((len as i16).to_be_bytes());
        ns.extend(((j + 1) as i16).to_be_bytes());
        ns.extend(padded(&col.name, 8));
        ns.extend(padded("", 40)); // label
        ns.extend(padded("", 8)); // format
        ns.extend([0u8; 6]); // format length, decimals, justification
        ns.extend([0u8; 2]);
        ns.extend(padded("", 8)); // informat
        ns.extend([0u8; 4]);
        ns.extend((position as i32).to_be_bytes());
        ns.resize(140, 0);
        out.extend(ns);
        position += len;
    }
    pad_to_record(out);

    out.extend(header_record(OBS_MAGIC, ZEROS_30));
    for row in &table.rows {
        for ((value, col), &len) in row.iter().zip(&table.columns).zip(&lengths) {
            match (col.kind, value) {
                (ColumnKind::Numeric, Value::Number(x)) => {
                    let bytes = ibm::encode(*x).map_err(|e| {
                        IngestError::Write(format!("cannot encode {x} in `{}`: {e:?}", col.name))
                    })?;
                    out.extend(bytes);
                }
                (ColumnKind::Numeric, _) => out.extend(ibm::MISSING),
                (ColumnKind::Text, Value::Text(s)) => out.extend(padded(s, len)),
                (ColumnKind::Text, _) => out.extend(padded("", len)),
            }
        }
    }
    pad_to_record(out);
    Ok(())
}
