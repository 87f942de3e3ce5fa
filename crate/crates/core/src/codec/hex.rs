use super::file::{pack, unpack};
use super::IrisTemplate;
use crate::error::{Error, Result};

fn decode(s: &str, what: &str, need: usize) -> Result<Vec<u8>> {
    let bytes = ::hex::decode(s).map_err(|e| Error::Parse(format!("{what}: {e}")))?;
    if bytes.len() < need {
        return Err(Error::Parse(format!(
            "{what}: {} bytes decoded, {need} required",
            bytes.len()
        )));
    }
    Ok(bytes)
}

/// Builds a template from one hex record: code then mask, whitespace separated.
/// Bits use the TemplateFile packing (row-major, LSB first, rows byte-padded).
pub fn import_hex(text: &str, rows: usize, cols: usize, identity: &str) -> Result<IrisTemplate> {
    if rows == 0 || cols == 0 {
        return Err(Error::contract("rows and cols must be positive"));
    }
    let mut fields = text.split_whitespace();
    let (Some(code), Some(mask)) = (fields.next(), fields.next()) else {
        return Err(Error::Parse("expected two hex strings (code, mask)".into()));
    };
    if fields.next().is_some() {
        return Err(Error::Parse("trailing data after mask".into()));
    }
    let need = rows * cols.div_ceil(8);
    let code = unpack(&decode(code, "code", need)?, rows, cols);
    let mask = unpack(&decode(mask, "mask", need)?, rows, cols);
    IrisTemplate::new(code, mask, identity, format!("{identity}-hex"))
}

/// Hex dump of the code and mask sections, in the `import_hex` record format.
pub fn to_hex(t: &IrisTemplate) -> String {
    format!("{} {}", ::hex::encode(pack(t.code())), ::hex::encode(pack(t.mask())))
}
