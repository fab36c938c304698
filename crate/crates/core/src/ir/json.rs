use serde::{Deserialize, Serialize};

use super::{BlockInfo, IrOperator, NetworkIr};
use crate::assembler::NetworkSpec;
use crate::error::IrError;

pub const FORMAT_VERSION: &str = "aog-ir/1";

#[derive(Serialize)]
struct DocumentRef<'a> {
    format: &'static str,
    spec: &'a NetworkSpec,
    blocks: &'a [BlockInfo],
    operators: &'a [IrOperator],
}

#[derive(Deserialize)]
struct VersionProbe {
    format: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[allow(dead_code)]
    format: String,
    spec: NetworkSpec,
    blocks: Vec<BlockInfo>,
    operators: Vec<IrOperator>,
}

/// Serialize to `.aogir.json`: UTF-8, fields in declaration order, one
/// trailing newline.
pub fn export_json(ir: &NetworkIr) -> Vec<u8> {
    let doc = DocumentRef {
        format: FORMAT_VERSION,
        spec: &ir.spec,
        blocks: &ir.blocks,
        operators: &ir.operators,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("IR serialization is infallible");
    out.push(b'\n');
    out
}

/// Parse and validate a `.aogir.json` document.
pub fn parse_json(bytes: &[u8]) -> Result<NetworkIr, IrError> {
    let probe: VersionProbe = serde_json::from_slice(bytes)?;
    if probe.format != FORMAT_VERSION {
        return Err(IrError::Version {
            found: probe.format,
            expected: FORMAT_VERSION,
        });
    }
    let doc: Document = serde_json::from_slice(bytes)?;
    let ir = NetworkIr {
        spec: doc.spec,
        operators: doc.operators,
        blocks: doc.blocks,
    };
    ir.validate()?;
    Ok(ir)
}
