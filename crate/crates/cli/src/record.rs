//! Machine-readable output: one JSON object per line, each tagged with the
//! record format version and its kind.

use serde::Serialize;

pub const RECORD_FORMAT: &str = "imgsel-record/1";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    format: &'static str,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn to_line<T: Serialize>(kind: &str, body: &T) -> String {
    serde_json::to_string(&Envelope {
        format: RECORD_FORMAT,
        kind,
        body,
    })
    .expect("records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_fields_come_first() {
        #[derive(Serialize)]
        struct Body {
            x: u32,
        }
        assert_eq!(
            to_line("demo", &Body { x: 3 }),
            r#"{"format":"imgsel-record/1","kind":"demo","x":3}"#
        );
    }
}
