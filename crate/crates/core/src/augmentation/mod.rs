//! Generation-stage inputs: the side-by-side composite, the
//! retrieval-conditioned prompt, and dispatch to a generator backend.

mod composite;
mod generator;

pub use composite::{concatenate, decode_rgb, encode_png, CompositeImage, SEPARATOR_COLOR, SEPARATOR_WIDTH};
pub use generator::{
    baseline_generate, generate, generate_with_image, EchoGenerator, FixedGenerator, Generator,
    GeneratorEndpoint, HttpGenerator, ECHO_PREFIX,
};

use crate::error::{Error, Result};

/// Instruction sent alongside a composite image.
pub const RAG_TEMPLATE: &str = "The given image has left and right parts separated by a distinct red line. The corresponding textual description has been given for the scenario on the right. Please give the textual description of the driving scenario on the left accordingly.";

/// Label line preceding the retrieved caption.
pub const RIGHT_LABEL: &str = "Description of the right scenario:";

/// Prompt for the arm without retrieval.
pub const BASELINE_PROMPT: &str = "Please give the textual description of the driving scenario.";

/// Template, then the label line, then the caption verbatim.
pub fn build_prompt(retrieved_caption: &str) -> Result<String> {
    if retrieved_caption.is_empty() {
        return Err(Error::Precondition("retrieved caption must be non-empty".into()));
    }
    Ok(format!("{RAG_TEMPLATE}\n{RIGHT_LABEL}\n{retrieved_caption}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_layout() {
        let p = build_prompt("A wet road at dusk.").unwrap();
        assert_eq!(
            p,
            format!("{RAG_TEMPLATE}\nDescription of the right scenario:\nA wet road at dusk.")
        );
        assert!(p.starts_with("The given image has left and right parts separated by a distinct red line."));
    }

    #[test]
    fn template_bytes_are_caption_independent() {
        let a = build_prompt("x").unwrap();
        let b = build_prompt("something much longer\nwith a newline").unwrap();
        assert_eq!(a[..RAG_TEMPLATE.len()], b[..RAG_TEMPLATE.len()]);
        assert!(b.ends_with("something much longer\nwith a newline"));
    }

    #[test]
    fn empty_caption() {
        assert!(matches!(build_prompt(""), Err(Error::Precondition(_))));
    }

    #[test]
    fn baseline_prompt_text() {
        assert_eq!(BASELINE_PROMPT, "Please give the textual description of the driving scenario.");
    }
}
