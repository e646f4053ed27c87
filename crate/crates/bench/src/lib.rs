//! Inputs for the engine benchmarks.

use prefixer_core::Snippet;

/// A snippet of roughly `blocks * 6` statements mixing calls, attribute
/// chains, branches and loops over names that are never defined.
pub fn synthetic_snippet(blocks: usize) -> Snippet {
    let mut source = String::new();
    for i in 0..blocks {
        source.push_str(&format!(
            "value{i} = client{i}.fetch(key{i}, retries=limit)\n\
             if value{i}.status == ok_status:\n    \
                 items{i} = [transform(v) for v in value{i}.rows]\n\
             else:\n    \
                 items{i} = []\n\
             for item in items{i}:\n    \
                 sink.write(item.payload)\n"
        ));
    }
    Snippet::new(format!("synthetic{blocks}"), source).expect("synthetic snippet parses")
}
