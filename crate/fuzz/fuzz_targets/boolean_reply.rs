#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    layoutkit_fuzz::boolean_reply(data);
});
