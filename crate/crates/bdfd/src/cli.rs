//! Command-line front end. Placeholder while the stack is assembled.

/// Run the CLI against `std::env::args`, returning the exit code.
pub fn run() -> i32 {
    eprintln!("not yet wired");
    1
}
