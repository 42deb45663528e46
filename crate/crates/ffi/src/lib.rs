pub use dbrw;
