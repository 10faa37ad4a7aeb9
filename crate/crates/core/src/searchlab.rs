//! Search strategies (placeholder).
