//! Self-supervised pretraining (placeholder).
