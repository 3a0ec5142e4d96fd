//! Per-agent lifting of multi-view camera images into a BEV feature map.

mod backbone;
mod deformable;
mod encoder;
mod feature;
mod spatial;

pub use backbone::{backbone_extract, Backbone, Conv2d, MultiViewFeatures, MultiViewImages};
pub use deformable::{
    deformable_attention, deformable_attention_backward, deformable_attention_traced,
    DeformableAttnParams, DeformableGrads, DeformableTrace,
};
pub use encoder::{encode_bev, BevEncoderConfig, BevEncoderWeights, EncoderLayer};
pub use feature::BevFeature;
pub use spatial::{pillar_visibility, spatial_cross_attention, spatial_cross_attention_with, ViewVisibility};
