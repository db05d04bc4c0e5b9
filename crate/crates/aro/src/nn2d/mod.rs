//! Desk-scale 2D occupancy network: polygon sampling, anchor features,
//! an attention encoder with exact hand-written gradients, and training.

pub mod net;
pub mod shape;
pub mod train;

pub use net::{forward, loss_and_gradients, AttentionNetParams, NetConfig, FEATURE_DIM};
pub use shape::{
    features_2d, generate_samples, hit_distance_2d, point_in_polygon, AroFeature2D, Box2D,
    Sample2D, Shape2D,
};
pub use train::{
    anchor_activation_map, lr_at_epoch, reconstruct_image, train, TrainConfig, TrainReport,
};
