//! Data sources: 2D toy distributions, paired head phantoms and PGM corpora.

mod pgm;
mod phantom;
mod points;
mod split;

pub use pgm::{corpus_path, decode_pgm, encode_pgm, load_corpus_dir, load_pgm, save_pgm, CorpusImage};
pub use phantom::{
    foreground_mask, gen_phantom, gen_phantom_set, image_rng, mask_iou, render, Dose, PhantomImageDomain,
    PhantomRecord, Pose, Rendered, Style, StyleParams, DEFAULT_RESOLUTION, POSE_LIMIT_DEG, POSE_STEP_DEG,
};
pub use points::{gen_points, PointCloudDomain, PointGenerator};
pub use split::{split, split_keys, SplitSpec, DEFAULT_TEST_FRACTION};
