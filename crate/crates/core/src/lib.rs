pub mod crossframe;
pub mod design;
pub mod encoders;
pub mod error;
pub mod frame;
pub mod plan_serde;
pub mod prepare;
pub mod significance;
pub mod splits;

pub use error::{Error, Result};

pub use crossframe::{mk_cross_frame_c, mk_cross_frame_n, CrossFrameResult};
pub use design::{
    design_treatments_c, design_treatments_n, design_treatments_z, Controls, ScoreFrameRow, Task,
    TreatmentPlan,
};
pub use encoders::{Treatment, TreatmentCode};
pub use frame::{
    read_csv, write_csv, CategoricalColumn, Column, ColumnKind, Frame, Level, NumericColumn, Schema,
};
pub use plan_serde::{load_plan, save_plan};
pub use prepare::{prepare, scale_columns, PrepareOptions};
pub use splits::{SplitMethod, SplitPlan};
