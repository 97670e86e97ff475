//! Synthetic ground truth: plasma inputs, one-tissue kinetics and dynamic
//! volumes built from ellipsoidal phantoms.

mod cohort;
mod curves;
mod volume;

pub use cohort::{cohort_specs, render_subject, sample_feng, sample_phantom, SimRanges, SubjectSpec};
pub use curves::{
    gen_aif, metabolite_remainder, tissue_response, tissue_tac, FengAif, FineCurve, MIN_PARENT_FRACTION,
};
pub use volume::{
    downsample4, label_map, phantom_curves, synth_volume, Cohort, DynamicVolume, Ellipsoid, KineticParams,
    Phantom, PhantomCurves, Region, SynthOutput, FINE_DT,
};
