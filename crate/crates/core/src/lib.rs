//! Learning and replaying human handshake reaching behaviours from
//! third-person skeleton recordings.
//!
//! The pipeline, end to end:
//!
//! 1. [`skeleton`] parses two-person `.skeleton` recordings, reduces them to
//!    the 15 upper-body joints and cuts out the reach phase (first hand
//!    movement up to grasp contact).
//! 2. [`kinematics`] retargets the right arm of each frame to four joint
//!    angles (shoulder yaw/pitch/roll, elbow) and provides the forward
//!    kinematics map and Jacobian of the matching two-link arm.
//! 3. [`promp`] fits a probabilistic movement primitive (a Gaussian over
//!    basis-function weights) to the angle trajectories and supports
//!    marginalization plus joint-space and task-space conditioning.
//! 4. [`predictor`] trains a two-layer recurrent network that estimates the
//!    partner's final hand position from a growing prefix of their skeleton.
//! 5. [`control`] runs the per-frame interaction loop: predict, blend the
//!    predicted and observed hand, condition the primitive on the blended
//!    target and emit a joint command.
//! 6. [`sim`] orchestrates dataset preparation, model fitting, replayed
//!    interactions and evaluation, and generates synthetic recordings so the
//!    whole pipeline can run without any external dataset.

pub mod control;
pub mod kinematics;
pub mod predictor;
pub mod promp;
pub mod sim;
pub mod skeleton;
