"""Music-driven group dance generation.

Twin autoregressive transformer blocks (music-to-dance and dance-to-music)
trained with cycle consistency, adversarial feedback and scheduled-sampling
exposure-bias correction, plus beat-alignment and embedding-space metrics
and a motion preprocessing pipeline. Hot numeric kernels run on a compiled
extension when available and fall back to numpy otherwise.
"""

from ._kernels import backend_name
from .audio import FEATURE_DIM, BeatSequence, FeatureLayout, MusicFeatureSequence, extract_features, music_beats
from .metrics import MetricReport, RetrievalModel, beat_align, diversity, fid, gda, m_dist, mda, mm_dist, motion_beats
from .models import Dance2MusicModel, GenerationConfig, Music2DanceModel
from .motion import POSE_DIM, GroupDanceSequence, KeypointTrajectory, MotionFrame, forward_kinematics, root_velocity
from .rotations import matrix_to_sixd, sixd_to_matrix
from .skeleton import SkeletonDef, default_skeleton
from .synthkit import SynthSpec, make_beat_locked_dance, make_click_music, make_paired_dataset
from .training import LossReport, ModelSet, ScheduleState, TrainConfig, Trainer

__version__ = "0.1.0"

__all__ = [
    "FEATURE_DIM", "POSE_DIM", "__version__", "backend_name",
    "BeatSequence", "FeatureLayout", "MusicFeatureSequence", "extract_features", "music_beats",
    "MetricReport", "RetrievalModel", "beat_align", "diversity", "fid", "gda",
    "m_dist", "mda", "mm_dist", "motion_beats",
    "Dance2MusicModel", "GenerationConfig", "Music2DanceModel",
    "GroupDanceSequence", "KeypointTrajectory", "MotionFrame", "forward_kinematics", "root_velocity",
    "matrix_to_sixd", "sixd_to_matrix",
    "SkeletonDef", "default_skeleton",
    "SynthSpec", "make_beat_locked_dance", "make_click_music", "make_paired_dataset",
    "LossReport", "ModelSet", "ScheduleState", "TrainConfig", "Trainer",
]
