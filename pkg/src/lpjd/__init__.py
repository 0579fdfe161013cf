"""Joint linear-programming decoding of LDPC codes on finite-state ISI channels."""

from .code import ParityCheckCode, gen_regular_code, read_alist, spc, write_alist
from .jimpd import IterSchedule, jimpd_decode
from .lp import DecodeOutcome, JointLPDecoder, joint_decode
from .pcw import DistanceSpectrum, accumulate_spectrum, d_gen, sigma_p_sq, union_bound
from .trellis import ChannelModel, build_trellis, load_channel, make_dicode, viterbi

__all__ = [
    "ChannelModel", "DecodeOutcome", "DistanceSpectrum", "IterSchedule", "JointLPDecoder",
    "ParityCheckCode", "accumulate_spectrum", "build_trellis", "d_gen", "gen_regular_code",
    "jimpd_decode", "joint_decode", "load_channel", "make_dicode", "read_alist", "sigma_p_sq",
    "spc", "union_bound", "viterbi", "write_alist",
]
