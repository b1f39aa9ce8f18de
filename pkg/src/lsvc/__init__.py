"""Layered scalable video codec for machine and human consumers.

The base-layer bitstream alone drives an object-detection proxy; adding the
enhancement layer reconstructs the input for viewing. The package also ships
the full rate-quality evaluation stack: PSNR, MS-SSIM, mAP, BD-rate with
curve validation, break-even analysis, and a data-processing-inequality
property check.
"""

from .bitstream import (
    LayeredBitstream,
    NalUnit,
    StreamHeader,
    UnitType,
    demux,
    extract_layers,
    mux,
    parse_nal,
    write_nal,
)
from .entropy import RateEstimate, decode_plane, encode_plane, estimate_rate
from .errors import BitstreamError, CodecError, CorruptStreamError, CurveError
from .frames import (
    Frame,
    GroundTruthBox,
    MovingObject,
    SceneSpec,
    Sequence,
    generate_synthetic,
    load_raw,
    save_raw,
)
from .inter import (
    DecodedPictureBuffer,
    GopConfig,
    decode_inter,
    decode_sequence,
    encode_all_intra,
    encode_inter,
    encode_sequence,
    interpolate_frame,
    replace_reference,
)
from .intra import (
    IntraEncodeResult,
    LossReport,
    decode_intra_base,
    decode_intra_full,
    encode_intra,
    evaluate_loss,
)
from .metrics import (
    BDResult,
    BreakEvenInput,
    CurveDiagnosis,
    MarkovChain,
    RDCurve,
    bd_rate,
    break_even,
    dpi_check,
    ms_ssim,
    psnr,
    validate_curve,
)
from .transform import (
    ChannelBand,
    Latent,
    QualityProfile,
    QuantizedLatent,
    analysis,
    merge,
    quantize,
    split,
    synthesis,
    zero_fill_enhancement,
)
from .vision import (
    APResult,
    DetectParams,
    Detection,
    TaskFeature,
    detect,
    evaluate_map,
    lst,
    task_feature_reference,
)

__version__ = "0.1.0"
