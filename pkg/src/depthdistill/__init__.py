"""
Depth Distill - (depth-distill)

depth-distill refines metric depth from a stereo pair by per-pixel
optimization of photometric consistency plus structure distilled from a
relative-depth expert map.

    Render a synthetic stereo pair

    >>> import depthdistill
    >>> spec = depthdistill.preset("default-boxes", resolution=96)
    >>> sample = depthdistill.render(spec)

    Simulate an expert that only knows relative depth

    >>> expert = depthdistill.expert_from_gt(sample.gt_depth, depthdistill.ExpertSimConfig(scale=2.0, shift=0.1))

    Refine

    >>> inputs = depthdistill.RefineInputs.from_sample(sample, expert=expert)
    >>> result = depthdistill.refine(inputs, depthdistill.RefineConfig(iterations=200))

    Evaluate

    >>> print(depthdistill.depth_metrics(result.depth, sample.gt_depth))

    Logging for debugging

    >>> depthdistill.add_stderr_logger()
"""

# Standard Modules
import logging
from logging import NullHandler, StreamHandler
from importlib.metadata import version, PackageNotFoundError

# Local
from depthdistill.core.camera import CameraIntrinsics, RigidTransform, stereo_transform
from depthdistill.core.grids import (
    BoundaryMap,
    DepthMap,
    GradientMap,
    Image,
    RelativeDepthMap,
    validate,
)
from depthdistill.metrics import depth_metrics, median_scale
from depthdistill.refiner import RefineConfig, RefineInputs, TemporalFrame, refine
from depthdistill.synthscene import ExpertSimConfig, expert_from_gt, preset, render

try:
    __version__ = version("depth-distill")
except PackageNotFoundError:
    # package is not installed
    pass


logging.getLogger(__name__).addHandler(NullHandler())


def add_stderr_logger(level=logging.DEBUG) -> StreamHandler:
    """
    Helper for quickly adding a StreamHandler to the logger. Useful for debugging.

    Keyword Arguments:
        level (int): logging level

    Returns:
        StreamHandler
    """
    # Kept in __init__.py so __name__ is the package logger even when vendored.
    logger = logging.getLogger(__name__)
    logging.captureWarnings(True)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.debug("Added a stderr logging handler to logger: %s", __name__)
    return handler


# ... Clean up.
del NullHandler
