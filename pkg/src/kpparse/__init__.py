"""Human part pseudo masks from keypoint annotations.

Superpixels are labeled by an alpha-expansion graph cut whose unary terms come
from rasterized keypoint skeletons and, optionally, per-pixel part scores.
"""

__version__ = "0.1.0"
