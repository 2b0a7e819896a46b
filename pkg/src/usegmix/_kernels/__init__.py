"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``_native``, Cython) and the fallback
(``_fallback``, numpy + scipy.ndimage) implement the same six functions
with identical semantics; integer kernels (flood fill, nearest warp) and
the SLIC iteration are bit-exact twins, the CG solver agrees to solver
tolerance. Set ``USEGMIX_NATIVE=0`` to force the fallback.
"""

import os

from . import _fallback

if os.environ.get("USEGMIX_NATIVE", "1") != "0":
    try:
        from . import _native as _impl

        HAVE_NATIVE = True
    except ImportError:
        _impl = _fallback
        HAVE_NATIVE = False
else:
    _impl = _fallback
    HAVE_NATIVE = False

ACTIVE = "native" if HAVE_NATIVE else "fallback"

slic_iterate = _impl.slic_iterate
flood_fill = _impl.flood_fill
label_components = _impl.label_components
warp_bilinear_rgb = _impl.warp_bilinear_rgb
warp_nearest_mask = _impl.warp_nearest_mask
cg_masked_laplacian = _impl.cg_masked_laplacian
