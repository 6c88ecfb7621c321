"""Deep forest with hashing-screened multi-grained scanning and window confidence screening."""
import os as _os

# numba's TBB layer is often unavailable; workqueue is always present and deterministic enough
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .cascade import CascadeModel, fit, fit_eval, predict, predict_batch  # noqa: E402
from .config import PRESETS, CascadeConfig  # noqa: E402
from .dataset import Dataset, SplitSpec, load_csv, load_idx, split  # noqa: E402
from .forest import ForestModel, fit_forest, train_forest  # noqa: E402

__version__ = "0.1.0"
__all__ = [
    "CascadeConfig", "CascadeModel", "Dataset", "ForestModel", "PRESETS", "SplitSpec",
    "fit", "fit_eval", "fit_forest", "load_csv", "load_idx", "predict", "predict_batch",
    "split", "train_forest",
]
