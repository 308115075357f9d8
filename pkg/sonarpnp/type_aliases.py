"""Type-aliases which aren't specific to any modules."""
import typing as t

import numpy as np
import numpy.typing as npt

JSONSimpleVals: t.TypeAlias = t.Union[str, bool, int, float, None]
JSONVals: t.TypeAlias = t.Union[
    JSONSimpleVals, list["JSONVals"], dict[str, "JSONVals"]
]

FloatArray: t.TypeAlias = npt.NDArray[np.float64]
ArrayLike: t.TypeAlias = npt.ArrayLike
