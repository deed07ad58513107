from typing import Annotated, Any

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _float_array(value: Any) -> np.ndarray:
    return _readonly(np.array(value, dtype=float).reshape(-1))


def _float_matrix(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    return _readonly(arr)


def _int_array(value: Any) -> np.ndarray:
    return _readonly(np.array(value, dtype=np.int64).reshape(-1))


def _bool_array(value: Any) -> np.ndarray:
    return _readonly(np.array(value, dtype=bool).reshape(-1))


def _str_array(value: Any) -> np.ndarray:
    return _readonly(np.array([str(v) for v in value], dtype=object))


FloatArray = Annotated[np.ndarray, BeforeValidator(_float_array)]
FloatMatrix = Annotated[np.ndarray, BeforeValidator(_float_matrix)]
IntArray = Annotated[np.ndarray, BeforeValidator(_int_array)]
BoolArray = Annotated[np.ndarray, BeforeValidator(_bool_array)]
StrArray = Annotated[np.ndarray, BeforeValidator(_str_array)]


class ArrayModel(BaseModel):
    """Immutable model whose fields may hold numpy arrays."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
