import numpy as np

from config.settings import FieldMode
from src.core.channel import ChannelRealization


def hand_realization(gains: dict, field: FieldMode = FieldMode.COMPLEX) -> ChannelRealization:
    """{LinkId: [每个时隙的矩阵]} -> ChannelRealization"""
    dtype = np.float64 if field == FieldMode.REAL else np.complex128
    return ChannelRealization(
        gains={link: np.array(mats, dtype=dtype) for link, mats in gains.items()},
        epsilon=0.0,
        field=field,
    )
