from typing import Tuple

import numpy as np
from scipy import ndimage

# Site codes shared by the walk kernels.
CODE_FREE = 0
CODE_REMOVED = -1
CODE_ESCAPE = -2


class SiteGrid:
    """
    Dense raster of site codes over a bounding box.

    codes[ix, iy] describes site (x0 + ix, y0 + iy): FREE, REMOVED (no edge into it),
    ESCAPE, or a positive absorbing label. Sites outside the box take `outside_code`.
    """

    def __init__(self, x0: int, y0: int, width: int, height: int,
                 fill: int = CODE_FREE, outside_code: int = CODE_FREE):
        self.x0 = int(x0)
        self.y0 = int(y0)
        self.codes = np.full((max(width, 1), max(height, 1)), fill, dtype=np.int8)
        self.outside_code = int(outside_code)

    @classmethod
    def covering(cls, xy: np.ndarray, margin: int = 1, fill: int = CODE_FREE,
                 outside_code: int = CODE_FREE) -> "SiteGrid":
        if len(xy) == 0:
            return cls(0, 0, 1, 1, fill=fill, outside_code=outside_code)
        lo = xy.min(axis=0) - margin
        hi = xy.max(axis=0) + margin
        return cls(int(lo[0]), int(lo[1]), int(hi[0] - lo[0] + 1), int(hi[1] - lo[1] + 1),
                   fill=fill, outside_code=outside_code)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.codes.shape

    def inside(self, xy: np.ndarray) -> np.ndarray:
        ix = xy[:, 0] - self.x0
        iy = xy[:, 1] - self.y0
        return (ix >= 0) & (iy >= 0) & (ix < self.codes.shape[0]) & (iy < self.codes.shape[1])

    def set_codes(self, xy: np.ndarray, code: int) -> None:
        if len(xy) == 0:
            return
        xy = np.asarray(xy, dtype=np.int64).reshape(-1, 2)
        xy = xy[self.inside(xy)]
        self.codes[xy[:, 0] - self.x0, xy[:, 1] - self.y0] = code

    def code_at(self, x: int, y: int) -> int:
        ix, iy = x - self.x0, y - self.y0
        if 0 <= ix < self.codes.shape[0] and 0 <= iy < self.codes.shape[1]:
            return int(self.codes[ix, iy])
        return self.outside_code

    def clearance(self) -> np.ndarray:
        """
        Chessboard distance from every cell to the nearest non-free cell.
        When the outside is not free the frame around the box counts as non-free.
        """
        free = self.codes == CODE_FREE
        if self.outside_code != CODE_FREE:
            padded = np.pad(free, 1, constant_values=False)
            dist = ndimage.distance_transform_cdt(padded, metric="chessboard")[1:-1, 1:-1]
        elif free.all():
            dist = np.full(free.shape, 1 << 30, dtype=np.int32)
        else:
            dist = ndimage.distance_transform_cdt(free, metric="chessboard")
        return np.ascontiguousarray(dist, dtype=np.int32)
