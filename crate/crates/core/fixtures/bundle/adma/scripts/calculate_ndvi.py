import sys

import numpy as np


def ndvi(nir, red):
    nir = np.asarray(nir, dtype=float)
    red = np.asarray(red, dtype=float)
    return (nir - red) / np.clip(nir + red, 1e-9, None)


if __name__ == "__main__":
    nir, red = (float(x) for x in sys.argv[1:3])
    print(ndvi(nir, red))
