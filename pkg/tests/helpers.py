import numpy as np


def unit_rows(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def digits_idx(tmp_path):
    """The bundled 8x8 digits, upscaled to 24x24 and padded to 28x28, as IDX files."""
    from sklearn.datasets import load_digits

    from invfeat.datasets import IdxImageSet, write_idx

    d = load_digits()
    up = np.kron(d.images, np.ones((3, 3)))
    img = np.zeros((len(up), 28, 28))
    img[:, 2:26, 2:26] = up
    img = np.clip(np.rint(img / 16 * 255), 0, 255).astype(np.uint8)
    ip, lp = tmp_path / "digits-images.idx", tmp_path / "digits-labels.idx"
    write_idx(IdxImageSet(img, d.target.astype(np.uint8)), ip, lp)
    return ip, lp
