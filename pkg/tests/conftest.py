import numpy as np

from beamfuse.tensor import Tensor


def fd_grad(fn, arrays: dict[str, np.ndarray], wrt: str, h: float = 1e-5
            ) -> np.ndarray:
    """Central finite differences of scalar fn(dict of arrays) w.r.t. one
    array, fully independent of the autodiff tape."""
    base = {k: v.copy() for k, v in arrays.items()}
    target = base[wrt]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(base)
        flat[i] = orig - h
        fm = fn(base)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def check_grads(build_loss, arrays: dict[str, np.ndarray], rtol: float = 1e-4,
                floor: float = 1e-7) -> None:
    """Compare autodiff gradients of build_loss against finite differences.

    build_loss receives a dict of Tensors (requires_grad) and returns the
    scalar loss Tensor.
    """
    tensors = {k: Tensor(v.astype(np.float64), requires_grad=True)
               for k, v in arrays.items()}
    loss = build_loss(tensors)
    loss.backward()

    def as_scalar(arrs):
        ts = {k: Tensor(v.astype(np.float64)) for k, v in arrs.items()}
        return build_loss(ts).item()

    for name, t in tensors.items():
        ad = t.grad if t.grad is not None else np.zeros_like(t.data)
        fd = fd_grad(as_scalar, arrays, name)
        diff = np.abs(ad - fd)
        scale = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), floor)
        bad = diff > floor
        rel = np.where(bad, diff / scale, 0.0)
        assert rel.max() < rtol, (
            f"{name}: max rel err {rel.max():.2e} at "
            f"{np.unravel_index(rel.argmax(), rel.shape)}")
