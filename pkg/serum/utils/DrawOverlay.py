# External Libraries
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["renderOverlay"]


def _tokenGrid(foregroundIndices, gridHeight: int, gridWidth: int) -> np.ndarray:
    '''
    Rank of every kept token on the h x w grid (0 for the best), NaN for merged-away tokens.
    '''

    grid = np.full(gridHeight * gridWidth, np.nan)
    for rank, index in enumerate(np.asarray(foregroundIndices).tolist()):
        grid[index] = rank
    return grid.reshape(gridHeight, gridWidth)


def renderOverlay(sample, scores, foregroundIndices, outPath: str, gridShape, title: str = None) -> str:
    """Save the document, its score heatmap and its kept tokens side by side.

    Parameters
    ----------
    sample : DocumentSample
        The evaluated document.
    scores : array (sh, sw)
        Score map over the upsampled grid, e.g. the max over live queries.
    foregroundIndices : array (K,)
        Row-major indices of the kept tokens, best first.
    outPath : str
        PNG destination.
    gridShape : (h, w)
        Token grid size.
    """

    scores = np.asarray(scores, dtype=np.float32)
    image = np.asarray(sample.image)
    cmap = None
    if image.shape[2] == 1:
        image = image[:, :, 0]
        cmap = "gray"

    extent = (0, sample.width, sample.height, 0)
    kept = _tokenGrid(foregroundIndices, *gridShape)

    figure, axes = plt.subplots(1, 3, figsize=(12, 4.5))

    axes[0].imshow(image, cmap=cmap, vmin=0, vmax=1)
    axes[0].set_title("document")

    axes[1].imshow(image, cmap=cmap, vmin=0, vmax=1)
    heat = axes[1].imshow(scores, cmap="magma", alpha=0.6, vmin=0, vmax=1, extent=extent)
    figure.colorbar(heat, ax=axes[1], fraction=0.046)
    axes[1].set_title("query scores")

    axes[2].imshow(image, cmap=cmap, vmin=0, vmax=1)
    axes[2].imshow(np.ma.masked_invalid(kept), cmap="viridis_r", alpha=0.55, extent=extent,
                   interpolation="nearest")
    axes[2].set_title(f"kept tokens (K={len(np.asarray(foregroundIndices))})")

    for axis in axes:
        axis.axis("off")

    if title:
        figure.suptitle(title)

    figure.tight_layout()
    figure.savefig(outPath, dpi=100)
    plt.close(figure)

    return outPath
