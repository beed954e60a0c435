"""
Desc: Hierarchical shifted-window encoder producing the visual token grid, and the upsampled pixel embedding built on it.
"""

# Core libraries
from dataclasses import dataclass
from typing import Tuple

# External libraries
import torch
import torch.nn as nn
import torch.nn.functional as F

# Constants
SHIFT_MASK_VALUE = -100.0


@dataclass
class FeatureMap:
    grid: torch.Tensor  # (B, h, w, d)

    @property
    def height(self) -> int:
        return self.grid.shape[1]

    @property
    def width(self) -> int:
        return self.grid.shape[2]

    @property
    def tokens(self) -> torch.Tensor:
        '''
        Row-major (B, L, d) view of the grid.
        '''

        return self.grid.reshape(self.grid.shape[0], self.height * self.width, self.grid.shape[3])


def windowPartition(x: torch.Tensor, window: Tuple[int, int]) -> torch.Tensor:
    batch, height, width, channels = x.shape
    x = x.view(batch, height // window[0], window[0], width // window[1], window[1], channels)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window[0] * window[1], channels)


def windowReverse(windows: torch.Tensor, window: Tuple[int, int], height: int, width: int) -> torch.Tensor:
    channels = windows.shape[-1]
    x = windows.view(-1, height // window[0], width // window[1], window[0], window[1], channels)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, height, width, channels)


class WindowAttention(nn.Module):
    '''
    Multi-head self-attention inside non-overlapping windows, with a learned relative position bias
    and optional cyclic shift.
    '''

    def __init__(self, dim: int, numHeads: int, resolution: Tuple[int, int], window: int, shifted: bool):
        super().__init__()

        # Windows never exceed the grid and shifting is pointless once one window covers an axis
        self.resolution = resolution
        self.window = tuple(min(window, size) for size in resolution)
        self.shift = tuple(self.window[axis] // 2 if shifted and resolution[axis] > self.window[axis] else 0
                           for axis in range(2))
        self.numHeads = numHeads
        self.scale = (dim // numHeads) ** -0.5

        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

        windowHeight, windowWidth = self.window
        self.relativeBiasTable = nn.Parameter(torch.zeros((2 * windowHeight - 1) * (2 * windowWidth - 1), numHeads))
        nn.init.trunc_normal_(self.relativeBiasTable, std=0.02)

        coords = torch.stack(torch.meshgrid(torch.arange(windowHeight), torch.arange(windowWidth), indexing="ij"))
        coords = coords.flatten(1)
        relative = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0)
        relative[:, :, 0] += windowHeight - 1
        relative[:, :, 1] += windowWidth - 1
        relative[:, :, 0] *= 2 * windowWidth - 1
        self.register_buffer("relativeIndex", relative.sum(-1).flatten(), persistent=False)

        if any(self.shift):
            self.register_buffer("shiftMask", self.buildShiftMask(), persistent=False)
        else:
            self.shiftMask = None

    def buildShiftMask(self) -> torch.Tensor:
        height, width = self.resolution
        regions = torch.zeros(1, height, width, 1)

        def slices(window, shift):
            if not shift:
                return ((0, None),)
            return ((0, -window), (-window, -shift), (-shift, None))

        label = 0
        for rows in slices(self.window[0], self.shift[0]):
            for cols in slices(self.window[1], self.shift[1]):
                regions[:, rows[0]:rows[1], cols[0]:cols[1], :] = label
                label += 1

        labels = windowPartition(regions, self.window).squeeze(-1)
        mask = labels[:, None, :] - labels[:, :, None]
        return mask.masked_fill(mask != 0, SHIFT_MASK_VALUE).masked_fill(mask == 0, 0.0)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, height, width, channels = x.shape
        if (height, width) != tuple(self.resolution):
            raise ValueError(f"Expected a {self.resolution} grid, got {(height, width)}")

        if any(self.shift):
            x = torch.roll(x, shifts=(-self.shift[0], -self.shift[1]), dims=(1, 2))

        windows = windowPartition(x, self.window)
        numWindows, windowSize = windows.shape[0] // batch, windows.shape[1]

        qkv = self.qkv(windows).reshape(windows.shape[0], windowSize, 3, self.numHeads, channels // self.numHeads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)

        attention = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.relativeBiasTable[self.relativeIndex].view(windowSize, windowSize, -1).permute(2, 0, 1)
        attention = attention + bias.unsqueeze(0)

        if self.shiftMask is not None:
            attention = attention.view(batch, numWindows, self.numHeads, windowSize, windowSize)
            attention = attention + self.shiftMask.to(attention.dtype)[None, :, None]
            attention = attention.view(-1, self.numHeads, windowSize, windowSize)

        out = (attention.softmax(dim=-1) @ v).transpose(1, 2).reshape(windows.shape[0], windowSize, channels)
        x = windowReverse(self.proj(out), self.window, height, width)

        if any(self.shift):
            x = torch.roll(x, shifts=self.shift, dims=(1, 2))

        return x


class SwinBlock(nn.Module):
    def __init__(self, dim: int, numHeads: int, resolution: Tuple[int, int], window: int, shifted: bool,
                 mlpRatio: float):
        super().__init__()

        self.norm1 = nn.LayerNorm(dim)
        self.attention = WindowAttention(dim, numHeads, resolution, window, shifted)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, int(dim * mlpRatio)), nn.GELU(), nn.Linear(int(dim * mlpRatio), dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attention(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    '''
    Halve the grid on both axes, doubling the width.
    '''

    def __init__(self, dim: int):
        super().__init__()

        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = torch.cat([x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]], dim=-1)
        return self.reduction(self.norm(x))


class VisionEncoder(nn.Module):
    def __init__(self, config):
        '''
        :param config: ModelConfig giving the input size, stage depths, window and widths.
        '''

        super().__init__()

        self.config = config
        dims = config.stage_dims

        self.patchEmbed = nn.Conv2d(config.image_channels, dims[0], kernel_size=config.patch_size,
                                    stride=config.patch_size)
        self.patchNorm = nn.LayerNorm(dims[0])

        self.stages = nn.ModuleList()
        self.merges = nn.ModuleList()
        for stage, depth in enumerate(config.encoder_stage_depths):
            resolution = config.stageResolution(stage)
            numHeads = dims[stage] // config.encoder_head_dim
            self.stages.append(nn.Sequential(*[
                SwinBlock(dims[stage], numHeads, resolution, config.encoder_window, blockIndex % 2 == 1,
                          config.mlp_ratio)
                for blockIndex in range(depth)
            ]))
            if stage < config.num_stages - 1:
                self.merges.append(PatchMerging(dims[stage]))

        self.norm = nn.LayerNorm(config.embed_dim)

        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=0.02)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)

    def forward(self, image: torch.Tensor) -> FeatureMap:
        '''
        Encode a batch of images into the visual token grid.

        :param image: (B, H, W, C) or (H, W, C) intensities.
        :returns: FeatureMap with a (B, H/downsample, W/downsample, d) grid.
        '''

        if image.dim() == 3:
            image = image.unsqueeze(0)

        expected = (self.config.image_height, self.config.image_width, self.config.image_channels)
        if image.dim() != 4 or tuple(image.shape[1:]) != expected:
            raise ValueError(f"Expected images of shape (B, {expected[0]}, {expected[1]}, {expected[2]}), "
                             f"got {tuple(image.shape)}")

        if not torch.isfinite(image).all():
            raise ValueError("Image contains non-finite values")

        x = self.patchEmbed(image.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)
        x = self.patchNorm(x)

        for stage, blocks in enumerate(self.stages):
            x = blocks(x)
            if stage < len(self.merges):
                x = self.merges[stage](x)

        return FeatureMap(self.norm(x))


def bilinearMatrix(size: int, factor: int, dtype=torch.float32) -> torch.Tensor:
    '''
    (factor * size, size) interpolation matrix. Output index i samples source coordinate i / factor,
    so every factor-th output row reproduces a source row exactly. Past the last knot the edge is held.
    '''

    outIndex = torch.arange(factor * size)
    lower = torch.div(outIndex, factor, rounding_mode="floor")
    upper = torch.clamp(lower + 1, max=size - 1)
    fraction = (outIndex % factor).to(dtype) / factor

    matrix = torch.zeros(factor * size, size, dtype=dtype)
    matrix[outIndex, lower] += 1 - fraction
    matrix[outIndex, upper] += fraction
    return matrix


class PixelUpsampler(nn.Module):
    '''
    Bilinear upsampling of the token grid by the configured factor, a learned per-channel projection,
    and the learnable position term P.
    '''

    def __init__(self, config):
        super().__init__()

        self.factor = config.upsample_factor
        self.gridSize = (config.grid_height, config.grid_width)
        self.projection = nn.Linear(config.embed_dim, config.embed_dim)
        nn.init.eye_(self.projection.weight)
        nn.init.zeros_(self.projection.bias)

        self.position = nn.Parameter(torch.zeros(config.pixel_height, config.pixel_width, config.embed_dim))
        nn.init.trunc_normal_(self.position, std=0.02)

        self.register_buffer("rowMatrix", bilinearMatrix(config.grid_height, self.factor), persistent=False)
        self.register_buffer("colMatrix", bilinearMatrix(config.grid_width, self.factor), persistent=False)

    def forward(self, features: FeatureMap) -> torch.Tensor:
        '''
        :returns: (B, s*h, s*w, d) pixel embedding.
        '''

        if (features.height, features.width) != self.gridSize:
            raise ValueError(f"Expected a {self.gridSize} token grid, got {(features.height, features.width)}")

        grid = features.grid
        upsampled = torch.einsum("ih,bhwd,jw->bijd", self.rowMatrix.to(grid.dtype), grid, self.colMatrix.to(grid.dtype))
        return self.projection(upsampled) + self.position
