"""
Desc: The single optimization stream used by pretraining and fine-tuning: seeded batch draws, one token keep
ratio per step, Adam with a step-decayed learning rate, and divergence checks.
"""

# Core libraries
import logging
import math
from typing import Callable, Iterator, Optional, Sequence

# External libraries
import numpy as np
import torch
import torch.nn.functional as F

# Custom libraries
from serum.Checkpoint import saveCheckpoint
from serum.DocumentSample import DocumentSample
from serum.Errors import TrainingDivergedError
from serum.model.TokenMerge import sampleAlpha
from serum.training.Losses import LossReport, matchingLoss, textConstraintLoss, totalLoss
from serum.training.PretrainBatch import SEG_TO_TEXT, assemblePretrainBatch, imageBatch

logger = logging.getLogger(__name__)


def seedEverything(seed: int) -> np.random.Generator:
    '''
    Seed torch and return the numpy generator every random draw of a run comes from.
    '''

    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def stepsPerDecay(config) -> int:
    '''
    Steps between learning-rate decays, an epoch being one pass over the configured dataset size.
    '''

    return config.lr_decay_epochs * math.ceil(config.dataset_size / config.batch_size)


def padTargets(targets: Sequence[Sequence[int]], padId: int) -> torch.Tensor:
    length = max(len(target) for target in targets)
    padded = torch.full((len(targets), length), padId, dtype=torch.long)
    for row, target in enumerate(targets):
        padded[row, :len(target)] = torch.as_tensor(list(target), dtype=torch.long)
    return padded


class Trainer:
    def __init__(self, model, rng: np.random.Generator, checkpointPath: Optional[str] = None,
                 checkpointEvery: int = 0):
        '''
        :param model: The SeRumModel to optimize, its config supplies every schedule constant.
        :param rng: Seeded generator for batch, task and keep-ratio draws.
        :param checkpointPath: Where the last good state is written, if anywhere.
        :param checkpointEvery: Write the checkpoint every this many steps, 0 for only at the start and end.
        '''

        self.model = model
        self.config = model.config
        self.vocabulary = model.vocabulary
        self.rng = rng
        self.checkpointPath = checkpointPath
        self.checkpointEvery = checkpointEvery
        self.lastGoodCheckpoint = None
        self.step = 0

        self.optimizer = torch.optim.Adam(model.parameters(), lr=self.config.learning_rate)
        self.scheduler = torch.optim.lr_scheduler.StepLR(self.optimizer, step_size=stepsPerDecay(self.config),
                                                         gamma=self.config.lr_decay)

    @property
    def device(self) -> torch.device:
        return next(self.model.parameters()).device

    @property
    def learningRate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def sampleBatch(self, samples: Sequence[DocumentSample]) -> list:
        if not samples:
            raise ValueError("Cannot train on an empty dataset")

        size = min(self.config.batch_size, len(samples))
        return [samples[index] for index in self.rng.choice(len(samples), size=size, replace=False)]

    def drawAlpha(self) -> float:
        return sampleAlpha(self.rng, training=True, alphaMin=self.config.alpha_min, alphaMax=self.config.alpha_max)

    def pretrainLosses(self, samples: Sequence[DocumentSample], alpha: float):
        '''
        Losses of one mixed-task batch. Segmentation slots share one query decoder pass and are supervised
        by matching (and, for learnable slots, by text-area coverage); transcription slots decode the
        text of a region whose mask stands in for the query scores.

        :returns: (l_match, l_decoder, l_text, per-layer matching losses) or None when no slot survived.
        '''

        slots = assemblePretrainBatch(samples, self.rng, self.config)
        if not slots:
            return None

        zero = torch.zeros((), device=self.device)
        lMatch, lDecoder, lText = zero, zero, zero
        perLayer = [0.0] * self.config.decoder_layers

        segmentSlots = [slot for slot in slots if slot.decodesQueries]
        if segmentSlots:
            images = imageBatch([slot.sample for slot in segmentSlots], self.device)
            _, bundle = self.model.queries(images, [slot.queries for slot in segmentSlots])

            matchLosses = []
            for row, slot in enumerate(segmentSlots):
                targets = torch.as_tensor(slot.mask_targets, device=self.device)
                loss, layerLosses, _ = matchingLoss([scores[row] for scores in bundle.per_layer_e_score],
                                                    bundle.class_logits[row], targets, bundle.validity[row])
                matchLosses.append(loss)
                perLayer = [total + float(layer) / len(segmentSlots) for total, layer in zip(perLayer, layerLosses)]

            lMatch = torch.stack(matchLosses).mean()

            # Only learnable slots are asked to cover every text region
            coverRows = [row for row, slot in enumerate(segmentSlots) if not slot.queries]
            if coverRows:
                textMask = np.stack([segmentSlots[row].sample.textAreaMask(self.config.pixel_height,
                                                                           self.config.pixel_width)
                                     for row in coverRows])
                index = torch.as_tensor(coverRows, device=self.device)
                lText = textConstraintLoss(bundle.e_score[index], torch.as_tensor(textMask, device=self.device),
                                           bundle.validity[index])

        transcribeSlots = [slot for slot in slots if slot.task == SEG_TO_TEXT]
        if transcribeSlots:
            images = imageBatch([slot.sample for slot in transcribeSlots], self.device)
            features = self.model.encode(images)

            regionMasks = torch.as_tensor(np.stack([slot.region_mask for slot in transcribeSlots]),
                                          dtype=features.grid.dtype, device=self.device)
            factor = self.config.upsample_factor
            tokenScores = F.avg_pool2d(regionMasks[:, None], kernel_size=factor, stride=factor).flatten(1)
            merged = self.model.tokenMerge.fromScores(features.tokens, tokenScores, alpha)

            targets = [self.vocabulary.encodeText(slot.text_target)[:self.config.max_decode_len - 1]
                       + [self.vocabulary.EOS_ID] for slot in transcribeSlots]
            lDecoder = self.model.teacherForcedNll(merged.context,
                                                   padTargets(targets, self.vocabulary.PAD_ID).to(self.device))

        return lMatch, lDecoder, lText, perLayer

    def pretrainStep(self, samples: Sequence[DocumentSample]) -> Optional[LossReport]:
        alpha = self.drawAlpha()
        losses = self.pretrainLosses(self.sampleBatch(samples), alpha)
        if losses is None:
            logger.warning(f"Step {self.step}: no sample in the batch had text regions, skipping")
            return None

        lMatch, lDecoder, lText, perLayer = losses
        return self.applyLosses(lMatch, lDecoder, lText, perLayer)

    def finetuneStep(self, samples: Sequence[DocumentSample], manner) -> LossReport:
        '''
        One fine-tuning step: decoder and implicit text-area supervision only, no mask matching.
        '''

        alpha = self.drawAlpha()
        lDecoder, lText = manner.trainingLoss(self.model, self.sampleBatch(samples), alpha)
        return self.applyLosses(torch.zeros((), device=self.device), lDecoder, lText, [])

    def applyLosses(self, lMatch, lDecoder, lText, perLayer) -> LossReport:
        lTotal = totalLoss(lMatch, lDecoder, lText, self.config.lambda_match, self.config.lambda_decoder,
                           self.config.lambda_text)

        report = LossReport(float(lMatch), float(lDecoder), float(lText), float(lTotal), list(perLayer))
        if not report.isFinite():
            raise TrainingDivergedError(self.step, report.toDict(), self.lastGoodCheckpoint)

        self.optimizer.zero_grad()
        lTotal.backward()
        self.optimizer.step()
        self.scheduler.step()
        self.step += 1

        logger.debug(f"Step {self.step}: {report.toDict()} lr={self.learningRate:.3g}")

        if self.checkpointEvery and self.step % self.checkpointEvery == 0:
            self.saveGood()

        return report

    def saveGood(self) -> None:
        if self.checkpointPath is None:
            return

        saveCheckpoint(self.checkpointPath, self.model, self.optimizer, self.step)
        self.lastGoodCheckpoint = self.checkpointPath

    def run(self, steps: int, stepFunction: Callable[[], Optional[LossReport]]) -> Iterator[LossReport]:
        '''
        Take the given number of steps, yielding every report.
        The checkpoint is written before the first step and after the last.
        '''

        if steps < 0:
            raise ValueError(f"Step count must be nonnegative, got {steps}")

        self.model.train()
        self.saveGood()
        for _ in range(steps):
            report = stepFunction()
            if report is not None:
                yield report

        self.saveGood()
