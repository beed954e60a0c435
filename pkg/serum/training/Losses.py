"""
Desc: Hungarian matching between queries and text regions, and the matching, decoder and text-area losses.
"""

# Core libraries
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

# External libraries
import numpy as np
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

# Custom libraries
from serum.model.QueryDecoder import NO_OBJECT_CLASS, TEXT_CLASS

# Constants
DICE_SMOOTHING = 1.0


@dataclass(frozen=True)
class Assignment:
    pairs: Tuple[Tuple[int, int], ...]
    unmatched: Tuple[int, ...]
    cost: float = 0.0

    @property
    def queryIndices(self) -> List[int]:
        return [query for query, _ in self.pairs]

    @property
    def targetIndices(self) -> List[int]:
        return [target for _, target in self.pairs]


@dataclass
class LossReport:
    l_match: float
    l_decoder: float
    l_text: float
    l_total: float
    per_layer_match: List[float] = field(default_factory=list)

    def toDict(self) -> dict:
        return {"l_match": self.l_match, "l_decoder": self.l_decoder, "l_text": self.l_text,
                "l_total": self.l_total, "per_layer_match": list(self.per_layer_match)}

    def isFinite(self) -> bool:
        return bool(np.isfinite([self.l_match, self.l_decoder, self.l_text, self.l_total]).all())


def hungarianMatch(cost) -> Assignment:
    '''
    Minimum-cost one-to-one assignment of every target (column) to a distinct query (row).

    :param cost: (n, m) matrix with n >= m.
    :returns: The assignment, with the queries left over marked unmatched.
    '''

    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f"Cost must be a matrix, got shape {cost.shape}")

    numQueries, numTargets = cost.shape
    if numQueries < numTargets:
        raise ValueError(f"Cannot match {numTargets} targets to {numQueries} queries")

    if not np.isfinite(cost).all():
        raise ValueError("Cost matrix contains non-finite values")

    if numTargets == 0:
        return Assignment((), tuple(range(numQueries)), 0.0)

    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted(zip(rows.tolist(), cols.tolist())))
    matched = set(rows.tolist())

    return Assignment(pairs, tuple(q for q in range(numQueries) if q not in matched),
                      float(cost[rows, cols].sum()))


def pairwiseBce(scores: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    '''
    Mean per-pixel BCE of every score mask against every target mask.

    :param scores: (N, P) flattened probabilities.
    :param targets: (M, P) flattened 0/1 masks.
    :returns: (N, M).
    '''

    positive = -torch.log(scores)
    negative = -torch.log1p(-scores)
    return (positive @ targets.T + negative @ (1 - targets).T) / scores.shape[1]


def pairwiseDice(scores: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    numerator = 2 * scores @ targets.T
    denominator = scores.sum(dim=1)[:, None] + targets.sum(dim=1)[None, :]
    return 1 - (numerator + DICE_SMOOTHING) / (denominator + DICE_SMOOTHING)


def matchCost(eScore: torch.Tensor, targetMasks: torch.Tensor, classLogits: Optional[torch.Tensor] = None,
              wBce: float = 1.0, wDice: float = 1.0) -> torch.Tensor:
    '''
    Cost of assigning each query to each target region.

    :param eScore: (N, sh, sw) score masks of one document.
    :param targetMasks: (M, sh, sw) region masks rendered on the same grid.
    :param classLogits: (N, 2) class logits, or None to leave the class term out.
    :returns: (N, M) costs, w_bce * BCE + w_dice * Dice - log p(text).
    '''

    if targetMasks.shape[0] == 0:
        return eScore.new_zeros(eScore.shape[0], 0)

    if eScore.shape[1:] != targetMasks.shape[1:]:
        raise ValueError(f"Score masks {tuple(eScore.shape)} and targets {tuple(targetMasks.shape)} differ in size")

    scores = eScore.flatten(1)
    targets = targetMasks.flatten(1).to(scores.dtype)
    cost = wBce * pairwiseBce(scores, targets) + wDice * pairwiseDice(scores, targets)

    if classLogits is not None:
        cost = cost - torch.log_softmax(classLogits, dim=-1)[:, TEXT_CLASS:TEXT_CLASS + 1]

    return cost


def matchLive(cost: torch.Tensor, validity: Optional[torch.Tensor]) -> Assignment:
    '''
    Hungarian matching restricted to live queries, reported in full query indices.
    '''

    liveIndices = list(range(cost.shape[0])) if validity is None else torch.nonzero(validity).flatten().tolist()
    assignment = hungarianMatch(cost.detach()[liveIndices].cpu().numpy())

    pairs = tuple((liveIndices[query], target) for query, target in assignment.pairs)
    unmatched = tuple(liveIndices[query] for query in assignment.unmatched)
    return Assignment(pairs, unmatched, assignment.cost)


def layerMatchLoss(eScore: torch.Tensor, targetMasks: torch.Tensor, assignment: Assignment,
                   classLogits: Optional[torch.Tensor] = None) -> torch.Tensor:
    '''
    Summed mask loss of matched pairs, plus the class NLL of every live query when class logits are given
    (text for matched queries, no-object for unmatched ones).
    '''

    loss = eScore.new_zeros(())
    if assignment.pairs:
        queries = torch.as_tensor(assignment.queryIndices, device=eScore.device)
        targets = torch.as_tensor(assignment.targetIndices, device=eScore.device)
        scores = eScore[queries].flatten(1)
        masks = targetMasks[targets].flatten(1).to(scores.dtype)

        bce = F.binary_cross_entropy(scores, masks, reduction="none").mean(dim=1)
        dice = 1 - (2 * (scores * masks).sum(dim=1) + DICE_SMOOTHING) / (scores.sum(dim=1) + masks.sum(dim=1) + DICE_SMOOTHING)
        loss = loss + (bce + dice).sum()

    if classLogits is not None:
        logProbs = torch.log_softmax(classLogits, dim=-1)
        for query in assignment.queryIndices:
            loss = loss - logProbs[query, TEXT_CLASS]
        for query in assignment.unmatched:
            loss = loss - logProbs[query, NO_OBJECT_CLASS]

    return loss


def matchingLoss(perLayerScores: Sequence[torch.Tensor], classLogits: torch.Tensor, targetMasks: torch.Tensor,
                 validity: Optional[torch.Tensor] = None, assignments: Optional[Sequence[Assignment]] = None):
    '''
    Matching loss of one document, summed over decoder layers. Every layer is matched on its own masks;
    the last layer also matches and is supervised on class.

    :param perLayerScores: One (N, sh, sw) score mask tensor per decoder layer.
    :param classLogits: (N, 2) final-layer class logits.
    :param targetMasks: (M, sh, sw) region masks.
    :param validity: (N,) live-query mask.
    :param assignments: Fixed per-layer assignments, recomputed from the costs when None.
    :returns: The summed loss, the per-layer losses and the assignments used.
    '''

    if not perLayerScores:
        raise ValueError("Matching needs at least one decoder layer")

    lastLayer = len(perLayerScores) - 1
    layerLosses, usedAssignments = [], []

    for layer, eScore in enumerate(perLayerScores):
        logits = classLogits if layer == lastLayer else None
        if assignments is None:
            assignment = matchLive(matchCost(eScore, targetMasks, logits), validity)
        else:
            assignment = assignments[layer]

        layerLosses.append(layerMatchLoss(eScore, targetMasks, assignment, logits))
        usedAssignments.append(assignment)

    return torch.stack(layerLosses).sum(), layerLosses, usedAssignments


def textConstraintLoss(eScore: torch.Tensor, textMask: torch.Tensor, validity: Optional[torch.Tensor] = None):
    '''
    Per-position BCE, averaged over every position, between the global saliency map (max score over
    live queries) and the text-area indicator.

    :param eScore: (B, N, sh, sw) score masks.
    :param textMask: (B, sh, sw) 0/1 text-area masks.
    :param validity: (B, N) live-query mask.
    '''

    if validity is not None:
        # Scores are strictly positive, so zeroed dead queries never win the max
        eScore = eScore * validity[:, :, None, None].to(eScore.dtype)

    saliency = eScore.max(dim=1).values
    return F.binary_cross_entropy(saliency, textMask.to(saliency.dtype))


def totalLoss(lMatch, lDecoder, lText, lambdaMatch: float = 1.0, lambdaDecoder: float = 1.0,
              lambdaText: float = 1.0):
    '''
    Weighted sum of the three loss parts.
    '''

    if min(lambdaMatch, lambdaDecoder, lambdaText) < 0:
        raise ValueError(f"Loss weights must be nonnegative, got {(lambdaMatch, lambdaDecoder, lambdaText)}")

    return lambdaMatch * lMatch + lambdaDecoder * lDecoder + lambdaText * lText
