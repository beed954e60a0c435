"""
Desc: The serum commands: corpus generation, pretraining, fine-tuning, evaluation, inference and the
token keep ratio benchmark. Each command writes its rows to a run report in its output directory.
"""

# Core libraries
import json
import logging
import os
from typing import List

# External libraries
import numpy as np
import torch
from PIL import Image

# Custom libraries
from serum.Checkpoint import loadCheckpoint
from serum.ConfigParser import generateRunName
from serum.corpus.DocumentGenerator import corpusSpecs, writeDataset
from serum.DocumentSample import fitToCanvas, loadSamples
from serum.Errors import ConfigError, SerumError
from serum.evaluation.KvTree import KvTree
from serum.evaluation.Metrics import maskIou, sampleMetrics, summarize
from serum.experiment.RunReport import BENCH, HEADER, REPORT_FILE, SAMPLE, STEP, SUMMARY, RunReport
from serum.manners import mannerFor
from serum.model.SeRumModel import SeRumModel
from serum.training.PretrainBatch import imageBatch
from serum.training.Trainer import Trainer, seedEverything
from serum.utils.DrawOverlay import renderOverlay
from serum.utils.GenerateCSV import writeBenchTable
from serum.Vocabulary import Vocabulary

# Constants
CHECKPOINT_FILE = "checkpoint.pt"
OVERLAY_DIR = "overlays"
SEG_THRESHOLD = 0.5
GENERATION_MODES = ("total", "prompt", "vqa")

logger = logging.getLogger(__name__)


def outputDir(args) -> str:
    return args.out or os.path.join("runs", generateRunName(args))


def requireArgs(args, *names) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if not getattr(args, name)]
    if missing:
        raise ConfigError(f"The {args.command} command needs {', '.join(missing)}")


def groundTruth(sample, keys) -> KvTree:
    return KvTree.fromDict({key: value for key, value in sample.kv_ground_truth.items() if key in keys})


def loadDataset(args, config) -> list:
    samples = loadSamples(args.data, config)
    if args.samples is not None:
        samples = samples[:args.samples]

    logger.info(f"\tLoaded {len(samples)} samples from {args.data}")
    return samples


def loadModel(args, expectedConfig=None) -> SeRumModel:
    checkpoint = loadCheckpoint(args.ckpt, expectedConfig)
    model = checkpoint.buildModel().to(args.device)
    logger.info(f"\tLoaded checkpoint {args.ckpt} (step {checkpoint.step})")
    return model


def cmdGen(args, config) -> dict:
    '''
    Render a synthetic corpus.

    :returns: The dataset manifest.
    '''

    requireArgs(args, "out")
    if args.count < 0:
        raise ConfigError(f"Document count must be nonnegative, got {args.count}")

    logger.info(f"STEP 1: Rendering {args.count} documents with seed {args.seed}.")
    specs = corpusSpecs(config, args.count, args.seed, blur_radius=args.blur_radius, salt_pepper=args.salt_pepper)
    manifest = writeDataset(specs, args.out)

    print(f"Dataset: {args.out}\n\tdocuments: {manifest['count']}\n\tannotations: {manifest['annotations']}\n"
          f"\tschema version: {manifest['schema_version']}")

    return manifest


def train(args, model, rng, samples, stepFunction, report: RunReport, outDir: str) -> Trainer:
    trainer = Trainer(model, rng, os.path.join(outDir, CHECKPOINT_FILE), args.checkpoint_every)
    stepFunction = stepFunction(trainer)

    reports = []
    for lossReport in trainer.run(args.steps, lambda: stepFunction(samples)):
        report.append(STEP, step=trainer.step, lr=trainer.learningRate, **lossReport.toDict())
        reports.append(lossReport)

    if reports:
        report.append(SUMMARY, steps=trainer.step, first_total=reports[0].l_total, last_total=reports[-1].l_total)
        logger.info(f"\tl_total went from {reports[0].l_total:.4f} to {reports[-1].l_total:.4f} "
                    f"over {trainer.step} steps")

    return trainer


def cmdPretrain(args, config) -> str:
    '''
    Mixed-task pretraining from a fresh initialization.

    :returns: The checkpoint path.
    '''

    requireArgs(args, "data")
    outDir = outputDir(args)

    logger.info(f"STEP 1: Building the model and loading the data.")
    rng = seedEverything(args.seed)
    model = SeRumModel(config, Vocabulary.forConfig(config)).to(args.device)
    samples = loadDataset(args, config)

    logger.info(f"STEP 2: Pretraining for {args.steps} steps on subtasks {list(config.pretrain_tasks)}.")
    with RunReport(os.path.join(outDir, REPORT_FILE), args.timestamps) as report:
        report.append(HEADER, command=args.command, seed=args.seed, config=config.toDict())
        train(args, model, rng, samples, lambda trainer: trainer.pretrainStep, report, outDir)

    logger.info(f"STEP 3: Pretraining complete, checkpoint at {os.path.join(outDir, CHECKPOINT_FILE)}")
    return os.path.join(outDir, CHECKPOINT_FILE)


def cmdFinetune(args, config) -> str:
    '''
    Fine-tune a pretrained checkpoint in one generation manner.

    :returns: The checkpoint path.
    '''

    requireArgs(args, "data", "ckpt")
    if args.mode not in GENERATION_MODES:
        raise ConfigError(f"Cannot fine-tune in mode '{args.mode}', expected one of {GENERATION_MODES}")

    outDir = outputDir(args)

    logger.info(f"STEP 1: Loading the checkpoint and the data.")
    rng = seedEverything(args.seed)
    model = loadModel(args, config)
    manner = mannerFor(args.mode, model.config, model.vocabulary)
    samples = loadDataset(args, model.config)

    logger.info(f"STEP 2: Fine-tuning in {args.mode} mode for {args.steps} steps.")
    with RunReport(os.path.join(outDir, REPORT_FILE), args.timestamps) as report:
        report.append(HEADER, command=args.command, seed=args.seed, mode=args.mode, config=model.config.toDict())
        train(args, model, rng, samples, lambda trainer: lambda batch: trainer.finetuneStep(batch, manner),
              report, outDir)

    logger.info(f"STEP 3: Fine-tuning complete, checkpoint at {os.path.join(outDir, CHECKPOINT_FILE)}")
    return os.path.join(outDir, CHECKPOINT_FILE)


def liveSaliency(bundle, row: int) -> np.ndarray:
    scores = bundle.e_score[row][bundle.validity[row]]
    return scores.max(dim=0).values.cpu().numpy()


@torch.no_grad()
def evaluateSegmentation(args, model, samples, report: RunReport, overlayDir: str = None) -> dict:
    '''
    Mean IoU between the binarized saliency of the learnable slots and the union of text regions.
    '''

    config = model.config
    rows = []
    for start in range(0, len(samples), config.batch_size):
        batch = samples[start:start + config.batch_size]
        features, bundle = model.queries(imageBatch(batch, args.device), [[] for _ in batch])

        merged = model.merge(features, bundle, args.alpha or config.total_alpha) if overlayDir else None
        for row, sample in enumerate(batch):
            saliency = liveSaliency(bundle, row)
            truth = sample.textAreaMask(config.pixel_height, config.pixel_width)
            iou = maskIou(saliency > SEG_THRESHOLD, truth)
            rows.append(report.append(SAMPLE, sample=sample.sample_id, iou=iou))

            if overlayDir:
                renderOverlay(sample, saliency, merged.foreground_indices[row].cpu().numpy(),
                              os.path.join(overlayDir, f"{sample.sample_id}.png"),
                              (config.grid_height, config.grid_width), title=f"IoU {iou:.3f}")

    return summarize(rows, names=("iou",))


@torch.no_grad()
def evaluateExtraction(args, model, samples, report: RunReport, overlayDir: str = None) -> dict:
    config = model.config
    manner = mannerFor(args.mode, config, model.vocabulary)
    keys = list(args.keys or config.keys)

    rows = []
    for start in range(0, len(samples), config.batch_size):
        batch = samples[start:start + config.batch_size]
        extraction = manner.extractBatch(model, imageBatch(batch, args.device), keys, args.alpha)

        for row, (sample, result) in enumerate(zip(batch, extraction.results)):
            truth = groundTruth(sample, keys)
            metrics = sampleMetrics(result.kv, truth)
            rows.append(report.append(SAMPLE, sample=sample.sample_id, prediction=result.kv.toDict(),
                                      ground_truth=truth.toDict(), malformed=result.malformed, **metrics))

            if overlayDir:
                renderOverlay(sample, liveSaliency(extraction.bundle, row),
                              extraction.merged.foreground_indices[row].cpu().numpy(),
                              os.path.join(overlayDir, f"{sample.sample_id}.png"),
                              (config.grid_height, config.grid_width), title=f"F1 {metrics['f1']:.3f}")

    return summarize(rows)


def cmdEval(args, config) -> dict:
    '''
    Evaluate a checkpoint on a dataset.

    :returns: The metric summary, also written as the report's last row.
    '''

    requireArgs(args, "data", "ckpt")
    outDir = outputDir(args)

    logger.info(f"STEP 1: Loading the checkpoint and the data.")
    model = loadModel(args).eval()
    samples = loadDataset(args, model.config)

    overlayDir = None
    if args.overlays:
        overlayDir = os.path.join(outDir, OVERLAY_DIR)
        os.makedirs(overlayDir, exist_ok=True)

    logger.info(f"STEP 2: Evaluating {len(samples)} samples in {args.mode} mode.")
    with RunReport(os.path.join(outDir, REPORT_FILE), args.timestamps) as report:
        report.append(HEADER, command=args.command, mode=args.mode, alpha=args.alpha, samples=len(samples))

        if args.mode == "seg":
            summary = evaluateSegmentation(args, model, samples, report, overlayDir)
        else:
            summary = evaluateExtraction(args, model, samples, report, overlayDir)

        report.append(SUMMARY, **summary)

    logger.info(f"STEP 3: Evaluation complete.")
    print(json.dumps(summary, indent=2, sort_keys=True))

    return summary


def cmdInfer(args, config) -> List[KvTree]:
    '''
    Extract key-value structures from PNG images with nothing but a checkpoint.
    '''

    requireArgs(args, "ckpt", "images")
    if args.mode not in GENERATION_MODES:
        raise ConfigError(f"Cannot infer in mode '{args.mode}', expected one of {GENERATION_MODES}")

    model = loadModel(args).eval()
    modelConfig = model.config
    manner = mannerFor(args.mode, modelConfig, model.vocabulary)

    trees = []
    for imagePath in args.images:
        try:
            with Image.open(imagePath) as image:
                array, _ = fitToCanvas(image, modelConfig.image_height, modelConfig.image_width,
                                       modelConfig.image_channels)
        except OSError as error:
            raise SerumError(f"Could not read image {imagePath}: {error}") from error

        result = manner.extract(model, torch.from_numpy(array).to(args.device), args.keys, args.alpha)
        trees.append(result.kv)
        print(json.dumps({"image": imagePath, "kv": result.kv.toDict()}))

    return trees


@torch.no_grad()
def cmdBenchAlpha(args, config) -> List[dict]:
    '''
    For every token keep ratio, the merged context length, the F1 and the mean text-decoder wall time.
    Documents run one at a time so the decoder timings are not shared between documents.

    :returns: The bench rows.
    '''

    requireArgs(args, "data", "ckpt")
    if args.mode not in GENERATION_MODES:
        raise ConfigError(f"Cannot benchmark mode '{args.mode}', expected one of {GENERATION_MODES}")

    for alpha in args.alphas:
        if not 0 < alpha <= 1:
            raise ConfigError(f"Token keep ratios must lie in (0, 1], got {alpha}")

    outDir = outputDir(args)

    logger.info(f"STEP 1: Loading the checkpoint and the data.")
    model = loadModel(args).eval()
    modelConfig = model.config
    manner = mannerFor(args.mode, modelConfig, model.vocabulary)
    keys = list(args.keys or modelConfig.keys)
    samples = loadDataset(args, modelConfig)
    if not samples:
        raise ConfigError(f"No samples to benchmark in {args.data}")

    # Untimed pass so one-off allocation costs land on no row
    manner.extractBatch(model, imageBatch(samples[:1], args.device), keys, args.alphas[0])

    logger.info(f"STEP 2: Benchmarking keep ratios {args.alphas} on {len(samples)} samples.")
    rows = []
    with RunReport(os.path.join(outDir, REPORT_FILE), args.timestamps) as report:
        report.append(HEADER, command=args.command, mode=args.mode, alphas=list(args.alphas), samples=len(samples))

        for alpha in args.alphas:
            decodeSeconds, f1s, contextSizes = [], [], set()
            for sample in samples:
                extraction = manner.extractBatch(model, imageBatch([sample], args.device), keys, alpha)
                decodeSeconds.append(extraction.decode_seconds)
                contextSizes.add(int(extraction.merged.k))
                f1s.append(sampleMetrics(extraction.results[0].kv, groundTruth(sample, keys))["f1"])

            (k,) = contextSizes
            row = {"alpha": alpha, "K": k, "f1": float(np.mean(f1s)),
                   "mean_decode_ms": 1000 * float(np.mean(decodeSeconds))}
            rows.append(row)
            report.append(BENCH, **row)
            logger.info(f"\talpha={alpha}: K={row['K']} f1={row['f1']:.3f} decode={row['mean_decode_ms']:.2f} ms")

    csvPath, textPath = writeBenchTable(rows, outDir)
    logger.info(f"STEP 3: Benchmark table written to {csvPath} and {textPath}")

    with open(textPath) as tableFile:
        print(tableFile.read())

    return rows


COMMANDS = {
    "gen": cmdGen,
    "pretrain": cmdPretrain,
    "finetune": cmdFinetune,
    "eval": cmdEval,
    "infer": cmdInfer,
    "bench-alpha": cmdBenchAlpha,
}
