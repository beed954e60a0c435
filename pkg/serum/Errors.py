'''
Exception types raised across serum. Shape and precondition violations inside
tensor code raise ValueError instead.
'''


class SerumError(Exception):
    pass


class ConfigError(SerumError):
    pass


class VocabularyError(SerumError):
    pass


class SampleError(SerumError):
    def __init__(self, sampleId, message):
        self.sample_id = sampleId
        super().__init__(f"[{sampleId}] {message}")


class LayoutOverflowError(SerumError):
    def __init__(self, spec, message):
        self.spec = spec
        super().__init__(f"{message} (spec: {spec})")


class CheckpointError(SerumError):
    pass


class TrainingDivergedError(SerumError):
    def __init__(self, step, losses, lastGoodCheckpoint=None):
        self.step = step
        self.losses = losses
        self.last_good_checkpoint = lastGoodCheckpoint
        where = f", last good checkpoint: {lastGoodCheckpoint}" if lastGoodCheckpoint else ""
        super().__init__(f"Non-finite loss at step {step}: {losses}{where}")
