"""Exception hierarchy shared by all modules."""


class WingbeatError(Exception):
    """Base class for every error raised by the toolkit."""


class ManifestError(WingbeatError, ValueError):
    pass


class DecodeError(WingbeatError):
    pass


class UpsamplingRefused(WingbeatError, ValueError):
    pass


class ClipTooShort(WingbeatError, ValueError):
    pass


class FilterbankError(WingbeatError, ValueError):
    pass


class ConfigError(WingbeatError, ValueError):
    pass


class ShapeError(WingbeatError, ValueError):
    pass


class StratificationError(WingbeatError, ValueError):
    pass


class TrainingAborted(WingbeatError, FloatingPointError):
    def __init__(self, message, layer=None, epoch=None, batch=None, fold=None):
        self.layer, self.epoch, self.batch, self.fold = layer, epoch, batch, fold
        where = ", ".join(
            f"{k}={v}" for k, v in (("fold", fold), ("epoch", epoch), ("batch", batch), ("layer", layer)) if v is not None
        )
        super().__init__(f"{message} ({where})" if where else message)

    def with_fold(self, fold):
        return TrainingAborted(self.args[0].split(" (")[0], self.layer, self.epoch, self.batch, fold)
