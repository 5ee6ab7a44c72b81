"""Exception types shared across the package."""


class RgbdLocError(Exception):
    """Base class for all errors raised by rgbdloc."""


class DegenerateInput(RgbdLocError, ValueError):
    """Point correspondences do not constrain a rigid transform."""


class DimensionMismatch(RgbdLocError, ValueError):
    pass


class MissingGroundTruth(RgbdLocError, ValueError):
    pass


class EmptyMap(RgbdLocError, ValueError):
    pass


class ExhaustedFeatures(RgbdLocError, IndexError):
    pass


class FormatError(RgbdLocError, ValueError):
    """A map or frame file has a bad header, version or field count."""


class InvalidSpec(RgbdLocError, ValueError):
    pass


class LengthMismatch(RgbdLocError, ValueError):
    pass


class ConfigError(RgbdLocError, ValueError):
    pass
