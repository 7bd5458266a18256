"""Exception hierarchy shared by all alphaforge modules."""


class AlphaForgeError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AlphaForgeError):
    """Bad or missing experiment configuration."""


# --- data ingestion ---

class MalformedRow(AlphaForgeError):
    """CSV row failed to parse or violates candle bounds."""


class NonMonotonicTimestamp(AlphaForgeError):
    """Duplicate timestamp found after sorting."""


class NegativePrice(AlphaForgeError):
    """A price column is zero or negative."""


class InsufficientData(AlphaForgeError):
    """Series too short for the requested computation."""


class EmptyIntersection(AlphaForgeError):
    """No common date range across the input series."""


class InsufficientHistory(AlphaForgeError):
    """Not enough history before the requested as-of date."""


class FrequencyGap(AlphaForgeError):
    """A required candle is missing inside the covered range."""


# --- metrics ---

class ZeroVolatility(AlphaForgeError):
    """Constant pnl series: Sharpe ratio undefined."""


# --- losses ---

class LengthMismatch(AlphaForgeError):
    """Positions and returns vectors differ in length."""


class DegenerateInput(AlphaForgeError):
    """Loss undefined at this input (e.g. positions identical to returns)."""


class InsufficientRows(AlphaForgeError):
    """Positions window has fewer than two rows."""


# --- models ---

class DimensionMismatch(AlphaForgeError):
    """Input width does not match the model layout."""


class DivergenceDetected(AlphaForgeError):
    """Training produced a non-finite loss or weights."""


class MissingWindow(AlphaForgeError):
    """No feature window available for a requested date."""


# --- backtest ---

class AssetMismatch(AlphaForgeError):
    """Positions and returns panel disagree on the asset universe."""


class DateMisalignment(AlphaForgeError):
    """Positions dates are not a subset of panel dates."""


class InsufficientOverlap(AlphaForgeError):
    """Too few common dates to correlate two pnl series."""


# --- portfolio ---

class WeightShapeMismatch(AlphaForgeError):
    """Combiner weights have the wrong shape for the alpha stack."""
