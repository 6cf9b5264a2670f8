"""Multi-horizon electricity consumption forecasting with hand-written RNN/LSTM models."""

__version__ = "0.1.0"

from loadcast.estimators import (
    ArimaLiteForecaster,
    MLPForecaster,
    PersistenceForecaster,
    RecurrentForecaster,
)

__all__ = [
    "ArimaLiteForecaster",
    "MLPForecaster",
    "PersistenceForecaster",
    "RecurrentForecaster",
    "__version__",
]
