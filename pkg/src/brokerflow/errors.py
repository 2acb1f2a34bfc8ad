"""Exception types shared across the package."""


class BrokerflowError(Exception):
    """Base class for all brokerflow errors."""


class MalformedMessageError(BrokerflowError):
    """A raw feed record violates basic quote sanity (e.g. bid >= ask)."""


class EmptySeriesError(BrokerflowError):
    """An operation requires a non-empty event series."""


class SeriesOrderError(BrokerflowError):
    """Events are not time-ordered within a day; carries the offending index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"{message} (index {index})")
        self.index = index


class NoSuchEventsError(BrokerflowError):
    """A conditioning event type has zero occurrences in the series."""


class InsufficientDataError(BrokerflowError):
    """Not enough observations for the requested statistic."""
