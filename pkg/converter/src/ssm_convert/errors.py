"""Converter error types."""


class ConvertError(Exception):
    """Base class for conversion failures."""


class UnrecognizedLayout(ConvertError):
    """The archive's key tree does not match the declared architecture table."""

    def __init__(self, message: str, key_tree: list[str]):
        super().__init__(f"{message}\nkey tree:\n" + "\n".join(f"  {k}" for k in key_tree))
        self.key_tree = key_tree


class StabilityViolation(ConvertError):
    """Decoded poles are not Hurwitz; refusing to emit without --force."""
