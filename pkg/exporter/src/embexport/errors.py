class ExportError(ValueError):
    """Any rejected configuration, input, or checkpoint."""
