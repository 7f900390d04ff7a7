"""Matrix-completion economic complexity: RCA completion, MONEY and GENEPY indices."""

__version__ = "0.1.0"
