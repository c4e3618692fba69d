from .utils import __version__
