# NLS multi-soliton numerical lab
__version__ = "1.0.0"
