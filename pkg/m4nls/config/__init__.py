"""
Configuration module for the 4NLS laboratory.
"""

from m4nls.config.settings import settings, get_settings

__all__ = ["settings", "get_settings"]
