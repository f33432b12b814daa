from paperpuf.config.settings import get_settings, load_settings, Settings

__all__ = ["get_settings", "load_settings", "Settings"]
