"""
Process-environment settings, read once at import time (after ``load_dotenv``).
"""

import os

# Get environment from env var, default to development
ENVIRONMENT = os.getenv("ENVIRONMENT", "development")
DEBUG = os.getenv("DEBUG", "true").lower() in ("true", "1", "t")

# Production runs are batch experiments: quieter logs, parallel seeds
if ENVIRONMENT == "production":
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    DEFAULT_WORKERS = int(os.getenv("CATS_WORKERS", "4"))
else:  # development
    LOG_LEVEL = os.getenv("LOG_LEVEL", "DEBUG" if DEBUG else "INFO")
    DEFAULT_WORKERS = int(os.getenv("CATS_WORKERS", "1"))

LOG_FILE = os.getenv("LOG_FILE")
