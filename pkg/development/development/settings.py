from pathlib import Path

import environ

env = environ.Env(
    # set casting, default value
    DEBUG=(bool, False),
    PTYCHO_THREADS=(int, 1),
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Take environment variables from .env file
environ.Env.read_env(BASE_DIR / "env")

# The app has no web surface; the key only satisfies Django's startup checks.
SECRET_KEY = env("SECRET_KEY", default="ptycho-prior-development-only")

DEBUG = env("DEBUG")

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "ptycho_prior",
]

# Database
# The commands store everything on the filesystem; tests run without a database.

DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# logging config to show debug messages
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "%(name)s : %(levelname)s %(asctime)s %(message)s [%(pathname)s:%(lineno)d]"
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "": {
            "handlers": ["console"],
            "level": env("LOG_LEVEL", default="INFO"),
            "propagate": False,
        },
    },
}

PTYCHO_CONFIG = {
    "threads": env("PTYCHO_THREADS"),
    "wavelength": env.float("PTYCHO_WAVELENGTH", default=1.24e-10),
    "pixel_pitch": env.float("PTYCHO_PIXEL_PITCH", default=1e-8),
    "defocus": env.float("PTYCHO_DEFOCUS", default=2e-3),
    "log_every": env.int("PTYCHO_LOG_EVERY", default=10),
}
