try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

load = tomllib.load
loads = tomllib.loads
TOMLDecodeError = tomllib.TOMLDecodeError
