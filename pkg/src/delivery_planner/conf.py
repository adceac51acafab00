"""
Configuration helpers shared by solvers and solution methods.
"""


class classonlymethod(classmethod):
    def __get__(self, instance, owner):
        if instance is not None:
            raise AttributeError("This method is available only on the class.")
        return super().__get__(instance, owner)


class Configurable(object):
    """
    Base for objects configured through keyword arguments, class attributes
    or built-in defaults, in that order of precedence.
    """
    def _load_config_values(self, initkwargs, **defaults):
        """
        Set on self some config values possibly taken from __init__, or
        attributes on self.__class__, or some default.
        """
        for k in defaults:
            default = getattr(self.__class__, k, defaults[k])
            value = initkwargs.pop(k, default)
            setattr(self, k, value)
        self._config_keys = getattr(self, '_config_keys', ()) + tuple(defaults)

    def _reject_unknown(self, initkwargs):
        if initkwargs:
            raise TypeError(
                "__init__() got an unexpected keyword argument '%s'" % next(iter(initkwargs))
            )

    def get_config(self):
        """
        Get the current configuration as a dictionary.
        """
        return dict((k, getattr(self, k)) for k in self._config_keys)
