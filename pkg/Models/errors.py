class SceneError(ValueError):
    """Malformed or invalid scene document. `path` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f'{path}: {message}' if path else message)


class GeometryError(ValueError):
    pass


class GradientError(FloatingPointError):
    """Non-finite value produced while accumulating gradients."""

    def __init__(self, message, gaussian_id=None, pixel=None):
        self.gaussian_id = gaussian_id
        self.pixel = pixel
        where = []
        if gaussian_id is not None:
            where.append(f'gaussian {gaussian_id}')
        if pixel is not None:
            where.append(f'pixel {pixel}')
        if where:
            message = f'{message} ({", ".join(where)})'
        super().__init__(message)


class ConfigError(ValueError):
    """Collects every invalid field of a config before raising."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__('; '.join(f'{p}: {m}' for p, m in self.problems))
