"""Exception types raised across the package."""


class SSCError(Exception):
    """Base class for all package errors."""


class MalformedFileError(SSCError):
    def __init__(self, path, offset, message="size is not a multiple of 16 bytes"):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"malformed-file: {self.path}: {message} (byte offset {offset})")


class LabelMismatchError(SSCError):
    def __init__(self, path, n_labels, n_points):
        self.path = str(path)
        self.n_labels = n_labels
        self.n_points = n_points
        super().__init__(
            f"label-mismatch: {self.path} holds {n_labels} labels for {n_points} points"
        )


class CalibError(SSCError):
    pass


class PoseParseError(SSCError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"parse error: {self.path}:{line_no}: {message}")


class DegeneratePointError(SSCError, ValueError):
    pass


class NoOverlapError(SSCError):
    """No cyclic shift leaves any pair of jointly occupied ring sectors."""


class NoCorrespondenceError(SSCError):
    def __init__(self, iteration):
        self.iteration = iteration
        super().__init__(f"no label-matched correspondences at ICP iteration {iteration}")


class ShapeError(SSCError, ValueError):
    pass


class EmptyPositivesError(SSCError):
    pass


class DegenerateLabelsError(SSCError, ValueError):
    pass
