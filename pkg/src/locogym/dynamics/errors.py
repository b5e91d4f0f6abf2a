class SingularMassMatrix(ArithmeticError):
    """The joint-space inertia matrix is not positive definite."""
