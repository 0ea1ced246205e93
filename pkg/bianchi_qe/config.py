from decouple import config

DPS: int = config("BIANCHI_DPS", default=30, cast=int)
L_TOL: float = config("BIANCHI_L_TOL", default=1e-12, cast=float)
THETA_SPLIT: float = config("BIANCHI_THETA_SPLIT", default=1.0, cast=float)
FOURIER_TOL: float = config("BIANCHI_FOURIER_TOL", default=1e-10, cast=float)
BESSEL_METHOD: str = config("BIANCHI_BESSEL_METHOD", default="besselk")
PRIME_BOUND: int = config("BIANCHI_PRIME_BOUND", default=10000, cast=int)
QUAD_ORDER: int = config("BIANCHI_QUAD_ORDER", default=24, cast=int)
MAX_WORKERS: int = config("BIANCHI_MAX_WORKERS", default=4, cast=int)
DB_PATH: str = config("BIANCHI_DB_PATH", default="bianchi_qe.db")
LOG_LEVEL: str = config("BIANCHI_LOG_LEVEL", default="INFO")
SEED: int = config("BIANCHI_SEED", default=0, cast=int)
