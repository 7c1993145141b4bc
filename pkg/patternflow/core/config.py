from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Integrator Configuration
    FLOW_LOCAL_TOLERANCE: float = 1e-9
    FLOW_MIN_STEP: float = 1e-8
    FLOW_MAX_STEP: float = 1e3
    FLOW_CONVERGED_RHS: float = 1e-12

    # Verification Configuration
    DEFAULT_EPSILON: float = 0.05
    MONOTONE_SLACK: float = 1e-9
    BOUND_SLACK: float = 1e-6
    DECIMAL_PRECISION: int = 60

    # Scenario Loading
    PI_REF_SUM_TOLERANCE: float = 1e-3
    P_SFT_SUM_TOLERANCE: float = 1e-9

    # Runner Configuration
    OUTPUT_DIR: str = "runs"
    PIPELINE_HORIZON_CAP: float = 1e6
    PIPELINE_TARGET_PROB: float = 0.9
    CASE_STUDY_TARGET_PROB: float = 0.99
    ENTANGLEMENT_RATIO: float = 10.0
    WORKERS: int = 1

    # Sampler Defaults
    SAMPLER_BATCH_SIZE: int = 32

    # Application Configuration
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    class Config:
        env_file = ".env"
        # Allow extra fields to prevent validation errors
        extra = "ignore"


settings = Settings()
