import math
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Literal, Optional, Tuple

from app.errors import GeometryError

# Strip sizes (rows, cols). "utiris" is the evaluated setting and the default.
UNWRAP_PRESETS = {
    "utiris": (150, 300),
    "capture": (256, 512),
    "arc1deg": (150, 180),
}

ALIGN_MODES = ("off", "shift")


def default_psf_size(psf_variance: float) -> int:
    """Odd kernel side covering +/-3 sigma of the Gaussian PSF"""
    size = int(round(6.0 * math.sqrt(psf_variance) + 1.0))
    if size % 2 == 0:
        size += 1
    return max(size, 3)


class IrisGeometry(BaseModel):
    """Concentric pupil/iris circles plus the angular span to unwrap (degrees)"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    center_x: float = Field(alias="cx")
    center_y: float = Field(alias="cy")
    pupil_radius: float = Field(alias="r_pupil")
    iris_radius: float = Field(alias="r_iris")
    span_deg: Tuple[float, float] = (180.0, 360.0)
    estimated: bool = False
    # Reserved for a non-concentric model; ignored by unwrapping.
    pupil_cx: Optional[float] = None
    pupil_cy: Optional[float] = None

    @property
    def span_width(self) -> float:
        return self.span_deg[1] - self.span_deg[0]

    def check(self) -> None:
        """Raise GeometryError when the circles or span are degenerate"""
        if not (0 < self.pupil_radius < self.iris_radius):
            raise GeometryError(
                f"Need 0 < pupil_radius < iris_radius, got {self.pupil_radius} and {self.iris_radius}"
            )
        start, end = self.span_deg
        if not start < end:
            raise GeometryError(f"Angular span start must precede end, got {self.span_deg}")
        if end - start > 360.0:
            raise GeometryError(f"Angular span wider than 360 degrees: {self.span_deg}")


class ManifestEntry(BaseModel):
    subject_id: str
    eye: Literal["L", "R"]
    session: Literal["VL", "NIR"]
    path: str
    geometry: Optional[IrisGeometry] = None

    @field_validator("eye", mode="before")
    @classmethod
    def _normalize_eye(cls, v):
        if isinstance(v, str):
            v = {"left": "L", "right": "R"}.get(v.strip().lower(), v.strip().upper())
        return v

    @field_validator("session", mode="before")
    @classmethod
    def _normalize_session(cls, v):
        return v.strip().upper() if isinstance(v, str) else v

    @property
    def class_id(self) -> str:
        """One class per eye: left and right irises of a subject differ"""
        return f"{self.subject_id}_{self.eye}"


class DatasetManifest(BaseModel):
    entries: List[ManifestEntry] = Field(default_factory=list)

    def for_session(self, session: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.session == session]

    def class_ids(self) -> List[str]:
        return sorted({e.class_id for e in self.entries})


class TikhonovParams(BaseModel):
    """Regularization weight and Gaussian PSF of the Tikhonov filter"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(0.8, alias="lambda", ge=0.0)
    psf_variance: float = Field(25.0, gt=0.0)
    psf_size: Optional[int] = None

    @field_validator("psf_size")
    @classmethod
    def _odd_size(cls, v):
        if v is not None and (v < 3 or v % 2 == 0):
            raise ValueError(f"psf_size must be odd and >= 3, got {v}")
        return v

    @property
    def kernel_size(self) -> int:
        return self.psf_size if self.psf_size is not None else default_psf_size(self.psf_variance)


class PipelineConfig(BaseModel):
    """Every tunable of the enrollment pipeline; defaults reproduce the published method"""
    model_config = ConfigDict(populate_by_name=True)

    unwrap_preset: Literal["utiris", "capture", "arc1deg"] = "utiris"
    unwrap_rows: Optional[int] = Field(None, ge=8)
    unwrap_cols: Optional[int] = Field(None, ge=8)
    tikhonov: TikhonovParams = Field(default_factory=TikhonovParams)
    n_samples: int = Field(100, ge=8)
    bits: int = Field(8, ge=1, le=16)
    min_area: int = Field(30, ge=1)
    align: Literal["off", "shift"] = "off"
    max_shift: int = Field(10, ge=0)
    epsilon_floor: bool = True
    admit_degraded: bool = True
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)

    @field_validator("align", mode="before")
    @classmethod
    def _align_alias(cls, v):
        return "shift" if v == "shift-search" else v

    @property
    def strip_shape(self) -> Tuple[int, int]:
        rows, cols = UNWRAP_PRESETS[self.unwrap_preset]
        return (self.unwrap_rows or rows, self.unwrap_cols or cols)


class Scenario(BaseModel):
    """k train images out of n per class, repeated over seeded random splits"""
    k_train: int = Field(ge=1)
    n_per_class: int = Field(ge=2)
    repetitions: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _k_below_n(self):
        if self.k_train >= self.n_per_class:
            raise ValueError(f"k_train ({self.k_train}) must be below n_per_class ({self.n_per_class})")
        return self
