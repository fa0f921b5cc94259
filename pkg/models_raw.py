"""Raw reply models for parsed LLM output, before clamping and repair."""
from typing import List, Union

from pydantic import BaseModel, Field, field_validator


class LessonRaw(BaseModel):
    lesson: str = Field(..., min_length=1, description="One-sentence takeaway")
    importance: float = Field(
        ...,
        description="Importance score the model assigned; clamped into [0, 1] when stored",
    )


class AttitudeReplyRaw(BaseModel):
    reasoning: str = Field(default="", description="Model's short explanation of the rating")
    attitude_dist: List[float] = Field(
        ...,
        description="Probabilities for ratings 1..4 (definitely no .. definitely yes)",
    )


class JudgeReplyRaw(BaseModel):
    reasoning: str = ""
    rating: int = Field(..., ge=1, le=5)

    @field_validator("rating", mode="before")
    @classmethod
    def _coerce_numeric_string(cls, value: Union[int, float, str]):
        if isinstance(value, bool):
            raise ValueError("rating must be a number, not a boolean")
        if isinstance(value, str):
            stripped = value.strip()
            if not stripped.lstrip("-").isdigit():
                raise ValueError(f"rating {value!r} is not an integer")
            return int(stripped)
        if isinstance(value, float):
            if not value.is_integer():
                raise ValueError(f"rating {value!r} is not an integer")
            return int(value)
        return value
