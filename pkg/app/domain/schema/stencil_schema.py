from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class MomentTable(BaseModel):
    """필터 이산 모멘트 M_{p,q} = Σ k[i,j]·i^p·j^q (중심 기준 offset)"""
    derivative_order: int = Field(..., description="필터가 근사하는 미분 차수")
    moments: Dict[str, float] = Field(..., description="'p,q' -> M_{p,q}")
    vanishing: List[str] = Field(default_factory=list, description="0 으로 사라지는 모멘트 키")
    leading: Optional[str] = Field(None, description="처음으로 0 이 아닌 모멘트 키")
    accuracy_order: Optional[int] = Field(None, description="derivative_order 이후 첫 비소거 모멘트 차수 - derivative_order")

    def moment(self, p: int, q: int = 0) -> float:
        return self.moments[f"{p},{q}"]
