import logging
import math
from typing import Optional

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, ValidationError
from starlette.status import HTTP_200_OK, HTTP_400_BAD_REQUEST, HTTP_500_INTERNAL_SERVER_ERROR

from selection_lab import __version__
from selection_lab.bipartite_online import g_bipartite
from selection_lab.config import _settings
from selection_lab.errors import InvariantViolation, SelectionLabError
from selection_lab.graphic_online import g_graphic
from selection_lab.harness.models import ExperimentConfig
from selection_lab.harness.report import compare_all, emit_csv
from selection_lab.harness.runner import run_experiment
from selection_lab.numerics import f_of_c, phase_fractions
from selection_lab.secretary import SecretaryParams, g_secretary

logging.basicConfig(level=_settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

app = FastAPI(title="selection-lab", version=__version__)

# experiments are run synchronously inside the request
MAX_SERVICE_TRIALS = 20000


class BoundsRequest(BaseModel):
    c: float = math.e
    d: float = 1.0
    lam: float = Field(0.0, ge=0)
    eta: float = Field(0.0, ge=0)
    opt: float = Field(1.0, gt=0)
    psi: int = Field(1, ge=0)
    vertices: int = Field(1, ge=1)


def _error(status: int, details) -> JSONResponse:
    return JSONResponse(status_code=status, content={"status": "error", "details": details})


@app.get("/health")
async def health():
    return {"status": "ok", "version": __version__}


@app.post("/bounds")
async def bounds(req: Request):
    """Phase fractions, f(c) and whichever guaranteed ratios the parameters admit."""
    try:
        body = BoundsRequest.model_validate(await req.json())
        fractions = phase_fractions(body.c)
        result = {
            "phase_low": fractions.low,
            "phase_high": fractions.high,
            "f_c": f_of_c(body.c),
        }
        if body.lam <= body.opt:
            params = SecretaryParams(c=body.c, lam=body.lam, p_star=body.opt)
            result["g_secretary"] = g_secretary(body.eta, params, body.opt)
        if body.c > body.d >= 1.0:
            result["g_bipartite"] = g_bipartite(body.eta, body.c, body.d, body.lam, body.opt, body.psi)
            result["g_graphic"] = g_graphic(body.eta, body.c, body.d, body.lam, body.opt, body.vertices)
        return JSONResponse(status_code=HTTP_200_OK, content={"status": "success", "details": result})

    except (ValidationError, SelectionLabError, ValueError) as e:
        logger.info(f"Rejected bounds request: {e}")
        return _error(HTTP_400_BAD_REQUEST, str(e))
    except Exception as e:
        logger.error(f"Error evaluating bounds: {e}", exc_info=True)
        return _error(HTTP_500_INTERNAL_SERVER_ERROR, "Failed to evaluate bounds")


@app.post("/experiments")
async def experiments(req: Request):
    """
    Run an experiment grid and return the CSV plus the verdict per cell.

    The body has the same shape as a TOML experiment config.
    """
    try:
        config = ExperimentConfig.model_validate(await req.json())
        total = config.trials * len(config.cells())
        if total > MAX_SERVICE_TRIALS:
            return _error(HTTP_400_BAD_REQUEST,
                          f"{total} trials requested, the service runs at most {MAX_SERVICE_TRIALS}")
        config = config.model_copy(update={"seed": _settings.resolve_seed(config.seed)})

        result = run_experiment(config)
        if not result.batches:
            return _error(HTTP_400_BAD_REQUEST, [s.reason for s in result.skipped])

        verdicts = compare_all(result.batches, config.slack)
        return JSONResponse(status_code=HTTP_200_OK, content={
            "status": "success",
            "details": {
                "csv": emit_csv(result.batches),
                "verdicts": [v.label for v in verdicts],
                "passed": all(v.passed for v in verdicts),
                "skipped": [s.model_dump() for s in result.skipped],
            },
        })

    except InvariantViolation as e:
        logger.error(f"Invariant violated during experiment: {e}", exc_info=True)
        return _error(HTTP_500_INTERNAL_SERVER_ERROR, f"Invariant violated: {e}")
    except (ValidationError, SelectionLabError, ValueError) as e:
        logger.info(f"Rejected experiment request: {e}")
        return _error(HTTP_400_BAD_REQUEST, str(e))
    except Exception as e:
        logger.error(f"Error running experiment: {e}", exc_info=True)
        return _error(HTTP_500_INTERNAL_SERVER_ERROR, "Failed to run experiment")


if __name__ == "__main__":
    port: Optional[int] = _settings.PORT or 8080
    logger.info(f"Starting server on port {port}")
    uvicorn.run(app, host="0.0.0.0", port=port)
