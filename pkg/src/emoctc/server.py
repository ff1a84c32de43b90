"""HTTP layer for the annotation experiment.

Endpoints (JSON unless noted):
  POST /api/session  {"assessor": str}             -> session descriptor
  GET  /api/next?session=ID                        -> {"utterance_id", "is_warmup",
                                                       "warmup_remaining", "done"}
  GET  /api/audio/{id}                             -> WAV bytes (Range supported)
  POST /api/label    {"session", "utterance_id", "answer"}
                                                   -> {"correct_label": str}
  GET  /api/stats                                  -> accuracy/confusion summary
"""
import os
import re

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import WARMUP_SIZE
from .errors import DuplicateAnswer, NoData, NotServed, UnknownSession

_RANGE_RE = re.compile(r"bytes=(\d*)-(\d*)$")


class SessionRequest(BaseModel):
    assessor: str


class LabelRequest(BaseModel):
    session: str
    utterance_id: str
    answer: str


def _audio_response(path, range_header):
    size = os.path.getsize(path)
    start, end = 0, size - 1
    status = 200
    if range_header:
        m = _RANGE_RE.match(range_header.strip())
        if not m or (not m.group(1) and not m.group(2)):
            raise HTTPException(416, "malformed Range header")
        if m.group(1):
            start = int(m.group(1))
            if m.group(2):
                end = min(int(m.group(2)), size - 1)
        else:  # suffix form: last N bytes
            start = max(0, size - int(m.group(2)))
        if start >= size or start > end:
            raise HTTPException(416, "range out of bounds")
        status = 206
    with open(path, "rb") as fh:
        fh.seek(start)
        body = fh.read(end - start + 1)
    headers = {
        "accept-ranges": "bytes",
        "content-length": str(len(body)),
    }
    if status == 206:
        headers["content-range"] = f"bytes {start}-{end}/{size}"
    return Response(body, status_code=status, media_type="audio/wav",
                    headers=headers)


def create_app(service, audio_dir, static_dir=None):
    app = FastAPI(title="emoctc annotation service")
    app.state.service = service

    @app.post("/api/session")
    def start_session(req: SessionRequest):
        if not req.assessor.strip():
            raise HTTPException(422, "assessor must be non-empty")
        session = service.start_session(req.assessor.strip())
        return {
            "session": session.session_id,
            "assessor": session.assessor_id,
            "warmup_remaining": len(session.warmup_remaining),
            "warmup_size": WARMUP_SIZE,
            "main_total": len(session.main_order),
        }

    @app.get("/api/next")
    def next_utterance(session: str):
        try:
            uid = service.next_utterance(session)
            state = service._sessions[session]
        except UnknownSession as exc:
            raise HTTPException(404, str(exc))
        if uid is None:
            return {"done": True, "utterance_id": None,
                    "is_warmup": False, "warmup_remaining": 0}
        return {
            "done": False,
            "utterance_id": uid,
            "is_warmup": uid in state.warmup_remaining,
            "warmup_remaining": len(state.warmup_remaining),
        }

    @app.get("/api/audio/{utterance_id}")
    def audio(utterance_id: str, request: Request):
        if "/" in utterance_id or utterance_id.startswith("."):
            raise HTTPException(404, "no such utterance")
        path = os.path.join(audio_dir, utterance_id + ".wav")
        if not os.path.exists(path):
            raise HTTPException(404, "no such utterance")
        return _audio_response(path, request.headers.get("range"))

    @app.post("/api/label")
    def label(req: LabelRequest):
        try:
            return service.submit_label(req.session, req.utterance_id,
                                        req.answer)
        except UnknownSession as exc:
            raise HTTPException(404, str(exc))
        except DuplicateAnswer as exc:
            raise HTTPException(409, str(exc))
        except NotServed as exc:
            raise HTTPException(409, str(exc))
        except NoData as exc:
            raise HTTPException(422, str(exc))

    @app.get("/api/stats")
    def stats():
        try:
            return service.stats()
        except NoData as exc:
            raise HTTPException(404, str(exc))

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="static")
    return app
