"""Framed binary protocol for out-of-process enhancers, plus the reference
echo worker (bicubic upsample) used for integration tests.

Frame layout, all integers little-endian:
    magic "UZEP" | frame_type u8 | request_id u64 | payload_len u64 | payload
Types: 0 HELLO, 1 CAPS, 2 ENHANCE, 3 RESULT, 4 ERROR. HELLO/CAPS carry UTF-8
JSON; ENHANCE carries zoom f64, step_index u32, step_count u32, width u32,
height u32, then row-major RGB f32 pixels; RESULT carries width u32,
height u32, pixels.

Run the reference worker with ``python -m uzoom.worker``.
"""

import json
import os
import select
import struct
import subprocess
import sys

import numpy as np

from .degrade import resample_to, round_half_up
from .enhance import Enhancer, EnhancerDescriptor
from .errors import ProtocolError, Timeout, WorkerExit

MAGIC = b"UZEP"
HELLO, CAPS, ENHANCE, RESULT, ERROR = range(5)
HEADER = struct.Struct("<4sBQQ")
ENHANCE_HEAD = struct.Struct("<dIIII")
RESULT_HEAD = struct.Struct("<II")
DEFAULT_TIMEOUT = 300.0


def pack_frame(frame_type, request_id, payload=b""):
    return HEADER.pack(MAGIC, frame_type, request_id, len(payload)) + payload


def _read_exact(stream, n):
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = stream.read(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream):
    """Blocking frame read; returns (type, request_id, payload) or None on EOF."""
    head = _read_exact(stream, HEADER.size)
    if head is None:
        return None
    magic, frame_type, request_id, payload_len = HEADER.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    payload = _read_exact(stream, payload_len) if payload_len else b""
    if payload is None:
        raise ProtocolError("truncated frame payload")
    return frame_type, request_id, payload


class ExternalEnhancer(Enhancer):
    """Client side: one worker process, one in-flight request at a time."""

    def __init__(self, cmd, timeout=DEFAULT_TIMEOUT):
        self.timeout = timeout
        self.proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        self._next_id = 1
        self._send(pack_frame(HELLO, 0, json.dumps({"protocol": 1}).encode()))
        frame_type, _rid, payload = self._recv()
        if frame_type != CAPS:
            raise ProtocolError(f"expected CAPS, got frame type {frame_type}")
        caps = json.loads(payload.decode())
        self.descriptor = EnhancerDescriptor(
            name=caps.get("name", "external"),
            mode=caps.get("mode", "one-shot"),
            max_input=int(caps.get("max_input", 1 << 30)),
            deterministic=bool(caps.get("deterministic", False)),
        )

    def _send(self, data):
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise WorkerExit(f"worker exited (code {self.proc.poll()})")

    def _read_bytes(self, n):
        # raw fd reads only: a buffered wrapper could hold bytes that select
        # on the fd would never report
        out = bytearray()
        fd = self.proc.stdout.fileno()
        while len(out) < n:
            ready, _, _ = select.select([fd], [], [], self.timeout)
            if not ready:
                raise Timeout(f"no worker reply within {self.timeout}s")
            chunk = os.read(fd, n - len(out))
            if not chunk:
                raise WorkerExit(f"worker exited (code {self.proc.poll()})")
            out.extend(chunk)
        return bytes(out)

    def _recv(self):
        head = self._read_bytes(HEADER.size)
        magic, frame_type, request_id, payload_len = HEADER.unpack(head)
        if magic != MAGIC:
            raise ProtocolError(f"bad magic {magic!r}")
        payload = self._read_bytes(payload_len) if payload_len else b""
        return frame_type, request_id, payload

    def enhance(self, request):
        self._check(request)
        rid = self._next_id
        self._next_id += 1
        lr = np.ascontiguousarray(request.lr_patch, dtype="<f4")
        h, w = lr.shape[:2]
        payload = (
            ENHANCE_HEAD.pack(
                request.zoom, request.step_index, request.step_count, w, h
            )
            + lr.tobytes()
        )
        self._send(pack_frame(ENHANCE, rid, payload))
        frame_type, got_id, reply = self._recv()
        if frame_type == ERROR:
            raise ProtocolError(f"worker error: {reply.decode(errors='replace')}")
        if frame_type != RESULT:
            raise ProtocolError(f"expected RESULT, got frame type {frame_type}")
        if got_id != rid:
            raise ProtocolError(f"request id mismatch: sent {rid}, got {got_id}")
        if len(reply) < RESULT_HEAD.size:
            raise ProtocolError("truncated RESULT payload")
        rw, rh = RESULT_HEAD.unpack_from(reply)
        out_h, out_w = request.output_shape
        if (rw, rh) != (out_w, out_h):
            raise ProtocolError(
                f"worker returned {rw}x{rh}, expected {out_w}x{out_h}"
            )
        pixels = np.frombuffer(reply, dtype="<f4", offset=RESULT_HEAD.size)
        if pixels.size != rw * rh * 3:
            raise ProtocolError("RESULT pixel count does not match dimensions")
        return pixels.reshape(rh, rw, 3).astype(np.float32)

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# reference worker

def serve(stdin=None, stdout=None, wrong_dims=False):
    """Reference worker loop: replies to ENHANCE with a bicubic upsample.

    `wrong_dims` makes it misreport output size (protocol-failure testing).
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    caps = EnhancerDescriptor("echo-bicubic", "one-shot", 1 << 30, True).to_dict()
    while True:
        frame = read_frame(stdin)
        if frame is None:
            return 0
        frame_type, rid, payload = frame
        if frame_type == HELLO:
            stdout.write(pack_frame(CAPS, rid, json.dumps(caps).encode()))
            stdout.flush()
        elif frame_type == ENHANCE:
            zoom, _si, _sc, w, h = ENHANCE_HEAD.unpack_from(payload)
            pixels = np.frombuffer(
                payload, dtype="<f4", offset=ENHANCE_HEAD.size
            ).reshape(h, w, 3)
            out = resample_to(pixels, round_half_up(h * zoom), round_half_up(w * zoom))
            oh, ow = out.shape[:2]
            if wrong_dims:
                oh, ow = oh + 1, ow
                out = np.zeros((oh, ow, 3), dtype=np.float32)
            reply = RESULT_HEAD.pack(ow, oh) + np.ascontiguousarray(
                out, dtype="<f4"
            ).tobytes()
            stdout.write(pack_frame(RESULT, rid, reply))
            stdout.flush()
        else:
            stdout.write(pack_frame(ERROR, rid, b"unsupported frame type"))
            stdout.flush()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    return serve(wrong_dims="--wrong-dims" in argv)


if __name__ == "__main__":
    sys.exit(main())
