"""Process supervision and wire protocol for external backends.

Backends are child processes speaking newline-delimited JSON over stdio:
one request line in, one reply line out, strictly in order, one request
in flight. Images and masks travel as base64 PNG. The handshake is a
``{"op": "hello"}`` request answered with a name and capability list;
``{"op": "shutdown"}`` is always sent when the handle closes, after which
the child is reaped or killed.
"""

from __future__ import annotations

import base64
import json
import queue
import shlex
import subprocess
import threading

from .errors import BackendError
from .raster import BitMask, ImageRGB, decode_image, decode_mask, encode_png

DEFAULT_TIMEOUT = 120.0
DEFAULT_INPAINT_STEPS = 500


def _b64_png(item) -> str:
    return base64.b64encode(encode_png(item)).decode("ascii")


class BackendHandle:
    """Supervises one backend child process. One request in flight."""

    def __init__(self, process: subprocess.Popen, timeout: float = DEFAULT_TIMEOUT):
        self._proc = process
        self._timeout = timeout
        self._lock = threading.Lock()
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._closed = False
        self.name = ""
        self.capabilities: frozenset[str] = frozenset()

    def _pump(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _read_reply(self) -> dict:
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            raise BackendError(f"backend {self.name or '<handshaking>'} timed out after {self._timeout}s")
        if line is None:
            raise BackendError(f"backend {self.name or '<handshaking>'} closed its stdout")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise BackendError(f"backend sent a non-JSON line: {line.strip()!r}")
        if not isinstance(reply, dict):
            raise BackendError(f"backend reply is not an object: {line.strip()!r}")
        return reply

    def request(self, message: dict) -> dict:
        """Send one request line and wait for its reply line."""
        with self._lock:
            if self._closed:
                raise BackendError("backend handle is closed")
            if self._proc.poll() is not None:
                raise BackendError(f"backend {self.name} exited with code {self._proc.returncode}")
            try:
                self._proc.stdin.write(json.dumps(message) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise BackendError(f"backend {self.name} pipe failed: {exc}") from exc
            reply = self._read_reply()
        if "error" in reply:
            raise BackendError(f"backend {self.name} error: {reply['error']}")
        return reply

    def segment(self, img: ImageRGB, p) -> BitMask:
        """Point-prompt segmentation over the wire."""
        if "segment" not in self.capabilities:
            raise BackendError(f"backend {self.name} does not support 'segment'")
        reply = self.request(
            {"op": "segment", "image_png_b64": _b64_png(img), "point": [p.x, p.y]}
        )
        if "mask_png_b64" not in reply:
            raise BackendError(f"backend {self.name} segment reply lacks mask_png_b64")
        mask = decode_mask(base64.b64decode(reply["mask_png_b64"]))
        if (mask.height, mask.width) != (img.height, img.width):
            raise BackendError(
                f"backend {self.name} mask is {mask.width}x{mask.height}, image is {img.width}x{img.height}"
            )
        return mask

    def inpaint(self, img: ImageRGB, mask: BitMask, steps: int = DEFAULT_INPAINT_STEPS) -> ImageRGB:
        """Mask-conditioned inpainting over the wire."""
        if "inpaint" not in self.capabilities:
            raise BackendError(f"backend {self.name} does not support 'inpaint'")
        reply = self.request(
            {
                "op": "inpaint",
                "image_png_b64": _b64_png(img),
                "mask_png_b64": _b64_png(mask),
                "steps": steps,
            }
        )
        if "image_png_b64" not in reply:
            raise BackendError(f"backend {self.name} inpaint reply lacks image_png_b64")
        out = decode_image(base64.b64decode(reply["image_png_b64"]))
        if (out.height, out.width) != (img.height, img.width):
            raise BackendError(
                f"backend {self.name} inpaint changed dimensions to {out.width}x{out.height}"
            )
        return out

    def close(self) -> None:
        """Send shutdown and reap the child; kill it if it lingers."""
        if self._closed:
            return
        self._closed = True
        try:
            self._proc.stdin.write(json.dumps({"op": "shutdown"}) + "\n")
            self._proc.stdin.flush()
            self._proc.stdin.close()
        except (BrokenPipeError, OSError, ValueError):
            pass
        try:
            self._proc.wait(timeout=self._timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self) -> "BackendHandle":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()

    def __del__(self):
        try:
            if not self._closed and self._proc.poll() is None:
                self._proc.kill()
        except Exception:
            pass


def spawn_backend(cmd: str | list[str], timeout: float = DEFAULT_TIMEOUT) -> BackendHandle:
    """Start a backend process and complete the hello handshake."""
    argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
    except OSError as exc:
        raise BackendError(f"failed to spawn backend {argv!r}: {exc}") from exc

    handle = BackendHandle(proc, timeout)
    try:
        reply = handle.request({"op": "hello"})
        name = reply.get("name")
        caps = reply.get("capabilities")
        if not isinstance(name, str) or not isinstance(caps, list):
            raise BackendError(f"malformed hello reply: {reply!r}")
        handle.name = name
        handle.capabilities = frozenset(str(c) for c in caps)
    except BackendError:
        handle._closed = True
        proc.kill()
        proc.wait()
        raise
    return handle
