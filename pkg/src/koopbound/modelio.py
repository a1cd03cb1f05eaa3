"""Versioned plain-text serialization of models and controllers.

A model file is sectioned key=value text; numeric arrays are stored
row-major as space-separated floats together with their shape.  The same
file can carry the identified dynamics alone (written by the fit stage) or
additionally the certified controller (written by the synthesis stage, with
the certificate value recorded for audit).
"""

from __future__ import annotations

import numpy as np

from .controller import ControllerSpec
from .errors import ConfigError
from .lifting import Decoder, Dictionary, LiftedModel

FORMAT_VERSION = 1


def _emit_array(lines, key, arr):
    arr = np.asarray(arr, dtype=float)
    lines.append("%s_shape = %s" % (key, " ".join(str(d) for d in arr.shape)))
    lines.append("%s = %s" % (key, " ".join(repr(float(v)) for v in arr.ravel())))


def _parse_sections(text: str, label: str):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections.setdefault(current, {})
            continue
        if current is None or "=" not in line:
            raise ConfigError("%s:%d: malformed model file line %r" % (label, lineno, line))
        key, _, val = line.partition("=")
        sections[current][key.strip()] = val.strip()
    return sections


def _get_array(sec, key):
    shape = tuple(int(d) for d in sec[key + "_shape"].split()) if sec.get(key + "_shape") else None
    flat = np.array([float(v) for v in sec[key].split()]) if sec[key] else np.empty(0)
    return flat.reshape(shape) if shape else flat


def write_model(path, model: LiftedModel, diagnostics: dict = None,
                spec: ControllerSpec = None) -> None:
    dic, dec = model.dictionary, model.decoder
    lines = ["# koopbound model file", "[meta]", "format_version = %d" % FORMAT_VERSION, ""]
    lines += ["[dictionary]",
              "kind = %s" % dic.kind,
              "input_dim = %d" % dic.input_dim,
              "latent_dim = %d" % dic.latent_dim,
              "include_constant = %s" % str(dic.include_constant).lower(),
              "description = %s" % dic.metadata]
    _emit_array(lines, "parameters", dic.parameters)
    lines.append("")
    lines += ["[decoder]",
              "kind = %s" % dec.kind,
              "latent_dim = %d" % dec.latent_dim,
              "output_dim = %d" % dec.output_dim]
    _emit_array(lines, "weights", dec.weights)
    lines.append("")
    lines += ["[dynamics]", "input_dim = %d" % model.input_dim]
    _emit_array(lines, "A", model.A)
    _emit_array(lines, "B", model.B)
    lines.append("")
    if diagnostics:
        lines.append("[diagnostics]")
        for k in sorted(diagnostics):
            v = diagnostics[k]
            lines.append("%s = %s" % (k, repr(float(v)) if isinstance(v, float) else v))
        lines.append("")
    if spec is not None:
        lines.append("[controller]")
        lines += ["gamma = %s" % repr(float(spec.gamma)),
                  "rho = %s" % repr(float(spec.rho)),
                  "c_v = %s" % repr(float(spec.c_v)),
                  "m_bar = %s" % repr(float(spec.m_bar)),
                  "m_under = %s" % repr(float(spec.m_under)),
                  "certificate = %s" % repr(float(spec.certificate))]
        _emit_array(lines, "K", spec.K)
        _emit_array(lines, "M", spec.M)
        _emit_array(lines, "Theta", spec.Theta)
        _emit_array(lines, "closed_loop_moduli", spec.closed_loop_moduli)
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def read_model(path):
    """Returns (LiftedModel, diagnostics dict, ControllerSpec or None)."""
    with open(path) as fh:
        text = fh.read()
    sections = _parse_sections(text, str(path))
    meta = sections.get("meta", {})
    if int(meta.get("format_version", "-1")) != FORMAT_VERSION:
        raise ConfigError("%s: unsupported model format version %r"
                          % (path, meta.get("format_version")))
    d = sections["dictionary"]
    dic = Dictionary(kind=d["kind"], input_dim=int(d["input_dim"]),
                     latent_dim=int(d["latent_dim"]),
                     parameters=_get_array(d, "parameters"),
                     include_constant=d.get("include_constant", "true") == "true",
                     metadata=d.get("description", ""))
    e = sections["decoder"]
    dec = Decoder(kind=e["kind"], latent_dim=int(e["latent_dim"]),
                  output_dim=int(e["output_dim"]), weights=_get_array(e, "weights"))
    dyn = sections["dynamics"]
    model = LiftedModel(dic, dec, _get_array(dyn, "A"), _get_array(dyn, "B"))
    diagnostics = {}
    for k, v in sections.get("diagnostics", {}).items():
        try:
            diagnostics[k] = float(v)
        except ValueError:
            diagnostics[k] = v
    spec = None
    if "controller" in sections:
        c = sections["controller"]
        spec = ControllerSpec(
            K=_get_array(c, "K"), M=_get_array(c, "M"), Theta=_get_array(c, "Theta"),
            gamma=float(c["gamma"]), rho=float(c["rho"]), c_v=float(c["c_v"]),
            m_bar=float(c["m_bar"]), m_under=float(c["m_under"]),
            certificate=float(c["certificate"]),
            closed_loop_moduli=_get_array(c, "closed_loop_moduli"))
    return model, diagnostics, spec
