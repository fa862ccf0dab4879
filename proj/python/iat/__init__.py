"""Industrial automation things toolkit.

Python bindings for the C++ core: CID parsing and lowering, descriptor JSON
emission, LWM2M operation legality, the CoAP codec, the simulated liqueur
plant, batch orchestration and the latency benchmark harness.
"""

try:
    from ._iat import (
        IatError,
        Plant,
        bench,
        binding_manifest,
        canonical_cid,
        check_trace_csv,
        classify_exposure,
        coap_decode,
        coap_encode,
        descriptor_json_roundtrip,
        legality_check,
        lower_cid,
        parse_path,
        plant_cid,
        run_batches,
    )
except ImportError:  # in-tree builds keep the extension next to the package
    from _iat import (
        IatError,
        Plant,
        bench,
        binding_manifest,
        canonical_cid,
        check_trace_csv,
        classify_exposure,
        coap_decode,
        coap_encode,
        descriptor_json_roundtrip,
        legality_check,
        lower_cid,
        parse_path,
        plant_cid,
        run_batches,
    )

__all__ = [
    "IatError",
    "Plant",
    "bench",
    "binding_manifest",
    "canonical_cid",
    "check_trace_csv",
    "classify_exposure",
    "coap_decode",
    "coap_encode",
    "descriptor_json_roundtrip",
    "legality_check",
    "lower_cid",
    "parse_path",
    "plant_cid",
    "run_batches",
]
