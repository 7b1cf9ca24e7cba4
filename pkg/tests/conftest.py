from __future__ import annotations

from pathlib import Path

import pytest

from falcon.cti import CtiDocument, Ioc, IocKind
from falcon.embeddings import Embedder

REPO_ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = REPO_ROOT / "data"

COREHOUND_FINAL = """rule HackTool_MSIL_CoreHound
{
    meta:
        description = "The TypeLibGUID present in a .NET binary maps back to CoreHound"
        md5 = "dd8805d0e470e59b829d98397507d8c2"
    strings:
        $typelibguid0 = "1fff2aee-a540-4613-94ee-4f40eb929549" ascii nocase wide
    condition:
        uint16(0) == 0x5A4D and uint32(uint32(0x3C)) == 0x00004550 and any of them
}"""

# The same rule as first drafted: ':' where '=' belongs, truncated string, no wide.
COREHOUND_INITIAL = """rule HackTool_MSIL_CoreHound
{
    meta:
        description = "Looking for suspicious .NET binaries"
        md5 = "dd8805d0e470e59b829d98397507d8c2"
    strings:
        $s1 : "1fff2aee" ascii nocase
    condition:
        uint16(0) == 0x5A4D and $s1
}"""

SNORT_HTTP_RULE = (
    'alert tcp $HOME_NET any -> $EXTERNAL_NET 80 '
    '(msg:"SQL injection probe"; flow:established,to_server; '
    'content:"union select"; nocase; sid:2100001; rev:2; classtype:web-application-attack;)'
)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def embedder() -> Embedder:
    return Embedder()


@pytest.fixture()
def corehound_cti() -> CtiDocument:
    return CtiDocument(
        id="cti-corehound-001",
        threat_name="HackTool_MSIL_CoreHound",
        categories=("Malware / HackTool", ".NET-based Threat"),
        iocs=(
            Ioc(kind=IocKind.GUID, value="1fff2aee-a540-4613-94ee-4f40eb929549",
                label="TypeLibGUID / ProjectGuid"),
            Ioc(kind=IocKind.MD5, value="dd8805d0e470e59b829d98397507d8c2",
                label="MD5 Hash"),
        ),
        behaviors=(
            "Windows PE file by MZ (0x5A4D) header at file beginning.",
            "PE signature (0x00004550) at specified location in header.",
        ),
    )


@pytest.fixture()
def corehound_final() -> str:
    return COREHOUND_FINAL


@pytest.fixture()
def corehound_initial() -> str:
    return COREHOUND_INITIAL


@pytest.fixture()
def snort_http_rule() -> str:
    return SNORT_HTTP_RULE
