#!/usr/bin/env python3
"""Regenerate the committed fixture corpus and dataset files under data/.

Everything is derived deterministically (hashes come from blake2/md5 of
stable seeds), so reruns produce byte-identical output. The rules are
modeled on public community Snort signatures and open YARA repository
rules: same option vocabulary, same structural idioms.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from falcon.rules.snort import parse_snort  # noqa: E402
from falcon.rules.yara import parse_yara_file  # noqa: E402

DATA = ROOT / "data"


def md5_of(seed: str) -> str:
    return hashlib.md5(seed.encode()).hexdigest()


def sha256_of(seed: str) -> str:
    return hashlib.sha256(seed.encode()).hexdigest()


def guid_of(seed: str) -> str:
    h = hashlib.md5(seed.encode()).hexdigest()
    return f"{h[0:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:32]}"


# --------------------------------------------------------------------------
# Snort corpus

WEB_PATHS = [
    "/admin/config.php", "/cgi-bin/test.cgi", "/wp-login.php", "/.env",
    "/phpmyadmin/index.php", "/owa/auth.owa", "/manager/html", "/solr/admin/cores",
    "/jenkins/script", "/api/v1/token", "/cgi-bin/luci", "/boaform/admin/formLogin",
]

BEACON_DOMAINS = [
    "update-check.badcdn.example", "telemetry.darkpool.example", "cdn.proxyrelay.example",
    "static.minerpool.example", "api.stealr.example", "sync.webstats.example",
    "files.dropzone.example", "ping.hostcheck.example", "assets.trackpad.example",
    "mail.relaygate.example",
]

USER_AGENTS = [
    "updater/1.1", "WinHTTP loader", "Mozilla/4.0 (compatible; MSIE 6.0)",
    "python-urllib/3.9 custom", "curl-agent-x", "MicroUpdate/2.2",
    "stagerclient", "sysinfo-agent/0.4",
]

SQLI_PATTERNS = [
    ("union select", "/(union\\s+select|select\\s+.*\\s+from)/i"),
    ("or 1=1", "/or\\s+1\\s*=\\s*1/i"),
    ("information_schema", "/information_schema\\.(tables|columns)/i"),
    ("sleep(", "/(sleep|benchmark)\\s*\\(/i"),
]

EXFIL_PORTS = ["4444", "8081", "1337", "6667", "9001", "5555"]


def snort_rules() -> list[str]:
    rules: list[str] = []
    sid = 3100001

    for path in WEB_PATHS:
        rules.append(
            f'alert tcp $EXTERNAL_NET any -> $HOME_NET $HTTP_PORTS '
            f'(msg:"WEB-ATTACK probe {path}"; flow:established,to_server; '
            f'content:"{path}"; http_uri; nocase; '
            f'reference:url,attack.mitre.org/techniques/T1190; '
            f'classtype:web-application-attack; sid:{sid}; rev:1;)'
        )
        sid += 1

    for domain in BEACON_DOMAINS:
        rules.append(
            f'alert udp $HOME_NET any -> any 53 '
            f'(msg:"MALWARE-CNC beacon DNS query {domain}"; '
            f'content:"|01 00 00 01 00 00 00 00 00 00|"; depth:10; offset:2; '
            f'content:"{domain.split(".")[0]}"; nocase; '
            f'metadata:impact_flag red, policy balanced-ips drop; '
            f'classtype:trojan-activity; sid:{sid}; rev:2;)'
        )
        sid += 1

    for domain in BEACON_DOMAINS:
        rules.append(
            f'alert tcp $HOME_NET any -> $EXTERNAL_NET 80 '
            f'(msg:"MALWARE-CNC HTTP check-in to {domain}"; flow:established,to_server; '
            f'content:"Host|3a 20|{domain}"; http_header; '
            f'classtype:trojan-activity; sid:{sid}; rev:1;)'
        )
        sid += 1

    for agent in USER_AGENTS:
        rules.append(
            f'alert tcp $HOME_NET any -> $EXTERNAL_NET $HTTP_PORTS '
            f'(msg:"POLICY suspicious user-agent {agent.split("/")[0]}"; '
            f'flow:established,to_server; content:"User-Agent|3a 20|{agent}"; http_header; '
            f'classtype:policy-violation; sid:{sid}; rev:1;)'
        )
        sid += 1

    for token, pattern in SQLI_PATTERNS:
        rules.append(
            f'alert tcp $EXTERNAL_NET any -> $HOME_NET $HTTP_PORTS '
            f'(msg:"SQL injection attempt {token}"; flow:established,to_server; '
            f'content:"{token}"; nocase; http_uri; pcre:"{pattern}"; '
            f'classtype:web-application-attack; sid:{sid}; rev:3;)'
        )
        sid += 1

    # pcre-only detections (parse fine; the perf gate merely warns)
    rules.append(
        f'alert tcp $EXTERNAL_NET any -> $HOME_NET $HTTP_PORTS '
        f'(msg:"WEB-ATTACK traversal pattern"; flow:established,to_server; '
        f'pcre:"/(\\.\\.\\/){{2,}}/"; classtype:web-application-attack; sid:{sid}; rev:1;)'
    )
    sid += 1

    for port in EXFIL_PORTS:
        rules.append(
            f'alert tcp $HOME_NET any -> $EXTERNAL_NET {port} '
            f'(msg:"MALWARE-CNC outbound channel tcp/{port}"; flow:established,to_server; '
            f'dsize:>128; content:"|00 01|"; depth:2; '
            f'classtype:trojan-activity; sid:{sid}; rev:1;)'
        )
        sid += 1

    scan_flags = [("S,12", "SYN"), ("F", "FIN"), ("0", "NULL"), ("SF", "SYNFIN")]
    for flags, name in scan_flags:
        rules.append(
            f'alert tcp $EXTERNAL_NET any -> $HOME_NET any '
            f'(msg:"SCAN {name} sweep"; flags:{flags}; '
            f'threshold:type both, track by_src, count 20, seconds 60; '
            f'classtype:attempted-recon; sid:{sid}; rev:1;)'
        )
        sid += 1

    for n in range(6):
        payload = md5_of(f"smtp-{n}")[:12]
        rules.append(
            f'alert tcp $EXTERNAL_NET any -> $HOME_NET 25 '
            f'(msg:"SMTP suspicious attachment marker {n}"; flow:established,to_server; '
            f'content:"filename=|22|inv_{payload}.js|22|"; nocase; '
            f'classtype:suspicious-filename-detect; sid:{sid}; rev:1;)'
        )
        sid += 1

    for n in range(6):
        rules.append(
            f'alert tcp any [1024:] -> 10.{n}.0.0/16 443 '
            f'(msg:"TLS anomalous client hello {n}"; content:"|16 03 01|"; depth:3; '
            f'byte_test:2,>,512,3; classtype:protocol-command-decode; sid:{sid}; rev:1;)'
        )
        sid += 1

    for n in range(4):
        rules.append(
            f'alert icmp $EXTERNAL_NET any -> $HOME_NET any '
            f'(msg:"ICMP tunneling oversized echo {n}"; itype:8; dsize:>{500 + 100 * n}; '
            f'classtype:bad-unknown; sid:{sid}; rev:1;)'
        )
        sid += 1

    for n, host in enumerate(["172.16.4.10", "172.16.4.11", "192.168.100.5"]):
        rules.append(
            f'drop tcp !{host} any -> {host} [3389,5900] '
            f'(msg:"POLICY remote-desktop reachability {n}"; flags:S; '
            f'classtype:policy-violation; sid:{sid}; rev:1;)'
        )
        sid += 1

    rules.append(
        f'alert tcp $HOME_NET any <> $EXTERNAL_NET 6667 '
        f'(msg:"CHAT IRC session either direction"; content:"PRIVMSG"; nocase; '
        f'classtype:policy-violation; sid:{sid}; rev:1;)'
    )
    sid += 1

    rules.append(
        f'log tcp $HOME_NET any -> [192.0.2.0/24,198.51.100.0/24] any '
        f'(msg:"AUDIT traffic to documentation ranges"; sid:{sid}; rev:1;)'
    )
    sid += 1

    for n in range(8):
        marker = sha256_of(f"filemagic-{n}")[:8].upper()
        spaced = " ".join(marker[i:i + 2] for i in range(0, 8, 2))
        rules.append(
            f'alert tcp $EXTERNAL_NET $HTTP_PORTS -> $HOME_NET any '
            f'(msg:"FILE download PE stub variant {n}"; flow:established,to_client; '
            f'file_data; content:"|4D 5A|"; depth:2; content:"|{spaced}|"; '
            f'classtype:trojan-activity; sid:{sid}; rev:1;)'
        )
        sid += 1

    for n in range(6):
        uri = f"/gate{n}.php"
        rules.append(
            f'alert tcp $HOME_NET any -> $EXTERNAL_NET $HTTP_PORTS '
            f'(msg:"MALWARE-CNC POST exfil {uri}"; flow:established,to_server; '
            f'content:"POST"; http_method; content:"{uri}"; http_uri; '
            f'content:"data="; http_client_body; classtype:trojan-activity; '
            f'sid:{sid}; rev:2;)'
        )
        sid += 1

    for n in range(6):
        rules.append(
            f'alert udp $HOME_NET any -> $EXTERNAL_NET 123 '
            f'(msg:"POLICY NTP amplification monlist {n}"; content:"|17 00 03 2a|"; depth:4; '
            f'classtype:attempted-dos; sid:{sid}; rev:1;)'
        )
        sid += 1

    ftp_commands = ["USER anonymous", "SITE EXEC", "RETR passwd", "STOR shell.php",
                    "PASS backdoor", "MKD .hidden"]
    for n, command in enumerate(ftp_commands):
        rules.append(
            f'alert tcp $EXTERNAL_NET any -> $HOME_NET 21 '
            f'(msg:"FTP suspicious command sequence {n}"; flow:established,to_server; '
            f'content:"{command}"; nocase; classtype:suspicious-login; sid:{sid}; rev:1;)'
        )
        sid += 1

    return rules


def write_snort(rules: list[str]) -> Path:
    out = DATA / "corpus" / "snort"
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        "# Community-style network rules used as the parser/retrieval fixture corpus.",
        "# One rule per logical line; backslash continuation appears below.",
        "",
    ]
    for n, rule in enumerate(rules):
        if n == 5:
            # exercise line continuation handling
            head, _, tail = rule.partition("(")
            lines.append(head.rstrip() + " \\")
            lines.append("    (" + tail)
        else:
            lines.append(rule)
    path = out / "community-sample.rules"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# YARA corpus

DOTNET_TOOLS = [
    "SharpSpray", "RuleRunner", "CoreProbe", "NetLoaderX", "AssemblyGhost",
    "MsilHollow", "GhostPack", "TokenLift", "ClipStealer", "RegRunner",
    "WireTapper", "DropServe", "ProxyPivot", "CredHarvest", "StageCaller",
]

RANSOM_FAMILIES = ["lockmix", "cryptbane", "vaultfreeze", "darkseal", "keybreaker",
                   "shadowbolt", "hexlocker", "grimvault"]

MUTEX_NAMES = [
    "Global\\svc_dispatch_91", "Global\\upd_monitor_17", "Local\\cfg_sync_228",
    "Global\\net_relay_44", "Global\\drv_guard_73", "Local\\tmp_lock_305",
    "Global\\reg_watch_56", "Global\\io_pipe_884", "Local\\gpu_poll_12",
    "Global\\prn_spool_67",
]

PS_MARKERS = [
    "IEX (New-Object Net.WebClient)", "-EncodedCommand", "FromBase64String(",
    "Invoke-Expression $env:", "DownloadString('http", "Start-BitsTransfer -Source",
    "[Convert]::FromBase64", "Add-MpPreference -ExclusionPath",
]


def yara_rules() -> list[str]:
    rules: list[str] = []

    for tool in DOTNET_TOOLS:
        guid = guid_of(f"guid-{tool}")
        rules.append(f'''rule HackTool_MSIL_{tool}
{{
    meta:
        description = "The TypeLibGUID present in a .NET binary maps back to {tool}"
        md5 = "{md5_of(f'md5-{tool}')}"
        author = "fixture corpus"
    strings:
        $typelibguid0 = "{guid}" ascii nocase wide
    condition:
        uint16(0) == 0x5A4D and uint32(uint32(0x3C)) == 0x00004550 and any of them
}}''')

    for n in range(10):
        marker = sha256_of(f"dropper-{n}")[:16].upper()
        spaced = " ".join(marker[i:i + 2] for i in range(0, 16, 2))
        rules.append(f'''rule Win32_Dropper_Stage{n} : dropper win32
{{
    meta:
        description = "Stage marker bytes observed in dropper family {n}"
        sample_md5 = "{md5_of(f'drop-{n}')}"
        severity = {60 + n}
    strings:
        $stub = {{ 4D 5A 90 00 03 00 00 00 }}
        $marker = {{ {spaced} }}
        $call = {{ 6A ?? 58 C3 [4-16] ( E8 | E9 ) }}
    condition:
        uint16(0) == 0x5A4D and filesize < 2MB and 2 of them
}}''')

    for family in RANSOM_FAMILIES:
        note = family.upper()
        rules.append(f'''rule Ransom_{family.capitalize()}_Note : ransomware
{{
    meta:
        description = "Ransom note markers dropped by the {family} family"
        reference_sha256 = "{sha256_of(f'ransom-{family}')}"
    strings:
        $h1 = "ALL YOUR FILES HAVE BEEN ENCRYPTED BY {note}" ascii wide
        $h2 = "decrypt_{family}@securemail.example" ascii nocase
        $h3 = "{family}_recovery_id:" ascii
    condition:
        2 of them
}}''')

    for n, marker in enumerate(PS_MARKERS):
        escaped = marker.replace("\\", "\\\\").replace('"', '\\"')
        rules.append(f'''rule Susp_PowerShell_Loader_{n} : script powershell
{{
    meta:
        description = "PowerShell download-and-execute marker {n}"
    strings:
        $cmd = "{escaped}" ascii nocase
        $sig = "powershell" ascii nocase
    condition:
        all of them and filesize < 512KB
}}''')

    for n, mutex in enumerate(MUTEX_NAMES):
        escaped = mutex.replace("\\", "\\\\")
        rules.append(f'''rule Backdoor_Mutex_Family{n} : backdoor
{{
    meta:
        description = "Runtime mutex fixed across family {n} builds"
        sample_md5 = "{md5_of(f'mutex-{n}')}"
    strings:
        $mutex = "{escaped}" ascii wide fullword
    condition:
        uint16(0) == 0x5A4D and $mutex
}}''')

    for n, domain in enumerate(BEACON_DOMAINS[:8]):
        stem = domain.split(".")[0]
        rules.append(f'''rule Trojan_Exfil_Url_{n} : trojan exfil
{{
    meta:
        description = "Hardcoded exfiltration endpoint for {domain}"
    strings:
        $url = /https?:\\/\\/{stem}\\.[a-z]{{4,12}}\\.example\\/gate[0-9]{{1,2}}\\.php/ ascii
        $host = "{domain}" ascii nocase
    condition:
        any of them
}}''')

    for n in range(8):
        sections = 4 + (n % 4)
        guard = "uint16(0) == 0x5A4D and " if n % 2 == 0 else ""
        rules.append(f'''import "pe"

rule PE_Anomaly_Section_Count_{n} : pe anomaly
{{
    meta:
        description = "Unusual section layout variant {n}"
    condition:
        {guard}pe.number_of_sections > {sections} and pe.entry_point > 0
}}''')

    for n in range(8):
        tail = sha256_of(f"hexjump-{n}")[:8].upper()
        spaced = " ".join(tail[i:i + 2] for i in range(0, 8, 2))
        rules.append(f'''rule Loader_Shellcode_Gadget_{n} : loader shellcode
{{
    meta:
        description = "Call-pop gadget with trailing marker variant {n}"
    strings:
        $gadget = {{ E8 00 00 00 00 5? [0-8] {spaced} }}
    condition:
        $gadget
}}''')

    for n in range(8):
        magic = md5_of(f"atin-{n}")[:8]
        rules.append(f'''rule Doc_Macro_Header_{n} : maldoc
{{
    meta:
        description = "OLE header plus macro marker constrained to the file head"
    strings:
        $ole = {{ D0 CF 11 E0 A1 B1 1A E1 }}
        $macro = "vbaProject.bin{magic}" ascii nocase
    condition:
        $ole at 0 and $macro in (0..4096)
}}''')

    for n in range(6):
        key = md5_of(f"cfg-{n}")[:10]
        rules.append(f'''rule Stealer_Config_Key_{n} : stealer
{{
    meta:
        description = "Embedded configuration key for stealer build {n}"
        build = {n}
        active = true
    strings:
        $key = "cfg_{key}" ascii
        $sep = "||" ascii
    condition:
        #key > 1 and @key[1] < 2048 and $sep
}}''')

    for n in range(10):
        service = md5_of(f"svc-{n}")[:6]
        rules.append(f'''rule Persistence_Service_Install_{n} : persistence
{{
    meta:
        description = "Service installation strings for implant build {n}"
        sample_md5 = "{md5_of(f'persist-{n}')}"
    strings:
        $sc = "sc create svc_{service} binPath=" ascii nocase
        $reg = "SYSTEM\\\\CurrentControlSet\\\\Services\\\\svc_{service}" ascii wide
    condition:
        any of ($sc, $reg) and filesize < 4MB
}}''')

    rules.append('''private rule Helper_PE_Header : helper
{
    strings:
        $mz = { 4D 5A }
    condition:
        $mz at 0
}''')

    rules.append('''rule Multi_Tag_Example : apt loader persistence
{
    meta:
        description = "Scheduled-task persistence alongside a raw loader marker"
        date = "2025-11-02"
        confidence = 80
    strings:
        $task = "schtasks /create /sc onlogon" ascii nocase
        $loader = { C7 45 ?? 64 6C 6C 00 }
    condition:
        all of ($task, $loader) or (filesize < 1MB and $task)
}''')

    # Superseded detections for the same .NET tools: the "relevant but
    # outdated" relatives the retrieval benchmarks look for.
    for tool in DOTNET_TOOLS:
        guid = guid_of(f"guid-{tool}")
        rules.append(f'''rule HackTool_MSIL_{tool}_Legacy : hacktool dotnet superseded
{{
    meta:
        description = "Legacy detection for the {tool} type library GUID"
        md5 = "{md5_of(f'md5-{tool}-old')}"
    strings:
        $guid = "{guid}" ascii nocase
    condition:
        uint16(0) == 0x5A4D and $guid
}}''')

    return rules


def write_yara(rules: list[str]) -> Path:
    out = DATA / "corpus" / "yara"
    out.mkdir(parents=True, exist_ok=True)
    header = (
        "// Open-repository-style host rules used as the parser/retrieval fixture corpus.\n"
        "/* Multiple rule blocks per file; comments and import headers included. */\n\n"
    )
    path = out / "public-sample.yar"
    path.write_text(header + "\n\n".join(rules) + "\n", encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# Datasets

def snort_id(idx: int) -> str:
    return f"snort-community-sample-{idx:04d}"


def yara_id(idx: int) -> str:
    return f"yara-public-sample-{idx:04d}"


def find_rule(rules: list[str], needle: str) -> int:
    matches = [i for i, r in enumerate(rules) if needle in r]
    assert len(matches) == 1, f"{needle!r} matched {len(matches)} rules"
    return matches[0]


def _snort_cti(idx: int, rule: str, name: str, iocs: list[dict], behaviors: list[str]) -> dict:
    return {
        "id": f"cti-snort-{idx:04d}",
        "threat_name": name,
        "categories": ["Malware / Network Beacon", "Command and Control"],
        "iocs": iocs,
        "behaviors": behaviors,
    }


def build_small_dataset(snort: list[str], yara: list[str]) -> list[dict]:
    """10 records: 6 snort + 4 yara, relevance lists over corpus neighbors."""
    records = []
    for n in range(6):
        domain = BEACON_DOMAINS[n]
        idx = find_rule(snort, f"beacon DNS query {domain}")
        sibling = find_rule(snort, f"HTTP check-in to {domain}")
        records.append({
            "pair_id": f"pair-snort-{n:03d}",
            "medium": "snort",
            "cti": {
                "id": f"cti-small-snort-{n:03d}",
                "threat_name": f"Beacon_DNS_{domain.split('.')[0]}",
                "categories": ["Malware / Trojan", "Command and Control"],
                "iocs": [{"kind": "domain", "value": domain}],
                "behaviors": [
                    f"Periodic DNS queries for {domain} from infected hosts.",
                    "Standard query header with a single question record.",
                ],
            },
            "ground_truth_rule": snort[idx],
            "related_outdated_rule_ids": [snort_id(sibling)],
            "difficulty": ["Easy", "Medium", "Hard"][n % 3],
        })
    for n in range(4):
        tool = DOTNET_TOOLS[n]
        guid = guid_of(f"guid-{tool}")
        legacy = find_rule(yara, f"rule HackTool_MSIL_{tool}_Legacy")
        records.append({
            "pair_id": f"pair-yara-{n:03d}",
            "medium": "yara",
            "cti": {
                "id": f"cti-small-yara-{n:03d}",
                "threat_name": f"HackTool_MSIL_{tool}",
                "categories": ["Malware / HackTool", ".NET-based Threat"],
                "iocs": [
                    {"kind": "guid", "value": guid, "label": "TypeLibGUID / ProjectGuid"},
                    {"kind": "md5", "value": md5_of(f"md5-{tool}")},
                ],
                "behaviors": [
                    "Windows PE file by MZ (0x5A4D) header at file beginning.",
                    "PE signature (0x00004550) at specified location in header.",
                ],
            },
            "ground_truth_rule": yara[n],
            "related_outdated_rule_ids": [yara_id(legacy)],
            "difficulty": ["Easy", "Medium", "Hard"][n % 3],
        })
    return records


def build_eval_dataset(snort: list[str], yara: list[str]) -> list[dict]:
    """Larger split for scorer/retriever benchmarks: 10 snort + 10 yara."""
    records = []
    difficulties = ["Easy", "Medium", "Hard"]
    for n in range(10):
        domain = BEACON_DOMAINS[n]
        stem = domain.split(".")[0]
        idx = find_rule(snort, f"beacon DNS query {domain}")
        sibling = find_rule(snort, f"HTTP check-in to {domain}")
        records.append({
            "pair_id": f"eval-snort-{n:03d}",
            "medium": "snort",
            "cti": {
                "id": f"cti-eval-snort-{n:03d}",
                "threat_name": f"Trojan_Beacon_{stem}",
                "categories": ["Malware / Trojan", "Command and Control"],
                "iocs": [{"kind": "domain", "value": domain}],
                "behaviors": [
                    f"Resolves {domain} on a fixed timer before callback.",
                    f"Follows up with HTTP check-ins carrying Host header {domain}.",
                ],
            },
            "ground_truth_rule": snort[idx],
            "related_outdated_rule_ids": [snort_id(sibling)],
            "difficulty": difficulties[n % 3],
        })
    for n in range(10):
        tool = DOTNET_TOOLS[n]
        guid = guid_of(f"guid-{tool}")
        legacy = find_rule(yara, f"rule HackTool_MSIL_{tool}_Legacy")
        records.append({
            "pair_id": f"eval-yara-{n:03d}",
            "medium": "yara",
            "cti": {
                "id": f"cti-eval-yara-{n:03d}",
                "threat_name": f"HackTool_MSIL_{tool}",
                "categories": ["Malware / HackTool", ".NET-based Threat"],
                "iocs": [
                    {"kind": "guid", "value": guid, "label": "TypeLibGUID / ProjectGuid"},
                    {"kind": "md5", "value": md5_of(f"md5-{tool}")},
                ],
                "behaviors": [
                    "Windows PE file by MZ (0x5A4D) header at file beginning.",
                    f"Assembly advertises itself as {tool} via its type library.",
                ],
            },
            "ground_truth_rule": yara[n],
            "related_outdated_rule_ids": [yara_id(legacy)],
            "difficulty": difficulties[n % 3],
        })
    return records


def main() -> int:
    snort = snort_rules()
    yara = yara_rules()
    assert len(snort) >= 100, f"need >= 100 snort rules, built {len(snort)}"
    assert len(yara) >= 100, f"need >= 100 yara rules, built {len(yara)}"

    for n, rule in enumerate(snort):
        result = parse_snort(rule)
        assert result.ok, f"snort fixture {n} fails to parse: {result.errors[:1]} :: {rule}"

    snort_path = write_snort(snort)
    yara_path = write_yara(yara)

    parsed = parse_yara_file(yara_path.read_text(encoding="utf-8"))
    bad = [(i, r.errors[:1]) for i, (r, _) in enumerate(parsed) if not r.ok]
    assert not bad, f"yara fixtures fail to parse: {bad}"
    assert len(parsed) == len(yara)

    dataset_dir = DATA / "dataset"
    dataset_dir.mkdir(parents=True, exist_ok=True)
    small = build_small_dataset(snort, yara)
    (dataset_dir / "pairs-small.jsonl").write_text(
        "\n".join(json.dumps(r, sort_keys=True) for r in small) + "\n", encoding="utf-8"
    )
    evalset = build_eval_dataset(snort, yara)
    (dataset_dir / "pairs-eval.jsonl").write_text(
        "\n".join(json.dumps(r, sort_keys=True) for r in evalset) + "\n", encoding="utf-8"
    )

    print(f"{snort_path}: {len(snort)} rules")
    print(f"{yara_path}: {len(yara)} rules")
    print(f"{dataset_dir / 'pairs-small.jsonl'}: {len(small)} records")
    print(f"{dataset_dir / 'pairs-eval.jsonl'}: {len(evalset)} records")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
