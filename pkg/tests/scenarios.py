"""Shared scenario fixtures: the factory network, the cabin network and the
university department network used across the test suite."""

from netfence.policy import PolicyGraph
from netfence.templates import (
    BlpAttr,
    DomAttr,
    Master,
    TEMPLATES,
)

FACTORY_HOSTS = [
    "Statistics",
    "SensorSink",
    "PresenceSensor",
    "Webcam",
    "TempSensor",
    "FireSensor",
    "MissionControl1",
    "MissionControl2",
    "Watchdog",
    "Robot1",
    "Robot2",
    "AdminPc",
    "INET",
]

FACTORY_EDGES = [
    ("PresenceSensor", "SensorSink"),
    ("Webcam", "SensorSink"),
    ("TempSensor", "SensorSink"),
    ("FireSensor", "SensorSink"),
    ("SensorSink", "Statistics"),
    ("MissionControl1", "Robot1"),
    ("MissionControl1", "Robot2"),
    ("MissionControl2", "Robot2"),
    ("AdminPc", "MissionControl2"),
    ("AdminPc", "MissionControl1"),
    ("Watchdog", "Robot1"),
    ("Watchdog", "Robot2"),
]


def factory_policy():
    return PolicyGraph.of(FACTORY_HOSTS, FACTORY_EDGES)


def _dom(path, trust=0):
    return DomAttr(tuple(path.split(".")), trust)


def factory_invariants(repaired=True):
    """The ten factory invariants; `repaired` selects the fixed versions of
    the trade-secret BLP and the sink pool (the originals make most
    production flows non-upgradable to stateful)."""
    t = TEMPLATES
    sensors_blp = t["BLPBasic"].instantiate(
        {"Statistics": 3, "SensorSink": 3, "PresenceSensor": 2, "Webcam": 3}
    )
    trade_secrets = {
        "MissionControl1": BlpAttr(1),
        "MissionControl2": BlpAttr(2),
        "Robot1": BlpAttr(1),
        "Robot2": BlpAttr(2),
    }
    if repaired:
        trade_secrets["Watchdog"] = BlpAttr(1, trust=True)
        trade_secrets["AdminPc"] = BlpAttr(1, trust=True)
    trade_blp = t["BLPTrusted"].instantiate(trade_secrets)
    privacy_blp = t["BLPTrusted"].instantiate(
        {
            "Statistics": BlpAttr(3),
            "SensorSink": BlpAttr(2, trust=True),
            "PresenceSensor": BlpAttr(2),
            "Webcam": BlpAttr(3),
        }
    )
    robot2_acl = t["CommPartners"].instantiate(
        {
            "Robot2": Master(("Robot1", "MissionControl1", "MissionControl2", "Watchdog")),
            "MissionControl1": "Care",
            "MissionControl2": "Care",
            "Watchdog": "Care",
        }
    )
    # leaf-first domain paths; the watchdog supervises from a side domain
    # with one level of trust
    hierarchy = t["DomainHierarchy"].instantiate(
        {
            "MissionControl1": _dom("ControlDevices.ControlTerminal"),
            "MissionControl2": _dom("ControlDevices.ControlTerminal"),
            "Watchdog": _dom("Supervision.ControlTerminal", trust=1),
            "Robot1": _dom("Robots.ControlDevices.ControlTerminal"),
            "Robot2": _dom("Robots.ControlDevices.ControlTerminal"),
            "AdminPc": _dom("ControlTerminal"),
        }
    )
    sensor_pep = t["PolEnforcePoint"].instantiate(
        {
            "SensorSink": "PolEnforcePointIN",
            "PresenceSensor": "DomainMember",
            "Webcam": "DomainMember",
            "TempSensor": "DomainMember",
            "FireSensor": "DomainMember",
        }
    )
    if repaired:
        pool = {
            h: "SinkPool"
            for h in (
                "AdminPc",
                "MissionControl1",
                "MissionControl2",
                "Robot1",
                "Robot2",
                "Watchdog",
            )
        }
    else:
        pool = {
            "MissionControl1": "SinkPool",
            "MissionControl2": "SinkPool",
            "Robot1": "Sink",
            "Robot2": "Sink",
        }
    sinks = t["Sink"].instantiate(pool)
    subnets = t["Subnets"].instantiate(
        {
            "Statistics": ("Subnet", 1),
            "SensorSink": ("Subnet", 1),
            "PresenceSensor": ("Subnet", 1),
            "Webcam": ("Subnet", 1),
            "TempSensor": ("Subnet", 1),
            "FireSensor": ("Subnet", 1),
            "AdminPc": ("Subnet", 4),
        }
    )
    stats_gw = t["SubnetsInGW"].instantiate(
        {"Statistics": "Member", "SensorSink": "InboundGateway"}
    )
    return [
        sensors_blp,
        trade_blp,
        privacy_blp,
        robot2_acl,
        hierarchy,
        sensor_pep,
        sinks,
        subnets,
        stats_gw,
    ]


def factory_noninterference():
    return TEMPLATES["NonInterference"].instantiate(
        {"FireSensor": "Interfering", "AdminPc": "Interfering"}
        | {
            h: "Unrelated"
            for h in FACTORY_HOSTS
            if h not in ("FireSensor", "AdminPc")
        }
    )


FACTORY_IPS = {
    "Statistics": "10.0.0.1",
    "SensorSink": "10.0.0.2",
    "PresenceSensor": "10.0.1.1",
    "Webcam": "10.0.1.2",
    "TempSensor": "10.0.1.3",
    "FireSensor": "10.0.1.4",
    "MissionControl1": "10.8.1.1",
    "MissionControl2": "10.8.1.2",
    "Watchdog": "10.8.8.1",
    "Robot1": "10.8.2.1",
    "Robot2": "10.8.2.2",
    "AdminPc": "10.8.0.1",
}

# expected stateful flows of the repaired factory scenario
FACTORY_STATEFUL = {
    ("Webcam", "SensorSink"),
    ("SensorSink", "Statistics"),
    ("MissionControl1", "Robot1"),
    ("MissionControl2", "Robot2"),
    ("AdminPc", "MissionControl1"),
    ("AdminPc", "MissionControl2"),
    ("Watchdog", "Robot1"),
    ("Watchdog", "Robot2"),
}


# -- cabin data network -------------------------------------------------------

CABIN_HOSTS = ["CC", "C1", "C2", "IFEsrv", "IFE1", "IFE2", "SAT", "Wifi", "P1", "P2"]

CABIN_EDGES = [
    ("CC", "C1"), ("C1", "CC"),
    ("CC", "C2"), ("C2", "CC"),
    ("C1", "C2"), ("C2", "C1"),
    ("CC", "IFEsrv"),
    ("IFEsrv", "IFE1"), ("IFE1", "IFEsrv"),
    ("IFEsrv", "IFE2"), ("IFE2", "IFEsrv"),
    ("IFEsrv", "SAT"),
    ("Wifi", "SAT"),
    ("Wifi", "P1"), ("P1", "Wifi"),
    ("Wifi", "P2"), ("P2", "Wifi"),
    ("P1", "P2"), ("P2", "P1"),
]


def cabin_policy():
    return PolicyGraph.of(CABIN_HOSTS, CABIN_EDGES)


def cabin_invariants():
    t = TEMPLATES
    hierarchy = t["DomainHierarchy"].instantiate(
        {
            "CC": DomAttr(("crew", "aircraft"), 1),
            "C1": DomAttr(("crew", "aircraft"), 0),
            "C2": DomAttr(("crew", "aircraft"), 0),
            "IFEsrv": DomAttr(("entertain", "aircraft"), 0),
            "IFE1": DomAttr(("entertain", "aircraft"), 0),
            "IFE2": DomAttr(("entertain", "aircraft"), 0),
            "SAT": DomAttr(("INET", "entertain", "aircraft"), 0),
            "Wifi": DomAttr(("POD", "entertain", "aircraft"), 1),
            "P1": DomAttr(("POD", "entertain", "aircraft"), 0),
            "P2": DomAttr(("POD", "entertain", "aircraft"), 0),
        }
    )
    pep = t["PolEnforcePoint"].instantiate(
        {"IFEsrv": "PolEnforcePointIN", "IFE1": "DomainMember", "IFE2": "DomainMember"}
    )
    blp = t["BLPTrusted"].instantiate(
        {
            "CC": BlpAttr(2),
            "C1": BlpAttr(2),
            "C2": BlpAttr(2),
            "IFE1": BlpAttr(1),
            "IFE2": BlpAttr(1),
            "IFEsrv": BlpAttr(0, trust=True),
        }
    )
    return [hierarchy, pep, blp]


CABIN_STATEFUL = {("CC", "IFEsrv"), ("IFEsrv", "SAT"), ("Wifi", "SAT")}


# -- university department network ---------------------------------------------

UNI_HOSTS = ["students", "employees", "printer", "fileSrv", "webSrv", "internet"]

UNI_EDGES = [
    ("students", "employees"), ("employees", "students"),
    ("students", "printer"),
    ("employees", "printer"),
    ("employees", "fileSrv"),
    ("students", "webSrv"),
    ("employees", "webSrv"),
    ("students", "internet"),
    ("employees", "internet"),
]


def university_policy():
    return PolicyGraph.of(UNI_HOSTS, UNI_EDGES)


def university_invariants():
    t = TEMPLATES
    printer_sink = t["Sink"].instantiate({"printer": "Sink"})
    file_blp = t["BLPTrusted"].instantiate(
        {"fileSrv": BlpAttr(1), "employees": BlpAttr(0, trust=True)}
    )
    printer_acl = t["CommPartners"].instantiate(
        {
            "printer": Master(("students", "employees")),
            "students": "Care",
            "employees": "Care",
        }
    )
    file_acl = t["CommPartners"].instantiate(
        {"fileSrv": Master(("employees",)), "employees": "Care"}
    )
    return [printer_sink, file_blp, printer_acl, file_acl]
