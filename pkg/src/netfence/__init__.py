"""netfence: security policies from invariants, and back from iptables rulesets.

Two pipelines meet in the middle at the policy-graph abstraction:

* synthesize: security invariants -> policy graph -> stateful policy ->
  iptables ruleset
* analyze: iptables-save dump -> unfolded rules -> simple firewall ->
  IP space partition and per-service access matrices, plus spoofing
  certification
"""

__version__ = "0.1.0"
