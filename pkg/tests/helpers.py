"""Small case builders shared by the tests."""

from gridems.netmodel import parse_case

RING4 = """
[meta]
name ring4
base_mva 100
[bus]
1 138 1 1.0
2 138 0 1.0
3 138 0 1.0
4 138 0 1.0
[branch]
1 1 2 0.1 0 200 240 1 0 0
2 2 3 0.1 0 200 240 1 0 0
3 3 4 0.1 0 200 240 1 0 0
4 4 1 0.1 0 200 240 1 0 0
[gen]
1 1 0 200 60 10 10 0 1
[gencost]
1 block 0 10 200 10
[load]
1 3 60 60 positive 0
"""


def triangle_dc(x=(0.1, 0.1, 0.1), alpha=(0.0, 0.0, 0.0), r=0.0):
    """Equal-reactance style triangle, reference at bus 2, lossless unless r given."""
    rows = "\n".join(f"{i} {f} {t} {x[i - 1]} {alpha[i - 1]} 150 180 1 {r} 0"
                     for i, (f, t) in enumerate([(1, 2), (2, 3), (1, 3)], 1))
    return parse_case(f"""
[meta]
name tri
base_mva 100
[bus]
1 138 0 1.0
2 138 1 1.0
3 138 0 1.0
[branch]
{rows}
[gen]
1 1 0 200 100 10 10 0 1
2 2 0 200 0 10 10 0 1
[gencost]
1 block 0 10 200 10
2 block 0 20 200 20
[load]
1 3 100 100 positive 0
""")


def ring4():
    return parse_case(RING4)
