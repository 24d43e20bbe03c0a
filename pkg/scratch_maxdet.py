import numpy as np

from nnreach.assembly import DecisionLayout, LmiProblem, MaxdetObjective
from nnreach.solver.maxdet import solve_maxdet
from nnreach.solver.common import SolverOptions, SolveStatus

opts = SolverOptions()


def show(tag, sol, expect_obj=None, expect_y=None):
    print(f"--- {tag}")
    print("  status:", sol.status.value, "| obj:", sol.objective,
          "| iters:", sol.diagnostics.get("iterations"),
          "| stages:", sol.diagnostics.get("stages"),
          "| gap:", sol.diagnostics.get("gap_bound"),
          "| p1:", sol.diagnostics.get("phase1_status"),
          sol.diagnostics.get("phase1_margin"))
    if expect_obj is not None:
        err = abs(sol.objective - expect_obj)
        print(f"  obj err: {err:.3e}", "OK" if err < 1e-6 else "BAD")
    if expect_y is not None:
        err = np.max(np.abs(sol.y - np.asarray(expect_y)))
        print(f"  y err:   {err:.3e}", "OK" if err < 1e-5 else "BAD")


# 1. max logdet diag(a, b)  s.t. a <= 2, b <= 3  -> (2, 3), log 6
layout = DecisionLayout.build([("v", 2, "free")])
prob = LmiProblem(
    [], [], np.eye(2), np.array([2.0, 3.0]),
    MaxdetObjective(2, ((0, 0, 0), (1, 1, 1))), layout,
)
show("diag box", solve_maxdet(prob, opts), np.log(6.0), [2.0, 3.0])

# 2. max logdet A  s.t. A <= I, A sym 3x3  -> A = I, obj 0
pairs = [(p, q) for p in range(3) for q in range(p, 3)]
layout = DecisionLayout.build([("v", len(pairs), "free")])
fs = np.zeros((len(pairs), 3, 3))
for k, (p, q) in enumerate(pairs):
    fs[k, p, q] = 1.0
    fs[k, q, p] = 1.0
prob = LmiProblem(
    [-np.eye(3)], [fs], np.zeros((0, len(pairs))), np.zeros(0),
    MaxdetObjective(3, tuple((k, p, q) for k, (p, q) in enumerate(pairs))), layout,
)
y_exp = np.array([1.0, 0, 0, 1.0, 0, 1.0])
show("cap at identity", solve_maxdet(prob, opts), 0.0, y_exp)

# 3. min-volume ellipse {x : |Ax+b| <= 1} covering corners of [-1,1]x[-2,2]
w1, w2 = 1.0, 2.0
corners = [(s1 * w1, s2 * w2) for s1 in (-1, 1) for s2 in (-1, 1)]
apairs = [(0, 0), (0, 1), (1, 1)]
nv = 5  # 3 shape + 2 center
f0 = []
fs_all = []
for (cx, cy) in corners:
    xc = np.array([cx, cy])
    f0.append(-np.diag([1.0, 1.0, 1.0]))
    f = np.zeros((nv, 3, 3))
    for k, (p, q) in enumerate(apairs):
        e = np.zeros(2)
        e[p] += xc[q]
        if p != q:
            e[q] += xc[p]
        f[k, :2, 2] = -e
        f[k, 2, :2] = -e
    for r in range(2):
        f[3 + r, r, 2] = -1.0
        f[3 + r, 2, r] = -1.0
    fs_all.append(f)
layout = DecisionLayout.build([("shape", 3, "free"), ("center", 2, "free")])
prob = LmiProblem(
    f0, fs_all, np.zeros((0, nv)), np.zeros(0),
    MaxdetObjective(2, ((0, 0, 0), (1, 0, 1), (2, 1, 1))), layout,
)
a_exp = np.array([1 / (np.sqrt(2) * w1), 0.0, 1 / (np.sqrt(2) * w2), 0.0, 0.0])
show("rect ellipse", solve_maxdet(prob, opts), -np.log(2 * w1 * w2), a_exp)

# 4. unbounded: max logdet diag(a, b) s.t. a <= 2 only
layout = DecisionLayout.build([("v", 2, "free")])
prob = LmiProblem(
    [], [], np.array([[1.0, 0.0]]), np.array([2.0]),
    MaxdetObjective(2, ((0, 0, 0), (1, 1, 1))), layout,
)
sol = solve_maxdet(prob, opts)
show("unbounded", sol)
print("  expect UNBOUNDED:", "OK" if sol.status == SolveStatus.UNBOUNDED_OBJECTIVE else "BAD")

# 5. infeasible: a <= 2 and a >= 3
layout = DecisionLayout.build([("v", 1, "free")])
prob = LmiProblem(
    [], [], np.array([[1.0], [-1.0]]), np.array([2.0, -3.0]),
    MaxdetObjective(1, ((0, 0, 0),)), layout,
)
sol = solve_maxdet(prob, opts)
show("infeasible", sol)
print("  expect INFEASIBLE:", "OK" if sol.status == SolveStatus.INFEASIBLE else "BAD")

# 6. degenerate template: A has an all-zero row/col -> never PD
layout = DecisionLayout.build([("v", 1, "free")])
prob = LmiProblem(
    [], [], np.array([[1.0]]), np.array([2.0]),
    MaxdetObjective(2, ((0, 0, 0),)), layout,
)
sol = solve_maxdet(prob, opts)
show("degenerate A", sol)
print("  expect INFEASIBLE:", "OK" if sol.status == SolveStatus.INFEASIBLE else "BAD")
