"""Design a protection level for a two-node cascade under a budget, then re-check the result.

    python demos/design_two_nodes.py
"""
from posnet import DesignFamily, check_certificate, solve_design
from posnet.gpsolve import Monomial, Posynomial, var


def main():
    r1 = var("r1")
    # node 2 drives node 1 with gain 0.8 when unprotected (probability r1), 0 otherwise
    template = {"N": 2, "n": 1, "mode": "a1", "blocks": [
        {"i": 1, "j": 1, "support": [{"w": 1, "m": [[-1.0]]}]},
        {"i": 2, "j": 2, "support": [{"w": 1, "m": [[-1.0]]}]},
        {"i": 1, "j": 2, "support": [{"w": [{"c": 1.0, "e": {"r1": 1}}], "m": [[0.8]]},
                                     {"w": [{"c": 1.0, "e": {}}, {"c": -1.0, "e": {"r1": 1}}], "m": [[0.0]]}]}]}
    fam = DesignFamily(N=2, n=1, mode="a1", r_names=["r1"], mean_plus={(0, 1): 0.8 * r1},
                       mean_minus=[Monomial(1.0), Monomial(1.0)], eta={(0, 1): Posynomial.of(0.8)},
                       phi={(0, 1): {(0, 0): Posynomial.of(0.64 * r1)}},
                       psi={(0, 1): {(0, 0): Posynomial.of(0.64 * r1)}},
                       cost=Posynomial.of(r1 ** -1), cost_bound=4.0, template=template)
    res = solve_design(fam, eps=0.5)
    print(f"r1* = {res.r_star['r1']:.6f}  lambda* = {res.lambda_star:.6f}  eps = {res.eps_star:.4g}")
    model = fam.model_at(res.r_star)
    print("re-check:", check_certificate(model, res.certificate.witness).feasible)


if __name__ == "__main__":
    main()
