#pragma once

#include "psafe/safety.hpp"

namespace psafe {

struct FilterParams {
    double gamma = 1.0;  // class-K slope (1/s)
    double sigma = 1.0;  // auxiliary controller aggressiveness
    double mu1 = 1.0;    // backstepping velocity-error weight
    bool use_dhdt = false;

    void validate() const {
        if (gamma <= 0 || sigma <= 0 || mu1 <= 0)
            throw std::invalid_argument("filter parameters must be > 0");
    }
};

struct FilterResult {
    Vec2 command{};      // velocity (r=1) or acceleration (r=2)
    double slack = 0.0;  // constraint value at the command
    bool active = false;
    double h = 0.0;
    double h_b = 0.0;  // equals h for r=1
};

namespace detail {

// lambda(a, b) of the auxiliary controller and its partials. Branches chosen
// to avoid cancellation: for a >= 0, -a + sqrt(a^2 + sigma b^2) is rewritten
// through its conjugate.
struct SontagLambda {
    double value = 0.0;
    double da = 0.0;
    double db = 0.0;
};

inline SontagLambda sontag_lambda(double a, double b, double sigma) {
    SontagLambda l;
    if (b == 0.0) return l;
    double s = std::sqrt(a * a + sigma * b * b);
    if (a >= 0.0) {
        double denom = s + a;
        l.value = sigma * b / (2.0 * denom);
        l.da = -sigma * b / (2.0 * s * denom);
        l.db = sigma * a / (2.0 * s * denom);
    } else {
        l.value = (-a + s) / (2.0 * b);
        l.da = (a / s - 1.0) / (2.0 * b);
        l.db = (sigma * b * b / s + a - s) / (2.0 * b * b);
    }
    return l;
}

}  // namespace detail

// Auxiliary velocity controller k1 = lambda(gamma h, |Dh|^2) Dh. Satisfies
// Dh . k1 > -gamma h whenever Dh != 0, and vanishes with the gradient.
inline Vec2 sontag_k1(const Probe& probe, const FilterParams& params) {
    params.validate();
    double a = params.gamma * probe.h;
    double b = probe.gradient.squared_norm();
    return detail::sontag_lambda(a, b, params.sigma).value * probe.gradient;
}

// Single-integrator safety filter: closed-form projection of the nominal
// velocity onto dh/dt + Dh . u >= -gamma h (the temporal term enters when
// use_dhdt is set).
inline FilterResult filter_r1(const Probe& probe, Vec2 k_nom, const FilterParams& params) {
    params.validate();
    double dhdt = params.use_dhdt ? probe.dh_dt : 0.0;
    double b = probe.gradient.squared_norm();

    FilterResult res;
    res.h = probe.h;
    res.h_b = probe.h;
    double g_nom = dhdt + probe.gradient.dot(k_nom) + params.gamma * probe.h;
    if (g_nom >= 0.0) {
        res.command = k_nom;
        res.slack = g_nom;
        return res;
    }
    if (b == 0.0)
        throw InfeasibleError("safety constraint infeasible: zero gradient and " +
                              detail::format_double(g_nom) + " < 0");
    res.command = k_nom - (g_nom / b) * probe.gradient;
    res.slack = dhdt + probe.gradient.dot(res.command) + params.gamma * probe.h;
    res.active = true;
    return res;
}

// Backstepping quantities for relative degree 2.
struct BackstepEval {
    double h_b = 0.0;
    Vec2 k1{};
    Vec2 phi1{};      // dk1/dy . ydot
    Vec2 grad_y{};    // dh_b / dy
    Vec2 grad_ydot{};  // dh_b / dydot
};

// h_B = h - 1/(2 mu1) |ydot - k1|^2 with the analytic chain rule for
// dk1/dy = lambda D2h + Dh (lambda_a gamma Dh + 2 lambda_b D2h Dh)^T.
inline BackstepEval backstep_eval(const Probe& probe, Vec2 ydot, const FilterParams& params) {
    params.validate();
    double a = params.gamma * probe.h;
    double b = probe.gradient.squared_norm();
    auto lam = detail::sontag_lambda(a, b, params.sigma);

    const Vec2 dh = probe.gradient;
    const Mat2Sym& hess = probe.hessian;

    BackstepEval ev;
    ev.k1 = lam.value * dh;

    Vec2 hess_dh = hess.mul(dh);
    Vec2 w = lam.da * params.gamma * dh + 2.0 * lam.db * hess_dh;
    // dk1/dy acting on a vector u: lam * H u + Dh (w . u)
    auto dk1 = [&](Vec2 u) { return lam.value * hess.mul(u) + w.dot(u) * dh; };
    ev.phi1 = dk1(ydot);

    Vec2 e = ydot - ev.k1;
    ev.h_b = probe.h - 0.5 / params.mu1 * e.squared_norm();
    // (dk1/dy)^T e = lam * H e + w (Dh . e)
    Vec2 dk1_t_e = lam.value * hess.mul(e) + dh.dot(e) * w;
    ev.grad_y = dh + (1.0 / params.mu1) * dk1_t_e;
    ev.grad_ydot = (-1.0 / params.mu1) * e;
    return ev;
}

// Double-integrator safety filter: projects the nominal acceleration onto
// hdot_B >= -gamma h_B, where
// hdot_B = Dh . ydot - (1/mu1) (ydot - k1)^T (w - phi1).
inline FilterResult filter_r2(const Probe& probe, Vec2 ydot, Vec2 w_nom,
                              const FilterParams& params) {
    BackstepEval ev = backstep_eval(probe, ydot, params);
    Vec2 e = ydot - ev.k1;
    Vec2 c = (-1.0 / params.mu1) * e;
    double d = probe.gradient.dot(ydot) + (1.0 / params.mu1) * e.dot(ev.phi1) +
               params.gamma * ev.h_b;

    FilterResult res;
    res.h = probe.h;
    res.h_b = ev.h_b;
    double cc = c.squared_norm();
    double g_nom = c.dot(w_nom) + d;
    if (cc == 0.0) {
        // ydot = k1: the constraint is constant in w and holds on the safe set
        if (g_nom < 0.0)
            throw InfeasibleError("backstepping constraint infeasible at ydot = k1");
        res.command = w_nom;
        res.slack = g_nom;
        return res;
    }
    if (g_nom >= 0.0) {
        res.command = w_nom;
        res.slack = g_nom;
        return res;
    }
    res.command = w_nom - (g_nom / cc) * c;
    res.slack = c.dot(res.command) + d;
    res.active = true;
    return res;
}

}  // namespace psafe
