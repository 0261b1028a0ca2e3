#pragma once

#include <map>

#include "psafe/grid.hpp"
#include "psafe/solver.hpp"

namespace psafe {

// Desired boundary flux: a negative default plus optional per-obstacle
// overrides keyed by occupied-component index.
struct BoundaryFluxSpec {
    double default_flux = -1.0;
    std::map<int, double> overrides;

    double flux_for(int obstacle) const {
        auto it = overrides.find(obstacle);
        return it != overrides.end() ? it->second : default_flux;
    }

    void validate() const {
        if (default_flux >= 0) throw std::invalid_argument("boundary flux must be < 0");
        for (const auto& [k, v] : overrides) {
            if (v >= 0)
                throw std::invalid_argument("boundary flux override for obstacle " +
                                            std::to_string(k) + " must be < 0");
        }
    }
};

// f = -(dist / max dist)^alpha on free cells; zero elsewhere. Scale-free in
// the distance field, -1 at the distance argmax, strictly negative wherever
// dist > 0.
inline ScalarField holder_forcing(const ScalarField& dist, const DomainDecomposition& decomp,
                                  double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("holder exponent must be in (0, 1)");
    if (dist.nx != decomp.nx || dist.ny != decomp.ny)
        throw std::invalid_argument("distance field shape mismatch");

    double dmax = 0.0;
    for (size_t c = 0; c < dist.values.size(); ++c)
        if (decomp.labels[c] == CellLabel::Free) dmax = std::max(dmax, dist.values[c]);
    if (dmax <= 0) throw std::invalid_argument("distance field has no positive values");

    ScalarField f(decomp.nx, decomp.ny, decomp.resolution, decomp.origin);
    for (size_t c = 0; c < f.values.size(); ++c)
        if (decomp.labels[c] == CellLabel::Free)
            f.values[c] = -std::pow(dist.values[c] / dmax, alpha);
    return f;
}

// Constant forcing realizing a desired average boundary flux b_bar via the
// divergence theorem: f = b_bar * perimeter / free area.
inline double average_flux_forcing(const DomainDecomposition& decomp, double b_bar) {
    if (b_bar >= 0) throw std::invalid_argument("average flux must be < 0");
    if (decomp.perimeter <= 0 || decomp.free_area <= 0)
        throw DomainError("degenerate domain: zero perimeter or area");
    return b_bar * decomp.perimeter / decomp.free_area;
}

namespace detail {

inline DirichletProblem laplace_component_problem(const DomainDecomposition& dd,
                                                  const BoundaryFluxSpec& spec, int axis) {
    DirichletProblem p;
    p.nx = dd.nx;
    p.ny = dd.ny;
    p.resolution = dd.resolution;
    p.origin = dd.origin;
    const size_t n = dd.labels.size();
    p.solve_mask.assign(n, 0);
    p.fixed_values.assign(n, 0.0);
    p.forcing = ScalarField(dd.nx, dd.ny, dd.resolution, dd.origin);
    for (size_t c = 0; c < n; ++c) {
        if (dd.labels[c] == CellLabel::Free) {
            p.solve_mask[c] = 1;
        } else if (dd.labels[c] == CellLabel::Boundary) {
            const BoundaryCell& bc = dd.boundary[dd.boundary_index[c]];
            double b = spec.flux_for(bc.obstacle);
            p.fixed_values[c] = b * (axis == 0 ? bc.normal.x : bc.normal.y);
        }
    }
    return p;
}

}  // namespace detail

// Guidance field: each component solves Laplace's equation on the free region
// with Dirichlet value b(y) * n_i(y) on boundary cells.
inline VectorField solve_guidance_field(const DomainDecomposition& decomp,
                                        const BoundaryFluxSpec& spec,
                                        const SolverParams& params = {},
                                        const VectorField* warm = nullptr) {
    spec.validate();
    VectorField v;
    for (int axis = 0; axis < 2; ++axis) {
        DirichletProblem p = detail::laplace_component_problem(decomp, spec, axis);
        if (warm) p.initial_guess = axis == 0 ? warm->x : warm->y;
        auto [field, stats] = sor_solve(p, params);
        (axis == 0 ? v.x : v.y) = std::move(field);
    }
    return v;
}

// Divergence of a vector field on free cells: central differences in the free
// interior, one-sided differences beside boundary cells, zero where no free
// neighbor exists along an axis.
inline ScalarField divergence(const VectorField& v, const DomainDecomposition& decomp) {
    if (!v.valid() || v.x.nx != decomp.nx || v.x.ny != decomp.ny)
        throw std::invalid_argument("vector field shape mismatch");

    ScalarField div(decomp.nx, decomp.ny, decomp.resolution, decomp.origin);
    const double inv_dx = 1.0 / decomp.resolution;
    for (int j = 0; j < decomp.ny; ++j) {
        for (int i = 0; i < decomp.nx; ++i) {
            if (!decomp.is_free(i, j)) continue;
            bool e = decomp.is_free(i + 1, j), w = decomp.is_free(i - 1, j);
            bool nn = decomp.is_free(i, j + 1), s = decomp.is_free(i, j - 1);

            double dvx;
            if (e && w)
                dvx = (v.x.at(i + 1, j) - v.x.at(i - 1, j)) * 0.5 * inv_dx;
            else if (e)
                dvx = (v.x.at(i + 1, j) - v.x.at(i, j)) * inv_dx;
            else if (w)
                dvx = (v.x.at(i, j) - v.x.at(i - 1, j)) * inv_dx;
            else
                dvx = 0.0;

            double dvy;
            if (nn && s)
                dvy = (v.y.at(i, j + 1) - v.y.at(i, j - 1)) * 0.5 * inv_dx;
            else if (nn)
                dvy = (v.y.at(i, j + 1) - v.y.at(i, j)) * inv_dx;
            else if (s)
                dvy = (v.y.at(i, j) - v.y.at(i, j - 1)) * inv_dx;
            else
                dvy = 0.0;

            div.at(i, j) = dvx + dvy;
        }
    }
    return div;
}

// Smooth negative forcing from a divergence field:
// f = -(1/beta) ln(1 + exp(-beta d)). Stable for large |beta d| and clamped
// away from zero so f stays strictly negative.
inline double softplus_forcing_value(double d, double beta) {
    double x = -beta * d;
    double sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    double f = -sp / beta;
    return std::min(f, -1e-300);
}

inline ScalarField softplus_forcing(const ScalarField& div, const DomainDecomposition& decomp,
                                    double beta) {
    if (beta <= 0) throw std::invalid_argument("softplus beta must be > 0");
    if (div.nx != decomp.nx || div.ny != decomp.ny)
        throw std::invalid_argument("divergence field shape mismatch");
    ScalarField f(decomp.nx, decomp.ny, decomp.resolution, decomp.origin);
    for (size_t c = 0; c < f.values.size(); ++c)
        if (decomp.labels[c] == CellLabel::Free)
            f.values[c] = softplus_forcing_value(div.values[c], beta);
    return f;
}

}  // namespace psafe
