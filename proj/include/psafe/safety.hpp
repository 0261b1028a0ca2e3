#pragma once

#include <random>

#include "psafe/forcing.hpp"
#include "psafe/grid.hpp"
#include "psafe/solver.hpp"

namespace psafe {

// Safety function over the whole grid (free-region solution stitched with the
// obstacle-interior solutions, zero on boundary cells), with precomputed
// derivative rasters and the previous-frame temporal difference.
struct SafetyFrame {
    ScalarField h;
    VectorField gradient;
    ScalarField hxx, hyy, hxy;
    double timestamp = 0.0;
    std::optional<ScalarField> dh_dt;
    SolveStats free_stats;
    std::optional<SolveStats> obstacle_stats;
};

// Continuous-space sample of a frame.
struct Probe {
    Vec2 position{};
    double h = 0.0;
    Vec2 gradient{};
    Mat2Sym hessian{};
    double dh_dt = 0.0;
};

namespace detail {

// Central differences inside, one-sided on the grid edge.
inline VectorField gradient_raster(const ScalarField& h) {
    VectorField g;
    g.x = ScalarField(h.nx, h.ny, h.resolution, h.origin);
    g.y = ScalarField(h.nx, h.ny, h.resolution, h.origin);
    const double inv_dx = 1.0 / h.resolution;
    for (int j = 0; j < h.ny; ++j) {
        for (int i = 0; i < h.nx; ++i) {
            double gx, gy;
            if (i == 0)
                gx = (h.at(1, j) - h.at(0, j)) * inv_dx;
            else if (i == h.nx - 1)
                gx = (h.at(i, j) - h.at(i - 1, j)) * inv_dx;
            else
                gx = (h.at(i + 1, j) - h.at(i - 1, j)) * 0.5 * inv_dx;
            if (j == 0)
                gy = (h.at(i, 1) - h.at(i, 0)) * inv_dx;
            else if (j == h.ny - 1)
                gy = (h.at(i, j) - h.at(i, j - 1)) * inv_dx;
            else
                gy = (h.at(i, j + 1) - h.at(i, j - 1)) * 0.5 * inv_dx;
            g.x.at(i, j) = gx;
            g.y.at(i, j) = gy;
        }
    }
    return g;
}

}  // namespace detail

// Builds the derivative rasters for a stitched field; shared by the Poisson
// pipeline and the signed-distance baseline.
inline SafetyFrame frame_from_field(ScalarField h, double t,
                                    const SafetyFrame* prev = nullptr) {
    SafetyFrame fr;
    fr.timestamp = t;
    fr.gradient = detail::gradient_raster(h);

    const int nx = h.nx, ny = h.ny;
    const double inv_dx2 = 1.0 / (h.resolution * h.resolution);
    fr.hxx = ScalarField(nx, ny, h.resolution, h.origin);
    fr.hyy = ScalarField(nx, ny, h.resolution, h.origin);
    fr.hxy = ScalarField(nx, ny, h.resolution, h.origin);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            int ci = std::clamp(i, 1, nx - 2);
            int cj = std::clamp(j, 1, ny - 2);
            fr.hxx.at(i, j) =
                (h.at(ci + 1, cj) - 2.0 * h.at(ci, cj) + h.at(ci - 1, cj)) * inv_dx2;
            fr.hyy.at(i, j) =
                (h.at(ci, cj + 1) - 2.0 * h.at(ci, cj) + h.at(ci, cj - 1)) * inv_dx2;
            fr.hxy.at(i, j) = (h.at(ci + 1, cj + 1) - h.at(ci + 1, cj - 1) -
                               h.at(ci - 1, cj + 1) + h.at(ci - 1, cj - 1)) *
                              0.25 * inv_dx2;
        }
    }

    if (prev) {
        if (t <= prev->timestamp)
            throw std::invalid_argument("frame timestamp must increase");
        if (!prev->h.same_shape(h))
            throw std::invalid_argument("previous frame shape mismatch");
        ScalarField dh(nx, ny, h.resolution, h.origin);
        double inv_dt = 1.0 / (t - prev->timestamp);
        for (size_t c = 0; c < dh.values.size(); ++c)
            dh.values[c] = (h.values[c] - prev->h.values[c]) * inv_dt;
        fr.dh_dt = std::move(dh);
    }
    fr.h = std::move(h);
    return fr;
}

// Solves the Dirichlet problem on the free region (forcing f_free) and on each
// obstacle interior (constant forcing f_obs > 0), pins boundary cells to zero
// and stitches the results. Warm-starts both solves from prev when given.
inline SafetyFrame assemble_frame(const DomainDecomposition& decomp,
                                  const ScalarField& f_free, double f_obs,
                                  const SolverParams& params, double t,
                                  const SafetyFrame* prev = nullptr) {
    if (f_free.nx != decomp.nx || f_free.ny != decomp.ny)
        throw std::invalid_argument("forcing shape mismatch");
    if (f_obs < 0) throw std::invalid_argument("obstacle forcing must be >= 0");
    const size_t n = decomp.labels.size();
    for (size_t c = 0; c < n; ++c)
        if (decomp.labels[c] == CellLabel::Free && f_free.values[c] > 0)
            throw std::invalid_argument("free-region forcing must be <= 0");
    if (prev && t <= prev->timestamp)
        throw std::invalid_argument("frame timestamp must increase");

    DirichletProblem fp;
    fp.nx = decomp.nx;
    fp.ny = decomp.ny;
    fp.resolution = decomp.resolution;
    fp.origin = decomp.origin;
    fp.solve_mask.assign(n, 0);
    fp.fixed_values.assign(n, 0.0);
    fp.forcing = f_free;
    for (size_t c = 0; c < n; ++c)
        if (decomp.labels[c] == CellLabel::Free) fp.solve_mask[c] = 1;
    if (prev) fp.initial_guess = prev->h;
    auto [h_free, free_stats] = sor_solve(fp, params);

    // obstacle interiors: disjoint components, one masked solve covers all
    DirichletProblem op = fp;
    op.initial_guess.reset();
    size_t interior_cells = 0;
    for (size_t c = 0; c < n; ++c) {
        bool interior = decomp.labels[c] == CellLabel::Obstacle;
        op.solve_mask[c] = interior ? 1 : 0;
        op.forcing.values[c] = interior ? f_obs : 0.0;
        if (interior) ++interior_cells;
    }
    std::optional<SolveStats> obstacle_stats;
    ScalarField h = std::move(h_free);
    if (interior_cells > 0) {
        if (prev) op.initial_guess = prev->h;
        auto [h_obs, ostats] = sor_solve(op, params);
        obstacle_stats = ostats;
        for (size_t c = 0; c < n; ++c)
            if (decomp.labels[c] == CellLabel::Obstacle) h.values[c] = h_obs.values[c];
    }

    SafetyFrame fr = frame_from_field(std::move(h), t, prev);
    fr.free_stats = free_stats;
    fr.obstacle_stats = obstacle_stats;
    return fr;
}

// Bilinear interpolation of every stored quantity at a world position.
inline Probe sample(const SafetyFrame& frame, Vec2 position) {
    Probe p;
    p.position = position;
    p.h = frame.h.sample(position);
    p.gradient = {frame.gradient.x.sample(position), frame.gradient.y.sample(position)};
    p.hessian = {frame.hxx.sample(position), frame.hxy.sample(position),
                 frame.hyy.sample(position)};
    p.dh_dt = frame.dh_dt ? frame.dh_dt->sample(position) : 0.0;
    return p;
}

namespace detail {

inline double clamped_sample(const ScalarField& f, Vec2 p) {
    double lo_x = f.origin.x, hi_x = f.origin.x + (f.nx - 1) * f.resolution;
    double lo_y = f.origin.y, hi_y = f.origin.y + (f.ny - 1) * f.resolution;
    return f.sample({std::clamp(p.x, lo_x, hi_x), std::clamp(p.y, lo_y, hi_y)});
}

}  // namespace detail

// Discrete outward flux of h through the boundary: per exposed face, the mean
// of the first- and second-order one-sided normal differences times the face
// length (the blend cancels most of the staircase-corner bias of the pure
// second-order stencil), falling back to first order in one-cell corridors.
inline double boundary_flux(const SafetyFrame& frame, const DomainDecomposition& decomp) {
    if (frame.h.nx != decomp.nx || frame.h.ny != decomp.ny)
        throw std::invalid_argument("frame shape mismatch");
    const double dx = decomp.resolution;
    double flux = 0.0;
    for (const BoundaryCell& bc : decomp.boundary) {
        for (int d = 0; d < 4; ++d) {
            int pi = bc.i + detail::kDi[d], pj = bc.j + detail::kDj[d];
            if (!decomp.in_bounds(pi, pj) || !decomp.is_free(pi, pj)) continue;
            double hb = frame.h.at(bc.i, bc.j);
            double hp = frame.h.at(pi, pj);
            int qi = 2 * pi - bc.i, qj = 2 * pj - bc.j;
            double deriv;
            if (decomp.in_bounds(qi, qj) && decomp.is_free(qi, qj)) {
                deriv = (5.0 * hb - 6.0 * hp + frame.h.at(qi, qj)) / (4.0 * dx);
            } else {
                deriv = (hb - hp) / dx;
            }
            flux += deriv * dx;
        }
    }
    return flux;
}

// Relative mismatch between the forcing volume integral and the boundary flux
// of the solved field (both equal by the divergence theorem in the continuum).
inline double check_divergence(const SafetyFrame& frame, const DomainDecomposition& decomp,
                               const ScalarField& f_free) {
    const double dx = decomp.resolution;
    double volume_integral = 0.0;
    for (size_t c = 0; c < decomp.labels.size(); ++c)
        if (decomp.labels[c] == CellLabel::Free) volume_integral += f_free.values[c];
    volume_integral *= dx * dx;
    if (volume_integral == 0.0) throw DomainError("zero forcing volume integral");
    double flux = boundary_flux(frame, decomp);
    return std::abs(volume_integral - flux) / std::abs(volume_integral);
}

struct PositivityReport {
    double min_free_h = std::numeric_limits<double>::infinity();
    double max_obstacle_h = -std::numeric_limits<double>::infinity();
    double max_boundary_outward_derivative = -std::numeric_limits<double>::infinity();
    size_t obstacle_interior_cells = 0;
};

// Report-only: minimum of h over free cells, maximum over obstacle interiors,
// and the worst one-sided outward derivative on the boundary. For a converged
// frame with strictly negative free forcing, the first is positive and the
// other two negative (the boundary derivative by Hopf's lemma).
inline PositivityReport check_positivity_and_hopf(const SafetyFrame& frame,
                                                  const DomainDecomposition& decomp) {
    PositivityReport rep;
    for (int j = 0; j < decomp.ny; ++j) {
        for (int i = 0; i < decomp.nx; ++i) {
            double v = frame.h.at(i, j);
            switch (decomp.label(i, j)) {
                case CellLabel::Free:
                    rep.min_free_h = std::min(rep.min_free_h, v);
                    break;
                case CellLabel::Obstacle:
                    rep.max_obstacle_h = std::max(rep.max_obstacle_h, v);
                    ++rep.obstacle_interior_cells;
                    break;
                case CellLabel::Boundary:
                    break;
            }
        }
    }
    const double dx = decomp.resolution;
    for (const BoundaryCell& bc : decomp.boundary) {
        Vec2 yb = decomp.world(bc.i, bc.j);
        double inside = detail::clamped_sample(frame.h, yb - dx * bc.normal);
        double deriv = (frame.h.at(bc.i, bc.j) - inside) / dx;
        rep.max_boundary_outward_derivative =
            std::max(rep.max_boundary_outward_derivative, deriv);
    }
    return rep;
}

// Discrete Dirichlet energy of a candidate field over the free region:
// sum of 1/2 ((h_q - h_p)/dx)^2 over faces touching a free cell, plus
// sum of h f over free cells, all scaled by dx^2. The five-point solution is
// its unique minimizer among fields agreeing outside the free region.
inline double dirichlet_energy(const ScalarField& h, const ScalarField& f_free,
                               const DomainDecomposition& decomp) {
    const double dx = decomp.resolution;
    double energy = 0.0;
    for (int j = 0; j < decomp.ny; ++j) {
        for (int i = 0; i < decomp.nx; ++i) {
            bool free_here = decomp.is_free(i, j);
            if (i + 1 < decomp.nx && (free_here || decomp.is_free(i + 1, j))) {
                double d = (h.at(i + 1, j) - h.at(i, j)) / dx;
                energy += 0.5 * d * d * dx * dx;
            }
            if (j + 1 < decomp.ny && (free_here || decomp.is_free(i, j + 1))) {
                double d = (h.at(i, j + 1) - h.at(i, j)) / dx;
                energy += 0.5 * d * d * dx * dx;
            }
            if (free_here) energy += h.at(i, j) * f_free.at(i, j) * dx * dx;
        }
    }
    return energy;
}

// Perturbs the solution with random interior bumps and returns the worst
// energy gap J[h + eps phi] - J[h]; at the discrete minimizer every gap is
// nonnegative up to solver tolerance.
inline double check_dirichlet_energy(const SafetyFrame& frame, const DomainDecomposition& decomp,
                                     const ScalarField& f_free, int trials,
                                     uint64_t seed = 0x9eb6d5a1c3f04b7dULL) {
    if (trials <= 0) throw std::invalid_argument("trials must be > 0");
    double j0 = dirichlet_energy(frame.h, f_free, decomp);

    double h_max = 0.0;
    for (size_t c = 0; c < frame.h.values.size(); ++c)
        if (decomp.labels[c] == CellLabel::Free)
            h_max = std::max(h_max, std::abs(frame.h.values[c]));
    if (h_max == 0.0) h_max = 1.0;

    const double eps_scale[4] = {1e-2, -1e-2, 1e-3, -1e-3};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);

    ScalarField cand = frame.h;
    double worst = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        double eps = eps_scale[t % 4] * h_max;
        cand.values = frame.h.values;
        for (size_t c = 0; c < cand.values.size(); ++c)
            if (decomp.labels[c] == CellLabel::Free) cand.values[c] += eps * uni(rng);
        worst = std::min(worst, dirichlet_energy(cand, f_free, decomp) - j0);
    }
    return worst;
}

}  // namespace psafe
