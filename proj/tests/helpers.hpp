#pragma once

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "psafe/grid.hpp"
#include "psafe/solver.hpp"

namespace testutil {

// Builds a grid from ascii art: '#' occupied, anything else free.
// rows[j][i] maps to cell (i, j).
inline psafe::OccupancyGrid make_grid(const std::vector<std::string>& rows,
                                      double resolution = 1.0, psafe::Vec2 origin = {}) {
    psafe::OccupancyGrid g;
    g.ny = static_cast<int>(rows.size());
    g.nx = static_cast<int>(rows.front().size());
    g.resolution = resolution;
    g.origin = origin;
    g.cells.assign(static_cast<size_t>(g.nx) * g.ny, 0);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
            if (rows[j][i] == '#') g.cells[g.idx(i, j)] = 1;
    return g;
}

// Empty room: free interior, occupied border ring.
inline psafe::OccupancyGrid empty_room(int n, double resolution = 1.0) {
    psafe::OccupancyGrid g;
    g.nx = g.ny = n;
    g.resolution = resolution;
    g.cells.assign(static_cast<size_t>(n) * n, 0);
    for (int i = 0; i < n; ++i) {
        g.cells[g.idx(i, 0)] = g.cells[g.idx(i, n - 1)] = 1;
        g.cells[g.idx(0, i)] = g.cells[g.idx(n - 1, i)] = 1;
    }
    return g;
}

inline std::filesystem::path temp_dir() {
    static std::mt19937_64 rng(std::random_device{}());
    auto dir = std::filesystem::temp_directory_path() /
               ("psafe_test_" + std::to_string(rng()));
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    os << content;
}

// P2 with value 255 free / 0 occupied from the same ascii art as make_grid.
inline std::string pgm_p2(const std::vector<std::string>& rows) {
    std::string s = "P2\n# test map\n";
    s += std::to_string(rows.front().size()) + " " + std::to_string(rows.size()) + "\n255\n";
    for (const auto& r : rows) {
        for (char c : r) s += (c == '#' ? "0 " : "255 ");
        s += "\n";
    }
    return s;
}

inline void write_pgm(const psafe::OccupancyGrid& g, const std::filesystem::path& path) {
    std::ofstream os(path);
    os << "P2\n" << g.nx << " " << g.ny << "\n255\n";
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) os << (g.occupied(i, j) ? "0 " : "255 ");
        os << "\n";
    }
}

inline std::string pgm_p5(const std::vector<std::string>& rows) {
    std::string s = "P5\n";
    s += std::to_string(rows.front().size()) + " " + std::to_string(rows.size()) + "\n255\n";
    for (const auto& r : rows)
        for (char c : r) s += static_cast<char>(c == '#' ? 0 : 255);
    return s;
}

// Dirichlet problem on a rasterized disk of radius R centered on a grid node:
// nodes strictly inside R are unknowns, everything else is pinned to zero.
// Returns the problem and the center node index.
inline std::pair<psafe::DirichletProblem, std::pair<int, int>> disk_problem(double radius,
                                                                            double dx,
                                                                            double forcing) {
    int c = static_cast<int>(std::ceil(radius / dx)) + 2;
    int n = 2 * c + 1;
    psafe::DirichletProblem p;
    p.nx = p.ny = n;
    p.resolution = dx;
    p.origin = {-c * dx, -c * dx};
    p.solve_mask.assign(static_cast<size_t>(n) * n, 0);
    p.fixed_values.assign(static_cast<size_t>(n) * n, 0.0);
    p.forcing = psafe::ScalarField(n, n, dx, p.origin, forcing);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double x = (i - c) * dx, y = (j - c) * dx;
            if (x * x + y * y < radius * radius) p.solve_mask[p.idx(i, j)] = 1;
        }
    return {std::move(p), {c, c}};
}

// Unit-square Dirichlet problem with nodes at spacing 1/(n-1); the border
// nodes are pinned to zero.
inline psafe::DirichletProblem square_problem(int n, double forcing) {
    double dx = 1.0 / (n - 1);
    psafe::DirichletProblem p;
    p.nx = p.ny = n;
    p.resolution = dx;
    p.solve_mask.assign(static_cast<size_t>(n) * n, 0);
    p.fixed_values.assign(static_cast<size_t>(n) * n, 0.0);
    p.forcing = psafe::ScalarField(n, n, dx, {}, forcing);
    for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) p.solve_mask[p.idx(i, j)] = 1;
    return p;
}

// Fourier-series value of the unit-square torsion solution (dh = -1, h = 0 on
// the border) at the center: 1/8 - (4/pi^3) sum_{k odd} sin(k pi/2)/(k^3 cosh(k pi/2)).
inline double torsion_center_value() {
    double pi = std::numbers::pi;
    double sum = 0.0;
    for (int k = 1; k < 200; k += 2) {
        double sk = (k % 4 == 1) ? 1.0 : -1.0;
        sum += sk / (k * k * k * std::cosh(k * pi / 2.0));
    }
    return 0.125 - 4.0 / (pi * pi * pi) * sum;
}

// Circular room rasterized on a grid node at the center: free strictly inside
// the radius, occupied elsewhere.
inline psafe::OccupancyGrid disk_room(double radius, double dx) {
    int c = static_cast<int>(std::ceil(radius / dx)) + 2;
    int n = 2 * c + 1;
    psafe::OccupancyGrid g;
    g.nx = g.ny = n;
    g.resolution = dx;
    g.origin = {-c * dx, -c * dx};
    g.cells.assign(static_cast<size_t>(n) * n, 1);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            double x = (i - c) * dx, y = (j - c) * dx;
            if (x * x + y * y < radius * radius) g.cells[g.idx(i, j)] = 0;
        }
    return g;
}

// 3 m x 3 m arena with a round blob, a box and an L-shaped obstacle, in the
// style of a cluttered lab occupancy map.
inline psafe::OccupancyGrid multi_obstacle_map(int n = 120, double res = 0.025) {
    auto g = empty_room(n, res);
    auto fill_disk = [&](double cx, double cy, double r) {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                double x = i * res - cx, y = j * res - cy;
                if (x * x + y * y <= r * r) g.cells[g.idx(i, j)] = 1;
            }
    };
    auto fill_rect = [&](double x0, double y0, double x1, double y1) {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                double x = i * res, y = j * res;
                if (x >= x0 && x <= x1 && y >= y0 && y <= y1) g.cells[g.idx(i, j)] = 1;
            }
    };
    fill_disk(0.8, 2.05, 0.28);
    fill_rect(1.55, 0.45, 2.25, 0.95);
    fill_rect(1.9, 1.7, 2.55, 1.95);
    fill_rect(2.3, 1.7, 2.55, 2.45);
    fill_disk(0.7, 0.8, 0.2);
    return g;
}

// O(cells * boundary) reference distance: min over source cells of the exact
// Euclidean center-to-center distance, in squared cell units.
inline std::vector<double> brute_force_sq_dist(const std::vector<uint8_t>& source, int nx,
                                               int ny) {
    std::vector<double> d2(static_cast<size_t>(nx) * ny,
                           std::numeric_limits<double>::infinity());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int sj = 0; sj < ny; ++sj)
                for (int si = 0; si < nx; ++si) {
                    if (!source[static_cast<size_t>(sj) * nx + si]) continue;
                    double dd = double(i - si) * (i - si) + double(j - sj) * (j - sj);
                    best = std::min(best, dd);
                }
            d2[static_cast<size_t>(j) * nx + i] = best;
        }
    return d2;
}

}  // namespace testutil
