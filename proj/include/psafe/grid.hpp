#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <limits>

#include <json.hpp>

#include "psafe/core.hpp"

namespace psafe {

// Raster of occupied/free cells. The map border ring is always occupied so the
// free region is bounded.
struct OccupancyGrid {
    int nx = 0;
    int ny = 0;
    double resolution = 1.0;
    Vec2 origin{};
    std::vector<uint8_t> cells;  // 1 = occupied

    size_t idx(int i, int j) const { return static_cast<size_t>(j) * nx + i; }
    bool occupied(int i, int j) const { return cells[idx(i, j)] != 0; }
    bool in_bounds(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    Vec2 world(int i, int j) const {
        return {origin.x + i * resolution, origin.y + j * resolution};
    }
};

enum class CellLabel : uint8_t { Free = 0, Obstacle = 1, Boundary = 2 };

struct BoundaryCell {
    int i = 0;
    int j = 0;
    int obstacle = 0;     // owning occupied component
    int exposed_faces = 0;  // 4-adjacent free neighbors
    Vec2 normal{};        // unit, pointing out of the free region into the obstacle
};

// Labeled partition of a grid into the connected free region, obstacle
// components and their boundary cells.
struct DomainDecomposition {
    int nx = 0;
    int ny = 0;
    double resolution = 1.0;
    Vec2 origin{};
    std::vector<CellLabel> labels;
    std::vector<int32_t> component;       // occupied component id, -1 on free cells
    std::vector<int32_t> boundary_index;  // index into boundary, -1 elsewhere
    std::vector<BoundaryCell> boundary;
    int n_obs = 0;
    double perimeter = 0.0;             // total exposed face length (m)
    double free_area = 0.0;             // (m^2)
    std::vector<double> obstacle_areas;  // per component (m^2)
    size_t free_count = 0;

    size_t idx(int i, int j) const { return static_cast<size_t>(j) * nx + i; }
    CellLabel label(int i, int j) const { return labels[idx(i, j)]; }
    bool is_free(int i, int j) const { return labels[idx(i, j)] == CellLabel::Free; }
    bool in_bounds(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    Vec2 world(int i, int j) const {
        return {origin.x + i * resolution, origin.y + j * resolution};
    }
};

enum class DistanceMode { Unsigned, Signed };

namespace detail {

inline int pgm_next_token(std::istream& is, std::string& tok) {
    tok.clear();
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {  // comment to end of line
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            c = is.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = is.get();
    }
    return tok.empty() ? EOF : 0;
}

inline int pgm_int(std::istream& is, const std::string& what) {
    std::string tok;
    if (pgm_next_token(is, tok) == EOF) throw FormatError("pgm: missing " + what);
    try {
        size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError("pgm: bad " + what + " '" + tok + "'");
    }
}

// Large finite sentinel for "no source"; infinity would produce inf - inf
// NaNs in the envelope arithmetic below.
constexpr double kNoSource = 1e20;

// Exact 1D squared distance transform (lower envelope of parabolas).
inline void edt_1d(const double* f, double* d, int n, int* v, double* z) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                   (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

// Squared Euclidean distance (in cell units) to the nearest source cell.
// Two passes: columns then rows. Exact for integer cell coordinates.
inline std::vector<double> edt_squared(const std::vector<uint8_t>& source, int nx, int ny) {
    std::vector<double> g(static_cast<size_t>(nx) * ny);
    for (size_t c = 0; c < g.size(); ++c) g[c] = source[c] ? 0.0 : kNoSource;

    int n = std::max(nx, ny);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    for (int i = 0; i < nx; ++i) {  // columns
        for (int j = 0; j < ny; ++j) f[j] = g[static_cast<size_t>(j) * nx + i];
        edt_1d(f.data(), d.data(), ny, v.data(), z.data());
        for (int j = 0; j < ny; ++j) g[static_cast<size_t>(j) * nx + i] = d[j];
    }
    for (int j = 0; j < ny; ++j) {  // rows
        double* row = g.data() + static_cast<size_t>(j) * nx;
        std::copy(row, row + nx, f.begin());
        edt_1d(f.data(), d.data(), nx, v.data(), z.data());
        std::copy(d.begin(), d.begin() + nx, row);
    }
    return g;
}

constexpr int kDi[4] = {1, -1, 0, 0};
constexpr int kDj[4] = {0, 0, 1, -1};

}  // namespace detail

// Optional map sidecar: {"resolution_m": ..., "origin_xy": [x, y]} next to the
// map file with the extension replaced by .json.
struct MapSidecar {
    std::optional<double> resolution;
    std::optional<Vec2> origin;
};

inline std::optional<MapSidecar> load_sidecar(const std::string& map_path) {
    std::filesystem::path p(map_path);
    p.replace_extension(".json");
    std::ifstream is(p);
    if (!is) return std::nullopt;
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad sidecar " + p.string() + ": " + e.what());
    }
    MapSidecar sc;
    if (j.contains("resolution_m")) sc.resolution = j["resolution_m"].get<double>();
    if (j.contains("origin_xy")) {
        auto a = j["origin_xy"];
        if (!a.is_array() || a.size() != 2)
            throw FormatError("bad sidecar origin_xy in " + p.string());
        sc.origin = Vec2{a[0].get<double>(), a[1].get<double>()};
    }
    return sc;
}

// Reads a PGM (P2 ascii or P5 binary, max gray <= 255). Pixels darker than
// threshold become occupied; the border ring is forced occupied.
inline OccupancyGrid load_occupancy(const std::string& path, double resolution,
                                    int threshold = 128) {
    if (resolution <= 0) throw std::invalid_argument("resolution must be > 0");
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open map: " + path);

    std::string magic;
    if (detail::pgm_next_token(is, magic) == EOF || (magic != "P2" && magic != "P5"))
        throw FormatError("pgm: expected P2 or P5 magic in " + path);
    int w = detail::pgm_int(is, "width");
    int h = detail::pgm_int(is, "height");
    int maxval = detail::pgm_int(is, "maxval");
    if (w < 3 || h < 3)
        throw DomainError("map too small: " + std::to_string(w) + "x" + std::to_string(h));
    if (maxval <= 0 || maxval > 255) throw FormatError("pgm: unsupported maxval");

    OccupancyGrid g;
    g.nx = w;
    g.ny = h;
    g.resolution = resolution;
    g.cells.assign(static_cast<size_t>(w) * h, 0);

    if (magic == "P5") {
        std::vector<uint8_t> raw(static_cast<size_t>(w) * h);
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (is.gcount() != static_cast<std::streamsize>(raw.size()))
            throw FormatError("pgm: truncated raster in " + path);
        for (size_t c = 0; c < raw.size(); ++c) g.cells[c] = raw[c] < threshold ? 1 : 0;
    } else {
        for (size_t c = 0; c < g.cells.size(); ++c) {
            int v = detail::pgm_int(is, "pixel");
            if (v < 0 || v > maxval) throw FormatError("pgm: pixel out of range");
            g.cells[c] = v < threshold ? 1 : 0;
        }
    }
    for (int i = 0; i < w; ++i) {
        g.cells[g.idx(i, 0)] = 1;
        g.cells[g.idx(i, h - 1)] = 1;
    }
    for (int j = 0; j < h; ++j) {
        g.cells[g.idx(0, j)] = 1;
        g.cells[g.idx(w - 1, j)] = 1;
    }
    return g;
}

// Dilates the occupied set by a Euclidean disk: a cell becomes occupied when
// its center lies within radius of any occupied cell center.
inline OccupancyGrid buffer_obstacles(const OccupancyGrid& grid, double radius) {
    if (radius < 0) throw std::invalid_argument("buffer radius must be >= 0");
    OccupancyGrid out = grid;
    if (radius == 0) return out;

    auto d2 = detail::edt_squared(grid.cells, grid.nx, grid.ny);
    double r_cells = radius / grid.resolution;
    double r2 = r_cells * r_cells + 1e-9;
    bool any_free = false;
    for (size_t c = 0; c < out.cells.size(); ++c) {
        out.cells[c] = d2[c] <= r2 ? 1 : 0;
        any_free = any_free || out.cells[c] == 0;
    }
    if (!any_free) throw DomainError("buffer radius leaves no free space");
    return out;
}

// Partitions the grid: the largest 4-connected free component stays free
// (enclosed free pockets are merged into the surrounding obstacle), occupied
// cells are grouped into 4-connected components, and occupied cells adjacent
// to the free region become boundary cells with outward unit normals.
inline DomainDecomposition decompose_domain(const OccupancyGrid& grid) {
    const int nx = grid.nx, ny = grid.ny;
    if (nx < 3 || ny < 3) throw DomainError("grid too small to decompose");
    const size_t n = static_cast<size_t>(nx) * ny;

    // the exterior frame is always an obstacle, keeping the free region bounded
    std::vector<uint8_t> base = grid.cells;
    for (int i = 0; i < nx; ++i) {
        base[static_cast<size_t>(i)] = 1;
        base[static_cast<size_t>(ny - 1) * nx + i] = 1;
    }
    for (int j = 0; j < ny; ++j) {
        base[static_cast<size_t>(j) * nx] = 1;
        base[static_cast<size_t>(j) * nx + nx - 1] = 1;
    }

    // free components; keep the largest
    std::vector<int32_t> free_comp(n, -1);
    std::vector<size_t> free_sizes;
    std::vector<size_t> stack;
    for (size_t s = 0; s < n; ++s) {
        if (base[s] || free_comp[s] >= 0) continue;
        int32_t id = static_cast<int32_t>(free_sizes.size());
        size_t count = 0;
        free_comp[s] = id;
        stack.push_back(s);
        while (!stack.empty()) {
            size_t c = stack.back();
            stack.pop_back();
            ++count;
            int ci = static_cast<int>(c % nx), cj = static_cast<int>(c / nx);
            for (int d = 0; d < 4; ++d) {
                int qi = ci + detail::kDi[d], qj = cj + detail::kDj[d];
                if (qi < 0 || qi >= nx || qj < 0 || qj >= ny) continue;
                size_t q = grid.idx(qi, qj);
                if (!base[q] && free_comp[q] < 0) {
                    free_comp[q] = id;
                    stack.push_back(q);
                }
            }
        }
        free_sizes.push_back(count);
    }
    if (free_sizes.empty()) throw DomainError("no free cells");
    int32_t main_free =
        static_cast<int32_t>(std::max_element(free_sizes.begin(), free_sizes.end()) -
                             free_sizes.begin());

    // occupied set after merging enclosed pockets
    std::vector<uint8_t> occ(n);
    for (size_t c = 0; c < n; ++c)
        occ[c] = (base[c] || free_comp[c] != main_free) ? 1 : 0;

    DomainDecomposition dd;
    dd.nx = nx;
    dd.ny = ny;
    dd.resolution = grid.resolution;
    dd.origin = grid.origin;
    dd.labels.assign(n, CellLabel::Free);
    dd.component.assign(n, -1);
    dd.boundary_index.assign(n, -1);

    // occupied components; the wall (containing the border ring) is component 0
    for (size_t s = 0; s < n; ++s) {
        if (!occ[s] || dd.component[s] >= 0) continue;
        int32_t id = dd.n_obs++;
        dd.obstacle_areas.push_back(0.0);
        dd.component[s] = id;
        stack.push_back(s);
        size_t count = 0;
        while (!stack.empty()) {
            size_t c = stack.back();
            stack.pop_back();
            ++count;
            dd.labels[c] = CellLabel::Obstacle;
            int ci = static_cast<int>(c % nx), cj = static_cast<int>(c / nx);
            for (int d = 0; d < 4; ++d) {
                int qi = ci + detail::kDi[d], qj = cj + detail::kDj[d];
                if (qi < 0 || qi >= nx || qj < 0 || qj >= ny) continue;
                size_t q = grid.idx(qi, qj);
                if (occ[q] && dd.component[q] < 0) {
                    dd.component[q] = id;
                    stack.push_back(q);
                }
            }
        }
        dd.obstacle_areas[id] = count * grid.resolution * grid.resolution;
    }

    dd.free_count = 0;
    for (size_t c = 0; c < n; ++c)
        if (!occ[c]) ++dd.free_count;
    dd.free_area = dd.free_count * grid.resolution * grid.resolution;

    // distance to occupied, used for robust normals on staircase boundaries
    auto d2 = detail::edt_squared(occ, nx, ny);
    auto dist_at = [&](int i, int j) { return std::sqrt(d2[dd.idx(i, j)]); };

    int exposed_total = 0;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            size_t c = dd.idx(i, j);
            if (!occ[c]) continue;
            int faces = 0;
            Vec2 grad_sum{};
            Vec2 dir_sum{};
            Vec2 first_dir{};
            for (int d = 0; d < 4; ++d) {
                int qi = i + detail::kDi[d], qj = j + detail::kDj[d];
                if (qi < 0 || qi >= nx || qj < 0 || qj >= ny) continue;
                if (occ[dd.idx(qi, qj)]) continue;
                ++faces;
                // free cells are never on the border ring, so central
                // differences of the distance field are in range
                grad_sum += Vec2{(dist_at(qi + 1, qj) - dist_at(qi - 1, qj)) * 0.5,
                                 (dist_at(qi, qj + 1) - dist_at(qi, qj - 1)) * 0.5};
                Vec2 into_obstacle{static_cast<double>(i - qi), static_cast<double>(j - qj)};
                dir_sum += into_obstacle;
                if (faces == 1) first_dir = into_obstacle;
            }
            if (faces == 0) continue;

            BoundaryCell bc;
            bc.i = i;
            bc.j = j;
            bc.obstacle = dd.component[c];
            bc.exposed_faces = faces;
            Vec2 nrm = -1.0 * grad_sum;  // distance grows into free space
            if (nrm.norm() < 1e-12) nrm = dir_sum;
            if (nrm.norm() < 1e-12) nrm = first_dir;  // thin wall, pick a side
            bc.normal = nrm * (1.0 / nrm.norm());

            dd.labels[c] = CellLabel::Boundary;
            dd.boundary_index[c] = static_cast<int32_t>(dd.boundary.size());
            dd.boundary.push_back(bc);
            exposed_total += faces;
        }
    }
    dd.perimeter = exposed_total * grid.resolution;
    return dd;
}

// Euclidean distance to the nearest boundary cell center, exact (two-pass
// transform). Unsigned: distance everywhere. Signed: positive on free cells,
// negative inside obstacles, zero on the boundary.
inline ScalarField distance_field(const DomainDecomposition& decomp,
                                  DistanceMode mode = DistanceMode::Unsigned) {
    const size_t n = decomp.labels.size();
    std::vector<uint8_t> src(n, 0);
    for (size_t c = 0; c < n; ++c)
        if (decomp.labels[c] == CellLabel::Boundary) src[c] = 1;

    auto d2 = detail::edt_squared(src, decomp.nx, decomp.ny);
    ScalarField f(decomp.nx, decomp.ny, decomp.resolution, decomp.origin);
    for (size_t c = 0; c < n; ++c) {
        double d = std::sqrt(d2[c]) * decomp.resolution;
        if (mode == DistanceMode::Signed && decomp.labels[c] == CellLabel::Obstacle)
            d = -d;
        f.values[c] = d;
    }
    return f;
}

// Distance to the nearest occupied (boundary or obstacle) cell center; zero
// outside the free region. Used for clearance logging.
inline ScalarField obstacle_clearance(const DomainDecomposition& decomp) {
    const size_t n = decomp.labels.size();
    std::vector<uint8_t> src(n, 0);
    for (size_t c = 0; c < n; ++c)
        if (decomp.labels[c] != CellLabel::Free) src[c] = 1;
    auto d2 = detail::edt_squared(src, decomp.nx, decomp.ny);
    ScalarField f(decomp.nx, decomp.ny, decomp.resolution, decomp.origin);
    for (size_t c = 0; c < n; ++c) f.values[c] = std::sqrt(d2[c]) * decomp.resolution;
    return f;
}

}  // namespace psafe
