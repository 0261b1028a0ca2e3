#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace psafe {

// Thrown on malformed map/field files.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an operation would leave no usable free space (or degenerate geometry).
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when the iterative solver hits max_iter above tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : std::runtime_error(what), residual(residual), iterations(iterations) {}
    double residual;
    int iterations;
};

// Thrown when a safety-filter constraint cannot be satisfied by any input.
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator-() const { return {-x, -y}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double squared_norm() const { return x * x + y * y; }
    double norm() const { return std::sqrt(squared_norm()); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// Symmetric 2x2 matrix (Hessians).
struct Mat2Sym {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    Vec2 mul(Vec2 v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
};

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
    double omega = 0.0;
    bool warm_started = false;
    double wall_time_s = 0.0;
};

// Grid-aligned scalar samples. Cell (i,j) has world coordinates
// origin + (i,j)*resolution; storage is row-major with index j*nx + i.
struct ScalarField {
    int nx = 0;
    int ny = 0;
    double resolution = 1.0;
    Vec2 origin{};
    std::vector<double> values;
    std::optional<SolveStats> stats;

    ScalarField() = default;
    ScalarField(int nx_, int ny_, double res, Vec2 org = {}, double fill = 0.0)
        : nx(nx_), ny(ny_), resolution(res), origin(org),
          values(static_cast<size_t>(nx_) * ny_, fill) {}

    size_t idx(int i, int j) const { return static_cast<size_t>(j) * nx + i; }
    double& at(int i, int j) { return values[idx(i, j)]; }
    double at(int i, int j) const { return values[idx(i, j)]; }
    bool in_bounds(int i, int j) const { return i >= 0 && i < nx && j >= 0 && j < ny; }

    Vec2 world(int i, int j) const {
        return {origin.x + i * resolution, origin.y + j * resolution};
    }

    bool same_shape(const ScalarField& o) const {
        return nx == o.nx && ny == o.ny;
    }

    // Bilinear interpolation at a world position inside the cell-center hull.
    double sample(Vec2 p) const {
        double gx = (p.x - origin.x) / resolution;
        double gy = (p.y - origin.y) / resolution;
        const double eps = 1e-9;
        if (gx < -eps || gx > nx - 1 + eps || gy < -eps || gy > ny - 1 + eps)
            throw std::out_of_range("sample position outside grid extent");
        int i0 = static_cast<int>(std::floor(gx));
        int j0 = static_cast<int>(std::floor(gy));
        if (i0 < 0) i0 = 0;
        if (j0 < 0) j0 = 0;
        if (i0 > nx - 2) i0 = nx - 2;
        if (j0 > ny - 2) j0 = ny - 2;
        double fx = gx - i0;
        double fy = gy - j0;
        double v00 = at(i0, j0), v10 = at(i0 + 1, j0);
        double v01 = at(i0, j0 + 1), v11 = at(i0 + 1, j0 + 1);
        return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
               (1 - fx) * fy * v01 + fx * fy * v11;
    }
};

// Two scalar fields on the same grid, one per component.
struct VectorField {
    ScalarField x;
    ScalarField y;

    bool valid() const { return x.same_shape(y); }
};

namespace detail {
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

// CSV layout: header line "nx,ny,resolution,origin_x,origin_y", then one line
// per grid row (j), comma separated. 17 significant digits round-trip exactly.
inline void write_csv(const ScalarField& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path);
    os << f.nx << ',' << f.ny << ',' << detail::format_double(f.resolution) << ','
       << detail::format_double(f.origin.x) << ',' << detail::format_double(f.origin.y) << '\n';
    for (int j = 0; j < f.ny; ++j) {
        for (int i = 0; i < f.nx; ++i) {
            if (i) os << ',';
            os << detail::format_double(f.at(i, j));
        }
        os << '\n';
    }
    if (!os) throw FormatError("write failed: " + path);
}

inline ScalarField read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty field file: " + path);
    std::istringstream hs(line);
    ScalarField f;
    char c;
    if (!(hs >> f.nx >> c >> f.ny >> c >> f.resolution >> c >> f.origin.x >> c >> f.origin.y))
        throw FormatError("bad field header: " + path);
    if (f.nx <= 0 || f.ny <= 0 || f.resolution <= 0)
        throw FormatError("bad field dimensions: " + path);
    f.values.resize(static_cast<size_t>(f.nx) * f.ny);
    for (int j = 0; j < f.ny; ++j) {
        if (!std::getline(is, line)) throw FormatError("truncated field file: " + path);
        std::istringstream ls(line);
        std::string cell;
        for (int i = 0; i < f.nx; ++i) {
            if (!std::getline(ls, cell, ',')) throw FormatError("short row in field file: " + path);
            f.at(i, j) = std::stod(cell);
        }
    }
    return f;
}

}  // namespace psafe
