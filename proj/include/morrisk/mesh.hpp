#pragma once

// Structured triangulation of the truncated (r, u) rectangle. Cells are split
// into two linear triangles with the diagonal alternating per cell parity,
// which keeps the assembled stencils symmetric on uniform grids. The
// effective mesh size is sqrt(mean element area).

#include "morrisk/core.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace morrisk {

struct DomainBounds {
    double r_min = -0.1;
    double r_max = 0.1;
    double u_min = -0.05;
    double u_max = 0.05;

    double area() const { return (r_max - r_min) * (u_max - u_min); }

    void validate() const {
        if (!(r_max > r_min) || !(u_max > u_min))
            throw validation_error("domain bounds must have positive extent");
    }
};

struct Mesh {
    DomainBounds bounds;
    double h_target = 0.0;
    int nr = 0;  // cells along r
    int nu = 0;  // cells along u
    std::vector<std::array<double, 2>> nodes;      // (r, u) coordinates
    std::vector<std::array<int, 3>> elements;      // CCW node triples

    int node_count() const { return static_cast<int>(nodes.size()); }
    int element_count() const { return static_cast<int>(elements.size()); }

    double dr() const { return (bounds.r_max - bounds.r_min) / nr; }
    double du() const { return (bounds.u_max - bounds.u_min) / nu; }

    int node_index(int i, int j) const { return j * (nr + 1) + i; }

    bool on_boundary(int idx) const {
        const int i = idx % (nr + 1);
        const int j = idx / (nr + 1);
        return i == 0 || i == nr || j == 0 || j == nu;
    }

    double effective_h() const {
        return std::sqrt(bounds.area() / element_count());
    }

    /// P1 interpolation of nodal values at (r, u). Clamps to the domain.
    double interpolate(const Vec& values, double r, double u) const {
        if (values.size() != node_count())
            throw validation_error("interpolate: value vector does not match mesh");
        const double rc = std::clamp(r, bounds.r_min, bounds.r_max);
        const double uc = std::clamp(u, bounds.u_min, bounds.u_max);
        int ci = std::min(static_cast<int>((rc - bounds.r_min) / dr()), nr - 1);
        int cj = std::min(static_cast<int>((uc - bounds.u_min) / du()), nu - 1);
        ci = std::max(ci, 0);
        cj = std::max(cj, 0);
        // bilinear on the cell equals P1 on its two triangles up to O(h^2)
        const double xr = (rc - (bounds.r_min + ci * dr())) / dr();
        const double xu = (uc - (bounds.u_min + cj * du())) / du();
        const double v00 = values[node_index(ci, cj)];
        const double v10 = values[node_index(ci + 1, cj)];
        const double v01 = values[node_index(ci, cj + 1)];
        const double v11 = values[node_index(ci + 1, cj + 1)];
        return (1.0 - xr) * (1.0 - xu) * v00 + xr * (1.0 - xu) * v10 +
               (1.0 - xr) * xu * v01 + xr * xu * v11;
    }
};

/// Builds the structured mesh whose effective size best matches the target h.
inline Mesh build_mesh(const DomainBounds& bounds, double h) {
    bounds.validate();
    if (!(h > 0.0)) throw validation_error("build_mesh: h must be positive");

    // mean element area = dr * du / 2, so square cells need side h * sqrt(2)
    const double side = h * std::sqrt(2.0);
    const int nr = std::max(1, static_cast<int>(std::lround((bounds.r_max - bounds.r_min) / side)));
    const int nu = std::max(1, static_cast<int>(std::lround((bounds.u_max - bounds.u_min) / side)));
    if (side > (bounds.r_max - bounds.r_min) && side > (bounds.u_max - bounds.u_min))
        throw validation_error("build_mesh: h exceeds the domain extent (degenerate mesh)");

    Mesh mesh;
    mesh.bounds = bounds;
    mesh.h_target = h;
    mesh.nr = nr;
    mesh.nu = nu;

    const double dr = (bounds.r_max - bounds.r_min) / nr;
    const double du = (bounds.u_max - bounds.u_min) / nu;
    mesh.nodes.reserve(static_cast<std::size_t>((nr + 1) * (nu + 1)));
    for (int j = 0; j <= nu; ++j)
        for (int i = 0; i <= nr; ++i)
            mesh.nodes.push_back({bounds.r_min + i * dr, bounds.u_min + j * du});

    mesh.elements.reserve(static_cast<std::size_t>(2 * nr * nu));
    for (int j = 0; j < nu; ++j) {
        for (int i = 0; i < nr; ++i) {
            const int v00 = mesh.node_index(i, j);
            const int v10 = mesh.node_index(i + 1, j);
            const int v01 = mesh.node_index(i, j + 1);
            const int v11 = mesh.node_index(i + 1, j + 1);
            if ((i + j) % 2 == 0) {
                mesh.elements.push_back({v00, v10, v11});
                mesh.elements.push_back({v00, v11, v01});
            } else {
                mesh.elements.push_back({v00, v10, v01});
                mesh.elements.push_back({v10, v11, v01});
            }
        }
    }
    return mesh;
}

/// Target h for a grid of roughly the requested order M; helper for sizing
/// studies that talk in terms of model order rather than h.
inline double h_for_order(const DomainBounds& bounds, int order) {
    if (order < 4) throw validation_error("h_for_order: order must be >= 4");
    // (n+1)^2 nodes ~ order, elements = 2 n^2, h = sqrt(area / elements)
    const double n = std::sqrt(static_cast<double>(order)) - 1.0;
    return std::sqrt(bounds.area() / (2.0 * n * n));
}

/// Exact effective h of an (nr x nu)-cell grid on the given bounds. Useful
/// when a study needs h values that build meshes with nested nodes.
inline double h_for_cells(const DomainBounds& bounds, int nr, int nu) {
    if (nr < 1 || nu < 1) throw validation_error("h_for_cells: cell counts must be >= 1");
    const double dr = (bounds.r_max - bounds.r_min) / nr;
    const double du = (bounds.u_max - bounds.u_min) / nu;
    return std::sqrt(0.5 * dr * du);
}

}  // namespace morrisk
