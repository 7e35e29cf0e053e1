#pragma once

#include <utility>
#include <vector>

#include "tdiff/image.hpp"

namespace tdiff {

enum class WindowKind { Flat, RaisedCosine };

// Tiling plan: a regular lattice of patch origins (last row/column clamped
// to end at the image edge) and one shared spatial window.
struct PatchGrid {
    int width = 0;
    int height = 0;
    int ps = 0;
    int stride = 0;
    WindowKind window_kind = WindowKind::RaisedCosine;
    std::vector<std::pair<int, int>> origins;  // (x, y), row-major order
    std::vector<double> window;                // ps*ps weights, all > 0 after floor
};

PatchGrid plan_grid(int width, int height, int ps, int stride,
                    WindowKind kind = WindowKind::RaisedCosine);

// Flat: all ones. RaisedCosine: outer product of periodic Hann profiles with
// a small positive floor so border pixels of border patches keep weight.
std::vector<double> make_window(int ps, WindowKind kind);

// Eq.-style windowed averaging with per-pixel weight normalization. The
// result at each pixel is a convex combination of the contributing patches;
// patches are consumed in grid-origin order regardless of input order.
ThermalImage aggregate(const std::vector<PatchRef>& predictions, const PatchGrid& grid);

// Mean absolute second difference on patch-boundary rows/columns minus the
// same statistic elsewhere. Positive values indicate stitching seams.
double seam_energy(const ThermalImage& img, const PatchGrid& grid);

}  // namespace tdiff
