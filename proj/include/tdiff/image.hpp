#pragma once

#include <string>
#include <vector>

namespace tdiff {

// Bounds of the values an image claims to hold.
enum class ValueDomain { Normalized, Raw16, Unit };

double domain_lo(ValueDomain d);
double domain_hi(ValueDomain d);
std::string domain_name(ValueDomain d);
ValueDomain domain_from_name(const std::string& name);

// Single-channel raster, row-major, stored as doubles regardless of the
// source bit depth.
struct ThermalImage {
    int width = 0;
    int height = 0;
    ValueDomain domain = ValueDomain::Normalized;
    std::vector<double> data;

    ThermalImage() = default;
    ThermalImage(int w, int h, ValueDomain d, double fill = 0.0);

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    size_t pixel_count() const { return data.size(); }
    bool same_extent(const ThermalImage& other) const {
        return width == other.width && height == other.height;
    }

    // Throws DataError if the shape invariants are broken.
    void validate() const;
};

// Square patch with its position in image coordinates. The origin may lie
// outside the image when the patch was extracted with boundary padding.
struct PatchRef {
    int origin_x = 0;
    int origin_y = 0;
    int size = 0;
    std::vector<double> data;

    double& at(int x, int y) { return data[static_cast<size_t>(y) * size + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * size + x]; }
};

enum class Boundary { Reflect };

// Mirror an out-of-range index back into [0, n). Reflection does not repeat
// the border sample: index -1 maps to 1, index n maps to n-2.
int reflect_index(int i, int n);

// Affine remap between the declared bounds of two value domains.
ThermalImage normalize(const ThermalImage& img, ValueDomain target);

// Per-image min-max stretch onto [-1, 1]; a constant image maps to the
// domain midpoint 0. Used when importing rasters with unknown physical range.
ThermalImage normalize_minmax(const ThermalImage& img);

PatchRef extract_patch(const ThermalImage& img, int origin_x, int origin_y,
                       int ps, Boundary boundary = Boundary::Reflect);

// accumulator(i,j) += window * patch, weight_map(i,j) += window, at the
// patch's mapped coordinates. Contributions outside the image are discarded.
void insert_weighted(ThermalImage& accumulator, ThermalImage& weight_map,
                     const PatchRef& patch, const std::vector<double>& window);

// Separable Catmull-Rom upsampling by an integer factor, reflect boundary.
ThermalImage bicubic_upsample(const ThermalImage& img, int factor);

}  // namespace tdiff
