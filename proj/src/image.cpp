#include "tdiff/image.hpp"

#include <algorithm>
#include <cmath>

#include "tdiff/errors.hpp"

namespace tdiff {

double domain_lo(ValueDomain d) {
    switch (d) {
        case ValueDomain::Normalized: return -1.0;
        case ValueDomain::Raw16: return 0.0;
        case ValueDomain::Unit: return 0.0;
    }
    return 0.0;
}

double domain_hi(ValueDomain d) {
    switch (d) {
        case ValueDomain::Normalized: return 1.0;
        case ValueDomain::Raw16: return 65535.0;
        case ValueDomain::Unit: return 1.0;
    }
    return 1.0;
}

std::string domain_name(ValueDomain d) {
    switch (d) {
        case ValueDomain::Normalized: return "normalized";
        case ValueDomain::Raw16: return "raw16";
        case ValueDomain::Unit: return "unit";
    }
    return "unit";
}

ValueDomain domain_from_name(const std::string& name) {
    if (name == "normalized") return ValueDomain::Normalized;
    if (name == "raw16") return ValueDomain::Raw16;
    if (name == "unit") return ValueDomain::Unit;
    throw DataError("unknown value domain '" + name + "'");
}

ThermalImage::ThermalImage(int w, int h, ValueDomain d, double fill)
    : width(w), height(h), domain(d) {
    if (w < 1 || h < 1) throw DataError("image extent must be at least 1x1");
    data.assign(static_cast<size_t>(w) * h, fill);
}

void ThermalImage::validate() const {
    if (width < 1 || height < 1)
        throw DataError("image extent must be at least 1x1");
    if (data.size() != static_cast<size_t>(width) * height)
        throw DataError("image data length does not match extent");
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

ThermalImage normalize(const ThermalImage& img, ValueDomain target) {
    img.validate();
    const double slo = domain_lo(img.domain), shi = domain_hi(img.domain);
    const double tlo = domain_lo(target), thi = domain_hi(target);
    const double scale = (thi - tlo) / (shi - slo);
    ThermalImage out(img.width, img.height, target);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = tlo + (img.data[i] - slo) * scale;
    return out;
}

ThermalImage normalize_minmax(const ThermalImage& img) {
    img.validate();
    const auto [lo_it, hi_it] = std::minmax_element(img.data.begin(), img.data.end());
    const double lo = *lo_it, hi = *hi_it;
    ThermalImage out(img.width, img.height, ValueDomain::Normalized);
    if (hi == lo) {
        // degenerate constant image: midpoint
        std::fill(out.data.begin(), out.data.end(), 0.0);
        return out;
    }
    const double scale = 2.0 / (hi - lo);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = -1.0 + (img.data[i] - lo) * scale;
    return out;
}

PatchRef extract_patch(const ThermalImage& img, int origin_x, int origin_y,
                       int ps, Boundary) {
    img.validate();
    if (ps < 1) throw DataError("patch size must be at least 1");
    if (ps > 2 * img.width || ps > 2 * img.height)
        throw DataError("patch size exceeds twice the image extent; reflect padding undefined");
    PatchRef patch;
    patch.origin_x = origin_x;
    patch.origin_y = origin_y;
    patch.size = ps;
    patch.data.resize(static_cast<size_t>(ps) * ps);
    for (int j = 0; j < ps; ++j) {
        const int sy = reflect_index(origin_y + j, img.height);
        for (int i = 0; i < ps; ++i) {
            const int sx = reflect_index(origin_x + i, img.width);
            patch.at(i, j) = img.at(sx, sy);
        }
    }
    return patch;
}

void insert_weighted(ThermalImage& accumulator, ThermalImage& weight_map,
                     const PatchRef& patch, const std::vector<double>& window) {
    if (!accumulator.same_extent(weight_map))
        throw DataError("accumulator and weight map extents differ");
    const int ps = patch.size;
    if (window.size() != static_cast<size_t>(ps) * ps)
        throw DataError("window size does not match patch size");
    for (int j = 0; j < ps; ++j) {
        const int y = patch.origin_y + j;
        if (y < 0 || y >= accumulator.height) continue;
        for (int i = 0; i < ps; ++i) {
            const int x = patch.origin_x + i;
            if (x < 0 || x >= accumulator.width) continue;
            const double w = window[static_cast<size_t>(j) * ps + i];
            accumulator.at(x, y) += w * patch.at(i, j);
            weight_map.at(x, y) += w;
        }
    }
}

namespace {

// Catmull-Rom kernel (a = -0.5).
double cubic_weight(double x) {
    x = std::abs(x);
    if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
    if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
    return 0.0;
}

}  // namespace

ThermalImage bicubic_upsample(const ThermalImage& img, int factor) {
    img.validate();
    if (factor < 1) throw DataError("upsample factor must be at least 1");
    if (factor == 1) return img;
    const int ow = img.width * factor, oh = img.height * factor;
    ThermalImage out(ow, oh, img.domain);
    // horizontal pass
    ThermalImage mid(ow, img.height, img.domain);
    for (int y = 0; y < img.height; ++y) {
        for (int ox = 0; ox < ow; ++ox) {
            const double sx = (ox + 0.5) / factor - 0.5;
            const int base = static_cast<int>(std::floor(sx));
            double acc = 0.0;
            for (int k = -1; k <= 2; ++k) {
                const int ix = reflect_index(base + k, img.width);
                acc += cubic_weight(sx - (base + k)) * img.at(ix, y);
            }
            mid.at(ox, y) = acc;
        }
    }
    // vertical pass
    for (int oy = 0; oy < oh; ++oy) {
        const double sy = (oy + 0.5) / factor - 0.5;
        const int base = static_cast<int>(std::floor(sy));
        for (int ox = 0; ox < ow; ++ox) {
            double acc = 0.0;
            for (int k = -1; k <= 2; ++k) {
                const int iy = reflect_index(base + k, img.height);
                acc += cubic_weight(sy - (base + k)) * mid.at(ox, iy);
            }
            out.at(ox, oy) = acc;
        }
    }
    return out;
}

}  // namespace tdiff
