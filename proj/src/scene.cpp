#include "tdiff/scene.hpp"

#include <algorithm>
#include <cmath>

#include "tdiff/errors.hpp"
#include "tdiff/rng.hpp"

namespace tdiff {

ThermalImage generate_scene(const SyntheticSceneSpec& spec) {
    if (spec.width < 1 || spec.height < 1) throw DataError("scene extent must be positive");
    if (spec.blob_count < 0) throw DataError("blob count must be nonnegative");
    if (spec.edge_sharpness < 0.5) throw DataError("edge sharpness must be at least 0.5");

    SeededRng rng(spec.seed);
    const double base = 0.15 + 0.1 * rng.uniform();
    const double gx = spec.background_gradient * (2.0 * rng.uniform() - 1.0);
    const double gy = spec.background_gradient * (2.0 * rng.uniform() - 1.0);
    // ambient low-frequency drift, scaled with the gradient so a zero
    // gradient still renders a flat background
    const double ripple_amp = 0.64 * spec.background_gradient * (0.8 + 0.4 * rng.uniform());
    const double ripple_fx = 3.0 + 2.0 * rng.uniform();
    const double ripple_fy = 3.0 + 2.0 * rng.uniform();
    const double ripple_px = rng.uniform();
    const double ripple_py = rng.uniform();

    struct Blob {
        double cx, cy, radius, amp, sharp;
    };
    std::vector<Blob> blobs;
    blobs.reserve(spec.blob_count);
    const double min_dim = std::min(spec.width, spec.height);
    for (int b = 0; b < spec.blob_count; ++b) {
        Blob blob;
        blob.cx = rng.uniform() * spec.width;
        blob.cy = rng.uniform() * spec.height;
        blob.radius = (0.2 + 0.2 * rng.uniform()) * min_dim;
        blob.amp = spec.blob_temp_min +
                   (spec.blob_temp_max - spec.blob_temp_min) * rng.uniform();
        blob.sharp = spec.edge_sharpness * (0.75 + 0.5 * rng.uniform());
        blobs.push_back(blob);
    }

    ThermalImage img(spec.width, spec.height, ValueDomain::Unit);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const double fx = static_cast<double>(x) / spec.width;
            const double fy = static_cast<double>(y) / spec.height;
            double v = base + gx * fx + gy * fy +
                       ripple_amp * std::sin(2.0 * M_PI * (ripple_fx * fx + ripple_px)) *
                           std::sin(2.0 * M_PI * (ripple_fy * fy + ripple_py));
            for (const Blob& blob : blobs) {
                const double dx = x - blob.cx, dy = y - blob.cy;
                const double d = std::sqrt(dx * dx + dy * dy) / blob.radius;
                // super-Gaussian profile: soft edges at sharpness 1, crisp at 4+
                v += blob.amp * std::exp(-std::pow(d, 2.0 * blob.sharp));
            }
            img.at(x, y) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace tdiff
