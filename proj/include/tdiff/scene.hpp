#pragma once

#include <cstdint>

#include "tdiff/image.hpp"

namespace tdiff {

// Deterministic synthetic thermal scene: a smooth background gradient plus
// soft-edged warm blobs, rendered into the Unit domain. Stands in for real
// captures at desk scale.
struct SyntheticSceneSpec {
    int width = 64;
    int height = 64;
    int blob_count = 3;
    double blob_temp_min = 0.4;    // blob amplitude range (unit domain)
    double blob_temp_max = 0.8;
    double background_gradient = 0.25;  // max corner-to-corner drift
    double edge_sharpness = 2.0;        // super-Gaussian exponent; higher = crisper blobs
    std::uint64_t seed = 0;
};

ThermalImage generate_scene(const SyntheticSceneSpec& spec);

}  // namespace tdiff
