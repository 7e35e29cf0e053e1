#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tdiff/image.hpp"

namespace tdiff {

// Binary PGM (P5). Rasters are written with maxval 65535, most significant
// byte first; 8-bit files are accepted on read. The double-valued image is
// quantized against its declared domain bounds.
void write_pgm(const std::string& path, const ThermalImage& img);
ThermalImage read_pgm(const std::string& path, ValueDomain domain = ValueDomain::Unit);

// Plain-text sidecar next to a raster: "key=value" lines recording at least
// value_domain and the seed that produced the file.
using Metadata = std::map<std::string, std::string>;
void write_metadata(const std::string& path, const Metadata& meta);
Metadata read_metadata(const std::string& path);

// Reads <path>.meta if present to recover the stored domain.
ThermalImage read_pgm_auto(const std::string& path);

std::uint64_t fnv1a_file(const std::string& path);
std::uint64_t fnv1a_bytes(const void* data, size_t len);

}  // namespace tdiff
