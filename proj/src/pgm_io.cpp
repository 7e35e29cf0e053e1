#include "tdiff/pgm_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "tdiff/errors.hpp"

namespace tdiff {

namespace {

int next_pgm_token(std::istream& in) {
    // skips whitespace and '#' comments
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    in >> value;
    if (!in) throw DataError("malformed PGM header");
    return value;
}

}  // namespace

void write_pgm(const std::string& path, const ThermalImage& img) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "P5\n" << img.width << " " << img.height << "\n65535\n";
    const double lo = domain_lo(img.domain), hi = domain_hi(img.domain);
    const double scale = 65535.0 / (hi - lo);
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 2);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double v = (img.at(x, y) - lo) * scale;
            v = std::min(65535.0, std::max(0.0, v));
            const auto q = static_cast<std::uint16_t>(std::llround(v));
            row[2 * x] = static_cast<unsigned char>(q >> 8);
            row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

ThermalImage read_pgm(const std::string& path, ValueDomain domain) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5')
        throw DataError("'" + path + "' is not a binary PGM (P5)");
    const int w = next_pgm_token(in);
    const int h = next_pgm_token(in);
    const int maxval = next_pgm_token(in);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw DataError("invalid PGM dimensions in '" + path + "'");
    in.get();  // single whitespace after maxval
    ThermalImage img(w, h, domain);
    const double lo = domain_lo(domain), hi = domain_hi(domain);
    const size_t n = static_cast<size_t>(w) * h;
    if (maxval > 255) {
        std::vector<unsigned char> raw(n * 2);
        in.read(reinterpret_cast<char*>(raw.data()), raw.size());
        if (!in) throw DataError("truncated PGM payload in '" + path + "'");
        for (size_t i = 0; i < n; ++i) {
            const int v = (raw[2 * i] << 8) | raw[2 * i + 1];
            img.data[i] = lo + (hi - lo) * v / maxval;
        }
    } else {
        std::vector<unsigned char> raw(n);
        in.read(reinterpret_cast<char*>(raw.data()), raw.size());
        if (!in) throw DataError("truncated PGM payload in '" + path + "'");
        for (size_t i = 0; i < n; ++i)
            img.data[i] = lo + (hi - lo) * raw[i] / maxval;
    }
    return img;
}

void write_metadata(const std::string& path, const Metadata& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& [k, v] : meta) out << k << "=" << v << "\n";
}

Metadata read_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    Metadata meta;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

ThermalImage read_pgm_auto(const std::string& path) {
    ValueDomain domain = ValueDomain::Unit;
    const std::string meta_path = path + ".meta";
    if (std::filesystem::exists(meta_path)) {
        const auto meta = read_metadata(meta_path);
        if (auto it = meta.find("value_domain"); it != meta.end())
            domain = domain_from_name(it->second);
    }
    return read_pgm(path, domain);
}

std::uint64_t fnv1a_bytes(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const auto n = static_cast<size_t>(in.gcount());
        for (size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace tdiff
