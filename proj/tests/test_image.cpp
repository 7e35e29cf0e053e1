#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "tdiff/errors.hpp"
#include "tdiff/image.hpp"
#include "tdiff/pgm_io.hpp"
#include "tdiff/rng.hpp"

using namespace tdiff;

namespace {

ThermalImage random_image(int w, int h, SeededRng& rng, ValueDomain d = ValueDomain::Normalized) {
    ThermalImage img(w, h, d);
    const double lo = domain_lo(d), hi = domain_hi(d);
    for (double& v : img.data) v = lo + (hi - lo) * rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("normalize maps raw16 domain bounds onto normalized bounds") {
    ThermalImage img(3, 1, ValueDomain::Raw16);
    img.data = {0.0, 65535.0, 32767.5};
    const ThermalImage norm = normalize(img, ValueDomain::Normalized);
    CHECK(norm.data[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(norm.data[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(norm.data[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("normalize round trip stays within 1e-6 relative error") {
    SeededRng rng(11);
    const ThermalImage img = random_image(9, 7, rng, ValueDomain::Raw16);
    const ThermalImage back = normalize(normalize(img, ValueDomain::Normalized), ValueDomain::Raw16);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
}

TEST_CASE("normalize is strictly monotone") {
    ThermalImage img(2, 1, ValueDomain::Unit);
    img.data = {0.25, 0.75};
    const ThermalImage n = normalize(img, ValueDomain::Normalized);
    CHECK(n.data[0] < n.data[1]);
}

TEST_CASE("min-max normalization sends a constant image to the midpoint") {
    ThermalImage img(4, 4, ValueDomain::Raw16, 1234.0);
    const ThermalImage n = normalize_minmax(img);
    for (double v : n.data) CHECK(v == 0.0);
}

TEST_CASE("extract_patch copies an in-bounds block verbatim") {
    ThermalImage img(4, 4, ValueDomain::Unit);
    for (int i = 0; i < 16; ++i) img.data[i] = i;
    const PatchRef p = extract_patch(img, 0, 0, 2);
    CHECK(p.data == std::vector<double>{0, 1, 4, 5});
}

TEST_CASE("extract_patch reflect agrees with the brute-force fold oracle") {
    SeededRng rng(7);
    const ThermalImage img = random_image(2, 2, rng);
    const PatchRef p = extract_patch(img, -1, -1, 2);
    // oracle: patch(i,j) = img(fold(-1+i), fold(-1+j))
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i)
            CHECK(p.at(i, j) ==
                  img.at(oracle::reflect_fold(-1 + i, 2), oracle::reflect_fold(-1 + j, 2)));
    // first sample reflects to the far corner
    CHECK(p.at(0, 0) == img.at(1, 1));

    // sweep origins and sizes on a larger image
    const ThermalImage big = random_image(5, 4, rng);
    for (int ps = 1; ps <= 8; ++ps)
        for (int oy = -3; oy <= 4; ++oy)
            for (int ox = -3; ox <= 4; ++ox) {
                const PatchRef q = extract_patch(big, ox, oy, ps);
                for (int j = 0; j < ps; ++j)
                    for (int i = 0; i < ps; ++i)
                        CHECK(q.at(i, j) == big.at(oracle::reflect_fold(ox + i, 5),
                                                   oracle::reflect_fold(oy + j, 4)));
            }
}

TEST_CASE("extract_patch keeps constant images constant") {
    const ThermalImage img(3, 3, ValueDomain::Unit, 0.4);
    for (int ox : {-2, 0, 2})
        for (int oy : {-2, 1}) {
            const PatchRef p = extract_patch(img, ox, oy, 4);
            for (double v : p.data) CHECK(v == 0.4);
        }
}

TEST_CASE("extract_patch rejects patches larger than twice the extent") {
    const ThermalImage img(3, 3, ValueDomain::Unit);
    CHECK_THROWS_AS(extract_patch(img, 0, 0, 7), DataError);
}

TEST_CASE("insert_weighted with a unit window accumulates the patch") {
    ThermalImage acc(2, 2, ValueDomain::Normalized);
    ThermalImage wm(2, 2, ValueDomain::Normalized);
    PatchRef p;
    p.origin_x = 0;
    p.origin_y = 0;
    p.size = 2;
    p.data = {1, 2, 3, 4};
    insert_weighted(acc, wm, p, std::vector<double>(4, 1.0));
    CHECK(acc.data == p.data);
    CHECK(wm.data == std::vector<double>(4, 1.0));
}

TEST_CASE("complementary windows give unit weight in the overlap") {
    ThermalImage acc(4, 2, ValueDomain::Normalized);
    ThermalImage wm(4, 2, ValueDomain::Normalized);
    PatchRef left, right;
    left.origin_x = 0;
    left.origin_y = 0;
    left.size = 2;
    left.data = {1, 1, 1, 1};
    right = left;
    right.origin_x = 1;  // overlaps column 1
    std::vector<double> wl = {1.0, 0.3, 1.0, 0.3};
    std::vector<double> wr = {0.7, 1.0, 0.7, 1.0};
    insert_weighted(acc, wm, left, wl);
    insert_weighted(acc, wm, right, wr);
    // overlap column per direct sum: 0.3 + 0.7 = 1
    CHECK(wm.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(wm.at(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero window is a no-op and out-of-image contributions are discarded") {
    ThermalImage acc(2, 2, ValueDomain::Normalized, 5.0);
    ThermalImage wm(2, 2, ValueDomain::Normalized);
    PatchRef p;
    p.origin_x = -1;
    p.origin_y = -1;
    p.size = 2;
    p.data = {9, 9, 9, 9};
    insert_weighted(acc, wm, p, std::vector<double>(4, 0.0));
    CHECK(acc.data == std::vector<double>(4, 5.0));
    insert_weighted(acc, wm, p, std::vector<double>(4, 1.0));
    // only the (1,1) corner of the patch lands inside, at pixel (0,0)
    CHECK(acc.at(0, 0) == 14.0);
    CHECK(acc.at(1, 1) == 5.0);
    CHECK(wm.at(0, 0) == 1.0);
    CHECK(wm.at(1, 0) == 0.0);
}

TEST_CASE("extract then insert with unit window reproduces the region exactly") {
    SeededRng rng(3);
    const ThermalImage img = random_image(6, 6, rng);
    const PatchRef p = extract_patch(img, 2, 1, 3);
    ThermalImage acc(6, 6, ValueDomain::Normalized);
    ThermalImage wm(6, 6, ValueDomain::Normalized);
    insert_weighted(acc, wm, p, std::vector<double>(9, 1.0));
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i)
            CHECK(acc.at(2 + i, 1 + j) / wm.at(2 + i, 1 + j) == img.at(2 + i, 1 + j));
}

TEST_CASE("16-bit PGM round trip with sidecar metadata") {
    SeededRng rng(5);
    ThermalImage img(7, 5, ValueDomain::Unit);
    for (double& v : img.data) v = rng.uniform();
    const auto dir = std::filesystem::temp_directory_path() / "tdiff_pgm_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "img.pgm").string();
    write_pgm(path, img);
    write_metadata(path + ".meta", {{"value_domain", "unit"}, {"seed", "5"}});
    const ThermalImage back = read_pgm_auto(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.domain == ValueDomain::Unit);
    for (size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(2.0 / 65535.0));
    // quantization is idempotent: rewriting the read-back image is byte-identical
    const std::string path2 = (dir / "img2.pgm").string();
    write_pgm(path2, back);
    CHECK(fnv1a_file(path) == fnv1a_file(path2));
    std::filesystem::remove_all(dir);
}

TEST_CASE("8-bit PGM fixtures are accepted") {
    const auto dir = std::filesystem::temp_directory_path() / "tdiff_pgm8_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "img8.pgm").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fputs("P5\n# comment\n2 2\n255\n", f);
        const unsigned char bytes[4] = {0, 128, 255, 64};
        std::fwrite(bytes, 1, 4, f);
        std::fclose(f);
    }
    const ThermalImage img = read_pgm(path, ValueDomain::Unit);
    CHECK(img.data[0] == 0.0);
    CHECK(img.data[2] == 1.0);
    CHECK(img.data[1] == doctest::Approx(128.0 / 255.0));
    std::filesystem::remove_all(dir);
}

TEST_CASE("bicubic upsample preserves constants and doubles the extent") {
    const ThermalImage img(4, 3, ValueDomain::Unit, 0.5);
    const ThermalImage up = bicubic_upsample(img, 2);
    CHECK(up.width == 8);
    CHECK(up.height == 6);
    for (double v : up.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}
