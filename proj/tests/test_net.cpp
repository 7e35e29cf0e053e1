#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tdiff/errors.hpp"
#include "tdiff/net.hpp"
#include "tdiff/rng.hpp"

using namespace tdiff;

namespace {

Tensor random_batch(int n, int ps, SeededRng& rng) {
    Tensor x(n, 1, ps, ps);
    for (double& v : x.data) v = 2.0 * rng.uniform() - 1.0;
    return x;
}

void perturb_params(DenoiserNet& net, double scale, SeededRng& rng) {
    for (auto& p : net.params().all())
        for (double& v : p.value) v += scale * rng.normal();
}

double mse_loss(const Tensor& pred, const Tensor& target) {
    double loss = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        loss += d * d;
    }
    return loss / static_cast<double>(pred.size());
}

}  // namespace

TEST_CASE("output shape equals input shape for every preset") {
    for (const char* name : {"desk16", "desk32", "desk64", "full64", "full128"}) {
        const DenoiserConfig cfg = DenoiserConfig::preset(name);
        SeededRng rng(1);
        DenoiserNet net(cfg, rng);
        SeededRng drng(2);
        const Tensor x = random_batch(1, cfg.patch_size, drng);
        const Tensor y = net.forward(x, {5});
        CHECK(y.n == 1);
        CHECK(y.c == 1);
        CHECK(y.h == cfg.patch_size);
        CHECK(y.w == cfg.patch_size);
        for (double v : y.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("preset validation rejects inconsistent configurations") {
    DenoiserConfig bad;
    bad.patch_size = 8;
    bad.base_channels = 8;
    bad.channel_multipliers = {1, 2, 4, 4};  // bottleneck would be 1 pixel
    bad.time_embed_dim = 32;
    CHECK_THROWS_AS(bad.validate(), DataError);
    CHECK_THROWS_AS(DenoiserConfig::preset("nope"), DataError);
}

TEST_CASE("identical batch items produce identical outputs") {
    const DenoiserConfig cfg = DenoiserConfig::preset("desk16");
    SeededRng rng(3);
    DenoiserNet net(cfg, rng);
    perturb_params(net, 0.05, rng);
    SeededRng drng(4);
    const Tensor one = random_batch(1, 16, drng);
    Tensor two(2, 1, 16, 16);
    std::copy(one.data.begin(), one.data.end(), two.data.begin());
    std::copy(one.data.begin(), one.data.end(), two.data.begin() + one.data.size());
    const Tensor y = net.forward(two, {7, 7});
    for (size_t i = 0; i < one.data.size(); ++i)
        CHECK(y.data[i] == y.data[i + one.data.size()]);
}

TEST_CASE("analytic gradients match central finite differences") {
    const DenoiserConfig cfg = DenoiserConfig::preset("desk16");
    SeededRng rng(5);
    DenoiserNet net(cfg, rng);
    perturb_params(net, 0.05, rng);  // break the zero-initialized output convs

    SeededRng drng(6);
    const Tensor x = random_batch(2, 16, drng);
    const Tensor target = random_batch(2, 16, drng);
    const std::vector<int> t = {3, 40};

    auto loss_fn = [&]() {
        const Tensor pred = net.forward(x, t, /*cache=*/false);
        return mse_loss(pred, target);
    };

    // analytic gradients
    net.params().zero_grad();
    const Tensor pred = net.forward(x, t, /*cache=*/true);
    Tensor grad(2, 1, 16, 16);
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.data.size(); ++i)
        grad.data[i] = 2.0 * (pred.data[i] - target.data[i]) * inv;
    net.backward(grad);

    auto& params = net.params().all();
    const double h = 1e-4;
    int checked = 0;
    SeededRng pick(7);
    int guard = 0;
    while (checked < 12 && guard++ < 400) {
        const size_t pi = pick.uniform_index(params.size());
        Param& p = params[pi];
        const size_t ci = pick.uniform_index(p.size());
        const double analytic = p.grad[ci];
        if (std::abs(analytic) < 1e-7) continue;  // avoid 0/0 comparisons
        const double save = p.value[ci];
        p.value[ci] = save + h;
        const double lp = loss_fn();
        p.value[ci] = save - h;
        const double lm = loss_fn();
        p.value[ci] = save;
        const double fd = (lp - lm) / (2.0 * h);
        const double rel = std::abs(fd - analytic) / std::max(std::abs(fd), std::abs(analytic));
        INFO(p.name, "[", ci, "] analytic=", analytic, " fd=", fd);
        CHECK(rel <= 1e-3);
        ++checked;
    }
    CHECK(checked >= 10);
}

TEST_CASE("checkpoint round trip is byte-identical and checksummed") {
    const auto dir = std::filesystem::temp_directory_path() / "tdiff_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string p1 = (dir / "a.tdck").string();
    const std::string p2 = (dir / "b.tdck").string();

    const DenoiserConfig cfg = DenoiserConfig::preset("desk16");
    SeededRng rng(8);
    DenoiserNet net(cfg, rng);
    perturb_params(net, 0.05, rng);
    save_checkpoint(p1, net, 200, 1000);

    LoadedCheckpoint loaded = load_checkpoint(p1);
    CHECK(loaded.meta.step == 200);
    CHECK(loaded.meta.schedule_steps == 1000);
    CHECK(loaded.meta.config == cfg);
    save_checkpoint(p2, *loaded.net, 200, 1000);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // corrupting one payload byte must fail the checksum
    std::string corrupted = b1;
    corrupted[corrupted.size() / 2] ^= 0x01;
    const std::string p3 = (dir / "c.tdck").string();
    std::ofstream(p3, std::ios::binary).write(corrupted.data(), corrupted.size());
    CHECK_THROWS_AS(load_checkpoint(p3), DataError);

    std::filesystem::remove_all(dir);
}

TEST_CASE("adam updates move parameters along the gradient") {
    ParamStore store;
    const int idx = store.add("w", {2});
    store.at(idx).value = {1.0, -1.0};
    store.at(idx).grad = {0.5, -0.5};
    AdamOptimizer opt(0.1);
    opt.step(store);
    CHECK(store.at(idx).value[0] < 1.0);
    CHECK(store.at(idx).value[1] > -1.0);
    // magnitude on the first step is ~lr for a fresh moment estimate
    CHECK(store.at(idx).value[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-3));
}
