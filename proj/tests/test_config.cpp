#include <doctest.h>

#include "tdiff/commands.hpp"
#include "tdiff/config.hpp"
#include "tdiff/errors.hpp"
#include "tdiff/rng.hpp"

using namespace tdiff;

TEST_CASE("config parses sections, comments and typed values") {
    const ExperimentConfig cfg = ExperimentConfig::from_string(R"(
# experiment
dataset.dir = data/clean
dataset.count = 32
noise.gaussian_sigma = 0.1
train.resume = true
ablate.patch_sizes = 16, 32, 64
seeds.master = 42
)", "/tmp/base");
    CHECK(cfg.get_string("dataset.dir") == "data/clean");
    CHECK(cfg.get_int("dataset.count") == 32);
    CHECK(cfg.get_double("noise.gaussian_sigma") == doctest::Approx(0.1));
    CHECK(cfg.get_bool("train.resume", false));
    CHECK(cfg.get_int_list("ablate.patch_sizes") == std::vector<int>{16, 32, 64});
    CHECK(cfg.get_int("dataset.extent", 64) == 64);  // fallback
}

TEST_CASE("unknown keys are a hard error") {
    CHECK_THROWS_AS(ExperimentConfig::from_string("dataset.sizee = 4\n"), UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_string("unheard.of = 1\n"), UsageError);
    // the ablate checkpoint family is keyed by patch size
    CHECK_NOTHROW(ExperimentConfig::from_string("ablate.checkpoint.32 = ck.tdck\n"));
    CHECK_THROWS_AS(ExperimentConfig::from_string("ablate.checkpoint.big = x\n"), UsageError);
}

TEST_CASE("malformed lines and duplicates are rejected") {
    CHECK_THROWS_AS(ExperimentConfig::from_string("dataset.dir\n"), UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_string("dataset.count = 1\ndataset.count = 2\n"),
                    UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_string("dataset.count = twelve\n").get_int("dataset.count"),
                    UsageError);
    CHECK_THROWS_AS(ExperimentConfig::from_string("train.resume = maybe\n").get_bool("train.resume", false),
                    UsageError);
}

TEST_CASE("relative paths resolve against the config directory") {
    const ExperimentConfig cfg = ExperimentConfig::from_string("dataset.dir = data\n", "/tmp/exp");
    CHECK(cfg.get_path("dataset.dir") == "/tmp/exp/data");
    // absolute paths pass through (with a warning on stderr)
    const ExperimentConfig abs = ExperimentConfig::from_string("dataset.dir = /abs/data\n", "/tmp/exp");
    CHECK(abs.get_path("dataset.dir") == "/abs/data");
}

TEST_CASE("missing required keys raise usage errors") {
    const ExperimentConfig cfg = ExperimentConfig::from_string("");
    CHECK_THROWS_AS(cfg.get_string("dataset.dir"), UsageError);
}

TEST_CASE("operator construction covers all configured kinds") {
    const Extent clean{32, 32};
    const auto ident =
        operator_for_clean(ExperimentConfig::from_string("operator.kind = identity\n"), clean);
    CHECK(ident->out_shape() == clean);

    const auto box = operator_for_clean(
        ExperimentConfig::from_string("operator.kind = box_downsample\noperator.factor = 4\n"),
        clean);
    CHECK(box->out_shape() == Extent{8, 8});

    const auto blur = operator_for_clean(
        ExperimentConfig::from_string("operator.kind = gaussian_blur\noperator.blur_sigma = 0.8\n"),
        clean);
    CHECK(blur->out_shape() == clean);

    // composite: blur then block-mean downsample
    const ExperimentConfig comp_cfg = ExperimentConfig::from_string(
        "operator.kind = blur_downsample\noperator.factor = 2\n");
    const auto comp = operator_for_clean(comp_cfg, clean);
    CHECK(comp->out_shape() == Extent{16, 16});
    // adjoint identity sanity on the composite
    SeededRng rng(1);
    ThermalImage u(32, 32, ValueDomain::Normalized), v(16, 16, ValueDomain::Normalized);
    for (double& x : u.data) x = 2.0 * rng.uniform() - 1.0;
    for (double& x : v.data) x = 2.0 * rng.uniform() - 1.0;
    const ThermalImage au = comp->forward(u), atv = comp->adjoint(v);
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < au.data.size(); ++i) lhs += au.data[i] * v.data[i];
    for (size_t i = 0; i < u.data.size(); ++i) rhs += u.data[i] * atv.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    // measurement-side reconstruction recovers the clean extent
    const auto from_meas = operator_for_measurement(comp_cfg, {16, 16});
    CHECK(from_meas->in_shape() == clean);

    CHECK_THROWS_AS(
        operator_for_clean(ExperimentConfig::from_string("operator.kind = warp\n"), clean),
        UsageError);
}

TEST_CASE("seeds derive from master unless explicitly overridden") {
    const ExperimentConfig cfg =
        ExperimentConfig::from_string("seeds.master = 1\nseeds.train = 99\n");
    CHECK(cfg.seed_for("train") == 99);
    CHECK(cfg.seed_for("noise") != cfg.seed_for("restore"));

    const ExperimentConfig same = ExperimentConfig::from_string("seeds.master = 1\n");
    const ExperimentConfig other = ExperimentConfig::from_string("seeds.master = 2\n");
    CHECK(same.seed_for("noise") != other.seed_for("noise"));

    // a master override takes precedence over per-role keys
    ExperimentConfig overridden =
        ExperimentConfig::from_string("seeds.master = 1\nseeds.train = 99\n");
    overridden.override_master_seed(7);
    CHECK(overridden.seed_for("train") != 99);
}
