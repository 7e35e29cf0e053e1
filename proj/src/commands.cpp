#include "tdiff/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tdiff/errors.hpp"
#include "tdiff/metrics.hpp"
#include "tdiff/patch_grid.hpp"
#include "tdiff/pgm_io.hpp"
#include "tdiff/scene.hpp"
#include "tdiff/train.hpp"

namespace fs = std::filesystem;

namespace tdiff {

namespace {

std::string checksum_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void prepare_output_dir(const std::string& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw DataError("'" + dir + "' exists and is not a directory");
        if (!fs::is_empty(dir) && !force)
            throw DataError("output directory '" + dir + "' is not empty (pass --force to overwrite)");
    } else {
        fs::create_directories(dir);
    }
}

ThermalImage read_normalized(const std::string& path) {
    const ThermalImage img = read_pgm_auto(path);
    return img.domain == ValueDomain::Normalized ? img : normalize(img, ValueDomain::Normalized);
}

WindowKind window_from_string(const std::string& name) {
    if (name == "flat") return WindowKind::Flat;
    if (name == "raised_cosine") return WindowKind::RaisedCosine;
    throw UsageError("unknown grid window '" + name + "' (flat | raised_cosine)");
}

std::string json_psnr(double v) {
    // JSON has no infinity literal; identical images get the string sentinel
    if (std::isinf(v)) return "\"inf\"";
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
}

void write_records(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open records file '" + path + "'");
    for (const auto& line : lines) out << line << "\n";
}

}  // namespace

std::vector<std::string> list_pgm_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            files.push_back(entry.path().filename().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .pgm files in '" + dir + "'");
    return files;
}

std::shared_ptr<LinearOperator> operator_for_clean(const ExperimentConfig& cfg,
                                                   Extent clean_extent) {
    const std::string kind = cfg.get_string("operator.kind", "identity");
    if (kind == "identity") return std::make_shared<IdentityOp>(clean_extent);
    if (kind == "box_downsample")
        return std::make_shared<BoxDownsample>(clean_extent, cfg.get_int("operator.factor", 2));
    if (kind == "gaussian_blur") {
        const int taps = cfg.get_int("operator.blur_taps", 5);
        const double sigma = cfg.get_double("operator.blur_sigma", 1.0);
        return std::make_shared<GaussianBlur>(clean_extent,
                                              GaussianBlur::gaussian_taps(taps, sigma));
    }
    if (kind == "blur_downsample") {
        const int taps = cfg.get_int("operator.blur_taps", 5);
        const double sigma = cfg.get_double("operator.blur_sigma", 1.0);
        auto blur = std::make_shared<GaussianBlur>(clean_extent,
                                                   GaussianBlur::gaussian_taps(taps, sigma));
        auto down = std::make_shared<BoxDownsample>(clean_extent,
                                                    cfg.get_int("operator.factor", 2));
        return std::make_shared<CompositeOp>(
            std::vector<std::shared_ptr<const LinearOperator>>{blur, down});
    }
    throw UsageError("unknown operator.kind '" + kind +
                     "' (identity | box_downsample | gaussian_blur | blur_downsample)");
}

std::shared_ptr<LinearOperator> operator_for_measurement(const ExperimentConfig& cfg,
                                                         Extent measured_extent) {
    const std::string kind = cfg.get_string("operator.kind", "identity");
    if (kind == "box_downsample" || kind == "blur_downsample") {
        const int f = cfg.get_int("operator.factor", 2);
        return operator_for_clean(cfg, {measured_extent.width * f, measured_extent.height * f});
    }
    return operator_for_clean(cfg, measured_extent);
}

NoiseModel noise_from_config(const ExperimentConfig& cfg) {
    NoiseModel noise;
    noise.gaussian_sigma = cfg.get_double("noise.gaussian_sigma", 0.0);
    noise.fpn_column_sigma = cfg.get_double("noise.fpn_column_sigma", 0.0);
    noise.fpn_row_sigma = cfg.get_double("noise.fpn_row_sigma", 0.0);
    noise.fpn_seed = cfg.has("noise.fpn_seed")
                         ? static_cast<std::uint64_t>(cfg.get_int64("noise.fpn_seed", 0))
                         : cfg.seed_for("fpn");
    noise.validate();
    return noise;
}

DiffusionSchedule schedule_from_config(const ExperimentConfig& cfg) {
    return make_schedule(cfg.get_int("schedule.steps", 1000),
                         cfg.get_double("schedule.beta_start", 1e-4),
                         cfg.get_double("schedule.beta_end", 0.02));
}

DenoiserConfig denoiser_from_config(const ExperimentConfig& cfg) {
    if (cfg.has("denoiser.preset"))
        return DenoiserConfig::preset(cfg.get_string("denoiser.preset"));
    DenoiserConfig dc;
    dc.patch_size = cfg.get_int("denoiser.patch_size");
    dc.base_channels = cfg.get_int("denoiser.base_channels");
    dc.channel_multipliers = cfg.get_int_list("denoiser.channel_multipliers");
    dc.time_embed_dim = cfg.get_int("denoiser.time_embed_dim", 64);
    dc.validate();
    return dc;
}

RestoreOptions restore_options_from_config(const ExperimentConfig& cfg,
                                           const CommandOptions& opts) {
    RestoreOptions ro;
    ro.sample_steps = cfg.get_int("sampler.steps", 100);
    ro.patch_size = cfg.get_int("grid.patch_size", 16);
    ro.stride = cfg.get_int("grid.stride", ro.patch_size / 2);
    ro.window = window_from_string(cfg.get_string("grid.window", "raised_cosine"));
    ro.guidance.eta_reg = cfg.get_double("guidance.eta_reg", 0.1);
    ro.guidance.scale_ls = cfg.get_double("guidance.scale_ls", 0.9);
    ro.guidance.gamma = cfg.get_double("guidance.gamma", 80.0);
    ro.guidance.eta_ddim = cfg.get_double("guidance.eta_ddim", 0.7);
    ro.guidance.zeta = cfg.get_double("guidance.zeta", 0.9);
    const std::string order = cfg.get_string("guidance.order", "correct_then_renoise");
    if (order == "correct_then_renoise")
        ro.order = GuidanceOrder::CorrectThenRenoise;
    else if (order == "renoise_then_correct")
        ro.order = GuidanceOrder::RenoiseThenCorrect;
    else
        throw UsageError("unknown guidance.order '" + order + "'");
    ro.clip_denoised = cfg.get_bool("sampler.clip_denoised", true);
    ro.shift_grid_per_step = cfg.get_bool("sampler.shift_grid", false);
    if (cfg.has("sampler.dump_dir")) ro.dump_dir = cfg.get_path("sampler.dump_dir");
    const double noise_sigma = cfg.get_double("guidance.noise_sigma", 0.0);
    if (noise_sigma > 0.0) {
        const DiffusionSchedule sched = schedule_from_config(cfg);
        ro.guidance.mu_schedule =
            snr_adaptive_mu(sched, ro.guidance.gamma / sched.steps, noise_sigma);
    }
    ro.threads = opts.threads;
    ro.guidance.validate();
    return ro;
}

// ---- gen-data ----

void cmd_gen_data(const ExperimentConfig& cfg, const CommandOptions& opts) {
    const std::string dir = cfg.get_path("dataset.dir");
    prepare_output_dir(dir, opts.force);
    const int count = cfg.get_int("dataset.count", 32);
    const int extent = cfg.get_int("dataset.extent", 64);

    SyntheticSceneSpec spec;
    spec.width = extent;
    spec.height = extent;
    spec.blob_count = cfg.get_int("scene.blob_count", 3);
    spec.blob_temp_min = cfg.get_double("scene.blob_temp_min", 0.4);
    spec.blob_temp_max = cfg.get_double("scene.blob_temp_max", 0.8);
    spec.background_gradient = cfg.get_double("scene.background_gradient", 0.25);
    spec.edge_sharpness = cfg.get_double("scene.edge_sharpness", 2.0);

    const SeededRng data_rng(cfg.seed_for("data"));
    std::ostringstream manifest;
    manifest << "# tdiff dataset manifest\n";
    manifest << "count=" << count << "\n";
    manifest << "extent=" << extent << "\n";
    for (int i = 0; i < count; ++i) {
        spec.seed = data_rng.fork(static_cast<std::uint64_t>(i)).seed();
        const ThermalImage img = generate_scene(spec);
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03d.pgm", i);
        const std::string path = dir + "/" + name;
        write_pgm(path, img);
        write_metadata(path + ".meta", {{"value_domain", domain_name(img.domain)},
                                        {"seed", std::to_string(spec.seed)}});
        manifest << name << " " << img.width << " " << img.height << " "
                 << domain_name(img.domain) << " " << checksum_hex(fnv1a_file(path)) << "\n";
        if (opts.verbose) std::cerr << "wrote " << path << "\n";
    }
    std::ofstream mf(dir + "/manifest.txt");
    if (!mf) throw DataError("cannot write manifest in '" + dir + "'");
    mf << manifest.str();
    std::cout << "generated " << count << " scenes in " << dir << "\n";
}

// ---- degrade ----

void cmd_degrade(const ExperimentConfig& cfg, const CommandOptions& opts) {
    const std::string in_dir = cfg.get_path("degrade.input_dir", cfg.get_string("dataset.dir"));
    const std::string out_dir = cfg.get_path("degrade.output_dir");
    prepare_output_dir(out_dir, opts.force);
    const NoiseModel noise = noise_from_config(cfg);
    const SeededRng noise_rng(cfg.seed_for("noise"));

    std::ostringstream manifest;
    manifest << "# tdiff degraded manifest\n";
    manifest << "operator=" << cfg.get_string("operator.kind", "identity") << "\n";
    if (cfg.has("operator.factor")) manifest << "factor=" << cfg.get_int("operator.factor") << "\n";
    if (cfg.has("operator.blur_sigma"))
        manifest << "blur_sigma=" << cfg.get_double("operator.blur_sigma") << "\n";
    manifest << "gaussian_sigma=" << noise.gaussian_sigma << "\n";
    manifest << "fpn_column_sigma=" << noise.fpn_column_sigma << "\n";
    manifest << "fpn_row_sigma=" << noise.fpn_row_sigma << "\n";
    manifest << "fpn_seed=" << noise.fpn_seed << "\n";

    const auto files = list_pgm_files(in_dir);
    std::uint64_t index = 0;
    for (const auto& name : files) {
        const ThermalImage clean = read_normalized(in_dir + "/" + name);
        const auto op = operator_for_clean(cfg, {clean.width, clean.height});
        SeededRng rng = noise_rng.fork(index++);
        const ThermalImage y = degrade(clean, *op, noise, rng);
        const std::string path = out_dir + "/" + name;
        write_pgm(path, y);
        write_metadata(path + ".meta", {{"value_domain", domain_name(y.domain)},
                                        {"seed", std::to_string(rng.seed())},
                                        {"operator", op->describe()}});
        manifest << name << " " << y.width << " " << y.height << " "
                 << domain_name(y.domain) << " " << checksum_hex(fnv1a_file(path)) << "\n";
        if (opts.verbose) std::cerr << "degraded " << name << "\n";
    }
    std::ofstream mf(out_dir + "/manifest.txt");
    if (!mf) throw DataError("cannot write manifest in '" + out_dir + "'");
    mf << manifest.str();
    std::cout << "degraded " << files.size() << " images into " << out_dir << "\n";
}

// ---- train ----

void cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts) {
    const std::string data_dir = cfg.get_path("dataset.dir");
    const auto files = list_pgm_files(data_dir);
    std::vector<ThermalImage> dataset;
    dataset.reserve(files.size());
    for (const auto& name : files) dataset.push_back(read_normalized(data_dir + "/" + name));

    const DiffusionSchedule sched = schedule_from_config(cfg);
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("train.learning_rate", 2e-4);
    tc.batch_size = cfg.get_int("train.batch_size", 16);
    tc.epochs = cfg.get_int("train.epochs", 10);
    tc.variance_threshold = cfg.get_double("train.variance_threshold", 0.6);
    tc.checkpoint_every = cfg.get_int("train.checkpoint_every", 500);
    tc.validate();

    // one epoch = one sampled batch per dataset image
    const std::int64_t default_steps =
        static_cast<std::int64_t>(tc.epochs) * static_cast<std::int64_t>(dataset.size());
    const std::int64_t total_steps = cfg.get_int64("train.steps", default_steps);

    const std::string ckpt_path = cfg.get_path("train.checkpoint", "checkpoint.tdck");
    const std::string log_path = cfg.get_path("train.loss_log", "loss_log.txt");

    std::unique_ptr<DenoiserNet> net;
    AdamOptimizer optimizer(tc.learning_rate);
    std::int64_t start_step = 0;
    if (cfg.get_bool("train.resume", false) && fs::exists(ckpt_path)) {
        LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
        if (loaded.meta.schedule_steps != sched.steps)
            throw DataError("checkpoint schedule (" + std::to_string(loaded.meta.schedule_steps) +
                            " steps) does not match config schedule");
        const DenoiserConfig want = denoiser_from_config(cfg);
        if (!(loaded.meta.config == want))
            throw DataError("checkpoint architecture does not match the configured denoiser");
        net = std::move(loaded.net);
        start_step = loaded.meta.step;
        if (loaded.has_adam_state) {
            optimizer.moment1() = std::move(loaded.adam_m);
            optimizer.moment2() = std::move(loaded.adam_v);
            optimizer.set_steps_taken(loaded.adam_steps);
        }
        std::cout << "resuming from step " << start_step << "\n";
    } else {
        SeededRng init_rng(cfg.seed_for("train"));
        net = std::make_unique<DenoiserNet>(denoiser_from_config(cfg), init_rng);
    }

    SeededRng train_rng = SeededRng(cfg.seed_for("train")).fork("loop").fork(
        static_cast<std::uint64_t>(start_step));

    TrainLoopOptions lo;
    lo.start_step = start_step;
    lo.total_steps = std::max(total_steps, start_step);
    lo.checkpoint_path = ckpt_path;
    lo.loss_log_path = log_path;
    lo.checkpoint_every = tc.checkpoint_every;
    if (opts.verbose)
        lo.on_step = [](std::int64_t step, double loss) {
            std::cerr << "step " << step << " loss " << loss << "\n";
        };

    train_loop(*net, optimizer, dataset, tc, sched, train_rng, lo);
    std::cout << "trained to step " << lo.total_steps << "; checkpoint " << ckpt_path << "\n";
}

// ---- restore ----

void cmd_restore(const ExperimentConfig& cfg, const CommandOptions& opts) {
    const std::string ckpt_path = cfg.get_path("restore.checkpoint",
                                               cfg.get_string("train.checkpoint", "checkpoint.tdck"));
    if (!fs::exists(ckpt_path))
        throw DataError("checkpoint not found: '" + ckpt_path + "'");
    const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);

    const std::string in_dir = cfg.get_path("restore.input_dir");
    const std::string out_dir = cfg.get_path("restore.output_dir");
    prepare_output_dir(out_dir, opts.force);

    const DiffusionSchedule sched = schedule_from_config(cfg);
    if (sched.steps != loaded.meta.schedule_steps)
        throw DataError("checkpoint schedule does not match config schedule");
    RestoreOptions ro = restore_options_from_config(cfg, opts);
    if (ro.patch_size != loaded.meta.config.patch_size)
        throw DataError("grid.patch_size does not match the checkpoint patch size");

    const NetPredictor predictor(*loaded.net, opts.threads);
    const SeededRng restore_rng(cfg.seed_for("restore"));

    const auto files = list_pgm_files(in_dir);
    std::uint64_t index = 0;
    for (const auto& name : files) {
        const ThermalImage y = read_normalized(in_dir + "/" + name);
        const auto op = operator_for_measurement(cfg, {y.width, y.height});
        SeededRng rng = restore_rng.fork(index++);
        const auto t0 = std::chrono::steady_clock::now();
        if (opts.verbose)
            ro.on_step = [&name](int t, double bp, double ls) {
                std::cerr << name << " t=" << t << " |g_bp|=" << bp << " |g_ls|=" << ls << "\n";
            };
        const ThermalImage out_norm = restore(y, *op, predictor, sched, ro, rng);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - t0;
        const ThermalImage out_unit = normalize(out_norm, ValueDomain::Unit);
        const std::string path = out_dir + "/" + name;
        write_pgm(path, out_unit);
        // no timings here: output files must be byte-stable across reruns
        write_metadata(path + ".meta",
                       {{"value_domain", domain_name(out_unit.domain)},
                        {"seed", std::to_string(rng.seed())},
                        {"operator", op->describe()},
                        {"guidance.eta_reg", std::to_string(ro.guidance.eta_reg)},
                        {"guidance.scale_ls", std::to_string(ro.guidance.scale_ls)},
                        {"guidance.gamma", std::to_string(ro.guidance.gamma)},
                        {"guidance.eta_ddim", std::to_string(ro.guidance.eta_ddim)},
                        {"guidance.zeta", std::to_string(ro.guidance.zeta)},
                        {"sampler.steps", std::to_string(ro.sample_steps)}});
        if (opts.verbose)
            std::cerr << "restored " << name << " in " << elapsed.count() << " s\n";
        std::cout << name << " -> " << path << "\n";
    }
}

// ---- evaluate ----

void cmd_evaluate(const ExperimentConfig& cfg, const CommandOptions&) {
    const std::string ref_dir = cfg.get_path("evaluate.reference_dir");
    const std::string cand_dir = cfg.get_path("evaluate.candidate_dir");
    const std::string task = cfg.get_string("evaluate.task", "restoration");

    std::vector<ImageScore> scores;
    std::vector<std::string> records;
    for (const auto& name : list_pgm_files(cand_dir)) {
        const std::string ref_path = ref_dir + "/" + name;
        if (!fs::exists(ref_path)) throw DataError("reference image missing: '" + ref_path + "'");
        ThermalImage ref = read_pgm_auto(ref_path);
        ThermalImage cand = read_pgm_auto(cand_dir + "/" + name);
        if (ref.domain != ValueDomain::Unit) ref = normalize(ref, ValueDomain::Unit);
        if (cand.domain != ValueDomain::Unit) cand = normalize(cand, ValueDomain::Unit);
        ImageScore s;
        s.id = name.substr(0, name.size() - 4);
        s.task = task;
        s.psnr_db = psnr(ref, cand, 1.0);
        s.ssim = ssim(ref, cand, 1.0);
        scores.push_back(s);
        std::ostringstream rec;
        rec.precision(10);
        rec << "{\"id\": \"" << s.id << "\", \"task\": \"" << s.task
            << "\", \"psnr_db\": " << json_psnr(s.psnr_db) << ", \"ssim\": " << s.ssim << "}";
        records.push_back(rec.str());
    }
    const MetricReport report = summarize(scores);

    std::printf("%-24s %-14s %10s %8s\n", "id", "task", "psnr_db", "ssim");
    for (const auto& s : report.per_image)
        std::printf("%-24s %-14s %10.3f %8.4f\n", s.id.c_str(), s.task.c_str(), s.psnr_db, s.ssim);
    std::printf("%-24s %-14s %10.3f %8.4f\n", "mean", task.c_str(), report.mean_psnr_db,
                report.mean_ssim);

    if (cfg.has("evaluate.records"))
        write_records(cfg.get_path("evaluate.records"), records);
}

// ---- ablate ----

void cmd_ablate(const ExperimentConfig& cfg, const CommandOptions& opts) {
    const std::string clean_path = cfg.get_path("ablate.clean");
    const std::string degraded_path = cfg.get_path("ablate.degraded");
    ThermalImage clean_unit = read_pgm_auto(clean_path);
    if (clean_unit.domain != ValueDomain::Unit)
        clean_unit = normalize(clean_unit, ValueDomain::Unit);
    const ThermalImage y = read_normalized(degraded_path);
    const auto op = operator_for_measurement(cfg, {y.width, y.height});

    const DiffusionSchedule sched = schedule_from_config(cfg);
    const std::vector<int> patch_sizes = cfg.get_int_list("ablate.patch_sizes");
    const int sample_steps = cfg.get_int("ablate.sample_steps", 25);
    const SeededRng base_rng(cfg.seed_for("restore"));

    std::vector<std::string> records;
    std::printf("%6s %8s %10s %8s %12s %10s\n", "ps", "overlap", "psnr_db", "ssim",
                "seam_energy", "wall_s");
    for (const int ps : patch_sizes) {
        const std::string ckpt_key = "ablate.checkpoint." + std::to_string(ps);
        const std::string ckpt_path = cfg.get_path(ckpt_key);
        if (!fs::exists(ckpt_path)) throw DataError("checkpoint not found: '" + ckpt_path + "'");
        const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
        if (loaded.meta.config.patch_size != ps)
            throw DataError("checkpoint '" + ckpt_path + "' is not a " + std::to_string(ps) +
                            "-patch model");
        if (loaded.meta.schedule_steps != sched.steps)
            throw DataError("checkpoint schedule does not match config schedule");
        const NetPredictor predictor(*loaded.net, opts.threads);

        for (const bool overlap : {false, true}) {
            RestoreOptions ro = restore_options_from_config(cfg, opts);
            ro.patch_size = ps;
            ro.stride = overlap ? ps / 2 : ps;
            ro.window = overlap ? WindowKind::RaisedCosine : WindowKind::Flat;
            ro.sample_steps = sample_steps;

            SeededRng rng = base_rng.fork(static_cast<std::uint64_t>(ps * 2 + (overlap ? 1 : 0)));
            const auto t0 = std::chrono::steady_clock::now();
            const ThermalImage out_norm = restore(y, *op, predictor, sched, ro, rng);
            const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - t0;

            const ThermalImage out_unit = normalize(out_norm, ValueDomain::Unit);
            const double p = psnr(clean_unit, out_unit, 1.0);
            const double s = ssim(clean_unit, out_unit, 1.0);
            const PatchGrid grid = plan_grid(out_norm.width, out_norm.height, ps, ro.stride,
                                             ro.window);
            const double seam = seam_energy(out_norm, grid);

            std::printf("%6d %8s %10.3f %8.4f %12.6f %10.3f\n", ps, overlap ? "on" : "off", p,
                        s, seam, wall.count());
            std::ostringstream rec;
            rec.precision(10);
            rec << "{\"id\": \"ablate_ps" << ps << (overlap ? "_overlap" : "_tiled")
                << "\", \"task\": \"ablate\", \"ps\": " << ps
                << ", \"overlap\": " << (overlap ? "true" : "false")
                << ", \"psnr_db\": " << json_psnr(p) << ", \"ssim\": " << s
                << ", \"seam_energy\": " << seam << ", \"wall_s\": " << wall.count() << "}";
            records.push_back(rec.str());
        }
    }
    write_records(cfg.get_path("ablate.records", "ablate_records.jsonl"), records);
}

}  // namespace tdiff
