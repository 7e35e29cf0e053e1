#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "tdiff/errors.hpp"
#include "tdiff/net.hpp"
#include "tdiff/pgm_io.hpp"

namespace tdiff {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<char>& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<char>& buf, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::vector<char>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw DataError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(buf.data() + pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::vector<char>& buf, const std::string& name,
                const std::vector<int>& shape, const std::vector<double>& values) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    put_u32(buf, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (double v : values) put_f32(buf, static_cast<float>(v));
}

}  // namespace

void save_checkpoint(const std::string& path, const DenoiserNet& net,
                     std::int64_t step, int schedule_steps,
                     const AdamOptimizer* optimizer) {
    const DenoiserConfig& cfg = net.config();
    nlohmann::json header = {
        {"patch_size", cfg.patch_size},
        {"base_channels", cfg.base_channels},
        {"channel_multipliers", cfg.channel_multipliers},
        {"time_embed_dim", cfg.time_embed_dim},
        {"step", step},
        {"schedule_steps", schedule_steps},
        {"adam_state", optimizer != nullptr},
        {"adam_steps", optimizer ? optimizer->steps_taken() : 0},
    };
    const std::string header_str = header.dump();

    std::vector<char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(header_str.size()));
    buf.insert(buf.end(), header_str.begin(), header_str.end());

    const auto& params = net.params().all();
    std::uint32_t count = static_cast<std::uint32_t>(params.size());
    if (optimizer) count *= 3;
    put_u32(buf, count);
    for (const auto& p : params) put_tensor(buf, p.name, p.shape, p.value);
    if (optimizer) {
        auto* opt = const_cast<AdamOptimizer*>(optimizer);
        if (opt->moment1().size() != params.size())
            throw DataError("optimizer state does not match network parameters");
        for (size_t i = 0; i < params.size(); ++i)
            put_tensor(buf, "opt.m:" + params[i].name, params[i].shape, opt->moment1()[i]);
        for (size_t i = 0; i < params.size(); ++i)
            put_tensor(buf, "opt.v:" + params[i].name, params[i].shape, opt->moment2()[i]);
    }
    put_u64(buf, fnv1a_bytes(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("checkpoint write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    if (buf.size() < 20) throw DataError("checkpoint '" + path + "' is too small");

    // trailing checksum covers everything before it
    Reader tail{buf, buf.size() - 8};
    const std::uint64_t stored = tail.u64();
    if (stored != fnv1a_bytes(buf.data(), buf.size() - 8))
        throw DataError("checkpoint '" + path + "' failed its checksum");

    Reader r{buf};
    if (r.str(4) != std::string(kMagic, 4))
        throw DataError("'" + path + "' is not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto header = nlohmann::json::parse(r.str(r.u32()));

    LoadedCheckpoint loaded;
    loaded.meta.config.patch_size = header.at("patch_size").get<int>();
    loaded.meta.config.base_channels = header.at("base_channels").get<int>();
    loaded.meta.config.channel_multipliers =
        header.at("channel_multipliers").get<std::vector<int>>();
    loaded.meta.config.time_embed_dim = header.at("time_embed_dim").get<int>();
    loaded.meta.step = header.at("step").get<std::int64_t>();
    loaded.meta.schedule_steps = header.at("schedule_steps").get<int>();
    loaded.has_adam_state = header.value("adam_state", false);
    loaded.adam_steps = header.value("adam_steps", 0);

    SeededRng init_rng(0);  // weights are overwritten below
    loaded.net = std::make_unique<DenoiserNet>(loaded.meta.config, init_rng);
    auto& store = loaded.net->params();

    const std::uint32_t count = r.u32();
    size_t filled = 0;
    if (loaded.has_adam_state) {
        loaded.adam_m.resize(store.all().size());
        loaded.adam_v.resize(store.all().size());
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        const std::uint32_t ndim = r.u32();
        size_t total = 1;
        std::vector<int> shape(ndim);
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(r.u32());
            total *= static_cast<size_t>(shape[d]);
        }
        std::vector<double> values(total);
        for (size_t j = 0; j < total; ++j) values[j] = r.f32();

        std::string base = name;
        std::vector<double>* dest = nullptr;
        if (name.rfind("opt.m:", 0) == 0) {
            base = name.substr(6);
            const int idx = store.find(base);
            if (idx < 0) throw DataError("checkpoint optimizer tensor '" + name + "' has no parameter");
            loaded.adam_m[idx] = std::move(values);
            continue;
        }
        if (name.rfind("opt.v:", 0) == 0) {
            base = name.substr(6);
            const int idx = store.find(base);
            if (idx < 0) throw DataError("checkpoint optimizer tensor '" + name + "' has no parameter");
            loaded.adam_v[idx] = std::move(values);
            continue;
        }
        const int idx = store.find(base);
        if (idx < 0) throw DataError("checkpoint tensor '" + name + "' unknown to this architecture");
        Param& p = store.at(idx);
        if (p.shape != shape)
            throw DataError("checkpoint tensor '" + name + "' has incompatible shape");
        dest = &p.value;
        *dest = std::move(values);
        ++filled;
    }
    if (filled != store.all().size())
        throw DataError("checkpoint is missing parameter tensors");
    return loaded;
}

}  // namespace tdiff
