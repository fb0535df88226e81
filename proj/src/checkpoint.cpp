#include "rramft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "rramft/error.hpp"

namespace rramft {
namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <typename T>
    void le(T v) {
        using U = std::make_unsigned_t<T>;
        U u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    void str32(const std::string& s) {
        le(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void str64(const std::string& s) {
        le(static_cast<std::uint64_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}
    const char* bytes(std::size_t n) {
        if (n > in_.size() - pos_) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
        const char* p = in_.data() + pos_;
        pos_ += n;
        return p;
    }
    template <typename T>
    T le() {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes(sizeof(T)));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
        return static_cast<T>(u);
    }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string str32() {
        const auto n = le<std::uint32_t>();
        return std::string(bytes(n), n);
    }
    std::string str64() {
        const auto n = le<std::uint64_t>();
        return std::string(bytes(n), n);
    }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::string& in_;
    std::size_t pos_ = 0;
};

constexpr const char* kSlotNames[] = {"weight", "bias", "gamma", "beta", "running_mean", "running_var"};

template <typename Params>
auto slot(Params& p, std::string_view name) -> decltype(&p.weight) {
    if (name == "weight") return &p.weight;
    if (name == "bias") return &p.bias;
    if (name == "gamma") return &p.gamma;
    if (name == "beta") return &p.beta;
    if (name == "running_mean") return &p.running_mean;
    if (name == "running_var") return &p.running_var;
    return nullptr;
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.le(kCheckpointVersion);
    nlohmann::json topo = ckpt.model.spec();
    nlohmann::json meta = ckpt.metadata;
    meta["batchnorm"] = {{"epsilon", ckpt.model.batchnorm_options().epsilon},
                         {"momentum", ckpt.model.batchnorm_options().momentum}};
    w.str64(topo.dump());
    w.str64(meta.dump());

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (std::size_t i = 0; i < ckpt.model.layer_count(); ++i) {
        const LayerParams& p = ckpt.model.params(i);
        for (const char* name : kSlotNames) {
            const Tensor* t = slot(p, name);
            if (!t->empty()) tensors.emplace_back(ckpt.model.spec().layers[i].id + "." + name, t);
        }
    }
    w.le(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        w.str32(name);
        w.le(static_cast<std::uint32_t>(t->rank()));
        for (std::size_t e : t->shape()) w.le(static_cast<std::uint64_t>(e));
        for (double v : t->data()) w.f64(v);
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (std::memcmp(r.bytes(sizeof kCheckpointMagic), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw FormatError("not a checkpoint (bad magic)");
    }
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    NetworkSpec spec;
    nlohmann::json meta;
    try {
        spec = nlohmann::json::parse(r.str64()).get<NetworkSpec>();
        meta = nlohmann::json::parse(r.str64());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    BatchNormOptions bn;
    if (meta.contains("batchnorm")) {
        bn.epsilon = meta["batchnorm"].value("epsilon", bn.epsilon);
        bn.momentum = meta["batchnorm"].value("momentum", bn.momentum);
    }

    std::vector<LayerParams> params(spec.layers.size());
    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::string name = r.str32();
        const auto dot = name.rfind('.');
        if (dot == std::string::npos) throw FormatError("bad tensor name '" + name + "'");
        const auto layer = spec.find(name.substr(0, dot));
        Tensor* dst = layer ? slot(params[*layer], name.substr(dot + 1)) : nullptr;
        if (!dst) throw FormatError("checkpoint tensor '" + name + "' does not match the topology");
        const auto rank = r.le<std::uint32_t>();
        if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank");
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(r.le<std::uint64_t>());
        std::vector<double> values(shape_numel(shape));
        for (double& v : values) v = r.f64();
        *dst = Tensor(std::move(shape), std::move(values));
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
    meta.erase("batchnorm");
    return Checkpoint{Model(std::move(spec), std::move(params), bn), std::move(meta)};
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw FormatError("cannot write checkpoint '" + path + "'");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw FormatError("short write on checkpoint '" + path + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FormatError("cannot rename checkpoint to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return deserialize_checkpoint(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

} // namespace rramft
