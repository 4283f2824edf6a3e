#include "hart/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hart::train {
namespace {

constexpr char kMagic[8] = {'H', 'A', 'R', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kDtypeF64 = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    template <typename T>
    void pod(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void raw(std::string_view s) { out_.append(s); }
    void bytes(std::string_view s) {
        pod<std::uint64_t>(s.size());
        out_.append(s);
    }
    void name(std::string_view s) {
        pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void tensor(std::string_view nm, const num::Tensor& t, bool trainable) {
        name(nm);
        pod<std::uint8_t>(kDtypeF64);
        pod<std::uint8_t>(trainable ? 1 : 0);
        pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) pod<std::uint64_t>(d);
        out_.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double));
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    template <typename T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string bytes() { return std::string(raw(pod<std::uint64_t>())); }
    std::string name() { return std::string(raw(pod<std::uint32_t>())); }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) {
        if (in_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

struct NamedTensor {
    std::string name;
    num::Tensor value;
    bool trainable;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::map<std::string, std::string> header;
    for (const auto& [k, v] : ckpt.model.config.to_map()) header["model." + k] = v;
    for (const auto& [k, v] : ckpt.meta) header["meta." + k] = v;
    if (ckpt.optimizer) header["meta.opt_step"] = std::to_string(ckpt.optimizer->step);
    std::string text;
    for (const auto& [k, v] : header) {
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos ||
            k.find('=') != std::string::npos) {
            throw std::invalid_argument("checkpoint header entry '" + k + "' is not a single line");
        }
        text += k + "=" + v + "\n";
    }

    Writer w;
    w.raw(std::string_view(kMagic, sizeof kMagic));
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.bytes(text);
    w.bytes(ckpt.vocab.serialize());

    const auto& P = ckpt.model.params;
    std::size_t count = P.size() + ckpt.head.size();
    if (ckpt.optimizer) count += 2 * P.size();
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(count));
    for (auto id : P.ids()) w.tensor(P.name(id), P.value(id), P.trainable(id));
    for (auto id : ckpt.head.ids()) {
        w.tensor("head." + ckpt.head.name(id), ckpt.head.value(id), ckpt.head.trainable(id));
    }
    if (ckpt.optimizer) {
        if (ckpt.optimizer->m.size() != P.size()) {
            throw std::invalid_argument("optimizer state does not match model parameters");
        }
        for (auto id : P.ids()) w.tensor("opt.m." + P.name(id), ckpt.optimizer->m[id.index], false);
        for (auto id : P.ids()) w.tensor("opt.v." + P.name(id), ckpt.optimizer->v[id.index], false);
    }
    return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    const auto magic = r.raw(sizeof kMagic);
    if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) {
        throw std::runtime_error("not a checkpoint file (bad magic)");
    }
    const auto version = r.pod<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const std::string header_text = r.bytes();
    const std::string vocab_text = r.bytes();

    std::map<std::string, std::string> model_kv;
    Checkpoint ckpt;
    std::istringstream hs(header_text);
    std::string line;
    while (std::getline(hs, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad checkpoint header line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key.rfind("model.", 0) == 0) {
            model_kv[key.substr(6)] = val;
        } else if (key.rfind("meta.", 0) == 0) {
            ckpt.meta[key.substr(5)] = val;
        }
    }

    const auto count = r.pod<std::uint32_t>();
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor nt;
        nt.name = r.name();
        if (r.pod<std::uint8_t>() != kDtypeF64) {
            throw std::runtime_error("tensor " + nt.name + ": unsupported dtype");
        }
        nt.trainable = (r.pod<std::uint8_t>() & 1) != 0;
        const auto rank = r.pod<std::uint32_t>();
        num::Shape shape(rank);
        for (auto& d : shape) d = r.pod<std::uint64_t>();
        const std::size_t n = num::shape_numel(shape);
        const auto payload = r.raw(n * sizeof(double));
        std::vector<double> data(n);
        std::memcpy(data.data(), payload.data(), payload.size());
        nt.value = num::Tensor(std::move(shape), std::move(data));
        tensors.push_back(std::move(nt));
    }
    if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint tensors");

    num::ParameterSet model_params;
    std::map<std::string, num::Tensor> opt_m;
    std::map<std::string, num::Tensor> opt_v;
    for (auto& nt : tensors) {
        if (nt.name.rfind("head.", 0) == 0) {
            ckpt.head.add(nt.name.substr(5), std::move(nt.value), nt.trainable);
        } else if (nt.name.rfind("opt.m.", 0) == 0) {
            opt_m.emplace(nt.name.substr(6), std::move(nt.value));
        } else if (nt.name.rfind("opt.v.", 0) == 0) {
            opt_v.emplace(nt.name.substr(6), std::move(nt.value));
        } else {
            model_params.add(nt.name, std::move(nt.value), nt.trainable);
        }
    }
    const auto cfg = model::ModelConfig::from_map(model_kv);
    // Trainable flags as stored; bind_model re-freezes U0, which is stored frozen anyway.
    std::vector<bool> flags;
    for (auto id : model_params.ids()) flags.push_back(model_params.trainable(id));
    ckpt.model = model::bind_model(cfg, std::move(model_params));
    for (auto id : ckpt.model.params.ids()) ckpt.model.params.set_trainable(id, flags[id.index]);
    ckpt.vocab = corpus::Vocabulary::parse(vocab_text);

    if (auto it = ckpt.meta.find("opt_step"); it != ckpt.meta.end()) {
        OptimizerState st;
        st.step = std::stoull(it->second);
        for (auto id : ckpt.model.params.ids()) {
            const auto& nm = ckpt.model.params.name(id);
            auto mi = opt_m.find(nm);
            auto vi = opt_v.find(nm);
            if (mi == opt_m.end() || vi == opt_v.end()) {
                throw std::runtime_error("optimizer state missing for " + nm);
            }
            st.m.push_back(std::move(mi->second));
            st.v.push_back(std::move(vi->second));
        }
        ckpt.optimizer = std::move(st);
        ckpt.meta.erase(it);
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

}  // namespace hart::train
