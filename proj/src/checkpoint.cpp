#include "genreg/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace genreg {

namespace {

constexpr std::string_view kMagic = "GRCKPT1";

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string take(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw std::runtime_error("checkpoint: truncated file");
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::string join(const std::vector<double>& values) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) {
        out << (i ? "," : "") << values[i];
    }
    return out.str();
}

std::vector<double> split_doubles(const std::string& text) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        if (!cell.empty()) {
            out.push_back(std::stod(cell));
        }
    }
    return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : ckpt.config.to_map()) {
        kv["model." + k] = v;
    }
    kv["vocab.values"] = join(ckpt.vocab_values);
    kv["standardizer.mean"] = join(ckpt.standardizer.mean);
    kv["standardizer.stddev"] = join(ckpt.standardizer.stddev);
    kv["buckets.edges"] = join(ckpt.buckets.edges);
    kv["buckets.spans"] = join(ckpt.buckets.spans);
    for (const auto& [k, v] : ckpt.settings) {
        kv["settings." + k] = v;
    }
    std::string text;
    for (const auto& [k, v] : kv) {
        text += k + "=" + v + "\n";
    }

    std::string out(kMagic);
    put<std::uint64_t>(out, text.size());
    out += text;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const std::string& name = ckpt.params.name(i);
        const Tensor& t = ckpt.params.at(i);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
        for (double v : t.values()) {
            put<float>(out, static_cast<float>(v));
        }
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.take(kMagic.size()) != kMagic) {
        throw std::runtime_error("checkpoint: bad magic (not a GRCKPT1 file)");
    }
    const auto text_len = in.get<std::uint64_t>();
    const std::string text = in.take(text_len);
    std::map<std::string, std::string> kv;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("checkpoint: malformed config line '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    Checkpoint ckpt;
    std::map<std::string, std::string> model_kv;
    for (const auto& [k, v] : kv) {
        if (k.starts_with("model.")) {
            model_kv[k.substr(6)] = v;
        } else if (k.starts_with("settings.")) {
            ckpt.settings[k.substr(9)] = v;
        }
    }
    ckpt.config = ModelConfig::from_map(model_kv);
    ckpt.vocab_values = split_doubles(kv["vocab.values"]);
    ckpt.standardizer.mean = split_doubles(kv["standardizer.mean"]);
    ckpt.standardizer.stddev = split_doubles(kv["standardizer.stddev"]);
    ckpt.buckets.edges = split_doubles(kv["buckets.edges"]);
    ckpt.buckets.spans = split_doubles(kv["buckets.spans"]);

    const ParamStore layout = init_params(ckpt.config);
    const auto count = in.get<std::uint32_t>();
    if (count != layout.size()) {
        throw std::runtime_error("checkpoint: " + std::to_string(count) + " parameter blocks, config implies " +
                                 std::to_string(layout.size()));
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::string name = in.take(in.get<std::uint32_t>());
        const auto rows = in.get<std::uint32_t>();
        const auto cols = in.get<std::uint32_t>();
        if (name != layout.name(i) || rows != layout.at(i).rows() || cols != layout.at(i).cols()) {
            throw std::runtime_error("checkpoint: block '" + name + "' " + shape_string(rows, cols) +
                                     " does not match expected '" + layout.name(i) + "' " +
                                     layout.at(i).shape_string());
        }
        Tensor t(rows, cols);
        for (double& v : t.values()) {
            v = static_cast<double>(in.get<float>());
        }
        ckpt.params.add(name, std::move(t));
    }
    if (!in.done()) {
        throw std::runtime_error("checkpoint: trailing bytes after parameter blocks");
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace genreg
