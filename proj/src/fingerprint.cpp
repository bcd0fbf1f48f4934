#include "genreg/fingerprint.h"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

namespace genreg {

void Fingerprint::update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
        state_ ^= static_cast<std::uint64_t>(b);
        state_ *= 1099511628211ULL;
    }
}

void Fingerprint::update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }

void Fingerprint::update(std::span<const double> values) { update(std::as_bytes(values)); }

std::string Fingerprint::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(state_));
    return buf;
}

std::string fingerprint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Fingerprint fp;
    fp.update(std::string_view(data.data(), data.size()));
    return fp.hex();
}

}  // namespace genreg
