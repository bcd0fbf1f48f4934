#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace genreg {

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
class Fingerprint {
public:
    void update(std::span<const std::byte> bytes);
    void update(std::string_view text);
    void update(std::span<const double> values);
    std::uint64_t value() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 1469598103934665603ULL;
};

std::string fingerprint_file(const std::string& path);

}  // namespace genreg
