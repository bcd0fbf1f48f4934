#include "manifest.h"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "genreg/fingerprint.h"

namespace genreg::cli {

std::string RunManifest::write(const std::string& primary_output) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["seeds"] = seeds;
    auto files = [](const std::vector<std::string>& paths) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& p : paths) {
            arr.push_back({{"path", p}, {"fingerprint", fingerprint_file(p)}});
        }
        return arr;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    const std::string path = primary_output + ".manifest.json";
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << j.dump(2) << '\n';
    return path;
}

}  // namespace genreg::cli
