#pragma once

#include <map>
#include <string>
#include <vector>

namespace genreg::cli {

/// Record of one command invocation. Written next to the primary output as
/// <output>.manifest.json; contains no timestamps so reruns are byte-identical.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::map<std::string, std::string> seeds;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    /// Fingerprints every listed file and writes the manifest; returns its path.
    std::string write(const std::string& primary_output) const;
};

}  // namespace genreg::cli
