#pragma once

#include <CLI11.hpp>

namespace genreg::cli {

void add_build_vocab(CLI::App& app);
void add_encode_check(CLI::App& app);
void add_synth_data(CLI::App& app);
void add_train(CLI::App& app);
void add_predict(CLI::App& app);
void add_evaluate(CLI::App& app);
void add_ablate(CLI::App& app);

}  // namespace genreg::cli
